//! Discrete variable-exponent Hardy space machinery on a uniform 1-D grid.
//!
//! The crate samples functions on `[-R, R)`, builds a band-limited
//! Littlewood-Paley filter bank with an exact discrete Calderón identity, and
//! measures the objects of `H^{p(.)}` theory: Luxemburg norms, maximal
//! functions, square functions, paraproducts with BMO symbols, stopping-time
//! atomic decompositions and Calderón-Zygmund matrix coefficients.

pub mod atomic;
pub mod calderon;
pub mod corpus;
pub mod czo;
pub mod error;
pub mod fft;
pub mod filterbank;
pub mod grid;
pub mod maximal;
pub mod paraproduct;
pub mod varexp;

pub use error::{Error, Result};
pub use grid::{build_lattice, convolve_scaled, make_grid, CubeLattice, DyadicCube, Grid, SampledFunction};
pub use varexp::{check_log_holder, luxemburg_norm, modular, ExponentClass, ExponentFunction, ExponentSpec, LogHolderReport};
pub use maximal::{fs_vector_check, hl_maximal, smooth_maximal, MaximalConfig};
pub use filterbank::{build_filterbank, check_moments, FilterBank, FilterKind};
pub use calderon::{analyze, hardy_norm, square_function_g, square_function_gd, CoefficientField, HardyMethod};
pub use paraproduct::{bmo_norm, carleson_check, kernel_eval, paraproduct_adjoint_apply, paraproduct_apply, BmoSymbol, Paraproduct};
pub use atomic::{a_functional, atom_validate, converse_check, ConverseReport, atomic_decompose, level_sets, reconstruct, select_cubes, Atom, AtomCheck, AtomicDecomposition, LevelSets, SupportCube};
pub use czo::{almost_orthogonality_check, correct_operator, hardy_boundedness_harness, kernel_condition_check, matrix_coeff, pairing_t1, CzoKernel, OperatorSpec, OrthogonalityReport};
pub use corpus::{CorpusSpec, FunctionSpec, GeneratorKind, PsiTerm};
