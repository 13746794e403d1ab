//! Discrete Calderón analysis and synthesis, square functions and Hardy
//! norm proxies.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, Spectrum};
use crate::filterbank::{FilterBank, FilterKind};
use crate::grid::{CubeLattice, SampledFunction};
use crate::varexp::{luxemburg_norm, ExponentFunction};

/// One real coefficient per lattice cube per covered scale.
#[derive(Clone, Debug)]
pub struct CoefficientField<'a> {
    bank: &'a FilterBank,
    lattice: &'a CubeLattice,
    coeffs: Vec<Vec<f64>>,
}

/// Check that a bank and a lattice describe the same grid, shift and scales.
pub fn check_compatible(bank: &FilterBank, lattice: &CubeLattice) -> Result<()> {
    if bank.grid() != lattice.grid() {
        return Err(Error::Config("filter bank and lattice live on different grids".into()));
    }
    if bank.shift() != lattice.shift() || bank.scales() != lattice.scales() {
        return Err(Error::Config(format!(
            "filter bank (N = {}, scales {:?}) and lattice (N = {}, scales {:?}) disagree",
            bank.shift(),
            bank.scales(),
            lattice.shift(),
            lattice.scales()
        )));
    }
    Ok(())
}

/// `(kind_j * f)(x_Q)` for every cube, coarsest scale first.
pub fn sample_at_anchors(fields: &[Vec<f64>], lattice: &CubeLattice) -> Vec<Vec<f64>> {
    lattice
        .levels()
        .iter()
        .zip(fields)
        .map(|(level, field)| level.cubes.iter().map(|c| field[c.anchor_sample]).collect())
        .collect()
}

/// `coeffs[j][Q] = (psi_j * f)(x_Q)`.
pub fn analyze<'a>(f: &SampledFunction, bank: &'a FilterBank, lattice: &'a CubeLattice) -> Result<CoefficientField<'a>> {
    analyze_with(f, FilterKind::Psi, bank, lattice)
}

/// Coefficients `(kind_j * f)(x_Q)` for any member of the triple.
pub fn analyze_with<'a>(
    f: &SampledFunction,
    kind: FilterKind,
    bank: &'a FilterBank,
    lattice: &'a CubeLattice,
) -> Result<CoefficientField<'a>> {
    check_compatible(bank, lattice)?;
    if f.grid() != bank.grid() {
        return Err(Error::Config("function and filter bank live on different grids".into()));
    }
    let fields = bank.apply_all(kind, f);
    Ok(CoefficientField { bank, lattice, coeffs: sample_at_anchors(&fields, lattice) })
}

impl<'a> CoefficientField<'a> {
    /// Field with every coefficient zero.
    pub fn zeros(bank: &'a FilterBank, lattice: &'a CubeLattice) -> Result<Self> {
        check_compatible(bank, lattice)?;
        let coeffs = lattice.levels().iter().map(|l| vec![0.0; l.cubes.len()]).collect();
        Ok(Self { bank, lattice, coeffs })
    }

    /// Field from explicit per-scale coefficient vectors.
    pub fn from_coeffs(bank: &'a FilterBank, lattice: &'a CubeLattice, coeffs: Vec<Vec<f64>>) -> Result<Self> {
        check_compatible(bank, lattice)?;
        let shape_ok = coeffs.len() == lattice.levels().len()
            && coeffs.iter().zip(lattice.levels()).all(|(c, l)| c.len() == l.cubes.len());
        if !shape_ok {
            return Err(Error::Config("coefficient field does not match the lattice".into()));
        }
        if coeffs.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NumericalIntegrity("non-finite coefficient".into()));
        }
        Ok(Self { bank, lattice, coeffs })
    }

    pub fn bank(&self) -> &'a FilterBank {
        self.bank
    }

    pub fn lattice(&self) -> &'a CubeLattice {
        self.lattice
    }

    pub fn scale(&self, j: i32) -> &[f64] {
        &self.coeffs[(j - self.lattice.j_min()) as usize]
    }

    pub fn scale_mut(&mut self, j: i32) -> &mut [f64] {
        &mut self.coeffs[(j - self.lattice.j_min()) as usize]
    }

    pub fn get(&self, j: i32, pos: usize) -> f64 {
        self.scale(j)[pos]
    }

    pub fn set(&mut self, j: i32, pos: usize, value: f64) {
        self.scale_mut(j)[pos] = value;
    }

    pub fn all(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    /// `sum_Q |Q| c_Q^2` per scale.
    pub fn energy_by_scale(&self) -> Vec<f64> {
        self.lattice
            .levels()
            .iter()
            .zip(&self.coeffs)
            .map(|(l, c)| l.side * c.iter().map(|v| v * v).sum::<f64>())
            .collect()
    }

    /// Share of `sum_Q |Q| c_Q^2` carried by cubes within one filter width of
    /// the boundary, where truncation contaminates the coefficients.
    pub fn boundary_energy_fraction(&self) -> f64 {
        let (mut edge, mut total) = (0.0, 0.0);
        for (l, c) in self.lattice.levels().iter().zip(&self.coeffs) {
            for (cube, v) in l.cubes.iter().zip(c) {
                let e = l.side * v * v;
                total += e;
                if self.lattice.near_boundary(cube) {
                    edge += e;
                }
            }
        }
        if total > 0.0 {
            edge / total
        } else {
            0.0
        }
    }

    pub fn nonzero_count(&self) -> usize {
        self.coeffs.iter().flatten().filter(|v| **v != 0.0).count()
    }

    /// `sum_j sum_Q |Q| c[j, Q] psi_j(x - x_Q)`.
    pub fn synthesize(&self) -> SampledFunction {
        synthesize_weighted(self.bank, self.lattice, FilterKind::Psi, |j, pos| {
            self.lattice.level(j).side * self.get(j, pos)
        })
    }

    /// `(j, cube index, x_Q, value)` rows.
    pub fn export_rows(&self) -> Vec<(i32, i64, f64, f64)> {
        let mut out = Vec::with_capacity(self.lattice.total_cubes());
        for (level, c) in self.lattice.levels().iter().zip(&self.coeffs) {
            for (cube, v) in level.cubes.iter().zip(c) {
                out.push((level.scale, cube.index, cube.anchor, *v));
            }
        }
        out
    }
}

/// `sum_j kind_j * (sum_Q w(j, Q) delta_{x_Q})`, one inverse transform in total.
pub fn synthesize_weighted(
    bank: &FilterBank,
    lattice: &CubeLattice,
    kind: FilterKind,
    weight: impl Fn(i32, usize) -> f64 + Sync,
) -> SampledFunction {
    let grid = *bank.grid();
    let per_scale: Vec<Vec<Complex64>> = lattice
        .scales()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|j| {
            let cubes = lattice.cubes(j);
            let idx: Vec<usize> = cubes.iter().map(|c| c.anchor_sample).collect();
            let w: Vec<f64> = (0..cubes.len()).map(|pos| weight(j, pos)).collect();
            let spec = Spectrum::of_spikes(&grid, &idx, &w);
            spec.bins().iter().zip(bank.multiplier(kind, j)).map(|(b, m)| b * m).collect()
        })
        .collect();
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.padded_len()];
    for s in &per_scale {
        for (a, v) in acc.iter_mut().zip(s) {
            *a += v;
        }
    }
    fft::inverse(&mut acc);
    let values = acc[..grid.len()].iter().map(|c| c.re).collect();
    SampledFunction::from_values(grid, values).expect("finite synthesis")
}

/// `(sum_j |psi_j * f|^2)^{1/2}`.
pub fn square_function_g(f: &SampledFunction, bank: &FilterBank) -> SampledFunction {
    let fields = bank.apply_all(FilterKind::Psi, f);
    let mut acc = vec![0.0; f.grid().len()];
    for field in &fields {
        for (a, v) in acc.iter_mut().zip(field) {
            *a += v * v;
        }
    }
    SampledFunction::from_values(*f.grid(), acc.into_iter().map(f64::sqrt).collect()).expect("finite")
}

/// `(sum_j sum_Q |psi_j * f(x_Q)|^2 chi_Q)^{1/2}`.
pub fn square_function_gd(f: &SampledFunction, bank: &FilterBank, lattice: &CubeLattice) -> Result<SampledFunction> {
    let c = analyze(f, bank, lattice)?;
    Ok(discrete_square_of(&c))
}

/// Piecewise constant square function of an existing coefficient field.
pub fn discrete_square_of(c: &CoefficientField<'_>) -> SampledFunction {
    let grid = *c.lattice().grid();
    let mut acc = vec![0.0; grid.len()];
    for (level, coeffs) in c.lattice().levels().iter().zip(c.all()) {
        for (cube, v) in level.cubes.iter().zip(coeffs) {
            let v2 = v * v;
            for a in &mut acc[cube.sample_range()] {
                *a += v2;
            }
        }
    }
    SampledFunction::from_values(grid, acc.into_iter().map(f64::sqrt).collect()).expect("finite")
}

/// Which characterizing function a Hardy norm is measured through.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardyMethod {
    SmoothMaximal,
    DiscreteSquare,
    ContinuousSquare,
}

/// Luxemburg norm of `M_phi f`, `G^d f` or `G f`.
pub fn hardy_norm(
    f: &SampledFunction,
    p: &ExponentFunction,
    bank: &FilterBank,
    lattice: &CubeLattice,
    method: HardyMethod,
) -> Result<f64> {
    if !p.log_holder().pass {
        return Err(Error::Precondition(format!(
            "exponent fails the log-Hölder check (local {}, decay {})",
            p.log_holder().local_constant,
            p.log_holder().decay_constant
        )));
    }
    if p.grid() != f.grid() {
        return Err(Error::Config("function and exponent live on different grids".into()));
    }
    check_compatible(bank, lattice)?;
    let g = match method {
        HardyMethod::SmoothMaximal => bank.smooth_maximal(f),
        HardyMethod::DiscreteSquare => square_function_gd(f, bank, lattice)?,
        HardyMethod::ContinuousSquare => square_function_g(f, bank),
    };
    Ok(luxemburg_norm(&g, p))
}

/// All three Hardy norm proxies of `f`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyNorms {
    pub smooth_maximal: f64,
    pub discrete_square: f64,
    pub continuous_square: f64,
}

pub fn hardy_norms(f: &SampledFunction, p: &ExponentFunction, bank: &FilterBank, lattice: &CubeLattice) -> Result<HardyNorms> {
    Ok(HardyNorms {
        smooth_maximal: hardy_norm(f, p, bank, lattice, HardyMethod::SmoothMaximal)?,
        discrete_square: hardy_norm(f, p, bank, lattice, HardyMethod::DiscreteSquare)?,
        continuous_square: hardy_norm(f, p, bank, lattice, HardyMethod::ContinuousSquare)?,
    })
}
