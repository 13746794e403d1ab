//! Shared fixtures for the benches.

use vh_core::{build_filterbank, build_lattice, make_grid, CorpusSpec, CubeLattice, FilterBank, SampledFunction};

pub struct Fixture {
    pub bank: FilterBank,
    pub lattice: CubeLattice,
    pub corpus: Vec<SampledFunction>,
}

/// Grid `[-8, 8)` at `level`, scales `-3..=j_max` with `j_max = min(5, level - 7)`.
pub fn fixture(level: u32) -> Fixture {
    let grid = make_grid(8.0, level).expect("grid");
    let j_max = 5.min(level as i32 - 7);
    let bank = build_filterbank(&grid, 2, -3, j_max, 3).expect("filter bank");
    let lattice = build_lattice(&grid, 2, -3, j_max).expect("lattice");
    let corpus = CorpusSpec::default().generate(&bank).expect("corpus").into_iter().map(|(_, f)| f).collect();
    Fixture { bank, lattice, corpus }
}
