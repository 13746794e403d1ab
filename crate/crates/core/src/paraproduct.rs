//! Discrete paraproducts `pi_b`, their adjoints, the kernel `K_b`, BMO norms
//! and the Carleson sum of the symbol coefficients.

use serde::{Deserialize, Serialize};

use crate::calderon::{analyze_with, check_compatible, sample_at_anchors, synthesize_weighted};
use crate::error::{Error, Result};
use crate::fft::Spectrum;
use crate::filterbank::{FilterBank, FilterKind};
use crate::grid::{CubeLattice, SampledFunction};

/// Mean oscillation sup over dyadic sample windows of every length
/// `2, 4, ..., n`, each also shifted by half its length.
pub fn bmo_norm(b: &SampledFunction) -> f64 {
    let v = b.values();
    let n = v.len();
    let mut best = 0.0f64;
    let mut m = 2usize;
    while m <= n {
        let step = m / 2;
        let mut start = 0usize;
        while start + m <= n {
            best = best.max(mean_oscillation(&v[start..start + m]));
            start += step;
        }
        m *= 2;
    }
    best
}

/// `(1/|I|) int_I |v - v_I|` on a window of samples.
pub fn mean_oscillation(w: &[f64]) -> f64 {
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    w.iter().map(|x| (x - mean).abs()).sum::<f64>() / w.len() as f64
}

/// A symbol with its measured BMO norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BmoSymbol {
    b: SampledFunction,
    bmo_norm: f64,
    mean_normalized: bool,
}

impl BmoSymbol {
    pub fn new(b: SampledFunction) -> Self {
        let bmo = bmo_norm(&b);
        Self { b, bmo_norm: bmo, mean_normalized: false }
    }

    /// Symbol with its domain mean removed; the BMO norm is unchanged.
    pub fn mean_normalized(b: SampledFunction) -> Self {
        let mean = b.values().iter().sum::<f64>() / b.values().len() as f64;
        let shifted = b.map(|v| v - mean);
        let bmo = bmo_norm(&shifted);
        Self { b: shifted, bmo_norm: bmo, mean_normalized: true }
    }

    pub fn function(&self) -> &SampledFunction {
        &self.b
    }

    pub fn bmo_norm(&self) -> f64 {
        self.bmo_norm
    }

    pub fn is_mean_normalized(&self) -> bool {
        self.mean_normalized
    }
}

/// `pi_b` with the symbol coefficients `(tilde_j * b)(x_Q)` cached.
#[derive(Clone, Debug)]
pub struct Paraproduct<'a> {
    bank: &'a FilterBank,
    lattice: &'a CubeLattice,
    symbol: BmoSymbol,
    coeffs: Vec<Vec<f64>>,
}

/// Sup of `|K_b(x, y)| |x - y|` over sampled off-diagonal pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelBoundReport {
    pub size_sup: f64,
    pub size_ratio: f64,
    /// Sup of `|K(x, y) - K(x', y)| |x - y|^{1 + eps} / |x - x'|^eps` over `|x - x'| <= |x - y| / 2`.
    pub smoothness_x_sup: f64,
    /// Same with the second variable moved.
    pub smoothness_y_sup: f64,
    pub epsilon: f64,
    pub pairs: usize,
}

/// Carleson sums `(1/|R|) sum_{Q in R} |Q| |tilde_Q * b(x_Q)|^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CarlesonReport {
    /// Sup over every lattice cube `R`.
    pub sup: f64,
    /// Sup over the coarsest cubes only.
    pub top_level_sup: f64,
    /// Sup over cubes at least one filter width from the boundary.
    pub interior_sup: f64,
    pub bmo_norm: f64,
    /// `sup / bmo_norm^2`, `None` for a constant symbol.
    pub ratio: Option<f64>,
}

impl<'a> Paraproduct<'a> {
    pub fn new(symbol: BmoSymbol, bank: &'a FilterBank, lattice: &'a CubeLattice) -> Result<Self> {
        check_compatible(bank, lattice)?;
        if symbol.function().grid() != bank.grid() {
            return Err(Error::Config("symbol and filter bank live on different grids".into()));
        }
        let coeffs = analyze_with(symbol.function(), FilterKind::Tilde, bank, lattice)?.all().to_vec();
        Ok(Self { bank, lattice, symbol, coeffs })
    }

    pub fn symbol(&self) -> &BmoSymbol {
        &self.symbol
    }

    pub fn bank(&self) -> &'a FilterBank {
        self.bank
    }

    pub fn lattice(&self) -> &'a CubeLattice {
        self.lattice
    }

    /// `(tilde_j * b)(x_Q)`, coarsest scale first.
    pub fn symbol_coefficients(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    fn slot(&self, j: i32) -> usize {
        (j - self.lattice.j_min()) as usize
    }

    fn check_grid(&self, f: &SampledFunction) -> Result<()> {
        if f.grid() != self.bank.grid() {
            return Err(Error::Config("operand and paraproduct live on different grids".into()));
        }
        Ok(())
    }

    /// `sum_j sum_Q |Q| psi_j(x - x_Q) (tilde_j * b)(x_Q) (phi_j * f)(x_Q)`.
    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction> {
        self.check_grid(f)?;
        let phi = sample_at_anchors(&self.bank.apply_all(FilterKind::Phi, f), self.lattice);
        Ok(synthesize_weighted(self.bank, self.lattice, FilterKind::Psi, |j, pos| {
            let s = self.slot(j);
            self.lattice.level(j).side * self.coeffs[s][pos] * phi[s][pos]
        }))
    }

    /// `sum_j sum_Q |Q| phi_j(x - x_Q) (tilde_j * b)(x_Q) (psi_j * g)(x_Q)`.
    pub fn adjoint(&self, g: &SampledFunction) -> Result<SampledFunction> {
        self.check_grid(g)?;
        let psi = sample_at_anchors(&self.bank.apply_all(FilterKind::Psi, g), self.lattice);
        Ok(synthesize_weighted(self.bank, self.lattice, FilterKind::Phi, |j, pos| {
            let s = self.slot(j);
            self.lattice.level(j).side * self.coeffs[s][pos] * psi[s][pos]
        }))
    }

    /// `K_b(., y_i)`, the image of a unit spike at sample `i`.
    pub fn column(&self, i: usize) -> SampledFunction {
        let grid = *self.bank.grid();
        let spec = Spectrum::of_spikes(&grid, &[i], &[1.0]);
        let phi: Vec<Vec<f64>> = self.bank.scales().map(|j| self.bank.apply(FilterKind::Phi, j, &spec)).collect();
        let phi = sample_at_anchors(&phi, self.lattice);
        synthesize_weighted(self.bank, self.lattice, FilterKind::Psi, |j, pos| {
            let s = self.slot(j);
            self.lattice.level(j).side * self.coeffs[s][pos] * phi[s][pos]
        })
    }

    /// `K_b(x_i, .)`, the adjoint image of a unit spike at sample `i`.
    pub fn row(&self, i: usize) -> SampledFunction {
        let grid = *self.bank.grid();
        let spec = Spectrum::of_spikes(&grid, &[i], &[1.0]);
        let psi: Vec<Vec<f64>> = self.bank.scales().map(|j| self.bank.apply(FilterKind::Psi, j, &spec)).collect();
        let psi = sample_at_anchors(&psi, self.lattice);
        synthesize_weighted(self.bank, self.lattice, FilterKind::Phi, |j, pos| {
            let s = self.slot(j);
            self.lattice.level(j).side * self.coeffs[s][pos] * psi[s][pos]
        })
    }

    /// `K_b(x, y)` at the grid points nearest `x` and `y`.
    pub fn kernel_eval(&self, x: f64, y: f64) -> Result<f64> {
        let grid = self.bank.grid();
        let out = |p: f64| Error::Domain(format!("point {p} lies outside the grid"));
        let ix = grid.nearest_index(x).ok_or_else(|| out(x))?;
        let iy = grid.nearest_index(y).ok_or_else(|| out(y))?;
        if ix == iy {
            return Err(Error::Singularity(x));
        }
        let len = grid.padded_len() as i64;
        let mut acc = 0.0;
        for j in self.bank.scales() {
            let psi = self.bank.kernel(FilterKind::Psi, j);
            let phi = self.bank.kernel(FilterKind::Phi, j);
            let side = self.lattice.level(j).side;
            for (cube, c) in self.lattice.cubes(j).iter().zip(&self.coeffs[self.slot(j)]) {
                let q = cube.anchor_sample as i64;
                let a = psi[(ix as i64 - q).rem_euclid(len) as usize];
                let b = phi[(q - iy as i64).rem_euclid(len) as usize];
                acc += side * c * a * b;
            }
        }
        Ok(acc)
    }

    /// Size and smoothness sups of `K_b` over columns at the samples `ys`,
    /// with rows subsampled by `stride`.
    pub fn kernel_bounds(&self, ys: &[usize], stride: usize, epsilon: f64) -> KernelBoundReport {
        let grid = *self.bank.grid();
        let h = grid.spacing();
        let stride = stride.max(1);
        let mut size_sup = 0.0f64;
        let mut sx = 0.0f64;
        let mut sy = 0.0f64;
        let mut pairs = 0usize;
        let smooth = |k: &SampledFunction, fixed: usize, sup: &mut f64| {
            let v = k.values();
            let idx: Vec<usize> = (0..v.len()).step_by(stride).filter(|&i| i != fixed).collect();
            for &a in &idx {
                let dist = (a as f64 - fixed as f64).abs() * h;
                for &b in &idx {
                    let d = (a as f64 - b as f64).abs() * h;
                    if b == a || d > 0.5 * dist {
                        continue;
                    }
                    let r = (v[a] - v[b]).abs() * dist.powf(1.0 + epsilon) / d.powf(epsilon);
                    *sup = sup.max(r);
                }
            }
        };
        for &y in ys {
            let col = self.column(y);
            for (i, v) in col.values().iter().enumerate() {
                if i != y {
                    size_sup = size_sup.max(v.abs() * (i as f64 - y as f64).abs() * h);
                    pairs += 1;
                }
            }
            smooth(&col, y, &mut sx);
            smooth(&self.row(y), y, &mut sy);
        }
        let bmo = self.symbol.bmo_norm();
        KernelBoundReport {
            size_sup,
            size_ratio: if bmo > 0.0 { size_sup / bmo } else { 0.0 },
            smoothness_x_sup: sx,
            smoothness_y_sup: sy,
            epsilon,
            pairs,
        }
    }

    /// Carleson sums accumulated bottom-up over the lattice.
    pub fn carleson(&self) -> CarlesonReport {
        let lat = self.lattice;
        let mut acc: Vec<Vec<f64>> = lat
            .levels()
            .iter()
            .zip(&self.coeffs)
            .map(|(l, c)| c.iter().map(|v| l.side * v * v).collect())
            .collect();
        for j in (lat.j_min()..lat.j_max()).rev() {
            let fine = (j + 1 - lat.j_min()) as usize;
            let coarse = fine - 1;
            for pos in 0..acc[fine].len() {
                let parent = lat.ancestor(j + 1, pos, j);
                let v = acc[fine][pos];
                acc[coarse][parent] += v;
            }
        }
        let mut sup = 0.0f64;
        let mut interior = 0.0f64;
        for (level, sums) in lat.levels().iter().zip(&acc) {
            for (cube, s) in level.cubes.iter().zip(sums) {
                let avg = s / level.side;
                sup = sup.max(avg);
                if !lat.near_boundary(cube) {
                    interior = interior.max(avg);
                }
            }
        }
        let top = acc[0].iter().map(|s| s / lat.levels()[0].side).fold(0.0, f64::max);
        let bmo = self.symbol.bmo_norm();
        CarlesonReport {
            sup,
            top_level_sup: top,
            interior_sup: interior,
            bmo_norm: bmo,
            ratio: (bmo > 0.0).then(|| sup / (bmo * bmo)),
        }
    }

    /// `||pi_b f||_2 / (||b||_BMO ||f||_2)`, `None` when the denominator vanishes.
    pub fn l2_ratio(&self, f: &SampledFunction) -> Result<Option<f64>> {
        let out = self.apply(f)?;
        let den = self.symbol.bmo_norm() * f.l2_norm();
        Ok((den > 0.0).then(|| out.l2_norm() / den))
    }
}

/// `pi_b f` for a one-off symbol.
pub fn paraproduct_apply(b: &BmoSymbol, f: &SampledFunction, bank: &FilterBank, lattice: &CubeLattice) -> Result<SampledFunction> {
    Paraproduct::new(b.clone(), bank, lattice)?.apply(f)
}

/// `pi_b^* g` for a one-off symbol.
pub fn paraproduct_adjoint_apply(
    b: &BmoSymbol,
    g: &SampledFunction,
    bank: &FilterBank,
    lattice: &CubeLattice,
) -> Result<SampledFunction> {
    Paraproduct::new(b.clone(), bank, lattice)?.adjoint(g)
}

/// `K_b(x, y)` for a one-off symbol.
pub fn kernel_eval(b: &BmoSymbol, bank: &FilterBank, lattice: &CubeLattice, x: f64, y: f64) -> Result<f64> {
    Paraproduct::new(b.clone(), bank, lattice)?.kernel_eval(x, y)
}

/// Carleson report for a one-off symbol.
pub fn carleson_check(b: &BmoSymbol, bank: &FilterBank, lattice: &CubeLattice) -> Result<CarlesonReport> {
    Ok(Paraproduct::new(b.clone(), bank, lattice)?.carleson())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_filterbank;
    use crate::grid::{build_lattice, make_grid, Grid};
    use rand::{Rng, SeedableRng};

    fn setup(level: u32) -> (FilterBank, CubeLattice) {
        let g = make_grid(8.0, level).unwrap();
        let j_max = level as i32 - 7;
        (build_filterbank(&g, 2, -3, j_max, 3).unwrap(), build_lattice(&g, 2, -3, j_max).unwrap())
    }

    fn bump_symbol(bank: &FilterBank) -> SampledFunction {
        let g = *bank.grid();
        let a = bank.bump(FilterKind::Psi, 0, g.nearest_index(-1.0).unwrap());
        let b = bank.bump(FilterKind::Psi, 2, g.nearest_index(0.5).unwrap());
        a.combine(1.0, &b, 0.5)
    }

    fn random(g: Grid, seed: u64) -> SampledFunction {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = (0..g.len())
            .map(|i| {
                let x = g.point(i);
                rng.gen_range(-1.0..1.0) * (-x * x / 4.0).exp()
            })
            .collect();
        SampledFunction::from_values(g, v).unwrap()
    }

    fn brute_bmo(v: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for s in 0..v.len() {
            for e in s + 2..=v.len() {
                best = best.max(mean_oscillation(&v[s..e]));
            }
        }
        best
    }

    #[test]
    fn bmo_examples() {
        let g = make_grid(8.0, 7).unwrap();
        assert_eq!(bmo_norm(&SampledFunction::domain_constant(g, 3.0)), 0.0);
        let chi = SampledFunction::indicator(g, 0.0, 1.0, 1.0).unwrap();
        let v = bmo_norm(&chi);
        assert!(v > 0.0 && v <= 1.0);
        assert!(v <= brute_bmo(chi.values()) + 1e-15);
        assert!((bmo_norm(&chi.add_constant(5.0)) - v).abs() < 1e-12);
    }

    #[test]
    fn dyadic_bmo_is_comparable_to_all_intervals() {
        let g = make_grid(4.0, 7).unwrap();
        for seed in 0..4 {
            let f = random(g, seed);
            let d = bmo_norm(&f);
            let b = brute_bmo(f.values());
            assert!(d <= b + 1e-15 && b <= 4.0 * d, "dyadic {d}, brute {b}");
        }
    }

    #[test]
    fn identities_on_the_inner_half() {
        let (bank, lat) = setup(12);
        let g = *bank.grid();
        let b = bump_symbol(&bank);
        let sup_b = b.sup_norm();
        let pp = Paraproduct::new(BmoSymbol::new(b.clone()), &bank, &lat).unwrap();
        let one = SampledFunction::domain_constant(g, 1.0);
        let pb1 = pp.apply(&one).unwrap();
        let ps1 = pp.adjoint(&one).unwrap();
        let mut defect = 0.0f64;
        let mut adj = 0.0f64;
        for (i, x) in g.points().enumerate() {
            if x.abs() < 4.0 {
                defect = defect.max((pb1.values()[i] - b.values()[i]).abs());
                adj = adj.max(ps1.values()[i].abs());
            }
        }
        assert!(defect < 1e-2 * sup_b, "defect {defect}");
        assert!(adj < 1e-2, "adjoint {adj}");
    }

    #[test]
    fn constant_symbol_gives_zero() {
        let (bank, lat) = setup(11);
        let g = *bank.grid();
        let pp = Paraproduct::new(BmoSymbol::new(SampledFunction::domain_constant(g, 2.0)), &bank, &lat).unwrap();
        let f = random(g, 3);
        let out = pp.apply(&f).unwrap();
        assert!(out.sup_norm() < 1e-10 * f.sup_norm());
        assert!(pp.adjoint(&f).unwrap().sup_norm() < 1e-10 * f.sup_norm());
        let c = pp.carleson();
        assert!(c.ratio.is_none());
    }

    #[test]
    fn adjointness_on_random_pairs() {
        let (bank, lat) = setup(11);
        let g = *bank.grid();
        let pp = Paraproduct::new(BmoSymbol::new(bump_symbol(&bank)), &bank, &lat).unwrap();
        for seed in 0..3 {
            let f = random(g, 10 + seed);
            let k = random(g, 20 + seed);
            let lhs = pp.apply(&f).unwrap().inner(&k);
            let rhs = f.inner(&pp.adjoint(&k).unwrap());
            assert!((lhs - rhs).abs() <= 1e-8 * lhs.abs().max(rhs.abs()).max(1e-30));
        }
    }

    #[test]
    fn adding_a_constant_to_the_symbol_changes_nothing() {
        let (bank, lat) = setup(11);
        let g = *bank.grid();
        let b = bump_symbol(&bank);
        let f = random(g, 5);
        let a = Paraproduct::new(BmoSymbol::new(b.clone()), &bank, &lat).unwrap().apply(&f).unwrap();
        let c = Paraproduct::new(BmoSymbol::new(b.add_constant(5.0)), &bank, &lat).unwrap().apply(&f).unwrap();
        assert!(c.relative_l2_error(&a) < 1e-8);
    }

    #[test]
    fn kernel_entries_match_columns_and_rows() {
        let (bank, lat) = setup(10);
        let g = *bank.grid();
        let pp = Paraproduct::new(BmoSymbol::new(bump_symbol(&bank)), &bank, &lat).unwrap();
        let (iy, ix) = (g.nearest_index(0.3).unwrap(), g.nearest_index(-0.2).unwrap());
        let k = pp.kernel_eval(g.point(ix), g.point(iy)).unwrap();
        let col = pp.column(iy).values()[ix];
        let row = pp.row(ix).values()[iy];
        assert!((k - col).abs() < 1e-9 * k.abs().max(1.0));
        assert!((k - row).abs() < 1e-9 * k.abs().max(1.0));
        assert!(matches!(pp.kernel_eval(0.3, 0.3), Err(Error::Singularity(_))));
        let r = pp.kernel_bounds(&[iy], 8, 1.0);
        assert!(r.size_sup.is_finite() && r.size_ratio > 0.0);
        assert!(r.smoothness_x_sup.is_finite() && r.smoothness_y_sup.is_finite());
    }

    #[test]
    fn carleson_matches_direct_double_loop() {
        let (bank, lat) = setup(10);
        let g = *bank.grid();
        let chi = SampledFunction::indicator(g, 0.0, 1.0, 1.0).unwrap();
        let pp = Paraproduct::new(BmoSymbol::new(chi), &bank, &lat).unwrap();
        let fast = pp.carleson();
        let mut slow = 0.0f64;
        for outer_j in lat.scales() {
            for outer in lat.cubes(outer_j) {
                let mut s = 0.0;
                for j in outer_j..=lat.j_max() {
                    for (q, c) in lat.cubes(j).iter().zip(&pp.symbol_coefficients()[(j - lat.j_min()) as usize]) {
                        if lat.contains(outer, q) {
                            s += q.side * c * c;
                        }
                    }
                }
                slow = slow.max(s / outer.side);
            }
        }
        assert!((fast.sup - slow).abs() <= 1e-12 * slow);
        assert!(fast.sup.is_finite() && fast.sup > 0.0);
        assert!(fast.top_level_sup <= fast.sup && fast.interior_sup <= fast.sup);
    }
}
