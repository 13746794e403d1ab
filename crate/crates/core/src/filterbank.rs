//! The filter triple `(psi, phi, tilde)`.
//!
//! `psi` is band-limited: its spectrum is a smooth bump on the annulus
//! `1/2 <= |xi| <= 2`, normalized so that the squares of its dyadic dilates
//! sum to one. Every dilate `psi_j` is held as an exact sample of that
//! spectrum on the padded frequency grid, so `psi_j` is a periodic kernel on
//! the padded circle. `phi` is a compactly supported bump with unit mass,
//! sampled in space at each scale. `tilde` is `psi`.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, Spectrum};
use crate::grid::{CubeLattice, Grid, SampledFunction};

/// Sharpness of the transition bump.
const TRANSITION_SHARPNESS: f64 = 1.0;
/// Largest admissible partition-of-unity residual on the band.
pub const PARTITION_TOL: f64 = 1e-10;
/// Half-width and level of the wide grid used for moment quadrature of `psi`.
const MOMENT_GRID: (f64, u32) = (256.0, 17);

fn smooth_step(t: f64) -> f64 {
    let s = |t: f64| if t > 0.0 { (-TRANSITION_SHARPNESS / t).exp() } else { 0.0 };
    if t <= 0.0 {
        0.0
    } else if t >= 1.0 {
        1.0
    } else {
        let a = s(t);
        a / (a + s(1.0 - t))
    }
}

/// Unnormalized bump on `1/2 <= |xi| <= 2`, equal to one at `|xi| = 1`.
fn theta_hat(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 0.5 || a >= 2.0 {
        0.0
    } else if a <= 1.0 {
        smooth_step(2.0 * a - 1.0)
    } else {
        1.0 - smooth_step(a - 1.0)
    }
}

/// Spectrum of `psi`.
pub fn psi_hat(xi: f64) -> f64 {
    let t = theta_hat(xi);
    if t == 0.0 {
        return 0.0;
    }
    let lo = theta_hat(0.5 * xi);
    let hi = theta_hat(2.0 * xi);
    t / (t * t + lo * lo + hi * hi).sqrt()
}

/// Unnormalized smoothing profile `exp(-1 / (1 - x^2))` on `(-1, 1)`.
fn phi_profile(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - x * x)).exp()
    }
}

/// Mass of [`phi_profile`], by a fine midpoint rule.
fn phi_profile_mass() -> f64 {
    let m = 1 << 16;
    let dx = 2.0 / m as f64;
    (0..m).map(|i| phi_profile(-1.0 + (i as f64 + 0.5) * dx)).sum::<f64>() * dx
}

/// Which member of the triple to apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Psi,
    Phi,
    Tilde,
}

/// Validation figures recorded at construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterBankReport {
    pub partition_residual: f64,
    pub band: [f64; 2],
    pub band_bins: usize,
    pub psi_moments: Vec<f64>,
    pub phi_mass: f64,
    /// `sup |psi(x)| (1 + |x|)^4` over the domain.
    pub psi_decay_ratio: f64,
    /// Largest spectral value of `psi` outside the annulus.
    pub annulus_leak: f64,
}

/// Filters dilated to every scale of a lattice, cached as padded-grid multipliers.
#[derive(Clone, Debug)]
pub struct FilterBank {
    grid: Grid,
    shift: i32,
    j_min: i32,
    j_max: i32,
    moment_order: usize,
    psi: SampledFunction,
    phi: SampledFunction,
    psi_mult: Vec<Vec<f64>>,
    phi_mult: Vec<Vec<f64>>,
    report: FilterBankReport,
}

/// Build and validate the bank on `grid` for scales `j_min..=j_max`.
pub fn build_filterbank(grid: &Grid, n_shift: i32, j_min: i32, j_max: i32, moment_order: usize) -> Result<FilterBank> {
    FilterBank::new(grid, n_shift, j_min, j_max, moment_order)
}

impl FilterBank {
    pub fn new(grid: &Grid, n_shift: i32, j_min: i32, j_max: i32, moment_order: usize) -> Result<Self> {
        if moment_order > 8 {
            return Err(Error::Config(format!("moment order must be at most 8, got {moment_order}")));
        }
        CubeLattice::new(grid, n_shift, j_min, j_max)?;
        for j in j_min..=j_max {
            grid.check_scale(j)?;
        }
        let psi_mult: Vec<Vec<f64>> = (j_min..=j_max)
            .map(|j| {
                let s = 2f64.powi(-j);
                fft::sample_multiplier(grid, |xi| psi_hat(s * xi))
            })
            .collect();
        let phi_mult: Vec<Vec<f64>> = (j_min..=j_max).map(|j| phi_multiplier(grid, j)).collect();

        let psi = centered_kernel(grid, &fft::sample_multiplier(grid, psi_hat));
        let phi_mass = phi_profile_mass();
        let phi = SampledFunction::from_fn(*grid, 1.0, |x| phi_profile(x) / phi_mass)?;

        let band = [2f64.powi(j_min + 1), 2f64.powi(j_max - 1)];
        let len = grid.padded_len();
        let h = grid.spacing();
        let mut residual = 0.0f64;
        let mut band_bins = 0usize;
        for k in 0..len {
            let xi = fft::bin_frequency(k, len, h).abs();
            if xi >= band[0] && xi <= band[1] {
                let total: f64 = psi_mult.iter().map(|m| m[k] * m[k]).sum();
                residual = residual.max((total - 1.0).abs());
                band_bins += 1;
            }
        }
        if residual > PARTITION_TOL {
            return Err(Error::Construction(format!(
                "partition of unity residual {residual:e} exceeds {PARTITION_TOL:e}"
            )));
        }
        let leak = (0..len)
            .map(|k| fft::bin_frequency(k, len, h).abs())
            .filter(|xi| *xi < 0.5 || *xi > 2.0)
            .map(psi_hat)
            .fold(0.0f64, f64::max);
        let psi_moments = psi_moments_wide(moment_order);
        let psi_decay_ratio = grid
            .points()
            .zip(psi.values())
            .map(|(x, v)| v.abs() * (1.0 + x.abs()).powi(4))
            .fold(0.0f64, f64::max);
        let report = FilterBankReport {
            partition_residual: residual,
            band,
            band_bins,
            psi_moments,
            phi_mass: phi.integral(),
            psi_decay_ratio,
            annulus_leak: leak,
        };
        Ok(Self {
            grid: *grid,
            shift: n_shift,
            j_min,
            j_max,
            moment_order,
            psi,
            phi,
            psi_mult,
            phi_mult,
            report,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn shift(&self) -> i32 {
        self.shift
    }

    pub fn j_min(&self) -> i32 {
        self.j_min
    }

    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn scales(&self) -> std::ops::RangeInclusive<i32> {
        self.j_min..=self.j_max
    }

    pub fn moment_order(&self) -> usize {
        self.moment_order
    }

    /// `psi` sampled on the grid, centered at the origin.
    pub fn psi(&self) -> &SampledFunction {
        &self.psi
    }

    pub fn tilde(&self) -> &SampledFunction {
        &self.psi
    }

    pub fn phi(&self) -> &SampledFunction {
        &self.phi
    }

    pub fn report(&self) -> &FilterBankReport {
        &self.report
    }

    /// Frequency band on which the partition of unity is exact.
    pub fn band(&self) -> [f64; 2] {
        self.report.band
    }

    pub fn in_band(&self, xi: f64) -> bool {
        let a = xi.abs();
        a >= self.report.band[0] && a <= self.report.band[1]
    }

    /// `sum_j |psi_hat(2^{-j} xi)|^2` over the covered scales.
    pub fn partition_sum(&self, xi: f64) -> f64 {
        self.scales().map(|j| psi_hat(2f64.powi(-j) * xi).powi(2)).sum()
    }

    /// Padded-grid multiplier of `kind` at scale `j`.
    pub fn multiplier(&self, kind: FilterKind, j: i32) -> &[f64] {
        let i = self.slot(j);
        match kind {
            FilterKind::Psi | FilterKind::Tilde => &self.psi_mult[i],
            FilterKind::Phi => &self.phi_mult[i],
        }
    }

    fn slot(&self, j: i32) -> usize {
        assert!(self.scales().contains(&j), "scale {j} outside the bank");
        (j - self.j_min) as usize
    }

    /// `kind_j * f` on the grid.
    pub fn apply(&self, kind: FilterKind, j: i32, spectrum: &Spectrum) -> Vec<f64> {
        spectrum.filter_real(self.multiplier(kind, j))
    }

    /// `kind_j * f` for every covered scale, coarsest first.
    pub fn apply_all(&self, kind: FilterKind, f: &SampledFunction) -> Vec<Vec<f64>> {
        assert_eq!(f.grid(), &self.grid, "function and bank live on different grids");
        let spec = Spectrum::of(f);
        self.scales().collect::<Vec<_>>().into_par_iter().map(|j| self.apply(kind, j, &spec)).collect()
    }

    /// Kernel `kind_j` translated to every sample in `indices`, weighted and summed.
    pub fn synthesize_spikes(&self, kind: FilterKind, j: i32, indices: &[usize], weights: &[f64]) -> Vec<f64> {
        Spectrum::of_spikes(&self.grid, indices, weights).filter_real(self.multiplier(kind, j))
    }

    /// Kernel `kind_j` on signed padded offsets: entry `d` holds `kind_j(d h)`.
    pub fn kernel(&self, kind: FilterKind, j: i32) -> Vec<f64> {
        fft::kernel_from_multiplier(&self.grid, self.multiplier(kind, j))
    }

    /// `M_phi f = sup_j |phi_j * f|` over the covered scales.
    pub fn smooth_maximal(&self, f: &SampledFunction) -> SampledFunction {
        let fields = self.apply_all(FilterKind::Phi, f);
        let mut out = vec![0.0f64; self.grid.len()];
        for field in &fields {
            for (o, v) in out.iter_mut().zip(field) {
                *o = o.max(v.abs());
            }
        }
        SampledFunction::from_values(self.grid, out).expect("finite filter output")
    }

    /// Fraction of the padded spectral energy of `f` inside the band.
    pub fn band_energy(&self, f: &SampledFunction) -> f64 {
        Spectrum::of(f).energy_fraction(|xi| self.in_band(xi))
    }

    /// Multiplier with every covered scale's squared `psi` spectrum summed.
    pub fn partition_multiplier(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.padded_len()];
        for m in &self.psi_mult {
            for (o, v) in out.iter_mut().zip(m) {
                *o += v * v;
            }
        }
        out
    }

    /// `kind_j(x - x_i)` as a function on the grid.
    pub fn bump(&self, kind: FilterKind, j: i32, sample: usize) -> SampledFunction {
        let values = self.synthesize_spikes(kind, j, &[sample], &[1.0]);
        SampledFunction::from_values(self.grid, values).expect("finite filter output")
    }

    /// `(x, psi(x), phi(x))` rows.
    pub fn export_rows(&self) -> Vec<[f64; 3]> {
        self.grid
            .points()
            .zip(self.psi.values().iter().zip(self.phi.values()))
            .map(|(x, (p, f))| [x, *p, *f])
            .collect()
    }
}

/// `phi_j` sampled in space on signed padded offsets, as a real multiplier
/// renormalized to unit mass.
fn phi_multiplier(grid: &Grid, j: i32) -> Vec<f64> {
    let len = grid.padded_len();
    let h = grid.spacing();
    let scale = 2f64.powi(j);
    let kernel: Vec<f64> = (0..len)
        .map(|d| {
            let x = fft::signed_bin(d, len) as f64 * h;
            scale * phi_profile(scale * x)
        })
        .collect();
    let spec: Vec<Complex64> = fft::multiplier_from_kernel(grid, &kernel);
    let dc = spec[0].re;
    spec.iter().map(|c| c.re / dc).collect()
}

/// Kernel of a real multiplier laid out on the grid with the origin at sample `n/2`.
fn centered_kernel(grid: &Grid, mult: &[f64]) -> SampledFunction {
    let kernel = fft::kernel_from_multiplier(grid, mult);
    let n = grid.len();
    let len = grid.padded_len();
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as i64 - (n / 2) as i64;
            kernel[d.rem_euclid(len as i64) as usize]
        })
        .collect();
    SampledFunction::from_values(*grid, values).expect("finite kernel")
}

/// `[int g x^alpha dx]` for `alpha = 0..=order` by the grid rule.
pub fn check_moments(g: &SampledFunction, order: usize) -> Vec<f64> {
    let h = g.grid().spacing();
    (0..=order)
        .map(|a| {
            g.grid()
                .points()
                .zip(g.values())
                .map(|(x, v)| v * x.powi(a as i32))
                .sum::<f64>()
                * h
        })
        .collect()
}

/// `psi` sampled on a wide grid, where its periodic images are negligible.
pub fn psi_on_wide_grid() -> SampledFunction {
    let grid = Grid::new(MOMENT_GRID.0, MOMENT_GRID.1).expect("static grid");
    let mult = fft::sample_multiplier(&grid, psi_hat);
    centered_kernel(&grid, &mult)
}

fn psi_moments_wide(order: usize) -> Vec<f64> {
    check_moments(&psi_on_wide_grid(), order)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn bank() -> FilterBank {
        build_filterbank(&make_grid(8.0, 12).unwrap(), 2, -3, 5, 3).unwrap()
    }

    #[test]
    fn partition_of_unity_on_band() {
        let b = bank();
        assert!((b.partition_sum(1.0) - 1.0).abs() < 1e-10);
        assert_eq!(b.partition_sum(0.0), 0.0);
        for xi in [0.25, 0.3, 1.7, 3.14159, 9.0, 16.0] {
            assert!((b.partition_sum(xi) - 1.0).abs() < 1e-10, "xi = {xi}");
        }
        assert!(b.report().partition_residual <= PARTITION_TOL);
        assert!(b.report().band_bins > 0);
        assert_eq!(b.report().annulus_leak, 0.0);
    }

    #[test]
    fn vanishing_moments_and_unit_mass() {
        let b = bank();
        assert!(b.report().psi_moments.iter().all(|m| m.abs() <= 1e-8), "{:?}", b.report().psi_moments);
        assert!((b.report().phi_mass - 1.0).abs() <= 1e-8);
        let m = check_moments(b.phi(), 1);
        assert!((m[0] - 1.0).abs() <= 1e-8);
        assert!(m[1].abs() <= 1e-12);
        assert!(b.report().psi_decay_ratio.is_finite());
    }

    #[test]
    fn even_bump_has_zero_first_moment() {
        let g = make_grid(8.0, 12).unwrap();
        let bump = SampledFunction::from_fn(g, 8.0, |x| (-x * x).exp()).unwrap();
        assert!(check_moments(&bump, 1)[1].abs() < 1e-12);
    }

    #[test]
    fn wide_grid_moments_agree_with_double_resolution() {
        let coarse = check_moments(&psi_on_wide_grid(), 3);
        let grid = Grid::new(256.0, 18).unwrap();
        let fine = check_moments(&centered_kernel(&grid, &fft::sample_multiplier(&grid, psi_hat)), 3);
        for (a, b) in coarse.iter().zip(&fine) {
            assert!(a.abs() <= 1e-8 && b.abs() <= 1e-8, "{a:e} {b:e}");
        }
    }

    #[test]
    fn dilates_match_sampled_spectrum() {
        let b = bank();
        let len = b.grid().padded_len();
        let h = b.grid().spacing();
        for j in b.scales() {
            let m = b.multiplier(FilterKind::Psi, j);
            let base = b.multiplier(FilterKind::Psi, 0);
            for k in (0..len).step_by(37) {
                let xi = fft::bin_frequency(k, len, h);
                assert_eq!(m[k], psi_hat(2f64.powi(-j) * xi));
                // Doubling: scale j at xi equals scale 0 at 2^{-j} xi when that is a bin.
                if j > 0 && k % (1 << j) == 0 {
                    let k0 = (fft::signed_bin(k, len) >> j).rem_euclid(len as i64) as usize;
                    assert!((m[k] - base[k0]).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn phi_is_a_unit_mass_low_pass() {
        let b = bank();
        for j in b.scales() {
            let m = b.multiplier(FilterKind::Phi, j);
            assert_eq!(m[0], 1.0);
        }
        let one = SampledFunction::domain_constant(*b.grid(), 1.0);
        let out = b.apply_all(FilterKind::Phi, &one);
        let c = b.grid().len() / 2;
        for field in &out {
            assert!((field[c] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn bad_parameters_are_rejected() {
        let g = make_grid(8.0, 12).unwrap();
        assert!(build_filterbank(&g, 2, -3, 9, 3).is_err());
        assert!(build_filterbank(&g, 2, -3, 5, 9).is_err());
    }
}
