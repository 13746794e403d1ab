//! Calderón-Zygmund operators with kernels `K(x, y) = a(x) k(x - y) b(y)`:
//! sampled kernel conditions, matrix coefficients `psi_j T psi_j'`, the
//! almost-orthogonality table, `T1` pairings, the corrected operator
//! `T - pi_{T1}` and the Hardy boundedness harness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::calderon::{hardy_norm, HardyMethod};
use crate::error::{Error, Result};
use crate::fft::{self, bin_frequency, Spectrum};
use crate::filterbank::{FilterBank, FilterKind};
use crate::grid::{CubeLattice, Grid, SampledFunction};
use crate::paraproduct::{BmoSymbol, Paraproduct};
use crate::varexp::ExponentFunction;

/// Relative agreement required between the kernel and apply routes.
pub const ROUTE_TOL: f64 = 1e-4;
/// Coefficients below this fraction of `||F|| ||T G||` are compared absolutely.
pub const ROUTE_FLOOR: f64 = 1e-3;
/// A pairing counts as zero below `PAIRING_TOL * C_K * ||eta||_1`.
pub const PAIRING_TOL: f64 = 1e-6;
/// `|int eta|` allowed for a test function, relative to `max(1, ||eta||_1)`.
pub const MEAN_ZERO_TOL: f64 = 1e-8;

/// Built-in operators, selected by name in configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorSpec {
    /// `1 / (pi t)`, principal value.
    Hilbert,
    /// `(1 - exp(-t^2 / delta^2)) / (pi t)`.
    SmoothHilbert { delta: f64 },
    /// `exp(-t^2 / w^2) / (w sqrt(pi))`.
    Mollifier { width: f64 },
    /// `a(x) / (pi (x - y))` with `a(x) = 1 + amplitude exp(-x^2 / width^2)`.
    ModulatedHilbert { amplitude: f64, width: f64 },
    /// `a(y) / (pi (x - y))`.
    RightModulated { amplitude: f64, width: f64 },
    /// `a(x)` times the Gaussian mollifier of width `width`.
    ModulatedMollifier { width: f64, amplitude: f64, modulation_width: f64 },
    /// `cos(log |t|) / (pi t)`, principal value.
    LogOscillating,
}

impl OperatorSpec {
    fn validate(&self) -> Result<()> {
        let pos = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("operator parameter {name} must be positive, got {v}")))
            }
        };
        let fin = |name: &str, v: f64| {
            if v.is_finite() && v > -1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("modulation amplitude {name} must exceed -1, got {v}")))
            }
        };
        match *self {
            Self::Hilbert | Self::LogOscillating => Ok(()),
            Self::SmoothHilbert { delta } => pos("delta", delta),
            Self::Mollifier { width } => pos("width", width),
            Self::ModulatedHilbert { amplitude, width } | Self::RightModulated { amplitude, width } => {
                fin("amplitude", amplitude)?;
                pos("width", width)
            }
            Self::ModulatedMollifier { width, amplitude, modulation_width } => {
                pos("width", width)?;
                fin("amplitude", amplitude)?;
                pos("modulation_width", modulation_width)
            }
        }
    }
}

/// A kernel `scale * a(x) k(x - y) b(y)` with regularity `epsilon = 1`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CzoKernel {
    pub spec: OperatorSpec,
    pub scale: f64,
}

fn modulation(amplitude: f64, width: f64, x: f64) -> f64 {
    1.0 + amplitude * (-(x / width).powi(2)).exp()
}

impl CzoKernel {
    pub fn new(spec: OperatorSpec, scale: f64) -> Result<Self> {
        spec.validate()?;
        if !scale.is_finite() {
            return Err(Error::Config(format!("operator scale must be finite, got {scale}")));
        }
        Ok(Self { spec, scale })
    }

    pub fn hilbert() -> Self {
        Self { spec: OperatorSpec::Hilbert, scale: 1.0 }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { spec: self.spec.clone(), scale: self.scale * c }
    }

    pub fn epsilon(&self) -> f64 {
        1.0
    }

    /// Declared `C_K` in `|K(x, y)| <= C_K / |x - y|`.
    pub fn size_constant(&self) -> f64 {
        let gauss = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E).sqrt();
        let c = match self.spec {
            OperatorSpec::Hilbert | OperatorSpec::SmoothHilbert { .. } | OperatorSpec::LogOscillating => {
                std::f64::consts::FRAC_1_PI
            }
            OperatorSpec::Mollifier { .. } => gauss,
            OperatorSpec::ModulatedHilbert { amplitude, .. } | OperatorSpec::RightModulated { amplitude, .. } => {
                (1.0 + amplitude.abs()) * std::f64::consts::FRAC_1_PI
            }
            OperatorSpec::ModulatedMollifier { amplitude, .. } => (1.0 + amplitude.abs()) * gauss,
        };
        c * self.scale.abs()
    }

    /// Whether `k` needs a principal value at the origin.
    pub fn singular(&self) -> bool {
        matches!(
            self.spec,
            OperatorSpec::Hilbert
                | OperatorSpec::LogOscillating
                | OperatorSpec::ModulatedHilbert { .. }
                | OperatorSpec::RightModulated { .. }
        )
    }

    /// `K(x, y) = k(x - y)`.
    pub fn is_convolution(&self) -> bool {
        matches!(
            self.spec,
            OperatorSpec::Hilbert
                | OperatorSpec::SmoothHilbert { .. }
                | OperatorSpec::Mollifier { .. }
                | OperatorSpec::LogOscillating
        )
    }

    fn left(&self, x: f64) -> f64 {
        match self.spec {
            OperatorSpec::ModulatedHilbert { amplitude, width } => modulation(amplitude, width, x),
            OperatorSpec::ModulatedMollifier { amplitude, modulation_width, .. } => {
                modulation(amplitude, modulation_width, x)
            }
            _ => 1.0,
        }
    }

    fn right(&self, y: f64) -> f64 {
        match self.spec {
            OperatorSpec::RightModulated { amplitude, width } => modulation(amplitude, width, y),
            _ => 1.0,
        }
    }

    /// `a` and `b` far from the origin.
    fn left_background(&self) -> f64 {
        1.0
    }

    fn right_background(&self) -> f64 {
        1.0
    }

    /// `scale * k(t)`; at `t = 0` the value of a nonsingular profile.
    fn profile(&self, t: f64) -> f64 {
        use std::f64::consts::{FRAC_1_PI, PI};
        let v = match self.spec {
            OperatorSpec::Hilbert | OperatorSpec::ModulatedHilbert { .. } | OperatorSpec::RightModulated { .. } => {
                FRAC_1_PI / t
            }
            OperatorSpec::SmoothHilbert { delta } => {
                if t == 0.0 {
                    0.0
                } else {
                    -(-(t / delta).powi(2)).exp_m1() / (PI * t)
                }
            }
            OperatorSpec::Mollifier { width } | OperatorSpec::ModulatedMollifier { width, .. } => {
                (-(t / width).powi(2)).exp() / (width * PI.sqrt())
            }
            OperatorSpec::LogOscillating => t.abs().ln().cos() / (PI * t),
        };
        self.scale * v
    }

    /// `K(x, y)`; the diagonal of a singular kernel is an error.
    pub fn eval(&self, x: f64, y: f64) -> Result<f64> {
        if x == y && self.singular() {
            return Err(Error::Singularity(x));
        }
        Ok(self.left(x) * self.profile(x - y) * self.right(y))
    }

    /// Continuous spectrum of `k` on the padded frequency grid.
    pub fn multiplier(&self, grid: &Grid) -> Vec<Complex64> {
        use std::f64::consts::PI;
        let len = grid.padded_len();
        let h = grid.spacing();
        let sgn = |xi: f64| {
            if xi > 0.0 {
                1.0
            } else if xi < 0.0 {
                -1.0
            } else {
                0.0
            }
        };
        let analytic = |m: &dyn Fn(f64) -> Complex64| -> Vec<Complex64> {
            (0..len).map(|k| m(bin_frequency(k, len, h)) * self.scale).collect()
        };
        match self.spec {
            OperatorSpec::Hilbert | OperatorSpec::ModulatedHilbert { .. } | OperatorSpec::RightModulated { .. } => {
                analytic(&|xi| Complex64::new(0.0, -sgn(xi)))
            }
            OperatorSpec::SmoothHilbert { delta } => {
                analytic(&|xi| Complex64::new(0.0, -sgn(xi) * libm::erfc(PI * delta * xi.abs())))
            }
            OperatorSpec::Mollifier { width } | OperatorSpec::ModulatedMollifier { width, .. } => {
                analytic(&|xi| Complex64::new((-(PI * width * xi).powi(2)).exp(), 0.0))
            }
            OperatorSpec::LogOscillating => {
                let table = self.offset_table(grid);
                let n = grid.len() as i64;
                let kernel: Vec<f64> = (0..len)
                    .map(|d| {
                        let s = fft::signed_bin(d, len);
                        if s.abs() < n {
                            table[(s + n - 1) as usize]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                // The table already carries the quadrature weight.
                fft::multiplier_from_kernel(grid, &kernel.iter().map(|v| v / h).collect::<Vec<_>>())
            }
        }
    }

    /// Weighted `k` on offsets `-(n-1)..=(n-1)` (entry `d + n - 1`): singular
    /// profiles use the odd-offset rule `2 h k(d h)`, the others `h k(d h)`.
    fn offset_table(&self, grid: &Grid) -> Vec<f64> {
        let n = grid.len() as i64;
        let h = grid.spacing();
        (-(n - 1)..n)
            .map(|d| {
                if self.singular() {
                    if d % 2 == 0 {
                        0.0
                    } else {
                        2.0 * h * self.profile(d as f64 * h)
                    }
                } else {
                    h * self.profile(d as f64 * h)
                }
            })
            .collect()
    }

    /// `T f` by FFT on the padded circle.
    pub fn apply(&self, f: &SampledFunction) -> SampledFunction {
        let grid = *f.grid();
        let m = self.multiplier(&grid);
        self.sandwich(f, &m, |x| self.right(x), |x| self.left(x), self.right_background(), self.left_background())
    }

    /// `T* g`, the operator with kernel `K(y, x)`.
    pub fn adjoint_apply(&self, g: &SampledFunction) -> SampledFunction {
        let grid = *g.grid();
        let m: Vec<Complex64> = self.multiplier(&grid).into_iter().map(|c| c.conj()).collect();
        self.sandwich(g, &m, |x| self.left(x), |x| self.right(x), self.left_background(), self.right_background())
    }

    fn sandwich(
        &self,
        f: &SampledFunction,
        m: &[Complex64],
        inner: impl Fn(f64) -> f64,
        outer: impl Fn(f64) -> f64,
        inner_bg: f64,
        outer_bg: f64,
    ) -> SampledFunction {
        let grid = *f.grid();
        let weighted: Vec<f64> = f.values().iter().enumerate().map(|(i, v)| v * inner(grid.point(i))).collect();
        let bg = f.background() * inner_bg;
        let weighted = SampledFunction::from_values(grid, weighted).expect("finite").with_background(bg);
        let filtered = Spectrum::of(&weighted).filter_complex(m);
        let values = filtered.iter().enumerate().map(|(i, v)| v * outer(grid.point(i))).collect();
        SampledFunction::from_values(grid, values).expect("finite operator output").with_background(outer_bg * m[0].re * bg)
    }

    /// `T1` as a function on the grid, with the constant extended beyond the domain.
    pub fn t1(&self, grid: &Grid) -> SampledFunction {
        self.apply(&SampledFunction::domain_constant(*grid, 1.0))
    }

    /// `T*1` likewise.
    pub fn t_star1(&self, grid: &Grid) -> SampledFunction {
        self.adjoint_apply(&SampledFunction::domain_constant(*grid, 1.0))
    }

    /// `sum_{u, v} F(u) K(u, v) G(v)` by direct summation over the grid.
    pub fn bilinear_direct(&self, f: &SampledFunction, g: &SampledFunction) -> f64 {
        let grid = *f.grid();
        let h = grid.spacing();
        let n = grid.len();
        let table = self.offset_table(&grid);
        let fa: Vec<f64> = (0..n).map(|i| f.values()[i] * self.left(grid.point(i))).collect();
        let gb: Vec<f64> = (0..n).map(|i| g.values()[i] * self.right(grid.point(i))).collect();
        let active: Vec<usize> = (0..n).filter(|&v| gb[v] != 0.0).collect();
        (0..n)
            .into_par_iter()
            .filter(|&u| fa[u] != 0.0)
            .map(|u| {
                let s: f64 = active.iter().map(|&v| table[u + n - 1 - v] * gb[v]).sum();
                fa[u] * s * h
            })
            .sum()
    }
}

/// Sampled suprema of the size and smoothness conditions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConditionReport {
    pub epsilon: f64,
    pub size_constant: f64,
    /// `sup |K(x, y)| |x - y|`.
    pub size_sup: f64,
    pub size_ratio: f64,
    /// `sup |K(x, y) - K(x', y)| |x - y|^{1 + eps} / |x - x'|^eps`.
    pub smoothness_x_sup: f64,
    pub smoothness_y_sup: f64,
    pub smoothness_x_ratio: f64,
    pub smoothness_y_ratio: f64,
    pub samples: usize,
}

impl KernelConditionReport {
    pub fn finite(&self) -> bool {
        self.size_sup.is_finite() && self.smoothness_x_sup.is_finite() && self.smoothness_y_sup.is_finite()
    }
}

/// Random pairs `x, y` in `[-region, region]` with `|x - y|` log-uniform over
/// `[1e-3, 2 region]`, and perturbations `|x - x'| <= |x - y| / 2`.
pub fn kernel_condition_check(k: &CzoKernel, region: f64, samples: usize, seed: u64) -> KernelConditionReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = k.epsilon();
    let (lo, hi) = (1e-3f64.ln(), (2.0 * region).ln());
    let mut size = 0.0f64;
    let mut sx = 0.0f64;
    let mut sy = 0.0f64;
    for _ in 0..samples {
        let x: f64 = rng.gen_range(-region..region);
        let t = rng.gen_range(lo..hi).exp() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let y = x - t;
        let s = 0.5 * t.abs() * rng.gen_range(-7.0f64..0.0).exp() * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let kxy = k.eval(x, y).unwrap_or(0.0);
        size = size.max(kxy.abs() * t.abs());
        let d = t.abs().powf(1.0 + eps) / s.abs().powf(eps);
        if let Ok(v) = k.eval(x + s, y) {
            sx = sx.max((kxy - v).abs() * d);
        }
        if let Ok(v) = k.eval(x, y + s) {
            sy = sy.max((kxy - v).abs() * d);
        }
    }
    let c = k.size_constant();
    let r = |v: f64| if c > 0.0 { v / c } else { f64::INFINITY };
    KernelConditionReport {
        epsilon: eps,
        size_constant: c,
        size_sup: size,
        size_ratio: r(size),
        smoothness_x_sup: sx,
        smoothness_y_sup: sy,
        smoothness_x_ratio: r(sx),
        smoothness_y_ratio: r(sy),
        samples,
    }
}

/// `psi_j T psi_j'(x_Q, x_Q')` by both routes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixCoefficient {
    pub kernel_route: f64,
    pub apply_route: f64,
    pub relative_gap: f64,
}

/// `int int psi_j(x_Q - u) K(u, v) psi_j'(v - x_Q') du dv` at anchor samples `iq`, `iq2`.
pub fn matrix_coeff(
    t: &CzoKernel,
    bank: &FilterBank,
    j: i32,
    jp: i32,
    iq: usize,
    iq2: usize,
) -> Result<MatrixCoefficient> {
    for s in [j, jp] {
        if !bank.scales().contains(&s) {
            return Err(Error::ScaleRange { scale: s, reason: "outside the filter bank".into() });
        }
    }
    let grid = *bank.grid();
    if iq >= grid.len() || iq2 >= grid.len() {
        return Err(Error::Domain("anchor sample outside the grid".into()));
    }
    let f = bank.bump(FilterKind::Psi, j, iq);
    let g = bank.bump(FilterKind::Psi, jp, iq2);
    let kernel_route = t.bilinear_direct(&f, &g);
    let tg = t.apply(&g);
    let apply_route = f.inner(&tg);
    let floor = ROUTE_FLOOR * f.l2_norm() * tg.l2_norm();
    let scale = kernel_route.abs().max(apply_route.abs()).max(floor);
    let relative_gap = if scale > 0.0 { (kernel_route - apply_route).abs() / scale } else { 0.0 };
    if relative_gap > ROUTE_TOL {
        return Err(Error::NumericalIntegrity(format!(
            "matrix coefficient routes disagree at (j, j') = ({j}, {jp}): {kernel_route} vs {apply_route}"
        )));
    }
    Ok(MatrixCoefficient { kernel_route, apply_route, relative_gap })
}

/// `2^{-|j-j'| eps} 2^{-(j ^ j') eps} / (2^{-(j ^ j')} + d)^{1 + eps}`.
pub fn orthogonality_bound(j: i32, jp: i32, distance: f64, eps: f64) -> f64 {
    let m = j.min(jp) as f64;
    2f64.powf(-((j - jp).abs() as f64) * eps) * 2f64.powf(-m * eps) / (2f64.powf(-m) + distance).powf(1.0 + eps)
}

/// Outcome of a `T1` or `T*1` pairing against one test function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairingValue {
    pub value: f64,
    /// Pairing with the integration window of half-width `windows[m]`.
    pub windows: Vec<f64>,
    pub values: Vec<f64>,
    /// `|value(last window) - value(previous window)|`.
    pub tail: f64,
    pub eta_l1: f64,
}

/// Which constant function is paired.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingSide {
    /// `<T1, eta> = int int K(x, y) eta(x) dy dx`.
    Left,
    /// `<T*1, eta> = int int K(x, y) eta(y) dx dy`.
    Right,
}

/// `<T1, eta>` or `<T*1, eta>` by quadrature; the free variable runs over
/// windows of half-width `R/2, R, 2R, 4R` centred at the paired point.
pub fn pairing_t1(t: &CzoKernel, eta: &SampledFunction, side: PairingSide) -> Result<PairingValue> {
    let grid = *eta.grid();
    let h = grid.spacing();
    let l1 = eta.abs().integral();
    if eta.integral().abs() > MEAN_ZERO_TOL * l1.max(1.0) {
        return Err(Error::Precondition(format!("test function has mean {} instead of 0", eta.integral())));
    }
    if eta.support_radius() >= grid.half_width() {
        return Err(Error::Precondition("test function must be compactly supported inside the domain".into()));
    }
    let r = grid.half_width();
    let windows: Vec<f64> = (0..4).map(|m| r * 2f64.powi(m - 1)).collect();
    let kmax: Vec<usize> = windows.iter().map(|w| (w / h).round() as usize).collect();
    let last = *kmax.last().unwrap();
    let singular = t.singular();
    let points: Vec<usize> = (0..grid.len()).filter(|&i| eta.values()[i] != 0.0).collect();
    let per_point: Vec<Vec<f64>> = points
        .par_iter()
        .map(|&i| {
            let x = grid.point(i);
            let k_at = |s: f64| match side {
                PairingSide::Left => t.left(x) * t.profile(-s) * t.right(x + s),
                PairingSide::Right => t.left(x + s) * t.profile(s) * t.right(x),
            };
            let mut sums = vec![0.0; windows.len()];
            let mut acc = if singular { 0.0 } else { h * k_at(0.0) };
            let mut m = 0;
            for k in 1..=last {
                let s = k as f64 * h;
                let w = if singular {
                    if k % 2 == 0 {
                        0.0
                    } else {
                        2.0 * h
                    }
                } else {
                    h
                };
                if w != 0.0 {
                    acc += w * (k_at(s) + k_at(-s));
                }
                while m < kmax.len() && k == kmax[m] {
                    sums[m] = acc;
                    m += 1;
                }
            }
            sums
        })
        .collect();
    let values: Vec<f64> = (0..windows.len())
        .map(|m| points.iter().zip(&per_point).map(|(&i, s)| eta.values()[i] * s[m]).sum::<f64>() * h)
        .collect();
    let value = *values.last().unwrap();
    let tail = (value - values[values.len() - 2]).abs();
    Ok(PairingValue { value, windows, values, tail, eta_l1: l1 })
}

/// Mean-zero test functions: odd and even combinations of the standard bump
/// at three centres and two radii.
pub fn test_functions(grid: &Grid) -> Vec<SampledFunction> {
    let bump = |t: f64| if t.abs() < 1.0 { (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
    let dbump = |t: f64| if t.abs() < 1.0 { -2.0 * t / (1.0 - t * t).powi(2) * (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
    let mut out = Vec::new();
    let h = grid.spacing();
    for (n, &c0) in [-1.5f64, 0.0, 0.75].iter().enumerate() {
        let c = (c0 / h).round() * h;
        let r = if n % 2 == 0 { 0.5 } else { 1.0 };
        let support = c.abs() + 2.0 * r;
        let odd = SampledFunction::from_fn(*grid, support, |x| dbump((x - c) / r)).expect("test function");
        let even = SampledFunction::from_fn(*grid, support, |x| bump((x - c) / r) - 0.5 * bump((x - c) / (2.0 * r)))
            .expect("test function");
        // Remove the quadrature residue of the mean exactly.
        let fix = |f: SampledFunction| {
            let mass = f.integral();
            let b = SampledFunction::from_fn(*grid, support, |x| bump((x - c) / r)).expect("bump");
            f.combine(1.0, &b, -mass / b.integral())
        };
        out.push(fix(odd));
        out.push(fix(even));
    }
    out
}

/// Pairing battery for the cancellation hypotheses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    /// `max |<T1, eta>| / (C_K ||eta||_1)` over the battery.
    pub t1_max: f64,
    pub t_star1_max: f64,
    pub tail_max: f64,
    pub tolerance: f64,
    pub t1_zero: bool,
    pub t_star1_zero: bool,
}

impl HypothesisReport {
    pub fn both_zero(&self) -> bool {
        self.t1_zero && self.t_star1_zero
    }
}

fn battery_max(t: &CzoKernel, grid: &Grid, side: PairingSide) -> Result<(f64, f64)> {
    let c = t.size_constant().max(f64::MIN_POSITIVE);
    let mut best = 0.0f64;
    let mut tail = 0.0f64;
    for eta in test_functions(grid) {
        let p = pairing_t1(t, &eta, side)?;
        best = best.max(p.value.abs() / (c * p.eta_l1));
        tail = tail.max(p.tail / (c * p.eta_l1));
    }
    Ok((best, tail))
}

/// `<T1, eta>` and `<T*1, eta>` over [`test_functions`].
pub fn hypothesis_check(t: &CzoKernel, grid: &Grid) -> Result<HypothesisReport> {
    let (t1, tail1) = battery_max(t, grid, PairingSide::Left)?;
    let (ts1, tail2) = battery_max(t, grid, PairingSide::Right)?;
    Ok(HypothesisReport {
        t1_max: t1,
        t_star1_max: ts1,
        tail_max: tail1.max(tail2),
        tolerance: PAIRING_TOL,
        t1_zero: t1 <= PAIRING_TOL,
        t_star1_zero: ts1 <= PAIRING_TOL,
    })
}

/// Largest measured ratio for one scale pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityRow {
    pub j: i32,
    pub jp: i32,
    pub max_ratio: f64,
    pub max_abs: f64,
    pub pairs: usize,
}

/// Ratio table of `|psi_j T psi_j'(x_Q, x_Q')|` against the decay bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthogonalityReport {
    pub epsilon: f64,
    pub rows: Vec<OrthogonalityRow>,
    pub c_emp: f64,
    /// `(j, psi_j T psi_j(x_Q, x_Q) / 2^j)`.
    pub diagonal: Vec<(i32, f64)>,
    pub kernel: KernelConditionReport,
    pub hypothesis: HypothesisReport,
    /// Worst relative gap between the two coefficient routes on the spot checks.
    pub route_gap: f64,
    pub flagged: bool,
    /// `None` when the hypothesis fails.
    pub pass: Option<bool>,
}

/// Coefficients of `psi_j * T * psi_j'` on signed offsets (convolution kernels).
fn offset_coefficients(t: &CzoKernel, bank: &FilterBank, j: i32, jp: i32) -> Vec<f64> {
    let grid = *bank.grid();
    let m = t.multiplier(&grid);
    let a = bank.multiplier(FilterKind::Psi, j);
    let b = bank.multiplier(FilterKind::Psi, jp);
    let mut buf: Vec<Complex64> = m.iter().zip(a).zip(b).map(|((m, a), b)| m * a * b).collect();
    fft::inverse(&mut buf);
    let inv_h = 1.0 / grid.spacing();
    buf.into_iter().map(|c| c.re * inv_h).collect()
}

/// The full `(j, j')` sweep over `scales`, gated on `T1 = T*1 = 0`.
pub fn almost_orthogonality_check(
    t: &CzoKernel,
    bank: &FilterBank,
    lattice: &CubeLattice,
    scales: std::ops::RangeInclusive<i32>,
) -> Result<OrthogonalityReport> {
    let grid = *bank.grid();
    for s in [*scales.start(), *scales.end()] {
        if !lattice.scales().contains(&s) {
            return Err(Error::ScaleRange { scale: s, reason: "outside the lattice".into() });
        }
    }
    let kernel = kernel_condition_check(t, grid.half_width(), 20_000, 7);
    let hypothesis = hypothesis_check(t, &grid)?;
    let eps = t.epsilon();
    if !hypothesis.both_zero() {
        return Ok(OrthogonalityReport {
            epsilon: eps,
            rows: vec![],
            c_emp: f64::NAN,
            diagonal: vec![],
            kernel,
            hypothesis,
            route_gap: f64::NAN,
            flagged: true,
            pass: None,
        });
    }
    let pairs: Vec<(i32, i32)> = scales.clone().flat_map(|j| scales.clone().map(move |jp| (j, jp))).collect();
    let len = grid.padded_len() as i64;
    let h = grid.spacing();
    let tables: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(j, jp)| {
            if t.is_convolution() {
                offset_coefficients(t, bank, j, jp)
            } else {
                vec![]
            }
        })
        .collect();
    let rows: Vec<OrthogonalityRow> = pairs
        .par_iter()
        .zip(&tables)
        .map(|(&(j, jp), table)| {
            let a = lattice.anchor_samples(j);
            let b = lattice.anchor_samples(jp);
            let coeff = |ia: usize, ib: usize| -> f64 {
                if t.is_convolution() {
                    let d = ia as i64 - ib as i64;
                    table[d.rem_euclid(len) as usize]
                } else {
                    let f = bank.bump(FilterKind::Psi, j, ia);
                    f.inner(&t.apply(&bank.bump(FilterKind::Psi, jp, ib)))
                }
            };
            let mut max_ratio = 0.0f64;
            let mut max_abs = 0.0f64;
            for &ia in &a {
                for &ib in &b {
                    let c = coeff(ia, ib);
                    let dist = (ia as f64 - ib as f64).abs() * h;
                    max_abs = max_abs.max(c.abs());
                    max_ratio = max_ratio.max(c.abs() / orthogonality_bound(j, jp, dist, eps));
                }
            }
            OrthogonalityRow { j, jp, max_ratio, max_abs, pairs: a.len() * b.len() }
        })
        .collect();
    let c_emp = rows.iter().map(|r| r.max_ratio).fold(0.0, f64::max);
    let centre = grid.len() / 2;
    let diagonal: Vec<(i32, f64)> = scales
        .clone()
        .map(|j| {
            let v = if t.is_convolution() {
                offset_coefficients(t, bank, j, j)[0]
            } else {
                bank.bump(FilterKind::Psi, j, centre).inner(&t.apply(&bank.bump(FilterKind::Psi, j, centre)))
            };
            (j, v / 2f64.powi(j))
        })
        .collect();
    // Spot checks of the two quadrature routes away from the boundary.
    let spots = [(1, 1, 0i64), (1, 2, 3), (2, 1, -5), (2, 3, 16), (3, 3, 1)];
    let mut route_gap = 0.0f64;
    for (j, jp, off) in spots {
        if scales.contains(&j) && scales.contains(&jp) {
            let i2 = (centre as i64 + off) as usize;
            route_gap = route_gap.max(matrix_coeff(t, bank, j, jp, centre, i2)?.relative_gap);
        }
    }
    let finite = c_emp.is_finite() && rows.iter().all(|r| r.max_ratio.is_finite());
    Ok(OrthogonalityReport {
        epsilon: eps,
        rows,
        c_emp,
        diagonal,
        kernel,
        hypothesis,
        route_gap,
        flagged: false,
        pass: Some(finite && kernel.finite()),
    })
}

/// `T - pi_{T1}`.
#[derive(Debug)]
pub struct CorrectedOperator<'a> {
    pub operator: CzoKernel,
    pub t1: SampledFunction,
    pub paraproduct: Paraproduct<'a>,
}

/// Function-route pairings before and after the correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrectionReport {
    pub t1_bmo: f64,
    pub t1_before: f64,
    pub t1_after: f64,
    pub t_star1_before: f64,
    pub t_star1_after: f64,
}

impl CorrectionReport {
    /// `max |<T1, eta>|` before over after.
    pub fn drop_factor(&self) -> f64 {
        if self.t1_after == 0.0 {
            f64::INFINITY
        } else {
            self.t1_before / self.t1_after
        }
    }
}

/// `T~ = T - pi_{T1}` with `T1` computed as the image of the extended constant.
pub fn correct_operator<'a>(t: &CzoKernel, bank: &'a FilterBank, lattice: &'a CubeLattice) -> Result<CorrectedOperator<'a>> {
    let t1 = t.t1(bank.grid());
    let symbol = BmoSymbol::new(t1.clone());
    if !symbol.bmo_norm().is_finite() {
        return Err(Error::Precondition("T1 has infinite BMO norm on the grid".into()));
    }
    let paraproduct = Paraproduct::new(symbol, bank, lattice)?;
    Ok(CorrectedOperator { operator: t.clone(), t1, paraproduct })
}

impl CorrectedOperator<'_> {
    pub fn apply(&self, f: &SampledFunction) -> Result<SampledFunction> {
        Ok(self.operator.apply(f).sub(&self.paraproduct.apply(f)?))
    }

    pub fn adjoint_apply(&self, g: &SampledFunction) -> Result<SampledFunction> {
        Ok(self.operator.adjoint_apply(g).sub(&self.paraproduct.adjoint(g)?))
    }

    /// `max_eta |<S1, eta>|` for `S = T, T~` and their adjoints over [`test_functions`].
    pub fn report(&self) -> Result<CorrectionReport> {
        let grid = *self.t1.grid();
        let one = SampledFunction::domain_constant(grid, 1.0);
        let after = self.apply(&one)?;
        let star_before = self.operator.adjoint_apply(&one);
        let star_after = self.adjoint_apply(&one)?;
        let mut r = CorrectionReport {
            t1_bmo: self.paraproduct.symbol().bmo_norm(),
            t1_before: 0.0,
            t1_after: 0.0,
            t_star1_before: 0.0,
            t_star1_after: 0.0,
        };
        for eta in test_functions(&grid) {
            r.t1_before = r.t1_before.max(self.t1.inner(&eta).abs());
            r.t1_after = r.t1_after.max(after.inner(&eta).abs());
            r.t_star1_before = r.t_star1_before.max(star_before.inner(&eta).abs());
            r.t_star1_after = r.t_star1_after.max(star_after.inner(&eta).abs());
        }
        Ok(r)
    }
}

/// Summary of `hardy_norm(T f) / hardy_norm(f)` over a corpus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioStats {
    /// `None` where `hardy_norm(f) = 0`.
    pub ratios: Vec<Option<f64>>,
    pub max: f64,
    pub median: f64,
    pub finite: bool,
}

impl RatioStats {
    pub fn from_ratios(ratios: Vec<Option<f64>>) -> Self {
        let mut v: Vec<f64> = ratios.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        let max = v.last().copied().unwrap_or(0.0);
        let median = if v.is_empty() {
            0.0
        } else if v.len() % 2 == 1 {
            v[v.len() / 2]
        } else {
            0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
        };
        let finite = v.iter().all(|x| x.is_finite());
        Self { ratios, max, median, finite }
    }
}

/// `hardy_norm(op f) / hardy_norm(f)` for every `f` in `corpus`.
pub fn boundedness_ratios(
    op: impl Fn(&SampledFunction) -> Result<SampledFunction> + Sync,
    p: &ExponentFunction,
    corpus: &[SampledFunction],
    bank: &FilterBank,
    lattice: &CubeLattice,
    method: HardyMethod,
) -> Result<RatioStats> {
    let ratios: Vec<Option<f64>> = corpus
        .par_iter()
        .map(|f| {
            let den = hardy_norm(f, p, bank, lattice, method)?;
            if den == 0.0 {
                return Ok(None);
            }
            let tf = op(f)?;
            Ok(Some(hardy_norm(&tf, p, bank, lattice, method)? / den))
        })
        .collect::<Result<_>>()?;
    Ok(RatioStats::from_ratios(ratios))
}

/// Harness output for one operator and exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub stats: RatioStats,
    pub t_star1_max: f64,
    pub window: (f64, f64),
}

/// `hardy_norm(T f) / hardy_norm(f)` over `corpus`, refused unless `T*1 = 0`
/// and `1 / (1 + eps) < p^- <= p^+ <= 1`.
pub fn hardy_boundedness_harness(
    t: &CzoKernel,
    p: &ExponentFunction,
    corpus: &[SampledFunction],
    bank: &FilterBank,
    lattice: &CubeLattice,
    method: HardyMethod,
) -> Result<HarnessReport> {
    let lower = 1.0 / (1.0 + t.epsilon());
    if !(p.p_minus() > lower && p.p_plus() <= 1.0) {
        return Err(Error::Precondition(format!(
            "exponent range [{}, {}] outside the window ({lower}, 1]",
            p.p_minus(),
            p.p_plus()
        )));
    }
    let (ts1, _) = battery_max(t, bank.grid(), PairingSide::Right)?;
    if ts1 > PAIRING_TOL {
        return Err(Error::Precondition(format!("T*1 does not vanish: pairing battery max {ts1:e}")));
    }
    let stats = boundedness_ratios(|f| Ok(t.apply(f)), p, corpus, bank, lattice, method)?;
    Ok(HarnessReport { stats, t_star1_max: ts1, window: (lower, 1.0) })
}

/// `max(a, b) / min(a, b) <= factor`.
pub fn refinement_stable(a: f64, b: f64, factor: f64) -> bool {
    a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 && a.max(b) / a.min(b) <= factor
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_filterbank;
    use crate::grid::{build_lattice, make_grid};
    use std::f64::consts::PI;

    fn setup(level: u32) -> (FilterBank, CubeLattice) {
        let g = make_grid(8.0, level).unwrap();
        let jmax = (level as i32 - 7).min(5);
        (build_filterbank(&g, 2, -3, jmax, 3).unwrap(), build_lattice(&g, 2, -3, jmax).unwrap())
    }

    fn smooth_hilbert() -> CzoKernel {
        CzoKernel::new(OperatorSpec::SmoothHilbert { delta: 1.0 / 64.0 }, 1.0).unwrap()
    }

    #[test]
    fn hilbert_size_ratio_is_one() {
        let k = CzoKernel::hilbert().scaled(PI);
        let r = kernel_condition_check(&k, 8.0, 5000, 1);
        assert!((r.size_sup - 1.0).abs() < 1e-12);
        assert!((r.size_ratio - 1.0).abs() < 1e-12);
        assert!(r.smoothness_x_ratio.is_finite() && r.smoothness_y_ratio.is_finite());
    }

    #[test]
    fn modulated_size_bound_matches_dense_scan() {
        let k = CzoKernel::new(OperatorSpec::ModulatedHilbert { amplitude: 1.0, width: 1.0 }, PI).unwrap();
        let r = kernel_condition_check(&k, 4.0, 20_000, 3);
        let mut dense = 0.0f64;
        for a in 0..400 {
            let x = -4.0 + 8.0 * a as f64 / 400.0;
            dense = dense.max(k.eval(x, x + 0.37).unwrap().abs() * 0.37);
        }
        assert!(r.size_sup <= 2.0 + 1e-12);
        assert!(r.size_sup <= dense + 1e-3 && dense > 1.99);
    }

    #[test]
    fn smooth_kernel_ratios_are_dominated() {
        let k = CzoKernel::new(OperatorSpec::Mollifier { width: 0.3 }, 1.0).unwrap();
        let r = kernel_condition_check(&k, 8.0, 5000, 2);
        let sup_k = 1.0 / (0.3 * PI.sqrt());
        assert!(r.finite());
        assert!(r.size_sup <= sup_k * 16.0);
        assert!(r.size_ratio <= 1.0 + 1e-9);
    }

    #[test]
    fn diagonal_is_singular_only_for_pv_kernels() {
        assert!(matches!(CzoKernel::hilbert().eval(0.5, 0.5), Err(Error::Singularity(_))));
        assert_eq!(smooth_hilbert().eval(0.5, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mollifier_coefficient_is_autocorrelation() {
        let (bank, _) = setup(12);
        let k = CzoKernel::new(OperatorSpec::Mollifier { width: 1.0 / 128.0 }, 1.0).unwrap();
        let c = bank.grid().len() / 2;
        let m = matrix_coeff(&k, &bank, 1, 1, c, c).unwrap();
        let auto = bank.bump(FilterKind::Psi, 1, c).l2_norm().powi(2);
        assert!(m.kernel_route > 0.0);
        // The mollifier damps the top of the band by about 1%.
        assert!((m.kernel_route - auto).abs() < 2e-2 * auto);
    }

    #[test]
    fn hilbert_coefficients_are_odd_and_routes_agree() {
        let (bank, _) = setup(12);
        let k = CzoKernel::hilbert();
        let c = bank.grid().len() / 2;
        let a = matrix_coeff(&k, &bank, 2, 2, c, c + 9).unwrap();
        let b = matrix_coeff(&k, &bank, 2, 2, c + 9, c).unwrap();
        assert!((a.kernel_route + b.kernel_route).abs() < 1e-9 * a.kernel_route.abs().max(1e-12));
        assert!(a.relative_gap < ROUTE_TOL);
    }

    #[test]
    fn matrix_coeff_is_linear_in_t() {
        let (bank, _) = setup(12);
        let c = bank.grid().len() / 2;
        let k = smooth_hilbert();
        let a = matrix_coeff(&k, &bank, 1, 2, c, c + 4).unwrap().kernel_route;
        let b = matrix_coeff(&k.scaled(-3.0), &bank, 1, 2, c, c + 4).unwrap().kernel_route;
        assert!((b + 3.0 * a).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn pairings_of_cancelling_operators_vanish() {
        let (bank, _) = setup(11);
        let g = *bank.grid();
        for k in [CzoKernel::hilbert(), smooth_hilbert(), CzoKernel::new(OperatorSpec::Mollifier { width: 0.2 }, 1.0).unwrap()] {
            let h = hypothesis_check(&k, &g).unwrap();
            assert!(h.both_zero(), "{:?}: {h:?}", k.spec);
        }
    }

    #[test]
    fn modulated_kernels_break_one_side() {
        let (bank, _) = setup(11);
        let g = *bank.grid();
        let left = CzoKernel::new(OperatorSpec::ModulatedHilbert { amplitude: 1.0, width: 1.0 }, 1.0).unwrap();
        let h = hypothesis_check(&left, &g).unwrap();
        assert!(h.t1_zero && !h.t_star1_zero, "{h:?}");
        let right = CzoKernel::new(OperatorSpec::RightModulated { amplitude: 1.0, width: 1.0 }, 1.0).unwrap();
        let h = hypothesis_check(&right, &g).unwrap();
        assert!(!h.t1_zero && h.t_star1_zero, "{h:?}");
    }

    #[test]
    fn pairing_needs_mean_zero() {
        let g = make_grid(8.0, 10).unwrap();
        let eta = SampledFunction::indicator(g, -0.5, 0.5, 1.0).unwrap();
        assert!(matches!(pairing_t1(&CzoKernel::hilbert(), &eta, PairingSide::Left), Err(Error::Precondition(_))));
    }

    #[test]
    fn pairing_resolutions_agree_for_right_modulation() {
        let k = CzoKernel::new(OperatorSpec::RightModulated { amplitude: 1.0, width: 1.0 }, 1.0).unwrap();
        let v: Vec<f64> = [10u32, 11]
            .iter()
            .map(|&l| {
                let g = make_grid(8.0, l).unwrap();
                pairing_t1(&k, &test_functions(&g)[2], PairingSide::Left).unwrap().value
            })
            .collect();
        assert!(v[0].abs() > 1e-3);
        assert!((v[0] - v[1]).abs() < 1e-3 * v[0].abs());
    }

    #[test]
    fn apply_matches_t1_closed_forms() {
        let g = make_grid(8.0, 11).unwrap();
        assert!(CzoKernel::hilbert().t1(&g).sup_norm() < 1e-12);
        let k = CzoKernel::new(OperatorSpec::ModulatedMollifier { width: 0.1, amplitude: 0.5, modulation_width: 0.25 }, 1.0)
            .unwrap();
        let t1 = k.t1(&g);
        let a = SampledFunction::from_values(g, g.points().map(|x| modulation(0.5, 0.25, x)).collect()).unwrap();
        assert!(t1.sub(&a).sup_norm() < 1e-10);
        assert_eq!(t1.background(), 1.0);
    }

    #[test]
    fn correction_removes_t1() {
        let (bank, lat) = setup(12);
        let k = CzoKernel::new(OperatorSpec::ModulatedMollifier { width: 0.05, amplitude: 0.5, modulation_width: 0.25 }, 1.0)
            .unwrap();
        let r = correct_operator(&k, &bank, &lat).unwrap().report().unwrap();
        assert!(r.drop_factor() >= 10.0, "{r:?}");
        assert!((r.t_star1_after - r.t_star1_before).abs() < 1e-2 * r.t_star1_before.max(1e-12), "{r:?}");
    }

    #[test]
    fn correction_of_cancelling_operator_is_identity() {
        let (bank, lat) = setup(12);
        let k = smooth_hilbert();
        let c = correct_operator(&k, &bank, &lat).unwrap();
        let f = bank.bump(FilterKind::Psi, 1, 2000);
        assert!(c.apply(&f).unwrap().sub(&k.apply(&f)).sup_norm() < 1e-12);
    }

    #[test]
    fn orthogonality_table_for_smooth_hilbert() {
        let (bank, lat) = setup(12);
        let r = almost_orthogonality_check(&smooth_hilbert(), &bank, &lat, -3..=3).unwrap();
        assert!(!r.flagged);
        assert_eq!(r.pass, Some(true));
        assert_eq!(r.rows.len(), 49);
        assert!(r.c_emp.is_finite() && r.c_emp > 0.0);
        for (_, d) in &r.diagonal {
            assert!(d.abs() <= r.c_emp);
        }
        assert!(r.route_gap < ROUTE_TOL);
    }

    #[test]
    fn orthogonality_flags_broken_hypothesis() {
        let (bank, lat) = setup(11);
        let k = CzoKernel::new(OperatorSpec::ModulatedHilbert { amplitude: 1.0, width: 1.0 }, 1.0).unwrap();
        let r = almost_orthogonality_check(&k, &bank, &lat, -3..=3).unwrap();
        assert!(r.flagged && r.pass.is_none());
    }

    #[test]
    fn harness_gate_and_homogeneity() {
        let (bank, lat) = setup(11);
        let g = *bank.grid();
        let p = ExponentFunction::constant(1.0, g).unwrap();
        let corpus: Vec<SampledFunction> =
            [(0, 700usize), (1, 1100), (2, 1500)].iter().map(|&(j, i)| bank.bump(FilterKind::Psi, j, i)).collect();
        let h = CzoKernel::hilbert();
        let a = hardy_boundedness_harness(&h, &p, &corpus, &bank, &lat, HardyMethod::SmoothMaximal).unwrap();
        let b = hardy_boundedness_harness(&h.scaled(2.0), &p, &corpus, &bank, &lat, HardyMethod::SmoothMaximal).unwrap();
        assert!(a.stats.finite && a.stats.max > 0.0);
        for (x, y) in a.stats.ratios.iter().zip(&b.stats.ratios) {
            assert!((y.unwrap() - 2.0 * x.unwrap()).abs() < 1e-9 * x.unwrap());
        }
        let bad = CzoKernel::new(OperatorSpec::ModulatedHilbert { amplitude: 1.0, width: 1.0 }, 1.0).unwrap();
        assert!(matches!(
            hardy_boundedness_harness(&bad, &p, &corpus, &bank, &lat, HardyMethod::SmoothMaximal),
            Err(Error::Precondition(_))
        ));
        let low = ExponentFunction::constant(0.5, g).unwrap();
        assert!(hardy_boundedness_harness(&h, &low, &corpus, &bank, &lat, HardyMethod::SmoothMaximal).is_err());
    }

    #[test]
    fn ratio_stats_median() {
        let s = RatioStats::from_ratios(vec![Some(3.0), None, Some(1.0), Some(2.0), Some(10.0)]);
        assert_eq!(s.max, 10.0);
        assert_eq!(s.median, 2.5);
        assert!(refinement_stable(1.0, 1.9, 2.0) && !refinement_stable(1.0, 2.1, 2.0));
    }
}
