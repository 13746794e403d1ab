//! Variable exponents `p(.)`, the modular and the Luxemburg norm of
//! `L^{p(.)}`, plus log-Hölder diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, SampledFunction};

/// Threshold applied by [`ExponentFunction::new`] when it records the
/// log-Hölder report.
pub const LH_DEFAULT_THRESHOLD: f64 = 1.0;

/// Serializable description of an exponent function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExponentSpec {
    Constant { value: f64 },
    /// `values[i]` on `[breaks[i-1], breaks[i])`, with open ends.
    Piecewise { breaks: Vec<f64>, values: Vec<f64> },
    /// `left + (right - left) * s((x - x0) / (x1 - x0))`, `s` the cubic smoothstep.
    Smoothstep { left: f64, right: f64, x0: f64, x1: f64 },
    /// Linear interpolation between `left` at `x0` and `right` at `x1`, clamped.
    Ramp { left: f64, right: f64, x0: f64, x1: f64 },
}

impl ExponentSpec {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Self::Constant { value } => *value,
            Self::Piecewise { breaks, values } => {
                let idx = breaks.iter().take_while(|&&b| x >= b).count();
                values[idx.min(values.len() - 1)]
            }
            Self::Smoothstep { left, right, x0, x1 } => {
                let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                left + (right - left) * t * t * (3.0 - 2.0 * t)
            }
            Self::Ramp { left, right, x0, x1 } => {
                let t = ((x - x0) / (x1 - x0)).clamp(0.0, 1.0);
                left + (right - left) * t
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Piecewise { breaks, values } => {
                if values.len() != breaks.len() + 1 {
                    return Err(Error::Config(format!(
                        "piecewise exponent needs {} values for {} breaks, got {}",
                        breaks.len() + 1,
                        breaks.len(),
                        values.len()
                    )));
                }
                if breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::Config("piecewise breaks must increase".into()));
                }
            }
            Self::Smoothstep { x0, x1, .. } | Self::Ramp { x0, x1, .. } => {
                if !(x1 > x0) {
                    return Err(Error::Config(format!("transition needs x0 < x1, got {x0}, {x1}")));
                }
            }
            Self::Constant { .. } => {}
        }
        Ok(())
    }
}

/// Exponent classes: `P0` (any bounded positive exponent), `P` (`p^- > 1`)
/// and the Hardy range `p^+ <= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentClass {
    P0,
    P,
    HardyRange,
}

/// Log-Hölder constants measured over sampled pairs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHolderReport {
    /// `sup |p(x) - p(y)| * (-log |x - y|)` over pairs with `|x - y| <= 1/2`.
    pub local_constant: f64,
    /// `sup |p(x) - p(y)| * log(e + |x|)` over pairs with `|y| >= |x|`.
    pub decay_constant: f64,
    pub threshold: f64,
    pub pass: bool,
}

/// An exponent sampled on a grid, with cached `p^-`, `p^+` and LH report.
#[derive(Clone, Debug, PartialEq)]
pub struct ExponentFunction {
    spec: ExponentSpec,
    grid: Grid,
    samples: Vec<f64>,
    p_minus: f64,
    p_plus: f64,
    class: ExponentClass,
    log_holder: LogHolderReport,
}

impl ExponentFunction {
    pub fn new(spec: ExponentSpec, grid: Grid, class: ExponentClass) -> Result<Self> {
        spec.validate()?;
        let samples: Vec<f64> = grid.points().map(|x| spec.eval(x)).collect();
        let p_minus = samples.iter().copied().fold(f64::INFINITY, f64::min);
        let p_plus = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(p_minus > 0.0 && p_plus.is_finite()) {
            return Err(Error::Config(format!(
                "exponent must satisfy 0 < p- <= p+ < inf, got [{p_minus}, {p_plus}]"
            )));
        }
        let consistent = match class {
            ExponentClass::P0 => true,
            ExponentClass::P => p_minus > 1.0,
            ExponentClass::HardyRange => p_plus <= 1.0,
        };
        if !consistent {
            return Err(Error::Config(format!(
                "exponent range [{p_minus}, {p_plus}] is inconsistent with class {class:?}"
            )));
        }
        let log_holder = log_holder_constants(&grid, &samples, LH_DEFAULT_THRESHOLD);
        Ok(Self { spec, grid, samples, p_minus, p_plus, class, log_holder })
    }

    /// Exponent with the tightest class its range allows.
    pub fn with_inferred_class(spec: ExponentSpec, grid: Grid) -> Result<Self> {
        let probe = Self::new(spec.clone(), grid, ExponentClass::P0)?;
        let class = if probe.p_plus <= 1.0 {
            ExponentClass::HardyRange
        } else if probe.p_minus > 1.0 {
            ExponentClass::P
        } else {
            ExponentClass::P0
        };
        Ok(Self { class, ..probe })
    }

    pub fn constant(value: f64, grid: Grid) -> Result<Self> {
        Self::with_inferred_class(ExponentSpec::Constant { value }, grid)
    }

    pub fn spec(&self) -> &ExponentSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.spec.eval(x)
    }

    pub fn p_minus(&self) -> f64 {
        self.p_minus
    }

    pub fn p_plus(&self) -> f64 {
        self.p_plus
    }

    pub fn class(&self) -> ExponentClass {
        self.class
    }

    pub fn log_holder(&self) -> &LogHolderReport {
        &self.log_holder
    }

    /// Smallest `d >= 0` with `p^- (n + d + 1) > n`.
    pub fn moment_degree(&self) -> usize {
        let n = crate::grid::DIMENSION as f64;
        (0..).find(|&d| self.p_minus * (n + d as f64 + 1.0) > n).unwrap()
    }

    /// Same exponent with every value multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Self {
        let samples: Vec<f64> = self.samples.iter().map(|p| p * factor).collect();
        Self {
            spec: self.spec.clone(),
            grid: self.grid,
            p_minus: self.p_minus * factor,
            p_plus: self.p_plus * factor,
            log_holder: log_holder_constants(&self.grid, &samples, self.log_holder.threshold),
            samples,
            class: ExponentClass::P0,
        }
    }
}

fn modular_unchecked(values: &[f64], p: &[f64], h: f64, lambda: f64) -> f64 {
    let inv = 1.0 / lambda;
    values
        .iter()
        .zip(p)
        .filter(|(v, _)| **v != 0.0)
        .map(|(v, &pe)| (v.abs() * inv).powf(pe))
        .sum::<f64>()
        * h
}

/// `sum_i (|f(x_i)| / lambda)^{p(x_i)} h`.
pub fn modular(f: &SampledFunction, p: &ExponentFunction, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("modular needs lambda > 0, got {lambda}")));
    }
    assert_eq!(f.grid(), p.grid(), "function and exponent live on different grids");
    Ok(modular_unchecked(f.values(), p.samples(), f.grid().spacing(), lambda))
}

/// Luxemburg norm `inf { lambda > 0 : modular(f, p, lambda) <= 1 }`.
pub fn luxemburg_norm(f: &SampledFunction, p: &ExponentFunction) -> f64 {
    assert_eq!(f.grid(), p.grid(), "function and exponent live on different grids");
    luxemburg_norm_values(f.values(), p.samples(), f.grid().spacing(), p.p_minus())
}

/// Luxemburg norm of raw samples against raw exponent samples.
pub fn luxemburg_norm_values(values: &[f64], p: &[f64], h: f64, p_minus: f64) -> f64 {
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return 0.0;
    }
    let support = values.iter().filter(|v| **v != 0.0).count() as f64 * h;
    let rho = |lambda: f64| modular_unchecked(values, p, h, lambda);
    let mut hi = sup * support.powf(1.0 / p_minus) + 1.0;
    while rho(hi) > 1.0 {
        hi *= 2.0;
    }
    let mut lo = hi;
    while rho(lo) <= 1.0 {
        hi = lo;
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return hi;
        }
    }
    // rho(lo) > 1 >= rho(hi); bisect geometrically.
    while hi / lo - 1.0 > 1e-13 {
        let mid = (lo * hi).sqrt();
        if rho(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Luxemburg norm of the indicator of the sample range `range`.
pub fn indicator_norm(p: &ExponentFunction, range: std::ops::Range<usize>) -> f64 {
    let mut values = vec![0.0; p.grid().len()];
    for v in &mut values[range] {
        *v = 1.0;
    }
    luxemburg_norm_values(&values, p.samples(), p.grid().spacing(), p.p_minus())
}

/// Log-Hölder constants of `p` over every sampled pair of `grid`.
pub fn check_log_holder(p: &ExponentFunction, grid: &Grid, threshold: f64) -> LogHolderReport {
    let samples: Vec<f64> = grid.points().map(|x| p.eval(x)).collect();
    log_holder_constants(grid, &samples, threshold)
}

fn log_holder_constants(grid: &Grid, p: &[f64], threshold: f64) -> LogHolderReport {
    let n = p.len();
    let h = grid.spacing();
    let window = ((0.5 / h) + 1e-9).floor() as usize;
    let mut local = 0.0f64;
    for i in 0..n {
        for d in 1..=window.min(n - 1 - i) {
            let diff = (p[i] - p[i + d]).abs();
            if diff > 0.0 {
                local = local.max(diff * -(d as f64 * h).ln());
            }
        }
    }
    // Pairs with |y| >= |x|: suffix extrema of p ordered by |x|.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| grid.point(a).abs().total_cmp(&grid.point(b).abs()));
    let mut suffix_max = vec![f64::NEG_INFINITY; n + 1];
    let mut suffix_min = vec![f64::INFINITY; n + 1];
    for r in (0..n).rev() {
        suffix_max[r] = suffix_max[r + 1].max(p[order[r]]);
        suffix_min[r] = suffix_min[r + 1].min(p[order[r]]);
    }
    let mut decay = 0.0f64;
    let mut r = 0;
    while r < n {
        // Group equal |x| so that ties count as |y| >= |x|.
        let ax = grid.point(order[r]).abs();
        let mut end = r;
        while end < n && grid.point(order[end]).abs() == ax {
            end += 1;
        }
        for &i in &order[r..end] {
            let spread = (suffix_max[r] - p[i]).max(p[i] - suffix_min[r]);
            decay = decay.max(spread * (std::f64::consts::E + ax).ln());
        }
        r = end;
    }
    LogHolderReport {
        local_constant: local,
        decay_constant: decay,
        threshold,
        pass: local <= threshold && decay <= threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn grid() -> Grid {
        make_grid(8.0, 12).unwrap()
    }

    fn half_half() -> ExponentSpec {
        ExponentSpec::Piecewise { breaks: vec![0.5], values: vec![1.0, 2.0] }
    }

    #[test]
    fn modular_examples() {
        let g = grid();
        let chi = SampledFunction::indicator(g, 0.0, 1.0, 1.0).unwrap();
        let p2 = ExponentFunction::constant(2.0, g).unwrap();
        assert!((modular(&chi, &p2, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(modular(&SampledFunction::zeros(g), &p2, 0.3).unwrap(), 0.0);
        let two_chi = chi.scaled(2.0);
        let p = ExponentFunction::new(half_half(), g, ExponentClass::P0).unwrap();
        // 1/2 * (2/2) + 1/2 * (2/2)^2
        assert!((modular(&two_chi, &p, 2.0).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(modular(&chi, &p2, 0.0), Err(Error::Domain(_))));
        assert!(modular(&chi, &p2, -1.0).is_err());
    }

    #[test]
    fn luxemburg_examples() {
        let g = grid();
        let chi = SampledFunction::indicator(g, 0.0, 1.0, 1.0).unwrap();
        let p2 = ExponentFunction::constant(2.0, g).unwrap();
        let p4 = ExponentFunction::constant(4.0, g).unwrap();
        assert!((luxemburg_norm(&chi, &p2) - 1.0).abs() < 1e-8);
        assert!((luxemburg_norm(&chi, &p4) - 1.0).abs() < 1e-8);
        let short = SampledFunction::indicator(g, 0.0, 1.0 / 16.0, 1.0).unwrap();
        assert!((luxemburg_norm(&short, &p2) - 0.25).abs() < 1e-8);
        let p = ExponentFunction::new(half_half(), g, ExponentClass::P0).unwrap();
        // Root of lambda^2 - lambda - 2 = 0.
        assert!((luxemburg_norm(&chi.scaled(2.0), &p) - 2.0).abs() < 2e-8);
        assert_eq!(luxemburg_norm(&SampledFunction::zeros(g), &p), 0.0);
    }

    #[test]
    fn quasi_norm_range_is_supported() {
        let g = grid();
        let chi = SampledFunction::indicator(g, 0.0, 0.25, 1.0).unwrap();
        let p = ExponentFunction::constant(0.5, g).unwrap();
        // |E|^{1/p} = 0.25^2
        assert!((luxemburg_norm(&chi, &p) - 0.0625).abs() < 1e-9);
        assert_eq!(p.class(), ExponentClass::HardyRange);
        assert_eq!(p.moment_degree(), 1);
        assert_eq!(ExponentFunction::constant(0.75, g).unwrap().moment_degree(), 0);
    }

    #[test]
    fn class_consistency_is_checked() {
        let g = grid();
        let spec = ExponentSpec::Constant { value: 0.8 };
        assert!(ExponentFunction::new(spec.clone(), g, ExponentClass::P).is_err());
        assert!(ExponentFunction::new(spec, g, ExponentClass::HardyRange).is_ok());
        assert!(ExponentFunction::new(ExponentSpec::Constant { value: 0.0 }, g, ExponentClass::P0).is_err());
        let bad = ExponentSpec::Piecewise { breaks: vec![0.0], values: vec![1.0] };
        assert!(ExponentFunction::new(bad, g, ExponentClass::P0).is_err());
    }

    #[test]
    fn constant_exponent_has_zero_constants() {
        let g = make_grid(8.0, 10).unwrap();
        let p = ExponentFunction::constant(1.5, g).unwrap();
        let r = check_log_holder(&p, &g, 1.0);
        assert_eq!(r.local_constant, 0.0);
        assert_eq!(r.decay_constant, 0.0);
        assert!(r.pass);
    }

    fn brute_force_lh(g: &Grid, p: &ExponentFunction) -> (f64, f64) {
        let xs: Vec<f64> = g.points().collect();
        let mut local = 0.0f64;
        let mut decay = 0.0f64;
        for &x in &xs {
            for &y in &xs {
                let d = (p.eval(x) - p.eval(y)).abs();
                if x != y && (x - y).abs() <= 0.5 + 1e-12 {
                    local = local.max(d * -(x - y).abs().ln());
                }
                if y.abs() >= x.abs() {
                    decay = decay.max(d * (std::f64::consts::E + x.abs()).ln());
                }
            }
        }
        (local, decay)
    }

    #[test]
    fn lipschitz_exponent_matches_brute_force() {
        let g = make_grid(4.0, 8).unwrap();
        let spec = ExponentSpec::Ramp { left: 1.0, right: 1.5, x0: 0.0, x1: 1.0 };
        let p = ExponentFunction::new(spec, g, ExponentClass::P0).unwrap();
        let r = check_log_holder(&p, &g, 1.0);
        let (local, decay) = brute_force_lh(&g, &p);
        assert!((r.local_constant - local).abs() < 1e-12);
        assert!((r.decay_constant - decay).abs() < 1e-12);
        assert!(r.local_constant.is_finite() && r.pass);
    }

    #[test]
    fn jump_fails_and_grows_under_refinement() {
        let spec = ExponentSpec::Piecewise { breaks: vec![0.3], values: vec![1.0, 2.0] };
        let mut last = 0.0;
        for level in [8, 10, 12] {
            let g = make_grid(8.0, level).unwrap();
            let p = ExponentFunction::new(spec.clone(), g, ExponentClass::P0).unwrap();
            let r = check_log_holder(&p, &g, LH_DEFAULT_THRESHOLD);
            // A pair straddling the jump at distance h.
            assert!(r.local_constant >= -(g.spacing().ln()) - 1e-12);
            assert!(r.local_constant > last);
            assert!(!r.pass);
            last = r.local_constant;
        }
    }
}
