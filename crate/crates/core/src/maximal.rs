//! Hardy-Littlewood and smooth maximal functions, and the vector-valued
//! Fefferman-Stein ratio.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{convolve_scaled, Grid, SampledFunction};
use crate::varexp::{luxemburg_norm_values, ExponentFunction};

/// Uncentered interval maximal operator over a doubling ladder of window
/// lengths `h, 2h, 4h, ...` capped at `2 * max_radius`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaximalConfig {
    pub max_radius: f64,
}

impl MaximalConfig {
    /// Ladder reaching the whole domain.
    pub fn for_grid(grid: &Grid) -> Self {
        Self { max_radius: grid.half_width() }
    }

    /// Window lengths in samples.
    pub fn widths(&self, grid: &Grid) -> Vec<usize> {
        let cap = ((2.0 * self.max_radius / grid.spacing()).floor() as usize).clamp(1, grid.len());
        let mut out = Vec::new();
        let mut w = 1usize;
        while w <= cap {
            out.push(w);
            w *= 2;
        }
        out
    }
}

/// `Mf` on the grid of `f`.
pub fn hl_maximal(f: &SampledFunction, cfg: &MaximalConfig) -> SampledFunction {
    let values = hl_maximal_values(f.values(), &cfg.widths(f.grid()));
    SampledFunction::from_values(*f.grid(), values).expect("maximal function of finite data is finite")
}

/// Maximal averages of `|v|` over every window of the given sample lengths
/// that contains each point.
pub fn hl_maximal_values(v: &[f64], widths: &[usize]) -> Vec<f64> {
    let n = v.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + v[i].abs();
    }
    let mut out = vec![0.0f64; n];
    let mut deque: VecDeque<usize> = VecDeque::new();
    for &w in widths {
        if w == 0 || w > n {
            continue;
        }
        let starts = n - w + 1;
        let inv = 1.0 / w as f64;
        let avg: Vec<f64> = (0..starts).map(|s| (prefix[s + w] - prefix[s]) * inv).collect();
        // Windows [s, s + w) holding i have s in [i + 1 - w, i] clipped to [0, starts).
        deque.clear();
        let mut next = 0usize;
        for (i, o) in out.iter_mut().enumerate() {
            let hi = i.min(starts - 1);
            let lo = (i + 1).saturating_sub(w);
            while next <= hi {
                while deque.back().is_some_and(|&b| avg[b] <= avg[next]) {
                    deque.pop_back();
                }
                deque.push_back(next);
                next += 1;
            }
            while deque.front().is_some_and(|&f| f < lo) {
                deque.pop_front();
            }
            if let Some(&best) = deque.front() {
                *o = o.max(avg[best]);
            }
        }
    }
    out
}

/// `M(M f)`.
pub fn hl_maximal_iterated(f: &SampledFunction, cfg: &MaximalConfig) -> SampledFunction {
    hl_maximal(&hl_maximal(f, cfg), cfg)
}

/// `sup_k |phi_k * f|` over `scales`.
pub fn smooth_maximal(
    f: &SampledFunction,
    phi: &SampledFunction,
    scales: std::ops::RangeInclusive<i32>,
) -> Result<SampledFunction> {
    let mass = phi.integral();
    if (mass - 1.0).abs() > 1e-8 {
        return Err(Error::Precondition(format!("smoothing filter must have unit mass, got {mass}")));
    }
    let mut out = vec![0.0f64; f.grid().len()];
    for k in scales {
        let conv = convolve_scaled(f, phi, k)?;
        for (o, v) in out.iter_mut().zip(conv.values()) {
            *o = o.max(v.abs());
        }
    }
    SampledFunction::from_values(*f.grid(), out)
}

/// `sup_i num[i] / den[i]` over points where `den` exceeds `floor`.
pub fn pointwise_ratio_sup(num: &SampledFunction, den: &SampledFunction, floor: f64) -> f64 {
    num.values()
        .iter()
        .zip(den.values())
        .filter(|(_, d)| **d > floor)
        .map(|(n, d)| n.abs() / d)
        .fold(0.0, f64::max)
}

/// Outcome of a vector-valued maximal inequality probe.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsReport {
    pub numerator: f64,
    pub denominator: f64,
    /// `None` when the family vanishes identically.
    pub ratio: Option<f64>,
    pub vacuous: bool,
}

/// `|| ||{M f_i}||_{l^q} ||_{L^p} / || ||{f_i}||_{l^q} ||_{L^p}`.
pub fn fs_vector_check(
    family: &[SampledFunction],
    q: f64,
    p: &ExponentFunction,
    cfg: &MaximalConfig,
) -> Result<FsReport> {
    if !(q > 1.0) {
        return Err(Error::Domain(format!("vector-valued maximal check needs q > 1, got {q}")));
    }
    let first = family
        .first()
        .ok_or_else(|| Error::Domain("vector-valued maximal check needs a nonempty family".into()))?;
    let grid = *first.grid();
    if family.iter().any(|f| *f.grid() != grid) || *p.grid() != grid {
        return Err(Error::Config("family and exponent must share one grid".into()));
    }
    let maximals: Vec<SampledFunction> = family.par_iter().map(|f| hl_maximal(f, cfg)).collect();
    let lq = |fs: &[SampledFunction]| -> Vec<f64> {
        (0..grid.len())
            .map(|i| fs.iter().map(|f| f.values()[i].abs().powf(q)).sum::<f64>().powf(1.0 / q))
            .collect()
    };
    let h = grid.spacing();
    let num = luxemburg_norm_values(&lq(&maximals), p.samples(), h, p.p_minus());
    let den = luxemburg_norm_values(&lq(family), p.samples(), h, p.p_minus());
    let vacuous = den == 0.0;
    Ok(FsReport { numerator: num, denominator: den, ratio: (!vacuous).then(|| num / den), vacuous })
}
