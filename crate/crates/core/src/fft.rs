//! Thin FFT helpers shared by every convolution in the crate.
//!
//! All transforms act on the padded buffer of length `2 * grid.len()`; the
//! padding holds the background value of the function (zero unless it stands
//! in for a constant).
//! A "continuous spectrum" is `h * DFT(kernel)`, so that multiplying the
//! padded DFT of `f` by it and inverting yields the quadrature
//! `sum_m f(x_m) g(x_i - x_m) h`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{Grid, SampledFunction};

type Plans = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

thread_local! {
    static PLANS: RefCell<(FftPlanner<f64>, HashMap<usize, Plans>)> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plans(len: usize) -> Plans {
    PLANS.with(|cell| {
        let mut guard = cell.borrow_mut();
        let (planner, cache) = &mut *guard;
        if let Some(p) = cache.get(&len) {
            return p.clone();
        }
        let p = (planner.plan_fft_forward(len), planner.plan_fft_inverse(len));
        cache.insert(len, p.clone());
        p
    })
}

/// In-place unnormalized forward DFT.
pub fn forward(buf: &mut [Complex64]) {
    plans(buf.len()).0.process(buf);
}

/// In-place inverse DFT, normalized by `1/len`.
pub fn inverse(buf: &mut [Complex64]) {
    plans(buf.len()).1.process(buf);
    let scale = 1.0 / buf.len() as f64;
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

/// Signed frequency (cycles per unit length) of bin `k` in a DFT of length `len`
/// with sample spacing `h`.
pub fn bin_frequency(k: usize, len: usize, h: f64) -> f64 {
    signed_bin(k, len) as f64 / (len as f64 * h)
}

/// Signed index of bin `k`: `k` for `k < len/2`, `k - len` otherwise.
pub fn signed_bin(k: usize, len: usize) -> i64 {
    if k < len / 2 {
        k as i64
    } else {
        k as i64 - len as i64
    }
}

/// DFT of a function padded to the doubled length of its grid with its
/// background value.
#[derive(Clone, Debug)]
pub struct Spectrum {
    grid: Grid,
    bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn of(f: &SampledFunction) -> Self {
        let grid = *f.grid();
        let mut bins = vec![Complex64::new(f.background(), 0.0); grid.padded_len()];
        for (b, &v) in bins.iter_mut().zip(f.values()) {
            *b = Complex64::new(v, 0.0);
        }
        forward(&mut bins);
        Self { grid, bins }
    }

    /// Spectrum of a spike train: `weights[i]` placed on sample `indices[i]`,
    /// scaled by `1/h` so that convolving with a kernel reproduces
    /// `sum_i weights[i] * g(x - x_{indices[i]})`.
    pub fn of_spikes(grid: &Grid, indices: &[usize], weights: &[f64]) -> Self {
        let mut bins = vec![Complex64::new(0.0, 0.0); grid.padded_len()];
        let inv_h = 1.0 / grid.spacing();
        for (&i, &w) in indices.iter().zip(weights) {
            bins[i].re += w * inv_h;
        }
        forward(&mut bins);
        Self { grid: *grid, bins }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn bins(&self) -> &[Complex64] {
        &self.bins
    }

    /// Energy fraction of the padded spectrum selected by `keep(|xi|)`.
    pub fn energy_fraction(&self, keep: impl Fn(f64) -> bool) -> f64 {
        let len = self.bins.len();
        let h = self.grid.spacing();
        let mut total = 0.0;
        let mut kept = 0.0;
        for (k, b) in self.bins.iter().enumerate() {
            let e = b.norm_sqr();
            total += e;
            if keep(bin_frequency(k, len, h).abs()) {
                kept += e;
            }
        }
        if total == 0.0 {
            1.0
        } else {
            kept / total
        }
    }

    /// Multiply by a real multiplier and return the first `n` samples.
    pub fn filter_real(&self, multiplier: &[f64]) -> Vec<f64> {
        debug_assert_eq!(multiplier.len(), self.bins.len());
        let mut buf: Vec<Complex64> = self
            .bins
            .iter()
            .zip(multiplier)
            .map(|(b, &m)| b * m)
            .collect();
        inverse(&mut buf);
        buf.truncate(self.grid.len());
        buf.into_iter().map(|c| c.re).collect()
    }

    /// Multiply by a complex multiplier and return the first `n` samples (real part).
    pub fn filter_complex(&self, multiplier: &[Complex64]) -> Vec<f64> {
        debug_assert_eq!(multiplier.len(), self.bins.len());
        let mut buf: Vec<Complex64> = self
            .bins
            .iter()
            .zip(multiplier)
            .map(|(b, m)| b * m)
            .collect();
        inverse(&mut buf);
        buf.truncate(self.grid.len());
        buf.into_iter().map(|c| c.re).collect()
    }
}

/// Real multiplier sampled from `m(xi)` on the padded frequency grid of `grid`.
pub fn sample_multiplier(grid: &Grid, m: impl Fn(f64) -> f64) -> Vec<f64> {
    let len = grid.padded_len();
    let h = grid.spacing();
    (0..len).map(|k| m(bin_frequency(k, len, h))).collect()
}

/// Kernel samples `K[d] = g(d h)` on the padded circle (signed offsets) from a
/// continuous spectrum; inverse of [`sample_multiplier`] followed by `1/h`.
pub fn kernel_from_multiplier(grid: &Grid, multiplier: &[f64]) -> Vec<f64> {
    let mut buf: Vec<Complex64> = multiplier.iter().map(|&m| Complex64::new(m, 0.0)).collect();
    inverse(&mut buf);
    let inv_h = 1.0 / grid.spacing();
    buf.into_iter().map(|c| c.re * inv_h).collect()
}

/// Continuous spectrum `h * DFT(K)` of a kernel given on signed padded offsets.
pub fn multiplier_from_kernel(grid: &Grid, kernel: &[f64]) -> Vec<Complex64> {
    let h = grid.spacing();
    let mut buf: Vec<Complex64> = kernel.iter().map(|&v| Complex64::new(v * h, 0.0)).collect();
    forward(&mut buf);
    buf
}
