//! Uniform grids, sampled functions, scaled FFT convolution and dyadic cube
//! lattices.
//!
//! The grid covers `[-R, R)` with `2^L` samples `x_i = -R + i h`. Every
//! convolution zero-pads to twice the grid length, so a kernel evaluated at
//! offset `d h` lives on the signed range `-2^L <= d < 2^L`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::{self, Spectrum};

/// Spatial dimension carried by every type. Only `n = 1` is implemented.
pub const DIMENSION: u32 = 1;

/// Values whose magnitude falls below this are treated as zero outside a
/// declared support.
pub const ZERO_TOL: f64 = 1e-12;

/// Uniform grid on `[-R, R)` with `2^L` points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    half_width: f64,
    level: u32,
}

/// Build a grid with half-width `r` and `2^level` samples.
pub fn make_grid(r: f64, level: u32) -> Result<Grid> {
    Grid::new(r, level)
}

impl Grid {
    pub fn new(half_width: f64, level: u32) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::Config(format!("half-width must be positive, got {half_width}")));
        }
        if !(4..=24).contains(&level) {
            return Err(Error::Config(format!("grid level must lie in [4, 24], got {level}")));
        }
        Ok(Self { half_width, level })
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dimension(&self) -> u32 {
        DIMENSION
    }

    #[allow(clippy::len_without_is_empty)]
    pub fn len(&self) -> usize {
        1usize << self.level
    }

    pub fn padded_len(&self) -> usize {
        2 * self.len()
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.len() as f64
    }

    pub fn point(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.spacing()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.point(i))
    }

    /// Index of the sample nearest to `x`, if `x` lies in the domain.
    pub fn nearest_index(&self, x: f64) -> Option<usize> {
        let t = ((x + self.half_width) / self.spacing()).round();
        if t >= 0.0 && (t as usize) < self.len() {
            Some(t as usize)
        } else {
            None
        }
    }

    /// Nyquist frequency `1 / (2h)`.
    pub fn nyquist(&self) -> f64 {
        0.5 / self.spacing()
    }

    /// Whether the dilation `2^{-j}` is resolvable: `4h <= 2^{-j} <= R`.
    pub fn check_scale(&self, j: i32) -> Result<()> {
        let width = 2f64.powi(-j);
        if width < 4.0 * self.spacing() * (1.0 - 1e-12) {
            return Err(Error::ScaleRange {
                scale: j,
                reason: format!("width {width} is below four samples ({})", 4.0 * self.spacing()),
            });
        }
        if width > self.half_width * (1.0 + 1e-12) {
            return Err(Error::ScaleRange {
                scale: j,
                reason: format!("width {width} exceeds the half-width {}", self.half_width),
            });
        }
        Ok(())
    }
}

/// Real samples of a function on a [`Grid`] with a declared support radius.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledFunction {
    grid: Grid,
    values: Vec<f64>,
    support_radius: f64,
    /// Value taken beyond the domain, on the whole padded circle. Zero for
    /// compactly supported data; `c` for the stand-in of the constant `c`.
    background: f64,
}

impl SampledFunction {
    /// Wrap raw samples, checking finiteness and the support declaration.
    pub fn new(grid: Grid, values: Vec<f64>, support_radius: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "expected {} samples, got {}",
                grid.len(),
                values.len()
            )));
        }
        if !(support_radius >= 0.0 && support_radius <= grid.half_width() * (1.0 + 1e-12)) {
            return Err(Error::Config(format!(
                "support radius {support_radius} outside [0, {}]",
                grid.half_width()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Domain(format!("non-finite sample at index {i}")));
        }
        let h = grid.spacing();
        for (i, &v) in values.iter().enumerate() {
            let x = grid.point(i);
            if x.abs() > support_radius + 0.5 * h && v.abs() > ZERO_TOL {
                return Err(Error::Domain(format!(
                    "sample {v} at x = {x} lies outside the declared support radius {support_radius}"
                )));
            }
        }
        Ok(Self { grid, values, support_radius, background: 0.0 })
    }

    /// Sample `f` on the grid, zeroing everything outside `[-support_radius, support_radius]`.
    pub fn from_fn(grid: Grid, support_radius: f64, f: impl Fn(f64) -> f64) -> Result<Self> {
        let r = support_radius.min(grid.half_width());
        let values = grid
            .points()
            .map(|x| if x.abs() <= r { f(x) } else { 0.0 })
            .collect();
        Self::new(grid, values, r)
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.len()], support_radius: 0.0, background: 0.0 }
    }

    /// `amplitude * chi_[a, b)` on grid points.
    pub fn indicator(grid: Grid, a: f64, b: f64, amplitude: f64) -> Result<Self> {
        let h = grid.spacing();
        let values = grid
            .points()
            .map(|x| if x >= a - 1e-9 * h && x < b - 1e-9 * h { amplitude } else { 0.0 })
            .collect();
        let r = a.abs().max(b.abs()).min(grid.half_width());
        Self::new(grid, values, r)
    }

    /// The constant `c` on the whole domain and beyond it, a stand-in for a
    /// constant function on the line.
    pub fn domain_constant(grid: Grid, c: f64) -> Self {
        Self { grid, values: vec![c; grid.len()], support_radius: grid.half_width(), background: c }
    }

    /// Full-domain samples with no support restriction.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        Self::new(grid, values, grid.half_width())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn is_domain_constant(&self) -> bool {
        self.background != 0.0 && self.values.iter().all(|&v| v == self.background)
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    /// `self + c`, with `c` also added beyond the domain.
    pub fn add_constant(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v + c).collect(),
            support_radius: self.grid.half_width(),
            background: self.background + c,
        }
    }

    /// Same samples with the value beyond the domain replaced by `c`.
    pub fn with_background(mut self, c: f64) -> Self {
        if c != 0.0 {
            self.support_radius = self.grid.half_width();
        }
        self.background = c;
        self
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.grid.nearest_index(x).map(|i| self.values[i])
    }

    /// Midpoint-rule integral.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.spacing()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.spacing()).sqrt()
    }

    pub fn lq_norm(&self, q: f64) -> f64 {
        (self.values.iter().map(|v| v.abs().powf(q)).sum::<f64>() * self.grid.spacing())
            .powf(1.0 / q)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.spacing()
    }

    /// Pointwise map, applied to the background as well.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
            support_radius: self.grid.half_width(),
            background: f(self.background),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
            support_radius: self.support_radius,
            background: c * self.background,
        }
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Self {
        assert_eq!(self.grid, other.grid, "functions live on different grids");
        Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(x, y)| a * x + b * y).collect(),
            support_radius: self.support_radius.max(other.support_radius),
            background: a * self.background + b * other.background,
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.combine(1.0, other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.combine(1.0, other, -1.0)
    }

    pub fn abs(&self) -> Self {
        let mut out = self.map(f64::abs);
        out.support_radius = self.support_radius;
        out
    }

    /// Relative L2 distance `||self - reference|| / ||reference||`.
    pub fn relative_l2_error(&self, reference: &Self) -> f64 {
        let num = self.sub(reference).l2_norm();
        let den = reference.l2_norm();
        if den == 0.0 {
            num
        } else {
            num / den
        }
    }
}

/// Continuous spectrum of `g_j(x) = 2^j g(2^j x)` on the padded frequency grid.
///
/// For `j >= 0` the dilated kernel is sampled exactly (the points `2^j d h` are
/// grid points). For `j < 0` the dilation is taken in frequency by bin
/// decimation, which is band-limited interpolation of `g`.
pub fn dilated_spectrum(g: &SampledFunction, j: i32) -> Vec<Complex64> {
    let grid = *g.grid();
    let n = grid.len() as i64;
    let len = grid.padded_len();
    let kernel_at = |step: i64| -> Vec<f64> {
        (0..len)
            .map(|d| {
                let off = fft::signed_bin(d, len) * step;
                let i = off + n / 2;
                if (0..n).contains(&i) {
                    g.values()[i as usize]
                } else {
                    0.0
                }
            })
            .collect()
    };
    if j >= 0 {
        let step = 1i64 << j;
        let kernel: Vec<f64> = kernel_at(step).into_iter().map(|v| v * step as f64).collect();
        fft::multiplier_from_kernel(&grid, &kernel)
    } else {
        let base = fft::multiplier_from_kernel(&grid, &kernel_at(1));
        let m = 1i64 << (-j);
        let half = len as i64 / 2;
        (0..len)
            .map(|k| {
                let s = fft::signed_bin(k, len) * m;
                if s.abs() <= half {
                    base[s.rem_euclid(len as i64) as usize]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }
}

/// `g_j * f` with `g_j(x) = 2^j g(2^j x)`, by zero-padded FFT.
pub fn convolve_scaled(f: &SampledFunction, g: &SampledFunction, j: i32) -> Result<SampledFunction> {
    if f.grid() != g.grid() {
        return Err(Error::Config("convolution operands live on different grids".into()));
    }
    f.grid().check_scale(j)?;
    let spec = Spectrum::of(f);
    let values = spec.filter_complex(&dilated_spectrum(g, j));
    SampledFunction::from_values(*f.grid(), values)
}

/// A dyadic interval `[k s, (k+1) s)` with `s = 2^{-j-N}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicCube {
    pub scale: i32,
    pub index: i64,
    pub side: f64,
    /// Anchor point `x_Q`: the center when it is a grid point, otherwise the
    /// single sample the cube holds.
    pub anchor: f64,
    pub anchor_sample: usize,
    pub first_sample: usize,
    pub samples: usize,
}

impl DyadicCube {
    pub fn left(&self) -> f64 {
        self.index as f64 * self.side
    }

    pub fn right(&self) -> f64 {
        (self.index + 1) as f64 * self.side
    }

    pub fn center(&self) -> f64 {
        (self.index as f64 + 0.5) * self.side
    }

    pub fn measure(&self) -> f64 {
        self.side
    }

    pub fn sample_range(&self) -> std::ops::Range<usize> {
        self.first_sample..self.first_sample + self.samples
    }
}

/// Per-scale slab of a [`CubeLattice`].
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeLevel {
    pub scale: i32,
    pub side: f64,
    pub samples_per_cube: usize,
    /// Global index `k` of the leftmost cube.
    pub first_index: i64,
    pub cubes: Vec<DyadicCube>,
}

/// Dyadic cubes of side `2^{-j-N}` tiling `[-R, R)` for `j` in `[j_min, j_max]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeLattice {
    grid: Grid,
    shift: i32,
    j_min: i32,
    j_max: i32,
    levels: Vec<LatticeLevel>,
}

/// Build the lattice of dyadic cubes at scales `j_min..=j_max` with shift `n_shift`.
pub fn build_lattice(grid: &Grid, n_shift: i32, j_min: i32, j_max: i32) -> Result<CubeLattice> {
    CubeLattice::new(grid, n_shift, j_min, j_max)
}

impl CubeLattice {
    pub fn new(grid: &Grid, n_shift: i32, j_min: i32, j_max: i32) -> Result<Self> {
        if j_min > j_max {
            return Err(Error::Config(format!("empty scale range [{j_min}, {j_max}]")));
        }
        if j_max + n_shift > grid.level() as i32 - 2 {
            return Err(Error::Config(format!(
                "j_max + N = {} exceeds L - 2 = {}",
                j_max + n_shift,
                grid.level() as i32 - 2
            )));
        }
        let min_scale = -grid.half_width().log2();
        if (j_min as f64) < min_scale - 1e-12 {
            return Err(Error::Config(format!(
                "j_min = {j_min} is below -log2(R) = {min_scale}"
            )));
        }
        let h = grid.spacing();
        let r = grid.half_width();
        let mut levels = Vec::with_capacity((j_max - j_min + 1) as usize);
        for j in j_min..=j_max {
            let side = 2f64.powi(-j - n_shift);
            let per_cube = side / h;
            let per_half = r / side;
            if per_cube < 1.0 - 1e-9 || (per_cube - per_cube.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "cubes of side {side} at scale {j} do not hold a whole number of samples (h = {h})"
                )));
            }
            if (per_half - per_half.round()).abs() > 1e-9 {
                return Err(Error::Config(format!(
                    "cubes of side {side} do not tile [-{r}, {r})"
                )));
            }
            let m = per_cube.round() as usize;
            let first_index = -(per_half.round() as i64);
            let count = grid.len() / m;
            let cubes = (0..count)
                .map(|c| {
                    let first = c * m;
                    let anchor_sample = first + m / 2;
                    DyadicCube {
                        scale: j,
                        index: first_index + c as i64,
                        side,
                        anchor: grid.point(anchor_sample),
                        anchor_sample,
                        first_sample: first,
                        samples: m,
                    }
                })
                .collect();
            levels.push(LatticeLevel { scale: j, side, samples_per_cube: m, first_index, cubes });
        }
        Ok(Self { grid: *grid, shift: n_shift, j_min, j_max, levels })
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

    pub fn levels(&self) -> &[LatticeLevel] {
        &self.levels
    }

    pub fn level(&self, j: i32) -> &LatticeLevel {
        &self.levels[(j - self.j_min) as usize]
    }

    pub fn cubes(&self, j: i32) -> &[DyadicCube] {
        &self.level(j).cubes
    }

    pub fn total_cubes(&self) -> usize {
        self.levels.iter().map(|l| l.cubes.len()).sum()
    }

    /// Anchor sample indices of every cube at scale `j`, in cube order.
    pub fn anchor_samples(&self, j: i32) -> Vec<usize> {
        self.cubes(j).iter().map(|c| c.anchor_sample).collect()
    }

    /// Position (within scale `j`) of the cube holding sample `i`.
    pub fn cube_of_sample(&self, j: i32, i: usize) -> usize {
        i / self.level(j).samples_per_cube
    }

    /// Position at scale `coarse` of the ancestor of cube `pos` at scale `fine`.
    pub fn ancestor(&self, fine: i32, pos: usize, coarse: i32) -> usize {
        assert!(coarse <= fine);
        let k = self.level(fine).first_index + pos as i64;
        let parent_k = k >> (fine - coarse);
        (parent_k - self.level(coarse).first_index) as usize
    }

    /// Exact containment from integer indices.
    pub fn contains(&self, outer: &DyadicCube, inner: &DyadicCube) -> bool {
        outer.scale <= inner.scale && (inner.index >> (inner.scale - outer.scale)) == outer.index
    }

    /// Cubes within one filter width `2^{-j}` of the domain boundary.
    pub fn near_boundary(&self, cube: &DyadicCube) -> bool {
        let reach = 2f64.powi(-cube.scale);
        cube.left() < -self.grid.half_width() + reach || cube.right() > self.grid.half_width() - reach
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = make_grid(8.0, 12).unwrap();
        assert_eq!(g.len(), 4096);
        assert_eq!(g.spacing(), 2f64.powi(-8));
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g.point(0), -1.0);
        assert!(make_grid(8.0, 30).is_err());
        assert!(make_grid(8.0, 3).is_err());
        assert!(make_grid(0.0, 8).is_err());
        assert!(make_grid(-1.0, 8).is_err());
    }

    #[test]
    fn sampled_function_rejects_bad_samples() {
        let g = make_grid(1.0, 4).unwrap();
        let mut v = vec![0.0; 16];
        v[3] = f64::NAN;
        assert!(SampledFunction::new(g, v, 1.0).is_err());
        let mut v = vec![0.0; 16];
        v[0] = 1.0;
        assert!(SampledFunction::new(g, v, 0.5).is_err());
        assert!(SampledFunction::new(g, vec![0.0; 15], 1.0).is_err());
    }

    #[test]
    fn spike_convolution_reproduces_kernel() {
        let g = make_grid(8.0, 10).unwrap();
        let h = g.spacing();
        let spike = {
            let mut v = vec![0.0; g.len()];
            v[g.nearest_index(0.0).unwrap()] = 1.0 / h;
            SampledFunction::new(g, v, h).unwrap()
        };
        let bump = SampledFunction::from_fn(g, 8.0, |x| (-x * x).exp()).unwrap();
        let out = convolve_scaled(&spike, &bump, 0).unwrap();
        let dev = out
            .values()
            .iter()
            .zip(bump.values())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(dev < 1e-6, "deviation {dev}");
    }

    #[test]
    fn zero_convolution_is_zero() {
        let g = make_grid(8.0, 10).unwrap();
        let bump = SampledFunction::from_fn(g, 8.0, |x| (-x * x).exp()).unwrap();
        let out = convolve_scaled(&SampledFunction::zeros(g), &bump, 1).unwrap();
        assert!(out.is_zero());
    }

    #[test]
    fn unresolvable_scales_are_rejected() {
        let g = make_grid(8.0, 10).unwrap();
        let f = SampledFunction::zeros(g);
        assert!(matches!(convolve_scaled(&f, &f, 7), Err(Error::ScaleRange { .. })));
        assert!(matches!(convolve_scaled(&f, &f, -4), Err(Error::ScaleRange { .. })));
        assert!(convolve_scaled(&f, &f, -3).is_ok());
    }

    #[test]
    fn lattice_counts() {
        let g = make_grid(8.0, 12).unwrap();
        let lat = build_lattice(&g, 2, -3, 5).unwrap();
        assert_eq!(lat.cubes(0).len(), 64);
        assert_eq!(lat.cubes(0)[0].side, 0.25);
        assert_eq!(lat.cubes(3).len(), 512);
        assert_eq!(lat.cubes(-3).len(), 8);
        for level in lat.levels() {
            assert_eq!(level.cubes.len() as f64, 16.0 * 2f64.powi(level.scale + 2));
        }
        assert!(build_lattice(&g, 2, -3, 9).is_err());
        assert!(build_lattice(&g, 2, -4, 5).is_err());
    }

    #[test]
    fn lattice_tiles_every_sample_once() {
        let g = make_grid(8.0, 11).unwrap();
        let lat = build_lattice(&g, 2, -3, 5).unwrap();
        for level in lat.levels() {
            let mut hits = vec![0u32; g.len()];
            for c in &level.cubes {
                for i in c.sample_range() {
                    hits[i] += 1;
                }
                assert!(c.sample_range().contains(&c.anchor_sample));
                assert!(c.anchor >= c.left() - 1e-12 && c.anchor < c.right());
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn containment_matches_geometry() {
        let g = make_grid(8.0, 11).unwrap();
        let lat = build_lattice(&g, 2, -2, 3).unwrap();
        for fine in lat.scales() {
            for coarse in lat.j_min()..=fine {
                for (pos, c) in lat.cubes(fine).iter().enumerate().step_by(7) {
                    let a = lat.ancestor(fine, pos, coarse);
                    let parent = &lat.cubes(coarse)[a];
                    assert!(lat.contains(parent, c));
                    assert!(parent.left() <= c.left() && c.right() <= parent.right());
                }
            }
        }
    }
}
