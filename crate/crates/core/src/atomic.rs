//! Stopping-time atomic decomposition: level sets of `M_phi f`, the cube
//! families `B_l`, atoms on dilated maximal cubes, the coefficient
//! functional and reconstruction.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calderon::{analyze, check_compatible, synthesize_weighted};
use crate::error::{Error, Result};
use crate::filterbank::{FilterBank, FilterKind};
use crate::grid::{CubeLattice, DyadicCube, Grid, SampledFunction};
use crate::maximal::{hl_maximal_values, MaximalConfig};
use crate::varexp::{luxemburg_norm, luxemburg_norm_values, ExponentFunction};

/// Threshold of the dilated level sets `{M chi_Omega > 1/1000}`.
pub const DILATION_THRESHOLD: f64 = 1e-3;
/// Side ratio of the support cube `Q*` to its maximal cube.
pub const SUPPORT_DILATION: f64 = 100.0;
/// At most this many levels are kept; lower levels are folded into the lowest.
pub const MAX_LEVELS: usize = 64;
/// Relative slack on the atom size bound.
pub const ATOM_NORM_TOL: f64 = 1e-6;
/// Moment tolerance relative to `||a||_q`.
pub const ATOM_MOMENT_TOL: f64 = 1e-6;

/// Level sets `Omega_l = {M_phi f > 2^l}` and their dilates.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelSets {
    grid: Grid,
    /// Lowest and highest kept level; `Omega_{hi}` is empty.
    lo: i32,
    hi: i32,
    /// Per sample, the largest `l` with `M_phi f > 2^l` (clamped below at `lo - 1`).
    level_of_sample: Vec<i32>,
    dilated: Vec<Vec<bool>>,
    mphi: SampledFunction,
    truncated: bool,
}

/// Largest `l` with `v > 2^l`.
fn level_of(v: f64) -> Option<i32> {
    if !(v > 0.0) {
        return None;
    }
    let mut l = v.log2().ceil() as i32 - 1;
    while 2f64.powi(l + 1) < v {
        l += 1;
    }
    while 2f64.powi(l) >= v {
        l -= 1;
    }
    Some(l)
}

impl LevelSets {
    /// Level sets of a maximal function given on the grid.
    pub fn from_maximal(mphi: SampledFunction) -> Self {
        let grid = *mphi.grid();
        let levels: Vec<Option<i32>> = mphi.values().iter().map(|&v| level_of(v)).collect();
        let top = levels.iter().flatten().copied().max();
        let Some(top) = top else {
            return Self { grid, lo: 0, hi: 0, level_of_sample: vec![-1; grid.len()], dilated: vec![], mphi, truncated: false };
        };
        let bottom = levels.iter().flatten().copied().min().unwrap_or(top);
        let all_positive = levels.iter().all(Option::is_some);
        let hi = top + 1;
        let mut lo = if all_positive { bottom } else { bottom.min(top) };
        let mut truncated = !all_positive;
        if (hi - lo) as usize > MAX_LEVELS {
            lo = hi - MAX_LEVELS as i32;
            truncated = true;
        }
        let level_of_sample: Vec<i32> = levels.iter().map(|l| l.unwrap_or(i32::MIN).max(lo - 1)).collect();
        let widths = MaximalConfig::for_grid(&grid).widths(&grid);
        let dilated = (lo..hi)
            .into_par_iter()
            .map(|l| {
                let chi: Vec<f64> = level_of_sample.iter().map(|&s| if s >= l { 1.0 } else { 0.0 }).collect();
                hl_maximal_values(&chi, &widths).into_iter().map(|m| m > DILATION_THRESHOLD).collect()
            })
            .collect();
        Self { grid, lo, hi, level_of_sample, dilated, mphi, truncated }
    }

    /// Level sets of `M_phi f` for the smoothing filter of `bank`.
    pub fn of(f: &SampledFunction, bank: &FilterBank) -> Self {
        Self::from_maximal(bank.smooth_maximal(f))
    }

    /// Kept levels `lo..hi`; empty when `M_phi f` vanishes.
    pub fn levels(&self) -> std::ops::Range<i32> {
        self.lo..self.hi
    }

    pub fn is_empty(&self) -> bool {
        self.lo == self.hi
    }

    /// Whether levels below the kept range had to be folded in.
    pub fn truncated(&self) -> bool {
        self.truncated
    }

    pub fn maximal(&self) -> &SampledFunction {
        &self.mphi
    }

    pub fn level_of_sample(&self) -> &[i32] {
        &self.level_of_sample
    }

    /// `Omega_l` as a sample mask; all-false above the kept range.
    pub fn omega(&self, l: i32) -> Vec<bool> {
        if self.is_empty() {
            return vec![false; self.grid.len()];
        }
        if l < self.lo {
            // Below the kept range only the threshold decides.
            let t = 2f64.powi(l);
            return self.mphi.values().iter().map(|&v| v > t).collect();
        }
        self.level_of_sample.iter().map(|&s| s >= l).collect()
    }

    /// `tilde Omega_l`, defined for kept levels.
    pub fn omega_tilde(&self, l: i32) -> &[bool] {
        &self.dilated[(l - self.lo) as usize]
    }

    /// `max_l |tilde Omega_l| / |Omega_l|` over kept levels with nonempty `Omega_l`.
    pub fn dilation_ratio(&self) -> f64 {
        self.levels()
            .map(|l| {
                let a = self.omega(l).iter().filter(|b| **b).count();
                let b = self.omega_tilde(l).iter().filter(|b| **b).count();
                if a == 0 {
                    0.0
                } else {
                    b as f64 / a as f64
                }
            })
            .fold(0.0, f64::max)
    }
}

/// `Omega_l` for every requested level of `M_phi f`.
pub fn level_sets(f: &SampledFunction, bank: &FilterBank) -> LevelSets {
    LevelSets::of(f, bank)
}

/// Key of a maximal cube: `(level, scale, position at that scale)`.
pub type GroupKey = (i32, i32, usize);

/// Assignment of every lattice cube to one level and one maximal cube.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeSelection {
    /// `level[j - j_min][pos]`: the unique `l` with the cube in `B_l`.
    pub level: Vec<Vec<i32>>,
    /// Maximal cube of `B_l` above each cube, as `(scale, position)`.
    pub top: Vec<Vec<(i32, usize)>>,
    /// Cubes with no level in the kept range, folded into the lowest.
    pub unassigned: usize,
}

impl CubeSelection {
    pub fn key(&self, lattice: &CubeLattice, j: i32, pos: usize) -> GroupKey {
        let s = (j - lattice.j_min()) as usize;
        let (tj, tp) = self.top[s][pos];
        (self.level[s][pos], tj, tp)
    }
}

/// `B_l = {Q : |Q cap Omega_l| > |Q|/2, |Q cap Omega_{l+1}| <= |Q|/2}` and
/// the inclusion-maximal members of each `B_l`.
pub fn select_cubes(levels: &LevelSets, lattice: &CubeLattice) -> CubeSelection {
    let lo = levels.lo;
    let mut unassigned = 0usize;
    let mut level = Vec::with_capacity(lattice.levels().len());
    for lvl in lattice.levels() {
        let mut out = Vec::with_capacity(lvl.cubes.len());
        let mut buf = Vec::with_capacity(lvl.samples_per_cube);
        for cube in &lvl.cubes {
            buf.clear();
            buf.extend_from_slice(&levels.level_of_sample[cube.sample_range()]);
            buf.sort_unstable_by(|a, b| b.cmp(a));
            // More than half the samples reach level l exactly when l is at
            // most the (floor(m/2)+1)-th largest sample level.
            let l = buf[cube.samples / 2];
            if l < lo {
                unassigned += 1;
                out.push(lo);
            } else {
                out.push(l);
            }
        }
        level.push(out);
    }
    let mut top: Vec<Vec<(i32, usize)>> = Vec::with_capacity(level.len());
    for (s, lvl) in lattice.levels().iter().enumerate() {
        let j = lvl.scale;
        let row = (0..lvl.cubes.len())
            .map(|pos| {
                let l = level[s][pos];
                (lattice.j_min()..=j)
                    .map(|c| (c, lattice.ancestor(j, pos, c)))
                    .find(|&(c, a)| level[(c - lattice.j_min()) as usize][a] == l)
                    .unwrap_or((j, pos))
            })
            .collect();
        top.push(row);
    }
    CubeSelection { level, top, unassigned }
}

/// The `100`-fold dilate of a dyadic cube, clipped to the domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportCube {
    pub base: DyadicCube,
    pub left: f64,
    pub right: f64,
    pub first_sample: usize,
    pub samples: usize,
}

impl SupportCube {
    pub fn dilate(grid: &Grid, base: DyadicCube, factor: f64) -> Self {
        let half = 0.5 * factor * base.side;
        let c = base.center();
        let r = grid.half_width();
        let left = (c - half).max(-r);
        let right = (c + half).min(r);
        let h = grid.spacing();
        let idx = |x: f64| (((x + r) / h) - 1e-9).ceil().clamp(0.0, grid.len() as f64) as usize;
        let first = idx(left);
        let end = idx(right);
        Self { base, left, right, first_sample: first, samples: end - first }
    }

    pub fn sample_range(&self) -> std::ops::Range<usize> {
        self.first_sample..self.first_sample + self.samples
    }

    pub fn measure(&self, h: f64) -> f64 {
        self.samples as f64 * h
    }
}

/// A `(p, q)`-atom candidate with its size certificate.
#[derive(Clone, Debug, PartialEq)]
pub struct Atom {
    pub values: SampledFunction,
    pub support: SupportCube,
    pub level: i32,
    pub q: f64,
    /// `|Q*|^{1/q} / ||chi_{Q*}||_{p}`.
    pub norm_certificate: f64,
    pub moment_residuals: Vec<f64>,
}

/// Outcome of the three atom conditions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomCheck {
    pub support_ok: bool,
    /// `||a||_q / certificate`.
    pub norm_ratio: f64,
    pub norm_ok: bool,
    /// `max_alpha |int a x^alpha| / ||a||_q`.
    pub moment_ratio: f64,
    pub moments_ok: bool,
    pub pass: bool,
}

/// Check support, size and moments of `a` against `p`, `q` and degree `d`.
pub fn atom_validate(a: &Atom, p: &ExponentFunction, q: f64, d: usize) -> AtomCheck {
    let grid = *a.values.grid();
    let range = a.support.sample_range();
    let support_ok = a
        .values
        .values()
        .iter()
        .enumerate()
        .all(|(i, v)| range.contains(&i) || *v == 0.0);
    let certificate = certificate(p, &a.support, q);
    let norm = a.values.lq_norm(q);
    let norm_ratio = if certificate > 0.0 { norm / certificate } else { f64::INFINITY };
    let norm_ok = norm_ratio <= 1.0 + ATOM_NORM_TOL;
    let moments = moments_on(&a.values, &range, &grid, d);
    let moment_ratio = if norm > 0.0 {
        moments.iter().map(|m| m.abs()).fold(0.0, f64::max) / norm
    } else {
        0.0
    };
    let moments_ok = moment_ratio <= ATOM_MOMENT_TOL;
    AtomCheck { support_ok, norm_ratio, norm_ok, moment_ratio, moments_ok, pass: support_ok && norm_ok && moments_ok }
}

fn certificate(p: &ExponentFunction, support: &SupportCube, q: f64) -> f64 {
    let h = p.grid().spacing();
    let chi = chi_norm(p, support.sample_range());
    support.measure(h).powf(1.0 / q) / chi
}

/// `||chi_range||_{p}` computed over the range only.
fn chi_norm(p: &ExponentFunction, range: std::ops::Range<usize>) -> f64 {
    let ones = vec![1.0; range.len()];
    luxemburg_norm_values(&ones, &p.samples()[range], p.grid().spacing(), p.p_minus())
}

fn moments_on(f: &SampledFunction, range: &std::ops::Range<usize>, grid: &Grid, d: usize) -> Vec<f64> {
    let h = grid.spacing();
    (0..=d)
        .map(|a| range.clone().map(|i| f.values()[i] * grid.point(i).powi(a as i32)).sum::<f64>() * h)
        .collect()
}

/// Remove the discrete `L^2(range)` projection onto polynomials of degree `<= d`.
fn project_out_polynomials(values: &mut [f64], range: std::ops::Range<usize>, grid: &Grid, d: usize) {
    if range.is_empty() {
        return;
    }
    let xs: Vec<f64> = range.clone().map(|i| grid.point(i)).collect();
    let c = 0.5 * (xs[0] + xs[xs.len() - 1]);
    let w = (0.5 * (xs[xs.len() - 1] - xs[0])).max(grid.spacing());
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for a in 0..=d.min(xs.len() - 1) {
        let mut v: Vec<f64> = xs.iter().map(|x| ((x - c) / w).powi(a as i32)).collect();
        for _ in 0..2 {
            for e in &basis {
                let dot: f64 = v.iter().zip(e).map(|(x, y)| x * y).sum();
                for (x, y) in v.iter_mut().zip(e) {
                    *x -= dot * y;
                }
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    let seg = &mut values[range];
    for _ in 0..2 {
        for e in &basis {
            let dot: f64 = seg.iter().zip(e).map(|(x, y)| x * y).sum();
            for (x, y) in seg.iter_mut().zip(e) {
                *x -= dot * y;
            }
        }
    }
}

/// Audits of the stopping-time construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionAudit {
    pub cubes_checked: usize,
    /// Points of selected cubes where `1 > 4 M^2 chi_E` with `E = Q cap tilde Omega_l \ Omega_{l+1}`.
    pub inequality_violations: usize,
    pub witnesses: usize,
    /// Witness points `x_Q in E` with `M_phi f(x_Q) > 2^{l+1}`.
    pub witness_violations: usize,
    pub dilation_ratio: f64,
}

/// A finished decomposition `f = sum lambda_k a_k`.
#[derive(Clone, Debug)]
pub struct AtomicDecomposition {
    pub atoms: Vec<Atom>,
    pub lambdas: Vec<f64>,
    pub keys: Vec<GroupKey>,
    /// `||M_phi f||_{p}`.
    pub source_norm: f64,
    pub source: SampledFunction,
    pub unassigned: usize,
    pub skipped_zero: usize,
    pub levels_truncated: bool,
    pub audit: SelectionAudit,
    pub q: f64,
    pub degree: usize,
}

/// Smallest admissible moment degree `d` with `p^- (d + 2) > 1`.
pub fn minimal_degree(p: &ExponentFunction) -> usize {
    p.moment_degree()
}

/// Decompose `f` into `(p, q)`-atoms on the maximal cubes of each `B_l`.
pub fn atomic_decompose(
    f: &SampledFunction,
    p: &ExponentFunction,
    bank: &FilterBank,
    lattice: &CubeLattice,
    q: f64,
    d: usize,
) -> Result<AtomicDecomposition> {
    check_compatible(bank, lattice)?;
    if p.p_plus() > 1.0 {
        return Err(Error::Precondition(format!("atomic decomposition needs p+ <= 1, got {}", p.p_plus())));
    }
    if !p.log_holder().pass {
        return Err(Error::Precondition("exponent fails the log-Hölder check".into()));
    }
    if q != 2.0 {
        return Err(Error::Precondition(format!("only q = 2 atoms are built, got q = {q}")));
    }
    let dp = minimal_degree(p);
    if d < dp {
        return Err(Error::Precondition(format!("moment degree {d} is below the minimum {dp}")));
    }
    if f.grid() != bank.grid() || p.grid() != bank.grid() {
        return Err(Error::Config("function, exponent and bank must share one grid".into()));
    }
    let grid = *bank.grid();
    let empty = |audit| AtomicDecomposition {
        atoms: vec![],
        lambdas: vec![],
        keys: vec![],
        source_norm: 0.0,
        source: f.clone(),
        unassigned: 0,
        skipped_zero: 0,
        levels_truncated: false,
        audit,
        q,
        degree: d,
    };
    let zero_audit =
        SelectionAudit { cubes_checked: 0, inequality_violations: 0, witnesses: 0, witness_violations: 0, dilation_ratio: 0.0 };
    if f.is_zero() {
        return Ok(empty(zero_audit));
    }
    let levels = LevelSets::of(f, bank);
    if levels.is_empty() {
        return Ok(empty(zero_audit));
    }
    let coeffs = analyze(f, bank, lattice)?;
    let selection = select_cubes(&levels, lattice);

    let mut groups: BTreeMap<GroupKey, Vec<(i32, usize)>> = BTreeMap::new();
    let mut skipped_zero = 0usize;
    for j in lattice.scales() {
        for (pos, c) in coeffs.scale(j).iter().enumerate() {
            if *c == 0.0 {
                skipped_zero += 1;
                continue;
            }
            groups.entry(selection.key(lattice, j, pos)).or_default().push((j, pos));
        }
    }
    let audit = audit_selection(&levels, lattice, &selection, &groups);

    let mut chi_cache: HashMap<(usize, usize), f64> = HashMap::new();
    let supports: Vec<SupportCube> = groups
        .keys()
        .map(|&(_, tj, tp)| SupportCube::dilate(&grid, lattice.cubes(tj)[tp], SUPPORT_DILATION))
        .collect();
    for s in &supports {
        chi_cache.entry((s.first_sample, s.samples)).or_insert_with(|| chi_norm(p, s.sample_range()));
    }
    let h = grid.spacing();
    let entries: Vec<(&GroupKey, &Vec<(i32, usize)>)> = groups.iter().collect();
    let built: Vec<(Atom, f64)> = entries
        .par_iter()
        .zip(&supports)
        .map(|((key, members), support)| {
            let energy: f64 = members.iter().map(|&(j, pos)| lattice.level(j).side * coeffs.get(j, pos).powi(2)).sum();
            let chi = chi_cache[&(support.first_sample, support.samples)];
            let measure = support.measure(h);
            let lambda = energy.sqrt() * measure.powf(-0.5) * chi;
            let mut weights: BTreeMap<(i32, usize), f64> = BTreeMap::new();
            for &(j, pos) in members.iter() {
                weights.insert((j, pos), lattice.level(j).side * coeffs.get(j, pos) / lambda);
            }
            let g = synthesize_weighted(bank, lattice, FilterKind::Psi, |j, pos| {
                weights.get(&(j, pos)).copied().unwrap_or(0.0)
            });
            let mut values = vec![0.0; grid.len()];
            let range = support.sample_range();
            values[range.clone()].copy_from_slice(&g.values()[range.clone()]);
            project_out_polynomials(&mut values, range.clone(), &grid, d);
            let values = SampledFunction::from_values(grid, values).expect("finite atom");
            let moment_residuals = moments_on(&values, &range, &grid, d);
            let atom = Atom {
                values,
                support: *support,
                level: key.0,
                q,
                norm_certificate: measure.powf(1.0 / q) / chi,
                moment_residuals,
            };
            (atom, lambda)
        })
        .collect();
    let keys: Vec<GroupKey> = groups.keys().copied().collect();
    let (atoms, lambdas): (Vec<Atom>, Vec<f64>) = built.into_iter().unzip();
    let source_norm = luxemburg_norm(levels.maximal(), p);
    Ok(AtomicDecomposition {
        atoms,
        lambdas,
        keys,
        source_norm,
        source: f.clone(),
        unassigned: selection.unassigned,
        skipped_zero,
        levels_truncated: levels.truncated(),
        audit,
        q,
        degree: d,
    })
}

/// Cubes audited for the selection inequality, spread evenly over the selection.
const AUDIT_CUBES: usize = 256;

fn audit_selection(
    levels: &LevelSets,
    lattice: &CubeLattice,
    selection: &CubeSelection,
    groups: &BTreeMap<GroupKey, Vec<(i32, usize)>>,
) -> SelectionAudit {
    let grid = *lattice.grid();
    let widths = MaximalConfig::for_grid(&grid).widths(&grid);
    let members: Vec<(i32, usize)> = groups.values().flatten().copied().collect();
    let stride = (members.len() / AUDIT_CUBES).max(1);
    let mut checked = 0usize;
    let mut violations = 0usize;
    let mut witnesses = 0usize;
    let mut witness_violations = 0usize;
    for (n, &(j, pos)) in members.iter().enumerate() {
        let s = (j - lattice.j_min()) as usize;
        let l = selection.level[s][pos];
        let cube = lattice.cubes(j)[pos];
        let in_e = |i: usize| {
            let lev = levels.level_of_sample[i];
            let tilde = l >= levels.lo && l < levels.hi && levels.omega_tilde(l)[i];
            tilde && lev < l + 1
        };
        if let Some(i) = cube.sample_range().find(|&i| in_e(i)) {
            witnesses += 1;
            if levels.maximal().values()[i] > 2f64.powi(l + 1) {
                witness_violations += 1;
            }
        }
        if n % stride != 0 || selection.unassigned > 0 && l == levels.lo {
            continue;
        }
        checked += 1;
        let chi: Vec<f64> = (0..grid.len())
            .map(|i| if cube.sample_range().contains(&i) && in_e(i) { 1.0 } else { 0.0 })
            .collect();
        let m1 = hl_maximal_values(&chi, &widths);
        let m2 = hl_maximal_values(&m1, &widths);
        violations += cube.sample_range().filter(|&i| 4.0 * m2[i] < 1.0 - 1e-12).count();
    }
    SelectionAudit {
        cubes_checked: checked,
        inequality_violations: violations,
        witnesses,
        witness_violations,
        dilation_ratio: levels.dilation_ratio(),
    }
}

/// `|| (sum_k (|lambda_k| chi_{Q_k} / ||chi_{Q_k}||_p)^{p^-})^{1/p^-} ||_p`.
pub fn a_functional(lambdas: &[f64], cubes: &[SupportCube], p: &ExponentFunction) -> Result<f64> {
    if lambdas.len() != cubes.len() {
        return Err(Error::Config(format!("{} coefficients for {} cubes", lambdas.len(), cubes.len())));
    }
    let grid = *p.grid();
    let pm = p.p_minus();
    let mut diff = vec![0.0; grid.len() + 1];
    for (lambda, cube) in lambdas.iter().zip(cubes) {
        if *lambda == 0.0 || cube.samples == 0 {
            continue;
        }
        let w = (lambda.abs() / chi_norm(p, cube.sample_range())).powf(pm);
        diff[cube.first_sample] += w;
        diff[cube.first_sample + cube.samples] -= w;
    }
    let mut acc = 0.0;
    let values: Vec<f64> = diff[..grid.len()]
        .iter()
        .map(|d| {
            acc += d;
            acc.max(0.0).powf(1.0 / pm)
        })
        .collect();
    Ok(luxemburg_norm_values(&values, p.samples(), grid.spacing(), pm))
}

/// Reconstruction errors of a decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionDefect {
    pub l2_relative: f64,
    pub lp_relative: f64,
}

impl AtomicDecomposition {
    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `sum_k lambda_k a_k` in order of decreasing `|lambda_k|`.
    pub fn reconstruct(&self) -> SampledFunction {
        reconstruct(&self.atoms, &self.lambdas, *self.source.grid())
    }

    pub fn a_functional(&self, p: &ExponentFunction) -> Result<f64> {
        let cubes: Vec<SupportCube> = self.atoms.iter().map(|a| a.support).collect();
        a_functional(&self.lambdas, &cubes, p)
    }

    pub fn defect(&self, p: &ExponentFunction) -> ReconstructionDefect {
        let rec = self.reconstruct();
        let diff = rec.sub(&self.source);
        let src = luxemburg_norm(&self.source, p);
        ReconstructionDefect {
            l2_relative: rec.relative_l2_error(&self.source),
            lp_relative: if src > 0.0 { luxemburg_norm(&diff, p) / src } else { luxemburg_norm(&diff, p) },
        }
    }

    pub fn validate(&self, p: &ExponentFunction) -> Vec<AtomCheck> {
        self.atoms.par_iter().map(|a| atom_validate(a, p, self.q, self.degree)).collect()
    }
}

/// `sum_k lambda_k a_k`, summed in order of decreasing `|lambda_k|`.
pub fn reconstruct(atoms: &[Atom], lambdas: &[f64], grid: Grid) -> SampledFunction {
    let mut order: Vec<usize> = (0..atoms.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].abs().total_cmp(&lambdas[a].abs()));
    let mut acc = vec![0.0; grid.len()];
    for k in order {
        let range = atoms[k].support.sample_range();
        for i in range {
            acc[i] += lambdas[k] * atoms[k].values.values()[i];
        }
    }
    SampledFunction::from_values(grid, acc).expect("finite reconstruction")
}

/// A mean-zero smooth bump on `support`, scaled to `fraction` of the atom size bound.
pub fn bump_atom(p: &ExponentFunction, support: SupportCube, q: f64, fraction: f64) -> Atom {
    let grid = *p.grid();
    let c = 0.5 * (support.left + support.right);
    let w = 0.5 * (support.right - support.left);
    let mut values = vec![0.0; grid.len()];
    for i in support.sample_range() {
        let t = (grid.point(i) - c) / w;
        values[i] = if t.abs() < 1.0 { t * (-1.0 / (1.0 - t * t)).exp() } else { 0.0 };
    }
    project_out_polynomials(&mut values, support.sample_range(), &grid, 0);
    let f = SampledFunction::from_values(grid, values).expect("finite bump");
    let cert = certificate(p, &support, q);
    let norm = f.lq_norm(q);
    let values = if norm > 0.0 { f.scaled(fraction * cert / norm) } else { f };
    let moment_residuals = moments_on(&values, &support.sample_range(), &grid, 0);
    Atom { values, support, level: 0, q, norm_certificate: cert, moment_residuals }
}

/// Scales drawn for synthetic atoms; fixed so the same sets appear on every grid.
const CONVERSE_SCALES: (i32, i32) = (0, 2);

/// `hardy_norm(sum lambda a) / A({lambda}, {Q})` over random synthetic atom sets.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConverseReport {
    pub sets: usize,
    pub atoms_per_set: usize,
    pub ratios: Vec<f64>,
    pub max: f64,
    pub median: f64,
}

/// Random sets of bump atoms on doubled lattice cubes in the inner half of
/// the domain, with coefficients of random sign and size in `[0.1, 1]`.
pub fn converse_check(
    p: &ExponentFunction,
    bank: &FilterBank,
    lattice: &CubeLattice,
    q: f64,
    sets: usize,
    atoms_per_set: usize,
    seed: u64,
) -> Result<ConverseReport> {
    use rand::{Rng, SeedableRng};
    check_compatible(bank, lattice)?;
    if !p.log_holder().pass {
        return Err(Error::Precondition("converse check needs a log-Hölder exponent".into()));
    }
    let (lo, hi) = (CONVERSE_SCALES.0.max(lattice.j_min()), CONVERSE_SCALES.1.min(lattice.j_max()));
    if lo > hi || sets == 0 || atoms_per_set == 0 {
        return Err(Error::Config(format!("no synthetic atoms: scales [{lo}, {hi}], {sets} sets of {atoms_per_set}")));
    }
    let grid = *p.grid();
    let inner = 0.5 * grid.half_width();
    let ratios = (0..sets)
        .into_par_iter()
        .map(|s| -> Result<f64> {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64));
            let mut atoms = Vec::with_capacity(atoms_per_set);
            let mut lambdas = Vec::with_capacity(atoms_per_set);
            for _ in 0..atoms_per_set {
                let j = rng.gen_range(lo..=hi);
                let side = lattice.level(j).side;
                let half = (inner / side) as i64;
                let k = rng.gen_range(-half..half);
                let fraction = rng.gen_range(0.5..1.0);
                let lambda = rng.gen_range(0.1..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let pos = (k - lattice.level(j).first_index) as usize;
                let support = SupportCube::dilate(&grid, lattice.cubes(j)[pos], 2.0);
                atoms.push(bump_atom(p, support, q, fraction));
                lambdas.push(lambda);
            }
            let f = reconstruct(&atoms, &lambdas, grid);
            let cubes: Vec<SupportCube> = atoms.iter().map(|a| a.support).collect();
            let a = a_functional(&lambdas, &cubes, p)?;
            let h = crate::calderon::hardy_norm(&f, p, bank, lattice, crate::calderon::HardyMethod::SmoothMaximal)?;
            Ok(h / a)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut sorted = ratios.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(ConverseReport {
        sets,
        atoms_per_set,
        max: sorted[sorted.len() - 1],
        median: sorted[sorted.len() / 2],
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filterbank::build_filterbank;
    use crate::grid::{build_lattice, make_grid};
    use crate::varexp::ExponentSpec;

    fn setup() -> (FilterBank, CubeLattice) {
        let g = make_grid(8.0, 12).unwrap();
        (build_filterbank(&g, 2, -3, 5, 3).unwrap(), build_lattice(&g, 2, -3, 5).unwrap())
    }

    fn variable_p(g: Grid) -> ExponentFunction {
        let spec = ExponentSpec::Smoothstep { left: 0.8, right: 1.0, x0: -1.0, x1: 1.0 };
        ExponentFunction::with_inferred_class(spec, g).unwrap()
    }

    #[test]
    fn level_helper_is_strict() {
        assert_eq!(level_of(1.0), Some(-1));
        assert_eq!(level_of(1.5), Some(0));
        assert_eq!(level_of(2.0), Some(0));
        assert_eq!(level_of(0.3), Some(-2));
        assert_eq!(level_of(0.0), None);
    }

    #[test]
    fn level_sets_are_nested_and_dilated() {
        let (bank, _) = setup();
        let g = *bank.grid();
        let f = bank.bump(FilterKind::Psi, 1, g.nearest_index(0.25).unwrap());
        let f = f.scaled(0.9 / bank.smooth_maximal(&f).sup_norm());
        let ls = level_sets(&f, &bank);
        assert!(ls.maximal().sup_norm() < 1.0);
        assert!(ls.omega(0).iter().all(|b| !b));
        for l in ls.levels() {
            let a = ls.omega(l);
            let b = ls.omega(l + 1);
            assert!(a.iter().zip(&b).all(|(x, y)| *x || !*y));
            assert!(a.iter().zip(ls.omega_tilde(l)).all(|(x, t)| !*x || *t));
        }
        assert!(ls.dilation_ratio().is_finite());
    }

    #[test]
    fn full_level_selects_every_cube() {
        let (bank, lat) = setup();
        let g = *bank.grid();
        let ls = LevelSets::from_maximal(SampledFunction::domain_constant(g, 1.5));
        assert_eq!(ls.levels(), 0..1);
        let sel = select_cubes(&ls, &lat);
        assert!(sel.level.iter().flatten().all(|&l| l == 0));
        assert_eq!(sel.unassigned, 0);
        assert!(sel.top.iter().flatten().all(|&(j, _)| j == lat.j_min()));
    }

    #[test]
    fn selection_matches_brute_force_counts() {
        let (bank, lat) = setup();
        let g = *bank.grid();
        let f = bank.bump(FilterKind::Psi, 0, g.nearest_index(-0.6).unwrap())
            .add(&bank.bump(FilterKind::Psi, 2, g.nearest_index(1.1).unwrap()).scaled(0.4));
        let ls = level_sets(&f, &bank);
        let sel = select_cubes(&ls, &lat);
        for j in lat.scales() {
            for (pos, cube) in lat.cubes(j).iter().enumerate().step_by(5) {
                let l = sel.level[(j - lat.j_min()) as usize][pos];
                let count = |l: i32| {
                    let o = ls.omega(l);
                    cube.sample_range().filter(|&i| o[i]).count() as f64
                };
                let m = cube.samples as f64;
                let hits: Vec<i32> = ls.levels().filter(|&k| count(k) > m / 2.0 && count(k + 1) <= m / 2.0).collect();
                if sel.unassigned == 0 {
                    assert_eq!(hits, vec![l]);
                }
            }
        }
    }

    #[test]
    fn single_bump_decomposes_and_reconstructs() {
        let (bank, lat) = setup();
        let g = *bank.grid();
        let f = bank.bump(FilterKind::Psi, 1, g.nearest_index(0.25).unwrap());
        let p = ExponentFunction::constant(1.0, g).unwrap();
        let dec = atomic_decompose(&f, &p, &bank, &lat, 2.0, 0).unwrap();
        assert!(!dec.is_empty());
        let defect = dec.defect(&p);
        assert!(defect.l2_relative < 1e-3, "defect {defect:?}");
        for check in dec.validate(&p) {
            assert!(check.pass, "{check:?}");
        }
        assert_eq!(dec.audit.inequality_violations, 0);
        assert_eq!(dec.audit.witness_violations, 0);
        assert!(dec.a_functional(&p).unwrap() > 0.0);
    }

    #[test]
    fn variable_exponent_decomposition() {
        let (bank, lat) = setup();
        let g = *bank.grid();
        let f = bank.bump(FilterKind::Psi, 0, g.nearest_index(-0.6).unwrap())
            .add(&bank.bump(FilterKind::Psi, 3, g.nearest_index(1.1).unwrap()).scaled(0.4));
        let p = variable_p(g);
        assert!(p.log_holder().pass);
        let dec = atomic_decompose(&f, &p, &bank, &lat, 2.0, minimal_degree(&p)).unwrap();
        assert!(dec.defect(&p).l2_relative < 1e-3);
        assert!(dec.validate(&p).iter().all(|c| c.pass));
    }

    #[test]
    fn zero_function_and_preconditions() {
        let (bank, lat) = setup();
        let g = *bank.grid();
        let p = ExponentFunction::constant(1.0, g).unwrap();
        let dec = atomic_decompose(&SampledFunction::zeros(g), &p, &bank, &lat, 2.0, 0).unwrap();
        assert!(dec.is_empty());
        assert_eq!(dec.a_functional(&p).unwrap(), 0.0);
        assert!(dec.reconstruct().is_zero());
        let f = bank.bump(FilterKind::Psi, 1, 2048);
        let p2 = ExponentFunction::constant(1.5, g).unwrap();
        assert!(matches!(atomic_decompose(&f, &p2, &bank, &lat, 2.0, 0), Err(Error::Precondition(_))));
        assert!(atomic_decompose(&f, &p, &bank, &lat, 3.0, 0).is_err());
        let half = ExponentFunction::constant(0.5, g).unwrap();
        assert!(atomic_decompose(&f, &half, &bank, &lat, 2.0, 0).is_err());
    }

    #[test]
    fn a_functional_examples() {
        let g = make_grid(8.0, 10).unwrap();
        let lat = build_lattice(&g, 2, -2, 1).unwrap();
        let p = ExponentFunction::constant(1.0, g).unwrap();
        let q1 = SupportCube::dilate(&g, lat.cubes(0)[30], 1.0);
        let q2 = SupportCube::dilate(&g, lat.cubes(-1)[7], 1.0);
        assert!((a_functional(&[-3.0], &[q1], &p).unwrap() - 3.0).abs() < 1e-9);
        assert_eq!(a_functional(&[0.0, 0.0], &[q1, q2], &p).unwrap(), 0.0);
        // p = 1: the functional is the L^1 norm of |l1| chi_1 / |Q1| + |l2| chi_2 / |Q2|.
        let v = a_functional(&[2.0, 0.5], &[q1, q2], &p).unwrap();
        assert!((v - 2.5).abs() < 1e-9);
        assert!(a_functional(&[1.0], &[q1, q2], &p).is_err());
        // p = 1/2 on two overlapping pieces: closed form of the modular.
        let ph = ExponentFunction::constant(0.5, g).unwrap();
        let (a, b) = (1.0, 4.0);
        let v = a_functional(&[a, b], &[q1, q2], &ph).unwrap();
        let h = g.spacing();
        let (m1, m2) = (q1.samples as f64 * h, q2.samples as f64 * h);
        let overlap = q1.sample_range().filter(|i| q2.sample_range().contains(i)).count() as f64 * h;
        let w1 = (a / m1.powi(2)).sqrt();
        let w2 = (b / m2.powi(2)).sqrt();
        let rho = |lam: f64| {
            ((m1 - overlap) * w1 + (m2 - overlap) * w2 + overlap * (w1 + w2)) / lam.sqrt()
        };
        assert!((rho(v) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn validation_catches_bad_atoms() {
        let g = make_grid(8.0, 12).unwrap();
        let lat = build_lattice(&g, 2, -3, 5).unwrap();
        let p = variable_p(g);
        let support = SupportCube::dilate(&g, lat.cubes(0)[31], 4.0);
        let good = bump_atom(&p, support, 2.0, 0.9);
        assert!(atom_validate(&good, &p, 2.0, 0).pass);
        let marginal = bump_atom(&p, support, 2.0, 1.0);
        let check = atom_validate(&marginal, &p, 2.0, 0);
        assert!(check.pass && (check.norm_ratio - 1.0).abs() < 1e-9);
        let too_big = bump_atom(&p, support, 2.0, 1.01);
        assert!(!atom_validate(&too_big, &p, 2.0, 0).norm_ok);
        let norm = good.values.lq_norm(2.0);
        let mass = good.values.integral();
        let mut shifted = good.clone();
        let bump: Vec<f64> = (0..g.len()).map(|i| if support.sample_range().contains(&i) { 1.0 } else { 0.0 }).collect();
        let bump = SampledFunction::from_values(g, bump).unwrap();
        shifted.values = good.values.combine(1.0, &bump, (0.1 * norm - mass) / bump.integral());
        let check = atom_validate(&shifted, &p, 2.0, 0);
        assert!(!check.moments_ok && !check.pass);
    }

    #[test]
    fn reconstruct_examples() {
        let g = make_grid(8.0, 10).unwrap();
        let lat = build_lattice(&g, 2, -2, 1).unwrap();
        let p = ExponentFunction::constant(1.0, g).unwrap();
        assert!(reconstruct(&[], &[], g).is_zero());
        let a = bump_atom(&p, SupportCube::dilate(&g, lat.cubes(0)[20], 2.0), 2.0, 1.0);
        let r = reconstruct(std::slice::from_ref(&a), &[2.0], g);
        assert!(r.sub(&a.values.scaled(2.0)).sup_norm() == 0.0);
    }

    #[test]
    fn converse_ratio_is_refinement_stable() {
        let max = |level: u32| {
            let g = make_grid(8.0, level).unwrap();
            let j_max = 5.min(level as i32 - 7);
            let bank = build_filterbank(&g, 2, -3, j_max, 3).unwrap();
            let lat = build_lattice(&g, 2, -3, j_max).unwrap();
            let r = converse_check(&variable_p(g), &bank, &lat, 2.0, 6, 5, 9).unwrap();
            assert!(r.ratios.iter().all(|v| v.is_finite() && *v > 0.0));
            r.max
        };
        let (a, b) = (max(11), max(13));
        assert!(a.max(b) / a.min(b) <= 2.0, "{a} {b}");
    }
}
