//! Test functions described in grid-independent terms, and seeded corpora of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filterbank::{FilterBank, FilterKind};
use crate::grid::SampledFunction;

/// Centres are drawn on this dyadic lattice so every grid level samples them exactly.
const CENTRE_STEP: f64 = 1.0 / 16.0;

/// One `psi_j(x - centre)` term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PsiTerm {
    pub scale: i32,
    pub centre: f64,
    pub amplitude: f64,
}

/// A function on the line, sampled on demand.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FunctionSpec {
    Zero,
    /// `amplitude * chi_[a, b)`.
    Indicator { a: f64, b: f64, amplitude: f64 },
    /// `amplitude * d^order/dx^order exp(-(x - c)^2 / (2 w^2))`, scaled to unit sup before `amplitude`.
    GaussianDerivative { centre: f64, width: f64, order: u32, amplitude: f64 },
    /// `sum amplitude_k psi_{j_k}(x - c_k)`.
    PsiSum { terms: Vec<PsiTerm> },
    /// `chi_[a, m) - chi_[m, b)` smoothed by a Gaussian of width `width`.
    MollifiedStep { a: f64, b: f64, width: f64, amplitude: f64 },
}

/// Probabilists' Hermite polynomial `He_n`.
fn hermite(n: u32, x: f64) -> f64 {
    let (mut a, mut b) = (1.0, x);
    if n == 0 {
        return a;
    }
    for k in 1..n {
        let c = x * b - k as f64 * a;
        a = b;
        b = c;
    }
    b
}

/// `sup_t |He_n(t) exp(-t^2 / 2)|`, located by a scan and refined by ternary search.
fn hermite_peak(n: u32) -> f64 {
    let g = |t: f64| (hermite(n, t) * (-0.5 * t * t).exp()).abs();
    let step = 1e-3;
    let best = (0..=8000).map(|k| k as f64 * step).max_by(|a, b| g(*a).total_cmp(&g(*b))).unwrap();
    let (mut lo, mut hi) = ((best - step).max(0.0), best + step);
    for _ in 0..100 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if g(m1) < g(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    g(0.5 * (lo + hi))
}

impl FunctionSpec {
    /// Samples on the grid of `bank` (the bank supplies `psi_j`).
    pub fn sample(&self, bank: &FilterBank) -> Result<SampledFunction> {
        let grid = *bank.grid();
        match self {
            Self::Zero => Ok(SampledFunction::zeros(grid)),
            Self::Indicator { a, b, amplitude } => SampledFunction::indicator(grid, *a, *b, *amplitude),
            Self::GaussianDerivative { centre, width, order, amplitude } => {
                if !(*width > 0.0) {
                    return Err(Error::Config(format!("gaussian width must be positive, got {width}")));
                }
                let shape = |x: f64| {
                    let t = (x - centre) / width;
                    let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
                    sign * hermite(*order, t) * (-0.5 * t * t).exp()
                };
                let f = SampledFunction::from_values(grid, grid.points().map(shape).collect())?;
                Ok(f.scaled(amplitude / hermite_peak(*order)))
            }
            Self::PsiSum { terms } => {
                let mut acc = SampledFunction::zeros(grid);
                for t in terms {
                    if !bank.scales().contains(&t.scale) {
                        return Err(Error::ScaleRange { scale: t.scale, reason: "outside the filter bank".into() });
                    }
                    let i = grid
                        .nearest_index(t.centre)
                        .ok_or_else(|| Error::Config(format!("centre {} outside the grid", t.centre)))?;
                    acc = acc.add(&bank.bump(FilterKind::Psi, t.scale, i).scaled(t.amplitude));
                }
                Ok(acc)
            }
            Self::MollifiedStep { a, b, width, amplitude } => {
                if !(b > a && *width > 0.0) {
                    return Err(Error::Config("mollified step needs a < b and a positive width".into()));
                }
                let m = 0.5 * (a + b);
                let smooth = |x: f64, l: f64, r: f64| 0.5 * (libm::erf((x - l) / width) - libm::erf((x - r) / width));
                let values = grid.points().map(|x| amplitude * (smooth(x, *a, m) - smooth(x, m, *b))).collect();
                SampledFunction::from_values(grid, values)
            }
        }
    }
}

/// Random families a corpus draws from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    GaussianBump,
    PsiBump,
    MollifiedStep,
    BandLimited,
}

/// `count` members cycling through `generators`, member `i` seeded by `seed + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub generators: Vec<GeneratorKind>,
    pub count: usize,
    pub seed: u64,
    /// Scales used by the `psi`-based generators.
    #[serde(default = "default_scales")]
    pub scales: [i32; 2],
    /// Centres are drawn from `[-spread, spread]`.
    #[serde(default = "default_spread")]
    pub spread: f64,
}

fn default_scales() -> [i32; 2] {
    [1, 3]
}

fn default_spread() -> f64 {
    2.0
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            generators: vec![
                GeneratorKind::GaussianBump,
                GeneratorKind::PsiBump,
                GeneratorKind::MollifiedStep,
                GeneratorKind::BandLimited,
            ],
            count: 10,
            seed: 0,
            scales: default_scales(),
            spread: default_spread(),
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<()> {
        if self.generators.is_empty() {
            return Err(Error::Config("corpus needs at least one generator".into()));
        }
        if self.scales[0] > self.scales[1] {
            return Err(Error::Config("corpus scale range is empty".into()));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::Config("corpus spread must be nonnegative".into()));
        }
        Ok(())
    }

    /// Member descriptions; independent of any grid.
    pub fn members(&self) -> Result<Vec<FunctionSpec>> {
        self.validate()?;
        Ok((0..self.count)
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed.wrapping_add(i as u64));
                self.draw(self.generators[i % self.generators.len()], &mut rng)
            })
            .collect())
    }

    fn centre(&self, rng: &mut ChaCha8Rng) -> f64 {
        let k = (self.spread / CENTRE_STEP).floor() as i64;
        rng.gen_range(-k..=k) as f64 * CENTRE_STEP
    }

    fn draw(&self, kind: GeneratorKind, rng: &mut ChaCha8Rng) -> FunctionSpec {
        let [lo, hi] = self.scales;
        match kind {
            GeneratorKind::GaussianBump => FunctionSpec::GaussianDerivative {
                centre: self.centre(rng),
                width: rng.gen_range(0.08..0.18),
                order: 3,
                amplitude: rng.gen_range(0.5..2.0),
            },
            GeneratorKind::PsiBump => FunctionSpec::PsiSum {
                terms: vec![PsiTerm { scale: rng.gen_range(lo..=hi), centre: self.centre(rng), amplitude: rng.gen_range(0.5..2.0) }],
            },
            GeneratorKind::MollifiedStep => {
                let a = self.centre(rng) - 0.5;
                let len = rng.gen_range(0.5..2.0);
                FunctionSpec::MollifiedStep { a, b: a + len, width: rng.gen_range(0.05..0.2), amplitude: rng.gen_range(0.5..2.0) }
            }
            GeneratorKind::BandLimited => {
                let n = rng.gen_range(3..=6);
                FunctionSpec::PsiSum {
                    terms: (0..n)
                        .map(|_| PsiTerm {
                            scale: rng.gen_range(lo..=hi),
                            centre: self.centre(rng),
                            amplitude: rng.gen_range(-1.0..1.0),
                        })
                        .collect(),
                }
            }
        }
    }

    /// Members sampled on the grid of `bank`.
    pub fn generate(&self, bank: &FilterBank) -> Result<Vec<(FunctionSpec, SampledFunction)>> {
        self.members()?
            .into_iter()
            .map(|m| {
                let f = m.sample(bank)?;
                Ok((m, f))
            })
            .collect()
    }
}
