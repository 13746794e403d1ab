//! Run configuration and the objects built from it.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use vh_core::atomic::minimal_degree;
use vh_core::{
    build_filterbank, build_lattice, make_grid, CorpusSpec, CubeLattice, CzoKernel, ExponentFunction, ExponentSpec,
    FilterBank, FunctionSpec, Grid, OperatorSpec, SampledFunction,
};

use crate::error::{CliError, CliResult};

/// Largest fine scale used when `lattice.j_max` is omitted.
pub const DEFAULT_J_MAX: i32 = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// `R`: the domain is `[-R, R)`.
    pub half_width: f64,
    /// `L`: `2^L` samples.
    pub level: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    #[serde(default = "default_shift")]
    pub shift: i32,
    #[serde(default = "default_j_min")]
    pub j_min: i32,
    /// Omitted: `min(5, L - 7)`.
    #[serde(default)]
    pub j_max: Option<i32>,
}

fn default_shift() -> i32 {
    2
}

fn default_j_min() -> i32 {
    -3
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self { shift: default_shift(), j_min: default_j_min(), j_max: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterBankConfig {
    #[serde(default = "default_moment_order")]
    pub moment_order: usize,
}

fn default_moment_order() -> usize {
    3
}

impl Default for FilterBankConfig {
    fn default() -> Self {
        Self { moment_order: default_moment_order() }
    }
}

/// The BMO symbol `b` of the paraproduct.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymbolSpec {
    /// `value` on the whole line.
    Constant { value: f64 },
    /// `ln(1 + ((x - centre) / width)^2)`.
    Log { centre: f64, width: f64 },
    /// Any corpus-style function.
    Function { function: FunctionSpec },
}

impl SymbolSpec {
    fn validate(&self) -> CliResult<()> {
        match self {
            Self::Log { width, .. } if !(*width > 0.0 && width.is_finite()) => {
                Err(CliError::Invalid(format!("log symbol width must be positive, got {width}")))
            }
            Self::Constant { value } if !value.is_finite() => {
                Err(CliError::Invalid("constant symbol must be finite".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, bank: &FilterBank) -> CliResult<SampledFunction> {
        let grid = *bank.grid();
        Ok(match self {
            Self::Constant { value } => SampledFunction::domain_constant(grid, *value),
            Self::Log { centre, width } => {
                SampledFunction::from_fn(grid, grid.half_width(), |x| (1.0 + ((x - centre) / width).powi(2)).ln())?
            }
            Self::Function { function } => function.sample(bank)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorConfig {
    pub spec: OperatorSpec,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomConfig {
    #[serde(default = "two")]
    pub q: f64,
    /// Vanishing-moment degree; omitted: the minimum for the exponent.
    #[serde(default)]
    pub degree: Option<usize>,
}

fn two() -> f64 {
    2.0
}

impl Default for AtomConfig {
    fn default() -> Self {
        Self { q: two(), degree: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CzoConfig {
    /// `(j, j')` range of the almost-orthogonality table.
    #[serde(default = "default_table_scales")]
    pub scales: [i32; 2],
}

fn default_table_scales() -> [i32; 2] {
    [-3, 3]
}

impl Default for CzoConfig {
    fn default() -> Self {
        Self { scales: default_table_scales() }
    }
}

/// Pass/fail thresholds of the verification suites.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Members below this band energy are reported but not gated.
    #[serde(default = "d_band_energy")]
    pub band_energy: f64,
    /// Relative L^2 error of the Calderón and atomic reconstructions.
    #[serde(default = "d_reconstruction")]
    pub reconstruction: f64,
    /// Relative `L^{p(.)}` error of the Calderón reconstruction.
    #[serde(default = "d_modular")]
    pub modular: f64,
    /// `pi_b(1) - b` relative to `||b||_inf`, and `||pi_b^*(1)||_inf`.
    #[serde(default = "d_identity")]
    pub identity: f64,
}

fn d_band_energy() -> f64 {
    0.999
}
fn d_reconstruction() -> f64 {
    1e-3
}
fn d_modular() -> f64 {
    1e-2
}
fn d_identity() -> f64 {
    1e-2
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            band_energy: d_band_energy(),
            reconstruction: d_reconstruction(),
            modular: d_modular(),
            identity: d_identity(),
        }
    }
}

fn default_exponent() -> ExponentSpec {
    ExponentSpec::Constant { value: 1.0 }
}

/// Everything a run needs; one JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub filterbank: FilterBankConfig,
    #[serde(default = "default_exponent")]
    pub exponent: ExponentSpec,
    #[serde(default)]
    pub symbol: Option<SymbolSpec>,
    #[serde(default)]
    pub operator: Option<OperatorConfig>,
    #[serde(default)]
    pub corpus: CorpusSpec,
    /// Extra members appended after the generated corpus.
    #[serde(default)]
    pub functions: Vec<FunctionSpec>,
    #[serde(default)]
    pub atoms: AtomConfig,
    #[serde(default)]
    pub czo: CzoConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Used when `--out` is not given; never part of the config hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    /// Applies command-line overrides and fills in derived defaults.
    pub fn resolve(mut self, level: Option<u32>, seed: Option<u64>) -> Self {
        if let Some(l) = level {
            self.grid.level = l;
        }
        if let Some(s) = seed {
            self.corpus.seed = s;
        }
        if self.lattice.j_max.is_none() {
            self.lattice.j_max = Some(DEFAULT_J_MAX.min(self.grid.level as i32 - 7));
        }
        self
    }

    /// SHA-256 of the compact JSON of the resolved config, output directory excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        let bytes = serde_json::to_vec(&c).expect("config serializes");
        format!("{:x}", Sha256::digest(&bytes))
    }
}

/// Grid, bank, lattice and exponent of a resolved config, all validated.
pub struct Setup {
    pub config: RunConfig,
    pub hash: String,
    pub grid: Grid,
    pub bank: FilterBank,
    pub lattice: CubeLattice,
    pub exponent: ExponentFunction,
}

impl Setup {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        let l = &config.lattice;
        let j_max = l.j_max.ok_or_else(|| CliError::Invalid("lattice.j_max was not resolved".into()))?;
        let grid = make_grid(config.grid.half_width, config.grid.level)?;
        let lattice = build_lattice(&grid, l.shift, l.j_min, j_max)?;
        let bank = build_filterbank(&grid, l.shift, l.j_min, j_max, config.filterbank.moment_order)?;
        let exponent = ExponentFunction::with_inferred_class(config.exponent.clone(), grid)?;
        config.corpus.validate()?;
        let t = &config.tolerances;
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(CliError::Invalid(format!("tolerance {name} must be positive, got {v}")))
            }
        };
        unit("band_energy", t.band_energy)?;
        unit("reconstruction", t.reconstruction)?;
        unit("modular", t.modular)?;
        unit("identity", t.identity)?;
        if let Some(s) = &config.symbol {
            s.validate()?;
        }
        if let Some(op) = &config.operator {
            CzoKernel::new(op.spec.clone(), op.scale)?;
        }
        let hash = config.hash();
        Ok(Self { config, hash, grid, bank, lattice, exponent })
    }

    /// Corpus members followed by the explicit functions.
    pub fn members(&self) -> CliResult<Vec<(FunctionSpec, SampledFunction)>> {
        let mut out = self.config.corpus.generate(&self.bank)?;
        for f in &self.config.functions {
            out.push((f.clone(), f.sample(&self.bank)?));
        }
        Ok(out)
    }

    pub fn require_log_holder(&self) -> CliResult<()> {
        let lh = self.exponent.log_holder();
        if lh.pass {
            Ok(())
        } else {
            Err(CliError::Invalid(format!(
                "exponent fails the log-Hölder check (local {}, decay {})",
                lh.local_constant, lh.decay_constant
            )))
        }
    }

    /// `(q, d)` for the atomic decomposition, checked against the exponent.
    pub fn atom_parameters(&self) -> CliResult<(f64, usize)> {
        self.require_log_holder()?;
        let p = &self.exponent;
        if p.p_plus() > 1.0 {
            return Err(CliError::Invalid(format!("atomic decomposition needs p+ <= 1, got {}", p.p_plus())));
        }
        let q = self.config.atoms.q;
        if q != 2.0 {
            return Err(CliError::Invalid(format!("only q = 2 atoms are supported, got {q}")));
        }
        let min = minimal_degree(p);
        let d = self.config.atoms.degree.unwrap_or(min);
        if d < min {
            return Err(CliError::Invalid(format!("atom degree {d} is below the minimum {min}")));
        }
        Ok((q, d))
    }

    pub fn symbol(&self) -> CliResult<&SymbolSpec> {
        self.config.symbol.as_ref().ok_or_else(|| CliError::Invalid("this command needs a `symbol`".into()))
    }

    pub fn operator(&self) -> CliResult<CzoKernel> {
        let op = self.config.operator.as_ref().ok_or_else(|| CliError::Invalid("this command needs an `operator`".into()))?;
        Ok(CzoKernel::new(op.spec.clone(), op.scale)?)
    }

    pub fn table_scales(&self) -> CliResult<std::ops::RangeInclusive<i32>> {
        let [a, b] = self.config.czo.scales;
        if a > b || !self.lattice.scales().contains(&a) || !self.lattice.scales().contains(&b) {
            return Err(CliError::Invalid(format!(
                "czo.scales [{a}, {b}] must be a range inside the lattice scales {:?}",
                self.lattice.scales()
            )));
        }
        Ok(a..=b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{ "grid": { "half_width": 8.0, "level": 12 } }"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::from_json(MINIMAL).unwrap().resolve(None, None);
        assert_eq!(c.lattice.j_max, Some(5));
        assert_eq!(c.exponent, ExponentSpec::Constant { value: 1.0 });
        assert_eq!(c.corpus.count, 10);
        let c11 = RunConfig::from_json(MINIMAL).unwrap().resolve(Some(11), Some(4));
        assert_eq!((c11.grid.level, c11.lattice.j_max, c11.corpus.seed), (11, Some(4), 4));
    }

    #[test]
    fn unknown_fields_are_schema_errors() {
        let bad = r#"{ "grid": { "half_width": 8.0, "level": 12, "extra": 1 } }"#;
        assert!(matches!(RunConfig::from_json(bad), Err(CliError::Schema(_))));
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = RunConfig::from_json(MINIMAL).unwrap().resolve(None, None);
        let mut b = a.clone();
        b.output_dir = Some("/tmp/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().resolve(None, Some(9)).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn setup_rejects_unresolvable_scales() {
        let c = RunConfig::from_json(MINIMAL).unwrap().resolve(None, None);
        let mut bad = c.clone();
        bad.lattice.j_max = Some(9);
        assert!(matches!(Setup::new(bad), Err(CliError::Core(_))));
        let s = Setup::new(c).unwrap();
        assert_eq!(s.lattice.scales(), -3..=5);
    }
}
