use rayon::prelude::*;
use serde::Serialize;
use vh_core::calderon::{hardy_norms, HardyNorms};
use vh_core::filterbank::FilterBankReport;
use vh_core::{analyze, hl_maximal, luxemburg_norm, FunctionSpec, MaximalConfig};

use super::{ratio, ExponentSummary};
use crate::config::Setup;
use crate::error::CliResult;
use crate::output::{num, opt, CommandOutput, Header, Table};

/// Ratios between the norm proxies; `None` where a denominator vanishes.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceRatios {
    pub maximal_over_gd: Option<f64>,
    pub maximal_over_g: Option<f64>,
    pub lebesgue_over_maximal: Option<f64>,
    /// `||M f||_{p(.)} / ||f||_{p(.)}` with the Hardy-Littlewood `M`.
    pub hl_maximal_over_lebesgue: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormRow {
    pub member: usize,
    pub spec: FunctionSpec,
    pub lebesgue_norm: f64,
    pub hardy_norm_maximal: f64,
    pub hardy_norm_gd: f64,
    pub hardy_norm_g: f64,
    pub equivalence_ratios: EquivalenceRatios,
    pub band_energy: f64,
    pub reconstruction_l2: f64,
    pub reconstruction_lp: f64,
    /// Coefficient energy on cubes within one filter width of `+-R`.
    pub boundary_energy: f64,
    /// Gated against the reconstruction tolerances.
    pub in_band: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Range {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

impl Range {
    fn of(values: impl Iterator<Item = Option<f64>>) -> Self {
        let v: Vec<f64> = values.flatten().collect();
        Self {
            min: v.iter().copied().reduce(f64::min),
            max: v.iter().copied().reduce(f64::max),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NormSummary {
    pub members: usize,
    pub in_band: usize,
    pub reconstruction_l2_max: Option<f64>,
    pub reconstruction_lp_max: Option<f64>,
    pub maximal_over_gd: Range,
    pub maximal_over_g: Range,
    pub lebesgue_over_maximal: Range,
    pub hl_maximal_over_lebesgue: Range,
}

/// Truncation tails: out-of-band energy of the members and the filter decay.
#[derive(Clone, Debug, Serialize)]
pub struct NormTails {
    pub out_of_band_max: f64,
    pub psi_decay_ratio: f64,
    pub annulus_leak: f64,
    /// Lattice cubes flagged as boundary-contaminated.
    pub boundary_cubes: usize,
    pub boundary_energy_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormReport {
    #[serde(flatten)]
    pub header: Header,
    pub exponent: ExponentSummary,
    pub filterbank: FilterBankReport,
    pub members: Vec<NormRow>,
    pub summary: NormSummary,
    pub tails: NormTails,
    pub pass: bool,
}

pub fn run(s: &Setup) -> CliResult<CommandOutput> {
    s.require_log_holder()?;
    let members = s.members()?;
    let p = &s.exponent;
    let tol = &s.config.tolerances;
    let rows: Vec<NormRow> = members
        .par_iter()
        .enumerate()
        .map(|(i, (spec, f))| -> CliResult<NormRow> {
            let HardyNorms { smooth_maximal, discrete_square, continuous_square } = hardy_norms(f, p, &s.bank, &s.lattice)?;
            let lebesgue = luxemburg_norm(f, p);
            let field = analyze(f, &s.bank, &s.lattice)?;
            let rec = field.synthesize();
            let rec_lp = luxemburg_norm(&rec.sub(f), p);
            let band_energy = s.bank.band_energy(f);
            Ok(NormRow {
                member: i,
                spec: spec.clone(),
                lebesgue_norm: lebesgue,
                hardy_norm_maximal: smooth_maximal,
                hardy_norm_gd: discrete_square,
                hardy_norm_g: continuous_square,
                equivalence_ratios: EquivalenceRatios {
                    maximal_over_gd: ratio(smooth_maximal, discrete_square),
                    maximal_over_g: ratio(smooth_maximal, continuous_square),
                    lebesgue_over_maximal: ratio(lebesgue, smooth_maximal),
                    hl_maximal_over_lebesgue: ratio(luxemburg_norm(&hl_maximal(f, &MaximalConfig::for_grid(&s.grid)), p), lebesgue),
                },
                band_energy,
                reconstruction_l2: rec.relative_l2_error(f),
                reconstruction_lp: if lebesgue > 0.0 { rec_lp / lebesgue } else { rec_lp },
                boundary_energy: field.boundary_energy_fraction(),
                in_band: !f.is_zero() && band_energy >= tol.band_energy,
            })
        })
        .collect::<CliResult<_>>()?;

    let gated = || rows.iter().filter(|r| r.in_band);
    let summary = NormSummary {
        members: rows.len(),
        in_band: gated().count(),
        reconstruction_l2_max: gated().map(|r| r.reconstruction_l2).reduce(f64::max),
        reconstruction_lp_max: gated().map(|r| r.reconstruction_lp).reduce(f64::max),
        maximal_over_gd: Range::of(rows.iter().map(|r| r.equivalence_ratios.maximal_over_gd)),
        maximal_over_g: Range::of(rows.iter().map(|r| r.equivalence_ratios.maximal_over_g)),
        lebesgue_over_maximal: Range::of(rows.iter().map(|r| r.equivalence_ratios.lebesgue_over_maximal)),
        hl_maximal_over_lebesgue: Range::of(rows.iter().map(|r| r.equivalence_ratios.hl_maximal_over_lebesgue)),
    };
    let pass = gated().all(|r| r.reconstruction_l2 < tol.reconstruction && r.reconstruction_lp < tol.modular)
        && rows.iter().all(|r| r.hardy_norm_maximal.is_finite() && r.lebesgue_norm.is_finite());
    let report = s.bank.report().clone();
    let tails = NormTails {
        out_of_band_max: members.iter().filter(|(_, f)| !f.is_zero()).map(|(_, f)| 1.0 - s.bank.band_energy(f)).fold(0.0, f64::max),
        psi_decay_ratio: report.psi_decay_ratio,
        annulus_leak: report.annulus_leak,
        boundary_cubes: s.lattice.levels().iter().map(|l| l.cubes.iter().filter(|c| s.lattice.near_boundary(c)).count()).sum(),
        boundary_energy_max: rows.iter().map(|r| r.boundary_energy).fold(0.0, f64::max),
    };

    let mut table = Table::new(
        "norm.csv",
        vec![
            "member",
            "lebesgue_norm",
            "hardy_norm_maximal",
            "hardy_norm_gd",
            "hardy_norm_g",
            "maximal_over_gd",
            "band_energy",
            "reconstruction_l2",
            "reconstruction_lp",
            "boundary_energy",
            "in_band",
        ],
    );
    for r in &rows {
        table.push(vec![
            r.member.to_string(),
            num(r.lebesgue_norm),
            num(r.hardy_norm_maximal),
            num(r.hardy_norm_gd),
            num(r.hardy_norm_g),
            opt(r.equivalence_ratios.maximal_over_gd),
            num(r.band_energy),
            num(r.reconstruction_l2),
            num(r.reconstruction_lp),
            num(r.boundary_energy),
            r.in_band.to_string(),
        ]);
    }
    let out = NormReport {
        header: Header::new("norm", &s.config, &s.hash),
        exponent: ExponentSummary::of(p),
        filterbank: report,
        members: rows,
        summary,
        tails,
        pass,
    };
    CommandOutput::new("norm", &out, vec![table], pass)
}
