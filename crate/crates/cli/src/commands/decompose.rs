use rayon::prelude::*;
use serde::Serialize;
use vh_core::atomic::{ReconstructionDefect, SelectionAudit};
use vh_core::calderon::HardyMethod;
use vh_core::{atomic_decompose, converse_check, hardy_norm, ConverseReport, Error, FunctionSpec};

use super::{ratio, ExponentSummary};
use crate::config::Setup;
use crate::error::CliResult;
use crate::output::{num, opt, CommandOutput, Header, Table};

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeRow {
    pub member: usize,
    pub spec: FunctionSpec,
    pub atoms: usize,
    pub failed_atoms: usize,
    pub a_functional: f64,
    pub hardy_norm: f64,
    /// `A / hardy_norm(f)`.
    pub ratio: Option<f64>,
    pub band_energy: f64,
    pub in_band: bool,
    pub defect: ReconstructionDefect,
    pub audit: SelectionAudit,
    pub unassigned: usize,
    pub skipped_zero: usize,
    pub levels_truncated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeSummary {
    pub members: usize,
    pub in_band: usize,
    pub atoms: usize,
    pub failed_atoms: usize,
    pub defect_l2_max: Option<f64>,
    pub ratio_max: Option<f64>,
    pub ratio_median: Option<f64>,
    pub audit_violations: usize,
}

/// What the decomposition left out.
#[derive(Clone, Debug, Serialize)]
pub struct DecomposeTails {
    pub unassigned_samples: usize,
    pub skipped_zero: usize,
    pub levels_truncated: bool,
    pub dilation_ratio_max: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecomposeReport {
    #[serde(flatten)]
    pub header: Header,
    pub exponent: ExponentSummary,
    pub q: f64,
    pub degree: usize,
    pub members: Vec<DecomposeRow>,
    pub summary: DecomposeSummary,
    pub tails: DecomposeTails,
    /// Synthetic atom sets; `None` when the lattice misses the sampled scales.
    pub converse: Option<ConverseReport>,
    pub pass: bool,
}

const CONVERSE_SETS: usize = 8;
const CONVERSE_ATOMS: usize = 6;

pub fn run(s: &Setup) -> CliResult<CommandOutput> {
    let (q, d) = s.atom_parameters()?;
    let members = s.members()?;
    let p = &s.exponent;
    let tol = &s.config.tolerances;
    let mut atoms = Table::new(
        "atoms.csv",
        vec!["member", "atom", "scale", "cube", "level", "lambda", "left", "right", "norm_ratio", "moment_ratio", "pass"],
    );
    let results: Vec<(DecomposeRow, Vec<Vec<String>>)> = members
        .par_iter()
        .enumerate()
        .map(|(i, (spec, f))| -> CliResult<_> {
            let dec = atomic_decompose(f, p, &s.bank, &s.lattice, q, d)?;
            let checks = dec.validate(p);
            let a = dec.a_functional(p)?;
            let h = hardy_norm(f, p, &s.bank, &s.lattice, HardyMethod::SmoothMaximal)?;
            let band_energy = s.bank.band_energy(f);
            let lines = dec
                .atoms
                .iter()
                .zip(&dec.lambdas)
                .zip(&checks)
                .enumerate()
                .map(|(k, ((atom, lambda), c))| {
                    vec![
                        i.to_string(),
                        k.to_string(),
                        atom.support.base.scale.to_string(),
                        atom.support.base.index.to_string(),
                        atom.level.to_string(),
                        num(*lambda),
                        num(atom.support.left),
                        num(atom.support.right),
                        num(c.norm_ratio),
                        num(c.moment_ratio),
                        c.pass.to_string(),
                    ]
                })
                .collect();
            let row = DecomposeRow {
                member: i,
                spec: spec.clone(),
                atoms: dec.len(),
                failed_atoms: checks.iter().filter(|c| !c.pass).count(),
                a_functional: a,
                hardy_norm: h,
                ratio: ratio(a, h),
                band_energy,
                in_band: !f.is_zero() && band_energy >= tol.band_energy,
                defect: dec.defect(p),
                audit: dec.audit,
                unassigned: dec.unassigned,
                skipped_zero: dec.skipped_zero,
                levels_truncated: dec.levels_truncated,
            };
            Ok((row, lines))
        })
        .collect::<CliResult<_>>()?;
    let mut rows = Vec::with_capacity(results.len());
    for (row, lines) in results {
        for l in lines {
            atoms.push(l);
        }
        rows.push(row);
    }

    let gated = || rows.iter().filter(|r| r.in_band);
    let mut ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    ratios.sort_by(f64::total_cmp);
    let summary = DecomposeSummary {
        members: rows.len(),
        in_band: gated().count(),
        atoms: rows.iter().map(|r| r.atoms).sum(),
        failed_atoms: rows.iter().map(|r| r.failed_atoms).sum(),
        defect_l2_max: gated().map(|r| r.defect.l2_relative).reduce(f64::max),
        ratio_max: ratios.last().copied(),
        ratio_median: (!ratios.is_empty()).then(|| ratios[ratios.len() / 2]),
        audit_violations: rows.iter().map(|r| r.audit.inequality_violations + r.audit.witness_violations).sum(),
    };
    let tails = DecomposeTails {
        unassigned_samples: rows.iter().map(|r| r.unassigned).sum(),
        skipped_zero: rows.iter().map(|r| r.skipped_zero).sum(),
        levels_truncated: rows.iter().any(|r| r.levels_truncated),
        dilation_ratio_max: rows.iter().map(|r| r.audit.dilation_ratio).fold(0.0, f64::max),
    };
    let converse = match converse_check(p, &s.bank, &s.lattice, q, CONVERSE_SETS, CONVERSE_ATOMS, s.config.corpus.seed) {
        Ok(r) => Some(r),
        Err(Error::Config(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let pass = summary.failed_atoms == 0
        && converse.as_ref().map_or(true, |c| c.max.is_finite())
        && summary.audit_violations == 0
        && gated().all(|r| r.defect.l2_relative < tol.reconstruction)
        && rows.iter().all(|r| r.a_functional.is_finite());

    let mut members_table = Table::new(
        "decompose.csv",
        vec!["member", "atoms", "failed_atoms", "a_functional", "hardy_norm", "ratio", "defect_l2", "band_energy", "in_band"],
    );
    for r in &rows {
        members_table.push(vec![
            r.member.to_string(),
            r.atoms.to_string(),
            r.failed_atoms.to_string(),
            num(r.a_functional),
            num(r.hardy_norm),
            opt(r.ratio),
            num(r.defect.l2_relative),
            num(r.band_energy),
            r.in_band.to_string(),
        ]);
    }
    let out = DecomposeReport {
        header: Header::new("decompose", &s.config, &s.hash),
        exponent: ExponentSummary::of(p),
        q,
        degree: d,
        members: rows,
        summary,
        tails,
        converse,
        pass,
    };
    CommandOutput::new("decompose", &out, vec![members_table, atoms], pass)
}
