use serde::Serialize;
use vh_core::calderon::HardyMethod;
use vh_core::czo::{CorrectionReport, HarnessReport};
use vh_core::{almost_orthogonality_check, correct_operator, hardy_boundedness_harness, CzoKernel, Error, OrthogonalityReport, SampledFunction};

use super::ExponentSummary;
use crate::config::Setup;
use crate::error::CliResult;
use crate::output::{num, CommandOutput, Header, Table};

/// The Hardy-space harness result, or the reason the gate refused it.
#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Harness {
    Ran(HarnessReport),
    Refused(String),
}

#[derive(Clone, Debug, Serialize)]
pub struct CzoTails {
    /// Largest pairing tail of the `T1` / `T*1` battery.
    pub pairing_tail_max: f64,
    pub route_gap: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CzoReport {
    #[serde(flatten)]
    pub header: Header,
    pub exponent: ExponentSummary,
    pub operator: CzoKernel,
    pub orthogonality: OrthogonalityReport,
    pub harness: Harness,
    /// `T - pi_{T1}` when `T1` does not vanish.
    pub correction: Option<CorrectionReport>,
    pub tails: CzoTails,
    pub pass: bool,
}

pub fn run(s: &Setup) -> CliResult<CommandOutput> {
    let t = s.operator()?;
    let scales = s.table_scales()?;
    s.require_log_holder()?;
    let members = s.members()?;
    let fs: Vec<SampledFunction> = members.into_iter().map(|(_, f)| f).collect();

    let ortho = almost_orthogonality_check(&t, &s.bank, &s.lattice, scales)?;
    let harness = match hardy_boundedness_harness(&t, &s.exponent, &fs, &s.bank, &s.lattice, HardyMethod::SmoothMaximal) {
        Ok(r) => Harness::Ran(r),
        Err(Error::Precondition(why)) => Harness::Refused(why),
        Err(e) => return Err(e.into()),
    };
    let correction = if ortho.hypothesis.t1_zero {
        None
    } else {
        Some(correct_operator(&t, &s.bank, &s.lattice)?.report()?)
    };

    // A flagged operator is an expected outcome, not a failure.
    let harness_ok = match &harness {
        Harness::Ran(r) => r.stats.finite,
        Harness::Refused(_) => true,
    };
    let pass = harness_ok && (ortho.flagged || ortho.pass == Some(true));

    let mut table = Table::new("orthogonality.csv", vec!["j", "j_prime", "max_ratio"]);
    for r in &ortho.rows {
        table.push(vec![r.j.to_string(), r.jp.to_string(), num(r.max_ratio)]);
    }
    let mut ratios = Table::new("harness.csv", vec!["member", "hardy_ratio"]);
    if let Harness::Ran(r) = &harness {
        for (i, v) in r.stats.ratios.iter().enumerate() {
            ratios.push(vec![i.to_string(), v.map(num).unwrap_or_default()]);
        }
    }
    let tails = CzoTails { pairing_tail_max: ortho.hypothesis.tail_max, route_gap: ortho.route_gap };
    let out = CzoReport {
        header: Header::new("verify-czo", &s.config, &s.hash),
        exponent: ExponentSummary::of(&s.exponent),
        operator: t,
        orthogonality: ortho,
        harness,
        correction,
        tails,
        pass,
    };
    CommandOutput::new("verify_czo", &out, vec![table, ratios], pass)
}
