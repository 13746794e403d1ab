use rayon::prelude::*;
use serde::Serialize;
use vh_core::calderon::HardyMethod;
use vh_core::czo::{boundedness_ratios, RatioStats};
use vh_core::paraproduct::{CarlesonReport, KernelBoundReport};
use vh_core::{hardy_norm, luxemburg_norm, BmoSymbol, Paraproduct, SampledFunction};

use super::ExponentSummary;
use crate::config::{Setup, SymbolSpec};
use crate::error::CliResult;
use crate::output::{num, opt, CommandOutput, Header, Table};

/// Columns of the kernel sampled at these points.
const KERNEL_POINTS: [f64; 4] = [-1.0, 0.0, 0.5, 1.0];
/// Rows and columns are subsampled to this many points for the smoothness sups.
const KERNEL_SUBSAMPLE: usize = 512;
const KERNEL_EPSILON: f64 = 1.0;

#[derive(Clone, Debug, Serialize)]
pub struct SymbolSummary {
    pub spec: SymbolSpec,
    pub bmo_norm: f64,
    pub sup_norm: f64,
}

/// `pi_b(1) = b` and `pi_b^*(1) = 0` on `|x| < R/2`.
#[derive(Clone, Debug, Serialize)]
pub struct Identities {
    pub inner_half_width: f64,
    /// `sup |pi_b(1) - b0|`, `b0` being `b` without its constant part.
    pub pi_b_one_defect: f64,
    pub pi_b_one_relative: f64,
    pub pi_star_one_sup: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Boundedness {
    /// `||pi_b f||_2 / (||b||_BMO ||f||_2)`.
    pub l2: RatioStats,
    /// `hardy_norm(pi_b f) / hardy_norm(f)`, smooth maximal route.
    pub hardy: Option<RatioStats>,
    /// `||pi_b f||_{L^{p(.)}} / hardy_norm(f)`.
    pub lebesgue: Option<RatioStats>,
    /// Why the exponent-dependent ratios were skipped.
    pub skipped: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParaproductTails {
    /// `sup |pi_b(1) - b0|` over the whole domain, boundary included.
    pub pi_b_one_defect_full: f64,
    pub pi_star_one_sup_full: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ParaproductReport {
    #[serde(flatten)]
    pub header: Header,
    pub exponent: ExponentSummary,
    pub symbol: SymbolSummary,
    pub identities: Identities,
    pub carleson: CarlesonReport,
    pub kernel: KernelBoundReport,
    pub boundedness: Boundedness,
    pub tails: ParaproductTails,
    pub pass: bool,
}

fn stats_finite(s: &RatioStats) -> bool {
    s.finite
}

pub fn run(s: &Setup) -> CliResult<CommandOutput> {
    let spec = s.symbol()?.clone();
    let b = spec.sample(&s.bank)?;
    let members = s.members()?;
    let grid = s.grid;
    let tol = &s.config.tolerances;
    let reference = match spec {
        SymbolSpec::Constant { .. } => SampledFunction::zeros(grid),
        _ => b.clone(),
    };
    let pp = Paraproduct::new(BmoSymbol::new(b.clone()), &s.bank, &s.lattice)?;

    let one = SampledFunction::domain_constant(grid, 1.0);
    let pb1 = pp.apply(&one)?;
    let ps1 = pp.adjoint(&one)?;
    let inner = 0.5 * grid.half_width();
    let (mut defect, mut adj, mut defect_full, mut adj_full) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let mut plot = Table::new("identities.csv", vec!["x", "b", "pi_b_one", "pi_star_one"]);
    for (i, x) in grid.points().enumerate() {
        let d = (pb1.values()[i] - reference.values()[i]).abs();
        let a = ps1.values()[i].abs();
        defect_full = defect_full.max(d);
        adj_full = adj_full.max(a);
        if x.abs() < inner {
            defect = defect.max(d);
            adj = adj.max(a);
        }
        plot.push(vec![num(x), num(b.values()[i]), num(pb1.values()[i]), num(ps1.values()[i])]);
    }
    // A constant symbol is measured against its own size.
    let scale = if reference.sup_norm() > 0.0 { reference.sup_norm() } else { b.sup_norm() };
    let identities = Identities {
        inner_half_width: inner,
        pi_b_one_defect: defect,
        pi_b_one_relative: if scale > 0.0 { defect / scale } else { defect },
        pi_star_one_sup: adj,
        pass: defect <= tol.identity * scale && adj < tol.identity,
    };

    let carleson = pp.carleson();
    let ys: Vec<usize> = KERNEL_POINTS.iter().filter_map(|&x| grid.nearest_index(x)).collect();
    let kernel = pp.kernel_bounds(&ys, (grid.len() / KERNEL_SUBSAMPLE).max(1), KERNEL_EPSILON);

    let fs: Vec<SampledFunction> = members.iter().map(|(_, f)| f.clone()).collect();
    let l2: Vec<Option<f64>> = fs.par_iter().map(|f| pp.l2_ratio(f)).collect::<vh_core::Result<_>>()?;
    let l2 = RatioStats::from_ratios(l2);
    let p = &s.exponent;
    let (hardy, lebesgue, skipped) = if p.log_holder().pass {
        let hardy = boundedness_ratios(|f| pp.apply(f), p, &fs, &s.bank, &s.lattice, HardyMethod::SmoothMaximal)?;
        let lp: Vec<Option<f64>> = fs
            .par_iter()
            .map(|f| -> vh_core::Result<Option<f64>> {
                let h = hardy_norm(f, p, &s.bank, &s.lattice, HardyMethod::SmoothMaximal)?;
                if h == 0.0 {
                    return Ok(None);
                }
                Ok(Some(luxemburg_norm(&pp.apply(f)?, p) / h))
            })
            .collect::<vh_core::Result<_>>()?;
        (Some(hardy), Some(RatioStats::from_ratios(lp)), None)
    } else {
        (None, None, Some("exponent fails the log-Hölder check".to_string()))
    };

    let mut ratios = Table::new("ratios.csv", vec!["member", "l2_ratio", "hardy_ratio", "lebesgue_ratio"]);
    for i in 0..fs.len() {
        ratios.push(vec![
            i.to_string(),
            opt(l2.ratios[i]),
            opt(hardy.as_ref().and_then(|h| h.ratios[i])),
            opt(lebesgue.as_ref().and_then(|h| h.ratios[i])),
        ]);
    }
    let pass = identities.pass
        && carleson.sup.is_finite()
        && kernel.size_sup.is_finite()
        && kernel.smoothness_x_sup.is_finite()
        && kernel.smoothness_y_sup.is_finite()
        && stats_finite(&l2)
        && hardy.as_ref().map_or(true, stats_finite)
        && lebesgue.as_ref().map_or(true, stats_finite);
    let out = ParaproductReport {
        header: Header::new("paraproduct", &s.config, &s.hash),
        exponent: ExponentSummary::of(p),
        symbol: SymbolSummary { spec, bmo_norm: pp.symbol().bmo_norm(), sup_norm: b.sup_norm() },
        identities,
        carleson,
        kernel,
        boundedness: Boundedness { l2, hardy, lebesgue, skipped },
        tails: ParaproductTails { pi_b_one_defect_full: defect_full, pi_star_one_sup_full: adj_full },
        pass,
    };
    CommandOutput::new("paraproduct", &out, vec![plot, ratios], pass)
}
