//! The four batch commands. Each returns the report and tables; writing is
//! left to the caller.

pub mod czo;
pub mod decompose;
pub mod norm;
pub mod paraproduct;

use serde::Serialize;
use vh_core::{ExponentClass, ExponentFunction, LogHolderReport};

/// `a / b`, `None` when `b` vanishes.
pub(crate) fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExponentSummary {
    pub p_minus: f64,
    pub p_plus: f64,
    pub class: ExponentClass,
    pub log_holder: LogHolderReport,
    pub moment_degree: usize,
}

impl ExponentSummary {
    pub fn of(p: &ExponentFunction) -> Self {
        Self {
            p_minus: p.p_minus(),
            p_plus: p.p_plus(),
            class: p.class(),
            log_holder: *p.log_holder(),
            moment_degree: p.moment_degree(),
        }
    }
}
