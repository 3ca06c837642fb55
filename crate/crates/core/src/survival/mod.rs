//! Time-to-event estimation and testing: Kaplan-Meier curves, k-sample
//! log-rank tests, and Cox proportional hazards regression.
//!
//! All three consume [`Observation`] values (duration plus event flag) and
//! canonicalize input order before any accumulation, so results do not
//! depend on row order. Ties between an event and a censoring at the same
//! time follow the usual convention: the censored subject is still at risk
//! when the event happens.

pub mod cox;
pub mod km;
pub(crate) mod linalg;
pub mod logrank;

pub use cox::{
    cox_fit, hazard_ratio_table, partial_likelihood_at, CoxCoefficient, CoxFit, CoxOptions,
    CoxRow, TieMethod,
};
pub use km::{km_curve, KmCurve, KmPoint};
pub use logrank::logrank_test;

use crate::error::{Error, Result};

/// Conventional 95% interval multiplier used for every reported interval,
/// kept as a literal so intervals match hand calculations exactly.
pub const CI_Z95: f64 = 1.96;

/// One subject's follow-up: time on study and whether it ended in the event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub duration: f64,
    pub event: bool,
}

impl Observation {
    pub fn event(duration: f64) -> Observation {
        Observation { duration, event: true }
    }

    pub fn censored(duration: f64) -> Observation {
        Observation { duration, event: false }
    }
}

/// Reject non-finite or negative durations up front so estimators only ever
/// see orderable values.
pub(crate) fn validate_observations(observations: &[Observation]) -> Result<()> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("no observations".to_string()));
    }
    for o in observations {
        if !o.duration.is_finite() || o.duration < 0.0 {
            return Err(Error::InvalidInput(format!(
                "duration must be finite and >= 0, got {}",
                o.duration
            )));
        }
    }
    Ok(())
}

/// Canonical processing order: by duration, censored before events at ties.
/// Estimators iterate in this order so identical inputs in any permutation
/// produce bitwise identical sums.
pub(crate) fn canonical_order(observations: &mut [Observation]) {
    observations.sort_by(|a, b| {
        a.duration
            .total_cmp(&b.duration)
            .then_with(|| a.event.cmp(&b.event))
    });
}
