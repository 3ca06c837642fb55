//! Kaplan-Meier product-limit estimator with Greenwood standard errors and
//! complementary log-log 95% bands.

use crate::error::Result;
use crate::survival::{canonical_order, validate_observations, Observation, CI_Z95};
use serde::Serialize;

/// Estimate at one distinct event time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KmPoint {
    pub time: f64,
    /// Subjects still under observation just before `time`. Censorings tied
    /// with an event time count as at risk.
    pub n_at_risk: usize,
    pub n_events: usize,
    pub survival: f64,
    /// Greenwood standard error of the survival estimate.
    pub std_err: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

/// The fitted curve. Points exist only at distinct event times; the curve is
/// 1 before the first event and constant between points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmCurve {
    pub n_initial: usize,
    pub total_events: usize,
    pub points: Vec<KmPoint>,
    /// All durations, sorted, kept for at-risk queries.
    sorted_durations: Vec<f64>,
}

impl KmCurve {
    /// Step-function value: survival at the latest event time at or before
    /// `t`, 1 if none.
    pub fn survival_at(&self, t: f64) -> f64 {
        let mut s = 1.0;
        for p in &self.points {
            if p.time <= t {
                s = p.survival;
            } else {
                break;
            }
        }
        s
    }

    /// Number of subjects with duration at or past `t`.
    pub fn at_risk_at(&self, t: f64) -> usize {
        let idx = self.sorted_durations.partition_point(|&d| d < t);
        self.sorted_durations.len() - idx
    }

    /// Largest observed duration, event or censoring.
    pub fn max_duration(&self) -> f64 {
        self.sorted_durations.last().copied().unwrap_or(0.0)
    }
}

/// Interval bounds on the complementary log-log scale, the transform that
/// keeps bounds inside [0, 1] without truncating the estimate itself. At the
/// boundary values the transform is undefined and the band collapses to the
/// point.
fn cloglog_band(survival: f64, std_err: f64) -> (f64, f64) {
    if survival <= 0.0 {
        return (0.0, 0.0);
    }
    if survival >= 1.0 || std_err == 0.0 {
        return (survival, survival);
    }
    let se_l = std_err / (survival * survival.ln()).abs();
    let lower = survival.powf((CI_Z95 * se_l).exp());
    let upper = survival.powf((-CI_Z95 * se_l).exp());
    (lower.clamp(0.0, 1.0), upper.clamp(0.0, 1.0))
}

/// Fit the product-limit curve.
///
/// The survival factor at each event time is computed as `(n - d) / n`, so
/// small cohorts whose estimates are exact rationals come out exact: three
/// subjects with events at 1 and 3 give survival exactly 2/3 then 0. When
/// the last subject at risk has an event the estimate reaches 0 and the
/// Greenwood sum stops being defined; the point carries a zero standard
/// error and a collapsed band.
pub fn km_curve(observations: &[Observation]) -> Result<KmCurve> {
    validate_observations(observations)?;
    let mut obs = observations.to_vec();
    canonical_order(&mut obs);

    let n_initial = obs.len();
    let mut points = Vec::new();
    let mut survival = 1.0;
    let mut greenwood_sum = 0.0;
    let mut total_events = 0usize;

    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].duration;
        let n_at_risk = obs.len() - i;
        let mut n_events = 0usize;
        let mut j = i;
        while j < obs.len() && obs[j].duration == t {
            if obs[j].event {
                n_events += 1;
            }
            j += 1;
        }
        if n_events > 0 {
            total_events += n_events;
            let n = n_at_risk as f64;
            let d = n_events as f64;
            survival *= (n - d) / n;
            let (std_err, ci_lower, ci_upper) = if n_events == n_at_risk {
                // Everyone remaining had the event: survival is exactly 0.
                (0.0, 0.0, 0.0)
            } else {
                greenwood_sum += d / (n * (n - d));
                let se = survival * greenwood_sum.sqrt();
                let (lo, hi) = cloglog_band(survival, se);
                (se, lo, hi)
            };
            points.push(KmPoint {
                time: t,
                n_at_risk,
                n_events,
                survival,
                std_err,
                ci_lower,
                ci_upper,
            });
        }
        i = j;
    }

    let sorted_durations = obs.iter().map(|o| o.duration).collect();
    Ok(KmCurve { n_initial, total_events, points, sorted_durations })
}
