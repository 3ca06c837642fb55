//! K-sample log-rank test.
//!
//! At each distinct event time the observed events per group are compared
//! with the expectation under the pooled hazard; the quadratic form of the
//! first k-1 components against their hypergeometric covariance is chi
//! square with k-1 degrees of freedom.

use crate::error::{Error, Result};
use crate::stats::special::chi_square_sf;
use crate::stats::TestResult;
use crate::survival::linalg::{cholesky, cholesky_solve};
use crate::survival::{canonical_order, validate_observations, Observation};

/// Compare survival across `groups.len()` samples. Requires at least two
/// non-empty groups and at least one event overall; a covariance matrix
/// without full rank (for example a group that is never at risk together
/// with the others) is a [`Error::SingularMatrix`].
pub fn logrank_test(groups: &[Vec<Observation>]) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput(format!(
            "log-rank test needs at least 2 groups, got {k}"
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        validate_observations(g)
            .map_err(|e| Error::InvalidInput(format!("group {i}: {e}")))?;
    }

    let mut sorted: Vec<Vec<Observation>> = groups.to_vec();
    for g in &mut sorted {
        canonical_order(g);
    }

    // Distinct event times over the pooled sample.
    let mut event_times: Vec<f64> = sorted
        .iter()
        .flatten()
        .filter(|o| o.event)
        .map(|o| o.duration)
        .collect();
    event_times.sort_by(f64::total_cmp);
    event_times.dedup();
    if event_times.is_empty() {
        return Err(Error::UndefinedStatistic(
            "log-rank test is undefined without any events".to_string(),
        ));
    }

    // Per-group cursors into the canonically sorted observations: everything
    // at or past the cursor is still at risk.
    let mut cursor = vec![0usize; k];
    let mut observed = vec![0.0; k];
    let mut expected = vec![0.0; k];
    let m = k - 1;
    let mut cov = vec![0.0; m * m];

    for &t in &event_times {
        let mut n_j = vec![0.0; k];
        let mut d_j = vec![0.0; k];
        for (g, obs) in sorted.iter().enumerate() {
            while cursor[g] < obs.len() && obs[cursor[g]].duration < t {
                cursor[g] += 1;
            }
            n_j[g] = (obs.len() - cursor[g]) as f64;
            d_j[g] = obs[cursor[g]..]
                .iter()
                .take_while(|o| o.duration == t)
                .filter(|o| o.event)
                .count() as f64;
        }
        let n: f64 = n_j.iter().sum();
        let d: f64 = d_j.iter().sum();
        if n == 0.0 || d == 0.0 {
            continue;
        }
        for g in 0..k {
            observed[g] += d_j[g];
            expected[g] += d * n_j[g] / n;
        }
        if n > 1.0 {
            let scale = d * (n - d) / (n - 1.0);
            for j in 0..m {
                for l in 0..m {
                    let kron = if j == l { n_j[j] / n } else { 0.0 };
                    cov[j * m + l] += scale * (kron - n_j[j] * n_j[l] / (n * n));
                }
            }
        }
    }

    let u: Vec<f64> = (0..m).map(|j| observed[j] - expected[j]).collect();
    let factor = cholesky(&cov, m).ok_or_else(|| {
        Error::SingularMatrix(
            "log-rank covariance matrix is singular; groups do not overlap enough at risk"
                .to_string(),
        )
    })?;
    let x = cholesky_solve(&factor, m, &u);
    let statistic: f64 = u.iter().zip(&x).map(|(a, b)| a * b).sum();
    // The quadratic form is nonnegative up to rounding.
    let statistic = statistic.max(0.0);
    let df = m as f64;

    Ok(TestResult {
        method: "log-rank",
        statistic,
        df,
        df2: None,
        p_value: chi_square_sf(statistic, df),
    })
}
