//! Cox proportional hazards regression via Newton-Raphson on the partial
//! likelihood, with Efron (default) or Breslow handling of tied event times.

use crate::error::{Error, Result};
use crate::stats::special::normal_two_sided_p;
use crate::survival::linalg::{cholesky, cholesky_solve, spd_inverse};
use crate::survival::CI_Z95;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;

/// Treatment of tied event times in the partial likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMethod {
    Efron,
    Breslow,
}

impl Default for TieMethod {
    fn default() -> Self {
        TieMethod::Efron
    }
}

impl std::fmt::Display for TieMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TieMethod::Efron => "efron",
            TieMethod::Breslow => "breslow",
        })
    }
}

/// A coefficient whose magnitude passes this bound during iteration is
/// treated as evidence of a monotone partial likelihood (perfect or near
/// perfect separation) rather than a finite optimum.
pub const BETA_DIVERGENCE_LIMIT: f64 = 50.0;

#[derive(Debug, Clone, Copy)]
pub struct CoxOptions {
    pub method: TieMethod,
    pub max_iterations: usize,
    /// Convergence threshold on the relative change in log partial
    /// likelihood between Newton steps.
    pub tolerance: f64,
}

impl Default for CoxOptions {
    fn default() -> Self {
        CoxOptions { method: TieMethod::Efron, max_iterations: 100, tolerance: 1e-9 }
    }
}

/// One subject for regression: follow-up, event flag, covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxRow {
    pub duration: f64,
    pub event: bool,
    pub covariates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxCoefficient {
    pub name: String,
    pub beta: f64,
    pub std_err: f64,
    pub z: f64,
    pub p_value: f64,
    pub hazard_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoxFit {
    pub method: TieMethod,
    pub n: usize,
    pub n_events: usize,
    pub coefficients: Vec<CoxCoefficient>,
    /// Covariates removed before fitting because they never vary.
    pub dropped_constant: Vec<String>,
    pub log_likelihood: f64,
    pub null_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl CoxFit {
    pub fn coefficient(&self, name: &str) -> Option<&CoxCoefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Log partial likelihood with gradient and observed information at `beta`.
struct Evaluation {
    ll: f64,
    grad: Vec<f64>,
    /// Negative Hessian, row major p x p.
    info: Vec<f64>,
}

fn evaluate(rows: &[CoxRow], beta: &[f64], method: TieMethod) -> Evaluation {
    let p = beta.len();
    let mut ll = 0.0;
    let mut grad = vec![0.0; p];
    let mut info = vec![0.0; p * p];

    // Risk-set sums of w = exp(x . beta), x w, and x x' w, accumulated from
    // the largest duration downward so each block enters exactly once.
    let mut s0 = 0.0;
    let mut s1 = vec![0.0; p];
    let mut s2 = vec![0.0; p * p];

    let mut hi = rows.len();
    while hi > 0 {
        let t = rows[hi - 1].duration;
        let mut lo = hi;
        while lo > 0 && rows[lo - 1].duration == t {
            lo -= 1;
        }

        // Everyone at this duration joins the risk set, censored included.
        for row in &rows[lo..hi] {
            let eta: f64 = row.covariates.iter().zip(beta).map(|(x, b)| x * b).sum();
            let w = eta.exp();
            s0 += w;
            for j in 0..p {
                let xw = row.covariates[j] * w;
                s1[j] += xw;
                for k in 0..=j {
                    s2[j * p + k] += xw * row.covariates[k];
                }
            }
        }

        // Tied-event sums within the block.
        let mut d = 0usize;
        let mut s0d = 0.0;
        let mut s1d = vec![0.0; p];
        let mut s2d = vec![0.0; p * p];
        for row in rows[lo..hi].iter().filter(|r| r.event) {
            d += 1;
            let eta: f64 = row.covariates.iter().zip(beta).map(|(x, b)| x * b).sum();
            ll += eta;
            let w = eta.exp();
            s0d += w;
            for j in 0..p {
                grad[j] += row.covariates[j];
                let xw = row.covariates[j] * w;
                s1d[j] += xw;
                for k in 0..=j {
                    s2d[j * p + k] += xw * row.covariates[k];
                }
            }
        }

        if d > 0 {
            let d_f = d as f64;
            let terms: usize = match method {
                TieMethod::Efron => d,
                TieMethod::Breslow => 1,
            };
            for l in 0..terms {
                let (f, weight) = match method {
                    TieMethod::Efron => (l as f64 / d_f, 1.0),
                    TieMethod::Breslow => (0.0, d_f),
                };
                let denom = s0 - f * s0d;
                ll -= weight * denom.ln();
                let mut g = vec![0.0; p];
                for j in 0..p {
                    g[j] = (s1[j] - f * s1d[j]) / denom;
                    grad[j] -= weight * g[j];
                }
                for j in 0..p {
                    for k in 0..=j {
                        let second = (s2[j * p + k] - f * s2d[j * p + k]) / denom;
                        info[j * p + k] += weight * (second - g[j] * g[k]);
                    }
                }
            }
        }

        hi = lo;
    }

    // Mirror the lower triangle.
    for j in 0..p {
        for k in j + 1..p {
            info[j * p + k] = info[k * p + j];
        }
    }
    Evaluation { ll, grad, info }
}

fn canonical_sort(rows: &mut [CoxRow]) {
    rows.sort_by(|a, b| {
        a.duration
            .total_cmp(&b.duration)
            .then_with(|| a.event.cmp(&b.event))
            .then_with(|| {
                for (x, y) in a.covariates.iter().zip(&b.covariates) {
                    match x.total_cmp(y) {
                        Ordering::Equal => continue,
                        other => return other,
                    }
                }
                Ordering::Equal
            })
    });
}

/// Log partial likelihood and its analytic gradient at an arbitrary
/// coefficient vector. This is the objective `cox_fit` maximizes, exposed
/// so callers can probe it directly: cross-checking a fit against an
/// external maximizer, or verifying the gradient against finite
/// differences.
pub fn partial_likelihood_at(
    rows: &[CoxRow],
    beta: &[f64],
    method: TieMethod,
) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no observations".to_string()));
    }
    for row in rows {
        if row.covariates.len() != beta.len() {
            return Err(Error::InvalidInput(format!(
                "covariate width mismatch: expected {}, got {}",
                beta.len(),
                row.covariates.len()
            )));
        }
    }
    if !rows.iter().any(|r| r.event) {
        return Err(Error::UndefinedStatistic(
            "partial likelihood is undefined without any events".to_string(),
        ));
    }
    let mut work = rows.to_vec();
    canonical_sort(&mut work);
    let eval = evaluate(&work, beta, method);
    Ok((eval.ll, eval.grad))
}

/// Fit the model. `names` labels the covariate columns and must match the
/// width of every row.
///
/// Columns that never vary are removed up front and reported in
/// `dropped_constant`; a column that only separates events from the rest
/// drives the likelihood monotone and is reported as
/// [`Error::MonotoneLikelihood`] with the offending name. Reaching the
/// iteration cap is not an error: the fit comes back with
/// `converged == false` and downstream formatting refuses it.
pub fn cox_fit(rows: &[CoxRow], names: &[&str], options: CoxOptions) -> Result<CoxFit> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("no observations".to_string()));
    }
    let width = names.len();
    if width == 0 {
        return Err(Error::InvalidInput("no covariates named".to_string()));
    }
    for row in rows {
        if row.covariates.len() != width {
            return Err(Error::InvalidInput(format!(
                "covariate width mismatch: expected {width}, got {}",
                row.covariates.len()
            )));
        }
        if !row.duration.is_finite() || row.duration < 0.0 {
            return Err(Error::InvalidInput(format!(
                "duration must be finite and >= 0, got {}",
                row.duration
            )));
        }
        if row.covariates.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".to_string()));
        }
    }
    let n_events = rows.iter().filter(|r| r.event).count();
    if n_events == 0 {
        return Err(Error::UndefinedStatistic(
            "partial likelihood is undefined without any events".to_string(),
        ));
    }

    // Split constant columns from informative ones.
    let mut retained: Vec<usize> = Vec::new();
    let mut dropped_constant: Vec<String> = Vec::new();
    for j in 0..width {
        let first = rows[0].covariates[j];
        if rows.iter().all(|r| r.covariates[j] == first) {
            dropped_constant.push(names[j].to_string());
        } else {
            retained.push(j);
        }
    }
    let p = retained.len();

    let mut work: Vec<CoxRow> = rows
        .iter()
        .map(|r| CoxRow {
            duration: r.duration,
            event: r.event,
            covariates: retained.iter().map(|&j| r.covariates[j]).collect(),
        })
        .collect();
    canonical_sort(&mut work);

    let mut beta = vec![0.0; p];
    let mut eval = evaluate(&work, &beta, options.method);
    let null_log_likelihood = eval.ll;
    let mut converged = p == 0;
    let mut iterations = 0;

    while !converged && iterations < options.max_iterations {
        iterations += 1;
        let factor = cholesky(&eval.info, p).ok_or_else(|| {
            Error::SingularMatrix(
                "observed information is singular; check covariates for collinearity".to_string(),
            )
        })?;
        let delta = cholesky_solve(&factor, p, &eval.grad);

        // Step halving: back off while the step makes things worse. A tiny
        // decrease at the optimum is rounding, not a bad step.
        let scale = eval.ll.abs().max(1.0);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=10 {
            let candidate: Vec<f64> =
                beta.iter().zip(&delta).map(|(b, d)| b + step * d).collect();
            let cand_eval = evaluate(&work, &candidate, options.method);
            if cand_eval.ll.is_finite() && cand_eval.ll >= eval.ll - 1e-13 * scale {
                accepted = Some((candidate, cand_eval));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, cand_eval)) = accepted else {
            // No usable step even after halving: stop where we stand.
            break;
        };

        if let Some((j, b)) = candidate
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            if b.abs() > BETA_DIVERGENCE_LIMIT {
                return Err(Error::MonotoneLikelihood(format!(
                    "coefficient for `{}` diverged past {BETA_DIVERGENCE_LIMIT} ({b:.1}); \
                     the likelihood has no finite maximum",
                    names[retained[j]]
                )));
            }
        }

        let delta_ll = cand_eval.ll - eval.ll;
        beta = candidate;
        eval = cand_eval;
        if delta_ll.abs() <= options.tolerance * eval.ll.abs().max(1.0) {
            converged = true;
        }
    }

    let mut coefficients = Vec::with_capacity(p);
    if p > 0 {
        let cov = spd_inverse(&eval.info, p).ok_or_else(|| {
            Error::SingularMatrix(
                "observed information is singular at the solution".to_string(),
            )
        })?;
        for (slot, &j) in retained.iter().enumerate() {
            let b = beta[slot];
            let se = cov[slot * p + slot].sqrt();
            let z = b / se;
            coefficients.push(CoxCoefficient {
                name: names[j].to_string(),
                beta: b,
                std_err: se,
                z,
                p_value: normal_two_sided_p(z),
                hazard_ratio: b.exp(),
                ci_lower: (b - CI_Z95 * se).exp(),
                ci_upper: (b + CI_Z95 * se).exp(),
            });
        }
    }

    Ok(CoxFit {
        method: options.method,
        n: rows.len(),
        n_events,
        coefficients,
        dropped_constant,
        log_likelihood: eval.ll,
        null_log_likelihood,
        iterations,
        converged,
    })
}

/// Reporting rows for a converged fit: hazard ratio with its 95% interval at
/// two decimals, p-value at three. Unconverged fits are refused so a stalled
/// optimizer can never leak plausible-looking numbers into a report.
pub fn hazard_ratio_table(fit: &CoxFit) -> Result<Vec<String>> {
    if !fit.converged {
        return Err(Error::InvalidInput(format!(
            "fit did not converge after {} iterations; refusing to tabulate",
            fit.iterations
        )));
    }
    Ok(fit
        .coefficients
        .iter()
        .map(|c| {
            format!(
                "{}: HR {:.2} ({:.2}, {:.2}), p {}",
                c.name,
                c.hazard_ratio,
                c.ci_lower,
                c.ci_upper,
                crate::stats::format_p(c.p_value)
            )
        })
        .collect())
}
