//! Grid search for the two upper severity thresholds.
//!
//! The cut separating measurable calcification from background noise stays
//! fixed; the mild/moderate and moderate/severe cuts are swept over a
//! regular grid of candidate areas. Each candidate pair splits the cohort
//! into four exposure groups, and the pair is scored by how cleanly the
//! groups separate in a proportional hazards fit of three group indicators
//! against the no-calcification reference.
//!
//! Refitting a subject-level regression for every pair would cost the grid
//! squared times the cohort size. Instead the cohort is aggregated once
//! into cells bounded by consecutive grid points: group indicators are
//! constant within a cell, so the risk-set sums the partial likelihood
//! needs reduce to at-risk and event counts per cell at each distinct
//! event time. Those tables are stored cumulatively over the cell axis,
//! which turns any candidate grouping into a difference of two lookups,
//! and the per-pair fit runs on four aggregate counts per event time no
//! matter how large the cohort is. The winning pair is then refit at the
//! subject level to get standard errors on the familiar path.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bac::{Severity, SeverityThresholds};
use crate::error::{Error, Result};
use crate::stats::{welch_t, TestResult};
use crate::survival::cox::BETA_DIVERGENCE_LIMIT;
use crate::survival::linalg::{cholesky, cholesky_solve, spd_inverse};
use crate::survival::{cox_fit, CoxFit, CoxOptions, CoxRow};

/// One-sided z used to decide whether the binding hazard ratio gap at the
/// winning pair is distinguishable from zero.
pub const GAP_SEPARATION_Z: f64 = 1.645;

/// How a candidate pair is scored. Hazard ratio gaps are taken between
/// adjacent exposed categories, mild to moderate and moderate to severe.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepObjective {
    /// Smaller of the two adjacent gaps. Rewards pairs whose worst
    /// neighbouring categories still pull apart.
    #[default]
    MinAdjacentGap,
    /// Sum of the two adjacent gaps.
    SumAdjacentGaps,
    /// Twice the log likelihood gain of the grouped fit over the
    /// intercept-only model.
    GroupedLikelihoodRatio,
}

impl SweepObjective {
    pub fn key(self) -> &'static str {
        match self {
            SweepObjective::MinAdjacentGap => "min_adjacent_gap",
            SweepObjective::SumAdjacentGaps => "sum_adjacent_gaps",
            SweepObjective::GroupedLikelihoodRatio => "grouped_likelihood_ratio",
        }
    }
}

fn default_grid_start() -> f64 {
    5.0
}

fn default_grid_end() -> f64 {
    700.0
}

fn default_grid_step() -> f64 {
    5.0
}

fn default_noise_floor() -> f64 {
    2.0
}

fn default_min_group_size() -> usize {
    50
}

/// Search settings. Candidate thresholds run from `grid_start` to
/// `grid_end` in steps of `grid_step`, all in mm^2 of calcified area.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_grid_start")]
    pub grid_start: f64,
    #[serde(default = "default_grid_end")]
    pub grid_end: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    /// Area below which calcification is treated as absent. Not swept.
    #[serde(default = "default_noise_floor")]
    pub noise_floor: f64,
    /// Smallest subject count allowed in each of the four groups.
    #[serde(default = "default_min_group_size")]
    pub min_group_size: usize,
    #[serde(default)]
    pub objective: SweepObjective,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            grid_start: default_grid_start(),
            grid_end: default_grid_end(),
            grid_step: default_grid_step(),
            noise_floor: default_noise_floor(),
            min_group_size: default_min_group_size(),
            objective: SweepObjective::default(),
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("grid_start", self.grid_start),
            ("grid_end", self.grid_end),
            ("grid_step", self.grid_step),
            ("noise_floor", self.noise_floor),
        ] {
            if !value.is_finite() {
                return Err(Error::InvalidInput(format!("{name} must be finite, got {value}")));
            }
        }
        if self.noise_floor <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "noise_floor must be positive, got {}",
                self.noise_floor
            )));
        }
        if self.grid_start <= self.noise_floor {
            return Err(Error::InvalidInput(format!(
                "grid_start {} must lie above the noise floor {}",
                self.grid_start, self.noise_floor
            )));
        }
        if self.grid_step <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "grid_step must be positive, got {}",
                self.grid_step
            )));
        }
        if self.min_group_size == 0 {
            return Err(Error::InvalidInput("min_group_size must be at least 1".into()));
        }
        if self.grid().len() < 2 {
            return Err(Error::InvalidInput(format!(
                "grid from {} to {} by {} holds fewer than two candidates, so no pair exists",
                self.grid_start, self.grid_end, self.grid_step
            )));
        }
        Ok(())
    }

    /// Candidate thresholds, ascending. The end point is included when it
    /// lands on the step within rounding slack.
    fn grid(&self) -> Vec<f64> {
        let mut points = Vec::new();
        let slack = self.grid_step * 1e-9;
        for i in 0.. {
            let t = self.grid_start + i as f64 * self.grid_step;
            if t > self.grid_end + slack {
                break;
            }
            points.push(t);
        }
        points
    }
}

/// Per-subject input: exposure and outcome, nothing else.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSubject {
    pub bac_area_mm2: f64,
    pub duration: f64,
    pub event: bool,
}

/// One candidate pair that produced a converged grouped fit.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    /// Mild/moderate cut, mm^2.
    pub t1: f64,
    /// Moderate/severe cut, mm^2.
    pub t2: f64,
    /// Subjects per group: none, mild, moderate, severe.
    pub group_sizes: [usize; 4],
    /// Fitted hazard ratios for mild, moderate and severe versus none.
    pub hazard_ratios: [f64; 3],
    pub objective: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub objective: SweepObjective,
    pub best: SweepPoint,
    /// Subject-level refit at the winning pair, with standard errors and
    /// confidence intervals.
    pub best_fit: CoxFit,
    /// Smaller adjacent hazard ratio gap at the winning pair (mild to
    /// severe for the sum objective, which only resolves the endpoints).
    pub binding_gap: f64,
    pub binding_gap_std_err: f64,
    /// True when the binding gap fails to clear zero at the one-sided 5%
    /// level, meaning the winning pair does not really separate its
    /// neighbouring groups.
    pub non_separating: bool,
    pub total_pairs: usize,
    /// Pairs with a converged fit; these make up the trace.
    pub evaluated: usize,
    /// Pairs rejected because a group fell under `min_group_size`.
    pub skipped_small_group: usize,
    /// Pairs where a group had no events or the fit diverged.
    pub failed_fits: usize,
    /// Every evaluated pair in grid order.
    pub trace: Vec<SweepPoint>,
}

/// Cohort aggregated over threshold cells. Cell 0 is everything below the
/// noise floor, cell c in 1..=m ends at grid point c-1, and the last cell
/// is everything at or above the top grid point. Count tables are
/// cumulative over the cell axis so any contiguous run of cells reduces
/// to a difference of two entries.
struct CellTable {
    cells: usize,
    times: usize,
    /// times x cells: subjects still at risk at each distinct event time.
    cum_at_risk: Vec<u32>,
    /// times x cells: events at exactly each distinct event time.
    cum_events: Vec<u32>,
    /// Per cell: total subjects.
    cum_sizes: Vec<u32>,
    /// Per cell: total events.
    cum_event_totals: Vec<u32>,
    /// Log partial likelihood of the model with all group effects zero.
    null_log_likelihood: f64,
}

fn cell_index(area: f64, grid: &[f64], noise_floor: f64) -> usize {
    if area < noise_floor {
        0
    } else {
        1 + grid.partition_point(|g| *g <= area)
    }
}

/// Four group counts from a cell-cumulative vector, split at boundary
/// cells `a` (mild ends) and `b` (moderate ends).
fn group_counts(cum: &[u32], a: usize, b: usize) -> [u32; 4] {
    let last = cum[cum.len() - 1];
    [cum[0], cum[a] - cum[0], cum[b] - cum[a], last - cum[b]]
}

fn build_cells(subjects: &[SweepSubject], grid: &[f64], noise_floor: f64) -> CellTable {
    let cells = grid.len() + 2;
    let mut times: Vec<f64> =
        subjects.iter().filter(|s| s.event).map(|s| s.duration).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let k = times.len();

    // At-risk counts via a difference array over the time axis: a subject
    // is at risk at every event time up to and including its own duration.
    let mut risk_delta = vec![0i64; cells * (k + 1)];
    let mut events = vec![0u32; cells * k];
    let mut sizes = vec![0u32; cells];
    let mut event_totals = vec![0u32; cells];
    for s in subjects {
        let c = cell_index(s.bac_area_mm2, grid, noise_floor);
        sizes[c] += 1;
        let kp = times.partition_point(|t| *t <= s.duration);
        if kp > 0 {
            risk_delta[c * (k + 1)] += 1;
            risk_delta[c * (k + 1) + kp] -= 1;
        }
        if s.event {
            events[c * k + kp - 1] += 1;
            event_totals[c] += 1;
        }
    }

    let mut cum_at_risk = vec![0u32; k * cells];
    for c in 0..cells {
        let mut running = 0i64;
        for t in 0..k {
            running += risk_delta[c * (k + 1) + t];
            cum_at_risk[t * cells + c] = running as u32;
        }
    }
    let mut cum_events = vec![0u32; k * cells];
    for c in 0..cells {
        for t in 0..k {
            cum_events[t * cells + c] = events[c * k + t];
        }
    }
    for t in 0..k {
        for c in 1..cells {
            cum_at_risk[t * cells + c] += cum_at_risk[t * cells + c - 1];
            cum_events[t * cells + c] += cum_events[t * cells + c - 1];
        }
    }
    for c in 1..cells {
        sizes[c] += sizes[c - 1];
        event_totals[c] += event_totals[c - 1];
    }

    // With all effects zero every subject carries weight one, so the tie
    // correction leaves n - l in the denominator of the l-th tied term.
    let mut null_ll = 0.0;
    for t in 0..k {
        let n = cum_at_risk[t * cells + cells - 1] as f64;
        let d = cum_events[t * cells + cells - 1] as u32;
        for l in 0..d {
            null_ll -= (n - l as f64).ln();
        }
    }

    CellTable {
        cells,
        times: k,
        cum_at_risk,
        cum_events,
        cum_sizes: sizes,
        cum_event_totals: event_totals,
        null_log_likelihood: null_ll,
    }
}

/// Gradient and observed information of the grouped partial likelihood at
/// `beta`, with tied events handled the way the subject-level Efron fit
/// handles them so the two engines agree to convergence accuracy.
fn grouped_score(table: &CellTable, a: usize, b: usize, beta: &[f64; 3]) -> ([f64; 3], [f64; 9]) {
    let c = table.cells;
    let e = [beta[0].exp(), beta[1].exp(), beta[2].exp()];
    let o = group_counts(&table.cum_event_totals, a, b);
    let mut grad = [o[1] as f64, o[2] as f64, o[3] as f64];
    let mut info = [0.0f64; 9];
    for t in 0..table.times {
        let r = &table.cum_at_risk[t * c..(t + 1) * c];
        let ev = &table.cum_events[t * c..(t + 1) * c];
        let n = group_counts(r, a, b);
        let d = group_counts(ev, a, b);
        let d_total = ev[c - 1];
        let s1 = [n[1] as f64 * e[0], n[2] as f64 * e[1], n[3] as f64 * e[2]];
        let s0 = n[0] as f64 + s1[0] + s1[1] + s1[2];
        if d_total == 1 {
            let inv = 1.0 / s0;
            let m = [s1[0] * inv, s1[1] * inv, s1[2] * inv];
            accumulate_score(&mut grad, &mut info, &m);
        } else {
            let s1d = [d[1] as f64 * e[0], d[2] as f64 * e[1], d[3] as f64 * e[2]];
            let s0d = d[0] as f64 + s1d[0] + s1d[1] + s1d[2];
            let dt = d_total as f64;
            for l in 0..d_total {
                let f = l as f64 / dt;
                let inv = 1.0 / (s0 - f * s0d);
                let m = [
                    (s1[0] - f * s1d[0]) * inv,
                    (s1[1] - f * s1d[1]) * inv,
                    (s1[2] - f * s1d[2]) * inv,
                ];
                accumulate_score(&mut grad, &mut info, &m);
            }
        }
    }
    info[3] = info[1];
    info[6] = info[2];
    info[7] = info[5];
    (grad, info)
}

/// Fold one risk-set mean of the three indicators into gradient and
/// information.
fn accumulate_score(grad: &mut [f64; 3], info: &mut [f64; 9], m: &[f64; 3]) {
    grad[0] -= m[0];
    grad[1] -= m[1];
    grad[2] -= m[2];
    info[0] += m[0] - m[0] * m[0];
    info[4] += m[1] - m[1] * m[1];
    info[8] += m[2] - m[2] * m[2];
    info[1] -= m[0] * m[1];
    info[2] -= m[0] * m[2];
    info[5] -= m[1] * m[2];
}

/// Grouped log partial likelihood at `beta`. Only needed when the
/// objective scores by likelihood, and once more for the winner.
fn grouped_log_likelihood(table: &CellTable, a: usize, b: usize, beta: &[f64; 3]) -> f64 {
    let c = table.cells;
    let e = [beta[0].exp(), beta[1].exp(), beta[2].exp()];
    let o = group_counts(&table.cum_event_totals, a, b);
    let mut ll = o[1] as f64 * beta[0] + o[2] as f64 * beta[1] + o[3] as f64 * beta[2];
    for t in 0..table.times {
        let r = &table.cum_at_risk[t * c..(t + 1) * c];
        let ev = &table.cum_events[t * c..(t + 1) * c];
        let n = group_counts(r, a, b);
        let d = group_counts(ev, a, b);
        let d_total = ev[c - 1];
        let s1 = [n[1] as f64 * e[0], n[2] as f64 * e[1], n[3] as f64 * e[2]];
        let s0 = n[0] as f64 + s1[0] + s1[1] + s1[2];
        if d_total == 1 {
            ll -= s0.ln();
        } else {
            let s0d =
                d[0] as f64 + d[1] as f64 * e[0] + d[2] as f64 * e[1] + d[3] as f64 * e[2];
            let dt = d_total as f64;
            for l in 0..d_total {
                ll -= (s0 - l as f64 / dt * s0d).ln();
            }
        }
    }
    ll
}

const GROUPED_STEP_TOL: f64 = 1e-10;
const GROUPED_MAX_ITER: usize = 50;

/// Newton fit of the grouped model. Returns None when the information is
/// not positive definite, a coefficient runs away, or the step never
/// settles; callers count those pairs as failed rather than aborting the
/// whole sweep.
fn fit_grouped(table: &CellTable, a: usize, b: usize) -> Option<[f64; 3]> {
    let mut beta = [0.0f64; 3];
    for _ in 0..GROUPED_MAX_ITER {
        let (grad, info) = grouped_score(table, a, b, &beta);
        let l = cholesky(&info, 3)?;
        let delta = cholesky_solve(&l, 3, &grad);
        for g in 0..3 {
            beta[g] += delta[g];
        }
        if beta.iter().any(|v| !v.is_finite() || v.abs() > BETA_DIVERGENCE_LIMIT) {
            return None;
        }
        if delta.iter().all(|d| d.abs() < GROUPED_STEP_TOL) {
            return Some(beta);
        }
    }
    None
}

struct Evaluated {
    point: SweepPoint,
    beta: [f64; 3],
    a: usize,
    b: usize,
}

enum PairOutcome {
    SkippedSmall,
    Failed,
    Fit(Evaluated),
}

/// Sweep every candidate pair and return the winner along with the full
/// evaluation trace. Ties on the objective go to the smaller first cut,
/// then the smaller second cut.
pub fn sweep_thresholds(subjects: &[SweepSubject], config: &SweepConfig) -> Result<SweepResult> {
    config.validate()?;
    if subjects.is_empty() {
        return Err(Error::InvalidInput("threshold sweep needs at least one subject".into()));
    }
    for s in subjects {
        if !s.bac_area_mm2.is_finite() || s.bac_area_mm2 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "calcified area must be finite and non-negative, got {}",
                s.bac_area_mm2
            )));
        }
        if !s.duration.is_finite() || s.duration < 0.0 {
            return Err(Error::InvalidInput(format!(
                "follow-up must be finite and non-negative, got {}",
                s.duration
            )));
        }
    }
    if !subjects.iter().any(|s| s.event) {
        return Err(Error::UndefinedStatistic(
            "threshold sweep needs at least one event".into(),
        ));
    }

    let grid = config.grid();
    let table = build_cells(subjects, &grid, config.noise_floor);
    let m = grid.len();
    let pairs: Vec<(usize, usize)> =
        (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let min_size = config.min_group_size as u32;
    let objective = config.objective;

    let outcomes: Vec<PairOutcome> = pairs
        .par_iter()
        .map(|&(i, j)| {
            // Boundary cells: mild is cells 1..=a, moderate a+1..=b.
            let a = i + 1;
            let b = j + 1;
            let sizes = group_counts(&table.cum_sizes, a, b);
            if sizes.iter().any(|&s| s < min_size) {
                return PairOutcome::SkippedSmall;
            }
            // A group with no events pushes its coefficient to minus
            // infinity, so the fit cannot settle; count it as failed
            // without burning iterations on it.
            let group_events = group_counts(&table.cum_event_totals, a, b);
            if group_events.iter().any(|&d| d == 0) {
                return PairOutcome::Failed;
            }
            let Some(beta) = fit_grouped(&table, a, b) else {
                return PairOutcome::Failed;
            };
            let hr = [beta[0].exp(), beta[1].exp(), beta[2].exp()];
            let value = match objective {
                SweepObjective::MinAdjacentGap => (hr[1] - hr[0]).min(hr[2] - hr[1]),
                SweepObjective::SumAdjacentGaps => (hr[1] - hr[0]) + (hr[2] - hr[1]),
                SweepObjective::GroupedLikelihoodRatio => {
                    2.0 * (grouped_log_likelihood(&table, a, b, &beta)
                        - table.null_log_likelihood)
                }
            };
            PairOutcome::Fit(Evaluated {
                point: SweepPoint {
                    t1: grid[i],
                    t2: grid[j],
                    group_sizes: [
                        sizes[0] as usize,
                        sizes[1] as usize,
                        sizes[2] as usize,
                        sizes[3] as usize,
                    ],
                    hazard_ratios: hr,
                    objective: value,
                },
                beta,
                a,
                b,
            })
        })
        .collect();

    let mut skipped_small_group = 0;
    let mut failed_fits = 0;
    let mut trace = Vec::new();
    let mut best: Option<&Evaluated> = None;
    for outcome in &outcomes {
        match outcome {
            PairOutcome::SkippedSmall => skipped_small_group += 1,
            PairOutcome::Failed => failed_fits += 1,
            PairOutcome::Fit(eval) => {
                // Strict improvement keeps the first pair seen on ties,
                // which in grid order is the smallest t1 then t2.
                if best.map_or(true, |cur| eval.point.objective > cur.point.objective) {
                    best = Some(eval);
                }
                trace.push(eval.point.clone());
            }
        }
    }
    let Some(best) = best else {
        return Err(Error::SweepInfeasible(format!(
            "no threshold pair produced a usable fit: of {} pairs, {} had a group under {} subjects and {} failed to fit",
            pairs.len(),
            skipped_small_group,
            config.min_group_size,
            failed_fits
        )));
    };

    // Delta-method standard error of the binding gap on the hazard ratio
    // scale, from the grouped information at the winning estimate.
    let (_, info) = grouped_score(&table, best.a, best.b, &best.beta);
    let cov = spd_inverse(&info, 3).ok_or_else(|| {
        Error::SingularMatrix("hazard ratio covariance at the selected thresholds".into())
    })?;
    let hr = best.point.hazard_ratios;
    // The separation check always inspects the tighter adjacent gap; the
    // objective only decides which pair wins. The sum objective is the
    // exception since it telescopes to the mild-to-severe span.
    let (hi, lo) = match objective {
        SweepObjective::SumAdjacentGaps => (2, 0),
        _ => {
            if hr[1] - hr[0] <= hr[2] - hr[1] {
                (1, 0)
            } else {
                (2, 1)
            }
        }
    };
    let binding_gap = hr[hi] - hr[lo];
    let var = hr[hi] * hr[hi] * cov[hi * 3 + hi] + hr[lo] * hr[lo] * cov[lo * 3 + lo]
        - 2.0 * hr[hi] * hr[lo] * cov[hi * 3 + lo];
    let binding_gap_std_err = var.max(0.0).sqrt();
    let non_separating = binding_gap - GAP_SEPARATION_Z * binding_gap_std_err <= 0.0;

    let (t1, t2) = (best.point.t1, best.point.t2);
    let rows: Vec<CoxRow> = subjects
        .iter()
        .map(|s| {
            let area = s.bac_area_mm2;
            let exposed = area >= config.noise_floor;
            CoxRow {
                duration: s.duration,
                event: s.event,
                covariates: vec![
                    (exposed && area < t1) as u8 as f64,
                    (exposed && area >= t1 && area < t2) as u8 as f64,
                    (area >= t2) as u8 as f64,
                ],
            }
        })
        .collect();
    let best_fit = cox_fit(&rows, &["mild", "moderate", "severe"], CoxOptions::default())?;

    Ok(SweepResult {
        objective,
        best: best.point.clone(),
        best_fit,
        binding_gap,
        binding_gap_std_err,
        non_separating,
        total_pairs: pairs.len(),
        evaluated: trace.len(),
        skipped_small_group,
        failed_fits,
        trace,
    })
}

/// Welch t-tests comparing an adjacent pair of exposed severity groups on
/// the event indicator and on follow-up duration. A comparison that cannot
/// run carries a note instead of results.
#[derive(Debug, Clone, Serialize)]
pub struct GroupComparison {
    pub group_a: Severity,
    pub group_b: Severity,
    pub n_a: usize,
    pub n_b: usize,
    pub event_indicator: Option<TestResult>,
    pub duration: Option<TestResult>,
    pub note: Option<String>,
}

/// Check chosen thresholds by testing whether neighbouring exposed groups
/// differ in raw outcome summaries: mild against moderate, then moderate
/// against severe. A group with fewer than two subjects, or a degenerate
/// test, skips that comparison with a note rather than failing the run.
pub fn validate_groupings(
    subjects: &[SweepSubject],
    thresholds: &SeverityThresholds,
) -> Result<Vec<GroupComparison>> {
    thresholds.validate()?;
    let mut events: [Vec<f64>; 4] = Default::default();
    let mut durations: [Vec<f64>; 4] = Default::default();
    for s in subjects {
        if !s.duration.is_finite() || s.duration < 0.0 {
            return Err(Error::InvalidInput(format!(
                "follow-up must be finite and non-negative, got {}",
                s.duration
            )));
        }
        let grade = thresholds.classify(s.bac_area_mm2)?;
        let g = grade as usize;
        events[g].push(if s.event { 1.0 } else { 0.0 });
        durations[g].push(s.duration);
    }

    let mut comparisons = Vec::new();
    for (a, b) in [(Severity::Mild, Severity::Moderate), (Severity::Moderate, Severity::Severe)] {
        let (ia, ib) = (a as usize, b as usize);
        let (n_a, n_b) = (events[ia].len(), events[ib].len());
        let mut notes = Vec::new();
        let mut run = |label: &str, xs: &[f64], ys: &[f64]| {
            if n_a < 2 || n_b < 2 {
                return None;
            }
            match welch_t(xs, ys) {
                Ok(test) => Some(test),
                Err(err) => {
                    notes.push(format!("{label} comparison skipped: {err}"));
                    None
                }
            }
        };
        let event_indicator = run("event indicator", &events[ia], &events[ib]);
        let duration = run("duration", &durations[ia], &durations[ib]);
        if n_a < 2 || n_b < 2 {
            let starved = if n_a < 2 { a } else { b };
            notes.push(format!(
                "comparison skipped: fewer than 2 subjects graded {}",
                starved.key()
            ));
        }
        comparisons.push(GroupComparison {
            group_a: a,
            group_b: b,
            n_a,
            n_b,
            event_indicator,
            duration,
            note: if notes.is_empty() { None } else { Some(notes.join("; ")) },
        });
    }
    Ok(comparisons)
}
