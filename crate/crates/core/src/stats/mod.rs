//! Hypothesis test battery used by the cohort description tables and the
//! threshold sweep validation: Pearson chi-square, Welch t, one-way ANOVA,
//! and Kruskal-Wallis.
//!
//! All p-values come from the in-house tail evaluations in [`special`]; no
//! external statistics dependency is involved. Degenerate inputs (empty
//! margins, zero variance where the statistic needs it) are reported as
//! [`Error::UndefinedStatistic`] rather than silently producing NaN.

pub mod special;

use crate::error::{Error, Result};
use serde::Serialize;

/// Outcome of a single hypothesis test.
///
/// `df2` is only populated for tests with a degrees-of-freedom pair (ANOVA).
#[derive(Debug, Clone, Serialize)]
pub struct TestResult {
    pub method: &'static str,
    pub statistic: f64,
    pub df: f64,
    pub df2: Option<f64>,
    pub p_value: f64,
}

impl TestResult {
    fn new(method: &'static str, statistic: f64, df: f64, df2: Option<f64>, p_value: f64) -> Self {
        debug_assert!(statistic.is_finite());
        debug_assert!((0.0..=1.0).contains(&p_value));
        TestResult { method, statistic, df, df2, p_value }
    }
}

fn check_finite(label: &str, values: &[f64]) -> Result<()> {
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("{label} contains a non-finite value")));
    }
    Ok(())
}

/// Sample mean. Caller guarantees non-empty input.
pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Conventional p-value formatting for tables: three decimals, with the
/// customary `<0.001` floor instead of a string of zeros.
pub fn format_p(p: f64) -> String {
    if p < 0.001 {
        "<0.001".to_string()
    } else {
        format!("{p:.3}")
    }
}

/// Unbiased sample variance (n - 1 denominator). Caller guarantees n >= 2.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Pearson chi-square test of independence on an r x c contingency table of
/// counts, without continuity correction.
///
/// Rejects tables smaller than 2x2, ragged rows, negative cells, and tables
/// with an all-zero row or column marginal (expected counts of zero leave the
/// statistic undefined).
pub fn chi_square(table: &[Vec<f64>]) -> Result<TestResult> {
    let r = table.len();
    if r < 2 {
        return Err(Error::InvalidInput("chi-square table needs at least 2 rows".into()));
    }
    let c = table[0].len();
    if c < 2 {
        return Err(Error::InvalidInput("chi-square table needs at least 2 columns".into()));
    }
    if table.iter().any(|row| row.len() != c) {
        return Err(Error::InvalidInput("chi-square table rows have unequal lengths".into()));
    }
    for row in table {
        check_finite("chi-square table", row)?;
        if row.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidInput("chi-square table has a negative count".into()));
        }
    }

    let row_sums: Vec<f64> = table.iter().map(|row| row.iter().sum()).collect();
    let col_sums: Vec<f64> = (0..c).map(|j| table.iter().map(|row| row[j]).sum()).collect();
    let total: f64 = row_sums.iter().sum();
    if let Some(i) = row_sums.iter().position(|&s| s == 0.0) {
        return Err(Error::UndefinedStatistic(format!("chi-square row {i} has zero marginal")));
    }
    if let Some(j) = col_sums.iter().position(|&s| s == 0.0) {
        return Err(Error::UndefinedStatistic(format!("chi-square column {j} has zero marginal")));
    }

    let mut statistic = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &obs) in row.iter().enumerate() {
            let expected = row_sums[i] * col_sums[j] / total;
            statistic += (obs - expected).powi(2) / expected;
        }
    }
    let df = ((r - 1) * (c - 1)) as f64;
    let p = special::chi_square_sf(statistic, df);
    Ok(TestResult::new("pearson-chi-square", statistic, df, None, p))
}

/// Welch's unequal-variance t test with Satterthwaite degrees of freedom.
///
/// Requires at least two observations per sample and a positive combined
/// standard error; two zero-variance samples leave t undefined.
pub fn welch_t(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidInput("welch t needs at least 2 observations per sample".into()));
    }
    check_finite("welch t sample a", a)?;
    check_finite("welch t sample b", b)?;

    let (na, nb) = (a.len() as f64, b.len() as f64);
    let va = sample_variance(a) / na;
    let vb = sample_variance(b) / nb;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Err(Error::UndefinedStatistic(
            "welch t: both samples have zero variance".into(),
        ));
    }
    let t = (mean(a) - mean(b)) / se2.sqrt();
    let df = se2 * se2 / (va * va / (na - 1.0) + vb * vb / (nb - 1.0));
    let p = special::t_two_sided_p(t, df);
    Ok(TestResult::new("welch-t", t, df, None, p))
}

/// One-way analysis of variance across k groups.
///
/// Zero within-group variance leaves the F ratio undefined (0/0 when the
/// means agree, division by zero otherwise) and is reported as an error.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput("anova needs at least 2 groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput("anova groups must be non-empty".into()));
    }
    for g in groups {
        check_finite("anova group", g)?;
    }
    let n: usize = groups.iter().map(|g| g.len()).sum();
    if n <= k {
        return Err(Error::InvalidInput(
            "anova needs more observations than groups for a within-group df".into(),
        ));
    }

    let grand = groups.iter().flatten().sum::<f64>() / n as f64;
    let mut ss_between = 0.0;
    let mut ss_within = 0.0;
    for g in groups {
        let m = mean(g);
        ss_between += g.len() as f64 * (m - grand).powi(2);
        ss_within += g.iter().map(|x| (x - m).powi(2)).sum::<f64>();
    }
    if ss_within == 0.0 {
        return Err(Error::UndefinedStatistic(
            "anova: zero within-group variance, F undefined".into(),
        ));
    }
    let df1 = (k - 1) as f64;
    let df2 = (n - k) as f64;
    let f = (ss_between / df1) / (ss_within / df2);
    let p = special::f_sf(f, df1, df2);
    Ok(TestResult::new("one-way-anova", f, df1, Some(df2), p))
}

/// Kruskal-Wallis rank test across k groups, with the standard tie
/// correction.
///
/// When every observation is identical the correction denominator vanishes;
/// that case is defined as H = 0, p = 1 rather than an error.
pub fn kruskal_wallis(groups: &[Vec<f64>]) -> Result<TestResult> {
    let k = groups.len();
    if k < 2 {
        return Err(Error::InvalidInput("kruskal-wallis needs at least 2 groups".into()));
    }
    if groups.iter().any(|g| g.is_empty()) {
        return Err(Error::InvalidInput("kruskal-wallis groups must be non-empty".into()));
    }
    for g in groups {
        check_finite("kruskal-wallis group", g)?;
    }

    let n: usize = groups.iter().map(|g| g.len()).sum();
    let nf = n as f64;
    let df = (k - 1) as f64;

    // Pool, rank with midranks for ties, then sum ranks per group.
    let mut pooled: Vec<(f64, usize)> = Vec::with_capacity(n);
    for (gi, g) in groups.iter().enumerate() {
        pooled.extend(g.iter().map(|&x| (x, gi)));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut rank_sums = vec![0.0; k];
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && pooled[j].0 == pooled[i].0 {
            j += 1;
        }
        let run = (j - i) as f64;
        let midrank = (i + j + 1) as f64 / 2.0; // average of ranks i+1 ..= j
        for &(_, gi) in &pooled[i..j] {
            rank_sums[gi] += midrank;
        }
        tie_term += run * run * run - run;
        i = j;
    }

    let correction = 1.0 - tie_term / (nf * nf * nf - nf);
    if correction == 0.0 {
        // Every value tied with every other: no rank information at all.
        return Ok(TestResult::new("kruskal-wallis", 0.0, df, None, 1.0));
    }

    let mut h = 0.0;
    for (g, rs) in groups.iter().zip(&rank_sums) {
        h += rs * rs / g.len() as f64;
    }
    h = (12.0 / (nf * (nf + 1.0)) * h - 3.0 * (nf + 1.0)) / correction;
    // Guard against tiny negative values from cancellation when H is 0.
    if h < 0.0 && h > -1e-12 {
        h = 0.0;
    }
    let p = special::chi_square_sf(h, df);
    Ok(TestResult::new("kruskal-wallis", h, df, None, p))
}
