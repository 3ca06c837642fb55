//! Demographic comparison table: every variable summarised across the four
//! severity groups and across event status, with a significance column for
//! each stratification.
//!
//! Cells are preformatted strings rather than numbers because the table is a
//! rendering target, not an analysis input. Tests that need the underlying
//! statistics should call the `stats` functions directly on the same groups;
//! the `severity_p` and `event_p` fields keep the full [`TestResult`] so the
//! two can be compared.

use serde::{Deserialize, Serialize};

use crate::bac::SeverityThresholds;
use crate::cohort::{EligibleSubject, Endpoint, Race, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use crate::stats::{
    chi_square, format_p, kruskal_wallis, mean, one_way_anova, sample_variance, welch_t,
    TestResult,
};

/// Variables the table knows how to summarise. Callers pick the subset and
/// order; the builder never reorders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Table1Variable {
    Age,
    Race,
    Hispanic,
    FollowupYears,
    Diabetes,
    Antihypertensives,
    Statins,
    Smoking,
    TotalCholesterol,
    Hdl,
    SystolicBp,
    Bmi,
    Egfr,
}

impl Table1Variable {
    pub const ALL: [Table1Variable; 13] = [
        Table1Variable::Age,
        Table1Variable::Race,
        Table1Variable::Hispanic,
        Table1Variable::FollowupYears,
        Table1Variable::Diabetes,
        Table1Variable::Antihypertensives,
        Table1Variable::Statins,
        Table1Variable::Smoking,
        Table1Variable::TotalCholesterol,
        Table1Variable::Hdl,
        Table1Variable::SystolicBp,
        Table1Variable::Bmi,
        Table1Variable::Egfr,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Table1Variable::Age => "age",
            Table1Variable::Race => "race",
            Table1Variable::Hispanic => "hispanic",
            Table1Variable::FollowupYears => "followup_years",
            Table1Variable::Diabetes => "diabetes",
            Table1Variable::Antihypertensives => "antihypertensives",
            Table1Variable::Statins => "statins",
            Table1Variable::Smoking => "smoking",
            Table1Variable::TotalCholesterol => "total_cholesterol",
            Table1Variable::Hdl => "hdl",
            Table1Variable::SystolicBp => "systolic_bp",
            Table1Variable::Bmi => "bmi",
            Table1Variable::Egfr => "egfr",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Table1Variable::Age => "Age, y",
            Table1Variable::Race => "Race (%)",
            Table1Variable::Hispanic => "Hispanic (%)",
            Table1Variable::FollowupYears => "Median follow-up, y",
            Table1Variable::Diabetes => "Diabetes (%)",
            Table1Variable::Antihypertensives => "Antihypertensives (%)",
            Table1Variable::Statins => "Statins (%)",
            Table1Variable::Smoking => "Smoking (%)",
            Table1Variable::TotalCholesterol => "Total cholesterol, mg/dL",
            Table1Variable::Hdl => "HDL, mg/dL",
            Table1Variable::SystolicBp => "Systolic blood pressure, mm Hg",
            Table1Variable::Bmi => "BMI, kg/m2",
            Table1Variable::Egfr => "eGFR, mL/min/1.73m2",
        }
    }

    pub fn parse(s: &str) -> Option<Table1Variable> {
        Table1Variable::ALL
            .into_iter()
            .find(|v| v.key() == s.trim().to_ascii_lowercase())
    }

    fn kind(self) -> VariableKind {
        match self {
            Table1Variable::Age
            | Table1Variable::TotalCholesterol
            | Table1Variable::Hdl
            | Table1Variable::SystolicBp
            | Table1Variable::Bmi
            | Table1Variable::Egfr => VariableKind::Continuous,
            Table1Variable::Hispanic
            | Table1Variable::Diabetes
            | Table1Variable::Antihypertensives
            | Table1Variable::Statins
            | Table1Variable::Smoking => VariableKind::Flag,
            Table1Variable::FollowupYears => VariableKind::Median,
            Table1Variable::Race => VariableKind::Race,
        }
    }
}

enum VariableKind {
    /// mean (sd) cells, ANOVA across severity, Welch t across event status.
    Continuous,
    /// Percent cells, chi-square against both stratifications.
    Flag,
    /// Median cells, Kruskal-Wallis (follow-up duration is right-skewed, so
    /// a mean would mislead).
    Median,
    /// A header row carrying the chi-square p, then one percent row per
    /// category.
    Race,
}

/// Column count: four severity groups, two event-status groups, and the
/// whole cohort.
const GROUPS: usize = 7;

/// One rendered table row. Rows that only exist to carry a category header
/// (the race parent row) have empty cells; category subrows have empty tests.
#[derive(Debug, Clone, Serialize)]
pub struct Table1Row {
    pub label: String,
    /// Order: no_bac, mild, moderate, severe, no_event, event, all.
    pub cells: [String; GROUPS],
    pub severity_p: Option<TestResult>,
    pub event_p: Option<TestResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Table1 {
    /// Endpoint defining the event/no-event split.
    pub endpoint: Endpoint,
    /// Subjects per severity group, in severity order.
    pub severity_sizes: [usize; 4],
    /// Subjects without and with the endpoint event.
    pub event_sizes: [usize; 2],
    pub total: usize,
    pub rows: Vec<Table1Row>,
}

/// Builds the comparison table for the given variables, in the given order.
///
/// Values missing for a subject drop that subject from the affected row only
/// (complete-case per variable), so every cell's denominator is the count of
/// subjects with that value, not the group size. Group columns that end up
/// empty render as blank cells and are left out of the significance tests;
/// a test that cannot run (fewer than two usable groups, a degenerate
/// contingency table) renders as a blank p, never as an error, so one bad
/// variable cannot take down the rest of the table.
pub fn build_table1(
    cohort: &[EligibleSubject],
    variables: &[Table1Variable],
    thresholds: &SeverityThresholds,
    endpoint: Endpoint,
) -> Result<Table1> {
    if cohort.is_empty() {
        return Err(Error::InvalidInput(
            "table requires a non-empty cohort".into(),
        ));
    }

    // Membership lists per column. Indices into `cohort`, computed once.
    let mut severity_members: [Vec<usize>; 4] = Default::default();
    let mut event_members: [Vec<usize>; 2] = Default::default();
    for (i, subject) in cohort.iter().enumerate() {
        let sev = subject.severity(thresholds)?;
        severity_members[sev as usize].push(i);
        let has_event = subject.record(endpoint).is_event();
        event_members[usize::from(has_event)].push(i);
    }

    let member_sets: Vec<&[usize]> = severity_members
        .iter()
        .chain(event_members.iter())
        .map(|v| v.as_slice())
        .collect();
    let all: Vec<usize> = (0..cohort.len()).collect();

    let mut rows = Vec::new();
    for &variable in variables {
        match variable.kind() {
            VariableKind::Continuous => {
                rows.push(continuous_row(cohort, variable, &member_sets, &all));
            }
            VariableKind::Flag => {
                rows.push(flag_row(cohort, variable, &member_sets, &all));
            }
            VariableKind::Median => {
                rows.push(median_row(cohort, variable, &member_sets, &all));
            }
            VariableKind::Race => {
                rows.extend(race_rows(cohort, &member_sets, &all));
            }
        }
    }

    Ok(Table1 {
        endpoint,
        severity_sizes: severity_members.map(|v| v.len()),
        event_sizes: event_members.map(|v| v.len()),
        total: cohort.len(),
        rows,
    })
}

impl Table1 {
    /// Renders the table as CSV. The header names the stratification each
    /// column belongs to; the first two body rows give group sizes and their
    /// share of the cohort, then the variable rows follow in build order.
    pub fn to_delimited(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        writer
            .write_record([
                "variable",
                "no_bac",
                "mild",
                "moderate",
                "severe",
                "p_severity",
                "no_event",
                "event",
                "p_event",
                "all",
            ])
            .map_err(|e| Error::InvalidInput(format!("table write failed: {e}")))?;

        let sizes: Vec<usize> = self
            .severity_sizes
            .iter()
            .chain(self.event_sizes.iter())
            .copied()
            .collect();
        let mut n_cells: [String; GROUPS] = Default::default();
        let mut pct_cells: [String; GROUPS] = Default::default();
        for (i, &n) in sizes.iter().enumerate() {
            n_cells[i] = n.to_string();
            pct_cells[i] = format!("{:.1}", 100.0 * n as f64 / self.total as f64);
        }
        n_cells[GROUPS - 1] = self.total.to_string();
        pct_cells[GROUPS - 1] = "100.0".to_string();

        let preamble = [("N", n_cells), ("% of cohort", pct_cells)];
        for (label, cells) in &preamble {
            write_row(&mut writer, label, cells, &None, &None)?;
        }
        for row in &self.rows {
            write_row(&mut writer, &row.label, &row.cells, &row.severity_p, &row.event_p)?;
        }

        let bytes = writer
            .into_inner()
            .map_err(|e| Error::InvalidInput(format!("table write failed: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::InvalidInput(format!("table not utf-8: {e}")))
    }
}

fn write_row<W: std::io::Write>(
    writer: &mut csv::Writer<W>,
    label: &str,
    cells: &[String; GROUPS],
    severity_p: &Option<TestResult>,
    event_p: &Option<TestResult>,
) -> Result<()> {
    let p_str = |t: &Option<TestResult>| t.as_ref().map(|r| format_p(r.p_value)).unwrap_or_default();
    let record = [
        label,
        &cells[0],
        &cells[1],
        &cells[2],
        &cells[3],
        &p_str(severity_p),
        &cells[4],
        &cells[5],
        &p_str(event_p),
        &cells[6],
    ];
    writer
        .write_record(record)
        .map_err(|e| Error::InvalidInput(format!("table write failed: {e}")))
}

fn continuous_value(variable: Table1Variable, subject: &EligibleSubject) -> Option<f64> {
    let s = &subject.subject;
    match variable {
        Table1Variable::Age => Some(s.age_at_index),
        Table1Variable::TotalCholesterol => s.total_cholesterol,
        Table1Variable::Hdl => s.hdl,
        Table1Variable::SystolicBp => s.systolic_bp,
        Table1Variable::Bmi => s.bmi,
        Table1Variable::Egfr => s.egfr,
        _ => unreachable!("not a continuous variable"),
    }
}

fn flag_value(variable: Table1Variable, subject: &EligibleSubject) -> bool {
    let s = &subject.subject;
    match variable {
        Table1Variable::Hispanic => s.hispanic,
        Table1Variable::Diabetes => s.diabetes,
        Table1Variable::Antihypertensives => s.on_antihypertensive,
        Table1Variable::Statins => s.on_statin,
        Table1Variable::Smoking => s.smoking,
        _ => unreachable!("not a flag variable"),
    }
}

fn collect_values(
    cohort: &[EligibleSubject],
    variable: Table1Variable,
    members: &[usize],
) -> Vec<f64> {
    members
        .iter()
        .filter_map(|&i| continuous_value(variable, &cohort[i]))
        .collect()
}

fn mean_sd_cell(values: &[f64]) -> String {
    match values.len() {
        0 => String::new(),
        1 => format!("{:.1}", values[0]),
        _ => format!("{:.1} ({:.1})", mean(values), sample_variance(values).sqrt()),
    }
}

fn continuous_row(
    cohort: &[EligibleSubject],
    variable: Table1Variable,
    member_sets: &[&[usize]],
    all: &[usize],
) -> Table1Row {
    let group_values: Vec<Vec<f64>> = member_sets
        .iter()
        .map(|members| collect_values(cohort, variable, members))
        .collect();

    let mut cells: [String; GROUPS] = Default::default();
    for (i, values) in group_values.iter().enumerate() {
        cells[i] = mean_sd_cell(values);
    }
    cells[GROUPS - 1] = mean_sd_cell(&collect_values(cohort, variable, all));

    let severity_groups: Vec<Vec<f64>> = group_values[..4]
        .iter()
        .filter(|g| !g.is_empty())
        .cloned()
        .collect();
    let severity_p = if severity_groups.len() >= 2 {
        one_way_anova(&severity_groups).ok()
    } else {
        None
    };
    let event_p = welch_t(&group_values[4], &group_values[5]).ok();

    Table1Row {
        label: variable.label().to_string(),
        cells,
        severity_p,
        event_p,
    }
}

fn percent_cell(yes: usize, n: usize) -> String {
    if n == 0 {
        String::new()
    } else {
        format!("{:.1}", 100.0 * yes as f64 / n as f64)
    }
}

/// Contingency test on group membership counts, dropping all-zero rows and
/// columns first: a category nobody falls in carries no information, and the
/// chi-square statistic is undefined with a zero marginal.
fn counts_test(table: Vec<Vec<f64>>) -> Option<TestResult> {
    let rows: Vec<Vec<f64>> = table
        .into_iter()
        .filter(|row| row.iter().sum::<f64>() > 0.0)
        .collect();
    if rows.len() < 2 {
        return None;
    }
    let n_cols = rows[0].len();
    let keep: Vec<usize> = (0..n_cols)
        .filter(|&j| rows.iter().map(|r| r[j]).sum::<f64>() > 0.0)
        .collect();
    if keep.len() < 2 {
        return None;
    }
    let trimmed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| keep.iter().map(|&j| r[j]).collect())
        .collect();
    chi_square(&trimmed).ok()
}

fn flag_row(
    cohort: &[EligibleSubject],
    variable: Table1Variable,
    member_sets: &[&[usize]],
    all: &[usize],
) -> Table1Row {
    let count_yes = |members: &[usize]| {
        members
            .iter()
            .filter(|&&i| flag_value(variable, &cohort[i]))
            .count()
    };

    let mut cells: [String; GROUPS] = Default::default();
    let mut yes_no: Vec<(f64, f64)> = Vec::with_capacity(member_sets.len());
    for (i, members) in member_sets.iter().enumerate() {
        let yes = count_yes(members);
        cells[i] = percent_cell(yes, members.len());
        yes_no.push((yes as f64, (members.len() - yes) as f64));
    }
    cells[GROUPS - 1] = percent_cell(count_yes(all), all.len());

    let contingency =
        |slots: &[(f64, f64)]| slots.iter().map(|&(y, n)| vec![y, n]).collect::<Vec<_>>();
    Table1Row {
        label: variable.label().to_string(),
        cells,
        severity_p: counts_test(contingency(&yes_no[..4])),
        event_p: counts_test(contingency(&yes_no[4..6])),
    }
}

fn median(values: &mut Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        (values[mid - 1] + values[mid]) / 2.0
    })
}

fn median_row(
    cohort: &[EligibleSubject],
    variable: Table1Variable,
    member_sets: &[&[usize]],
    all: &[usize],
) -> Table1Row {
    let followup = |members: &[usize]| {
        members
            .iter()
            .map(|&i| cohort[i].subject.followup_days() / DAYS_PER_YEAR)
            .collect::<Vec<f64>>()
    };

    let group_values: Vec<Vec<f64>> = member_sets.iter().map(|m| followup(m)).collect();
    let mut cells: [String; GROUPS] = Default::default();
    for (i, values) in group_values.iter().enumerate() {
        if let Some(m) = median(&mut values.clone()) {
            cells[i] = format!("{m:.1}");
        }
    }
    if let Some(m) = median(&mut followup(all)) {
        cells[GROUPS - 1] = format!("{m:.1}");
    }

    let severity_groups: Vec<Vec<f64>> = group_values[..4]
        .iter()
        .filter(|g| !g.is_empty())
        .cloned()
        .collect();
    let severity_p = if severity_groups.len() >= 2 {
        kruskal_wallis(&severity_groups).ok()
    } else {
        None
    };
    let event_groups: Vec<Vec<f64>> = group_values[4..6]
        .iter()
        .filter(|g| !g.is_empty())
        .cloned()
        .collect();
    let event_p = if event_groups.len() == 2 {
        kruskal_wallis(&event_groups).ok()
    } else {
        None
    };

    Table1Row {
        label: variable.label().to_string(),
        cells,
        severity_p,
        event_p,
    }
}

fn race_rows(
    cohort: &[EligibleSubject],
    member_sets: &[&[usize]],
    all: &[usize],
) -> Vec<Table1Row> {
    // counts[race][column]
    let count = |race: Race, members: &[usize]| {
        members
            .iter()
            .filter(|&&i| cohort[i].subject.race == race)
            .count()
    };
    let counts: Vec<Vec<usize>> = Race::ALL
        .iter()
        .map(|&race| member_sets.iter().map(|m| count(race, m)).collect())
        .collect();

    let table_for = |columns: std::ops::Range<usize>| {
        counts
            .iter()
            .map(|row| columns.clone().map(|j| row[j] as f64).collect::<Vec<f64>>())
            // Transpose so rows are groups and columns are races, matching
            // the orientation of the flag tables. Chi-square is symmetric in
            // the two axes, so this is cosmetic.
            .collect::<Vec<_>>()
    };
    let transpose = |t: Vec<Vec<f64>>| {
        (0..t[0].len())
            .map(|j| t.iter().map(|row| row[j]).collect::<Vec<f64>>())
            .collect::<Vec<_>>()
    };

    let parent = Table1Row {
        label: Table1Variable::Race.label().to_string(),
        cells: Default::default(),
        severity_p: counts_test(transpose(table_for(0..4))),
        event_p: counts_test(transpose(table_for(4..6))),
    };

    let mut rows = vec![parent];
    for (race, race_counts) in Race::ALL.iter().zip(&counts) {
        let mut cells: [String; GROUPS] = Default::default();
        for (i, members) in member_sets.iter().enumerate() {
            cells[i] = percent_cell(race_counts[i], members.len());
        }
        cells[GROUPS - 1] = percent_cell(count(*race, all), all.len());
        rows.push(Table1Row {
            label: format!("  {}", capitalize(race.key())),
            cells,
            severity_p: None,
            event_p: None,
        });
    }
    rows
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
