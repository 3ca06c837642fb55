//! The end-to-end reporting pipeline: ingest raw tables, build the eligible
//! cohort, and emit every standard analysis artifact into one output
//! directory.
//!
//! Each analysis runs in isolation. A failure (a stratum with nobody in it,
//! a model that will not converge) is recorded in the manifest with its
//! error message and the remaining analyses still complete, so one bad cell
//! never costs a whole run. Only structural problems, unreadable inputs or
//! an invalid configuration, abort the pipeline itself.
//!
//! Every output is a pure function of the inputs and the configuration.
//! There are no timestamps, no machine identifiers, and no iteration over
//! unordered containers on any output path, so two runs over the same data
//! produce byte-identical trees. That property is what makes report
//! directories diffable, and it is asserted by the integration tests.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ascvd::{ascvd_score, AscvdInput, AscvdResult, RaceGroup, RiskCategory, Sex};
use crate::bac::{Severity, SeverityThresholds};
use crate::cohort::{
    assemble_cohort, default_mace_code_sets,
    parse::{parse_cohort, parse_diagnoses, ColumnMap, DiagnosisColumnMap},
    AnalysisRow, EligibleSubject, Endpoint, ExclusionReport, Race,
};
use crate::error::{Error, Result};
use crate::plot::{km_plot_svg, PlotConfig, PlotSeries};
use crate::stats::TestResult;
use crate::survival::{
    cox_fit, km_curve, logrank_test, CoxFit, CoxOptions, CoxRow, KmCurve, Observation,
};
use crate::sweep::{sweep_thresholds, SweepConfig, SweepSubject};
use crate::table1::{build_table1, Table1Variable};

/// Adjustment covariates a Cox model can condition on. Race expands to
/// indicator columns against the largest group; the lab values are optional
/// per subject, so including one shrinks the model to complete cases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Age,
    Race,
    Diabetes,
    Smoking,
    Statins,
    Antihypertensives,
    SystolicBp,
    TotalCholesterol,
    Hdl,
    Egfr,
    /// Ten-year pooled-cohort risk as a single continuous column. Subjects
    /// whose risk cannot be computed drop from the model.
    AscvdRisk,
}

impl Covariate {
    pub const ALL: [Covariate; 11] = [
        Covariate::Age,
        Covariate::Race,
        Covariate::Diabetes,
        Covariate::Smoking,
        Covariate::Statins,
        Covariate::Antihypertensives,
        Covariate::SystolicBp,
        Covariate::TotalCholesterol,
        Covariate::Hdl,
        Covariate::Egfr,
        Covariate::AscvdRisk,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Covariate::Age => "age",
            Covariate::Race => "race",
            Covariate::Diabetes => "diabetes",
            Covariate::Smoking => "smoking",
            Covariate::Statins => "statins",
            Covariate::Antihypertensives => "antihypertensives",
            Covariate::SystolicBp => "systolic_bp",
            Covariate::TotalCholesterol => "total_cholesterol",
            Covariate::Hdl => "hdl",
            Covariate::Egfr => "egfr",
            Covariate::AscvdRisk => "ascvd_risk",
        }
    }

    pub fn parse(s: &str) -> Option<Covariate> {
        Covariate::ALL.into_iter().find(|c| c.key() == s.trim().to_ascii_lowercase())
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Covariate::Age => &["age"],
            Covariate::Race => &["race_asian", "race_black", "race_other"],
            Covariate::Diabetes => &["diabetes"],
            Covariate::Smoking => &["smoking"],
            Covariate::Statins => &["statins"],
            Covariate::Antihypertensives => &["antihypertensives"],
            Covariate::SystolicBp => &["systolic_bp"],
            Covariate::TotalCholesterol => &["total_cholesterol"],
            Covariate::Hdl => &["hdl"],
            Covariate::Egfr => &["egfr"],
            Covariate::AscvdRisk => &["ascvd_risk"],
        }
    }
}

/// A named set of adjustment covariates. Each set becomes one labeled model
/// bundle next to the always-present unadjusted one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentSet {
    pub name: String,
    pub covariates: Vec<Covariate>,
}

/// Half-open age band [min_age, max_age); an absent upper bound means
/// unbounded above. Strata must not overlap, the whole-cohort view is always
/// produced separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeStratum {
    pub label: String,
    pub min_age: f64,
    pub max_age: Option<f64>,
}

impl AgeStratum {
    pub fn contains(&self, age: f64) -> bool {
        age >= self.min_age && self.max_age.map_or(true, |m| age < m)
    }
}

fn default_endpoints() -> Vec<Endpoint> {
    Endpoint::ALL.to_vec()
}

fn default_age_strata() -> Vec<AgeStratum> {
    vec![
        AgeStratum { label: "40-60".into(), min_age: 40.0, max_age: Some(60.0) },
        AgeStratum { label: "60-80".into(), min_age: 60.0, max_age: Some(80.0) },
    ]
}

fn default_adjustment_sets() -> Vec<AdjustmentSet> {
    vec![
        AdjustmentSet {
            name: "risk_factors".into(),
            covariates: vec![
                Covariate::Age,
                Covariate::Diabetes,
                Covariate::Smoking,
                Covariate::Statins,
                Covariate::Antihypertensives,
            ],
        },
        AdjustmentSet {
            name: "full".into(),
            covariates: vec![
                Covariate::Age,
                Covariate::Race,
                Covariate::SystolicBp,
                Covariate::Diabetes,
                Covariate::Smoking,
                Covariate::TotalCholesterol,
                Covariate::Hdl,
                Covariate::Egfr,
            ],
        },
    ]
}

fn default_min_followup() -> f64 {
    crate::cohort::DEFAULT_MIN_FOLLOWUP_YEARS
}

/// Full description of one pipeline run. Everything an analysis depends on
/// lives here, so a stored config plus the input files reproduces the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub subjects_file: PathBuf,
    pub diagnoses_file: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub subject_columns: ColumnMap,
    #[serde(default)]
    pub diagnosis_columns: DiagnosisColumnMap,
    /// Endpoints that get the per-stratum survival treatment.
    #[serde(default = "default_endpoints")]
    pub endpoints: Vec<Endpoint>,
    #[serde(default)]
    pub thresholds: SeverityThresholds,
    #[serde(default = "default_adjustment_sets")]
    pub adjustment_sets: Vec<AdjustmentSet>,
    #[serde(default = "default_age_strata")]
    pub age_strata: Vec<AgeStratum>,
    #[serde(default)]
    pub sweep: SweepConfig,
    #[serde(default = "default_min_followup")]
    pub min_followup_years: f64,
    /// Recorded in the manifest. The pipeline itself draws no random
    /// numbers; the seed exists so configs that feed simulated inputs carry
    /// their provenance with them.
    #[serde(default)]
    pub seed: u64,
}

impl RunConfig {
    /// Minimal config over the given files with every analysis default.
    pub fn new(
        subjects_file: impl Into<PathBuf>,
        diagnoses_file: impl Into<PathBuf>,
        output_dir: impl Into<PathBuf>,
    ) -> RunConfig {
        RunConfig {
            subjects_file: subjects_file.into(),
            diagnoses_file: diagnoses_file.into(),
            output_dir: output_dir.into(),
            subject_columns: ColumnMap::default(),
            diagnosis_columns: DiagnosisColumnMap::default(),
            endpoints: default_endpoints(),
            thresholds: SeverityThresholds::default(),
            adjustment_sets: default_adjustment_sets(),
            age_strata: default_age_strata(),
            sweep: SweepConfig::default(),
            min_followup_years: default_min_followup(),
            seed: 0,
        }
    }

    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Schema(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.endpoints.is_empty() {
            return Err(Error::InvalidInput("endpoint list is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &self.endpoints {
            if !seen.insert(e.key()) {
                return Err(Error::InvalidInput(format!("duplicate endpoint `{}`", e.key())));
            }
        }
        self.thresholds.validate()?;
        self.sweep.validate()?;
        if !self.min_followup_years.is_finite() || self.min_followup_years < 0.0 {
            return Err(Error::InvalidInput(format!(
                "min_followup_years must be non-negative, got {}",
                self.min_followup_years
            )));
        }

        let mut slugs = BTreeSet::new();
        for s in &self.age_strata {
            if !s.min_age.is_finite() || s.max_age.is_some_and(|m| !(m > s.min_age)) {
                return Err(Error::InvalidInput(format!(
                    "age stratum `{}` has an empty or non-finite range",
                    s.label
                )));
            }
            let slug = slugify(&s.label);
            if slug.is_empty() || slug == "overall" || !slugs.insert(slug) {
                return Err(Error::InvalidInput(format!(
                    "age stratum label `{}` is empty, reserved, or collides with another label",
                    s.label
                )));
            }
        }
        let mut sorted: Vec<&AgeStratum> = self.age_strata.iter().collect();
        sorted.sort_by(|a, b| a.min_age.total_cmp(&b.min_age));
        for pair in sorted.windows(2) {
            let open_ended = pair[0].max_age.is_none();
            if open_ended || pair[1].min_age < pair[0].max_age.unwrap() {
                return Err(Error::InvalidInput(format!(
                    "age strata `{}` and `{}` overlap",
                    pair[0].label, pair[1].label
                )));
            }
        }

        let mut names = BTreeSet::new();
        for set in &self.adjustment_sets {
            let slug = slugify(&set.name);
            if slug.is_empty() || slug == "unadjusted" {
                return Err(Error::InvalidInput(format!(
                    "adjustment set name `{}` is empty or reserved",
                    set.name
                )));
            }
            if !names.insert(slug) {
                return Err(Error::InvalidInput(format!(
                    "adjustment set name `{}` collides with another set",
                    set.name
                )));
            }
            if set.covariates.is_empty() {
                return Err(Error::InvalidInput(format!(
                    "adjustment set `{}` has no covariates",
                    set.name
                )));
            }
            let mut cols = BTreeSet::new();
            for c in &set.covariates {
                if !cols.insert(c.key()) {
                    return Err(Error::InvalidInput(format!(
                        "adjustment set `{}` repeats a covariate",
                        set.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Lowercased label with anything outside [a-z0-9-] folded to underscores,
/// for use inside file names.
fn slugify(label: &str) -> String {
    let mut slug: String = label
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '_' })
        .collect();
    while slug.contains("__") {
        slug = slug.replace("__", "_");
    }
    slug.trim_matches('_').to_string()
}

/// Outcome of one isolated analysis.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisOutcome {
    pub analysis: String,
    /// Paths relative to the output directory, empty on failure.
    pub files: Vec<String>,
    pub error: Option<String>,
}

impl AnalysisOutcome {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug)]
pub struct PipelineSummary {
    pub analyses: Vec<AnalysisOutcome>,
    pub output_dir: PathBuf,
}

impl PipelineSummary {
    pub fn all_ok(&self) -> bool {
        self.analyses.iter().all(AnalysisOutcome::ok)
    }

    pub fn failures(&self) -> Vec<&AnalysisOutcome> {
        self.analyses.iter().filter(|a| !a.ok()).collect()
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: &'static str,
    seed: u64,
    min_followup_years: f64,
    thresholds: SeverityThresholds,
    endpoints: Vec<&'static str>,
    analyses: &'a [AnalysisOutcome],
}

/// One fitted model cell: an endpoint crossed with an exposure coding under
/// one adjustment set. Cells keep their own error so a diverging fit shows
/// up as data, not as a missing file.
#[derive(Debug, Clone, Serialize)]
pub struct CoxCell {
    pub endpoint: &'static str,
    pub exposure: &'static str,
    pub n_total: usize,
    pub n_used: usize,
    /// Subjects dropped because an adjustment covariate was missing.
    pub n_dropped_missing: usize,
    pub n_events: usize,
    pub converged: bool,
    pub terms: Vec<CoxTerm>,
    pub dropped_constant: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CoxTerm {
    pub term: String,
    pub hazard_ratio: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub p_value: f64,
}

#[derive(Serialize)]
struct CoxBundle<'a> {
    schema_version: &'static str,
    model: &'a str,
    covariates: Vec<&'static str>,
    cells: Vec<CoxCell>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KmGroupCount {
    pub label: String,
    pub n: usize,
    pub events: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct KmTestEntry {
    pub endpoint: &'static str,
    pub stratum: String,
    pub groups: Vec<KmGroupCount>,
    pub logrank: Option<TestResult>,
    pub note: Option<String>,
}

#[derive(Serialize)]
struct Under50Summary {
    schema_version: &'static str,
    n_under_50: usize,
    groups: Vec<KmGroupCount>,
    logrank: Option<TestResult>,
    model: CoxCell,
}

#[derive(Serialize)]
struct AscvdSummary {
    schema_version: &'static str,
    included: usize,
    excluded_race_not_covered: usize,
    excluded_missing_inputs: usize,
    excluded_out_of_range: usize,
    groups: Vec<KmGroupCount>,
    logrank: Option<TestResult>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    schema_version: &'static str,
    objective: &'static str,
    best: &'a crate::sweep::SweepPoint,
    binding_gap: f64,
    binding_gap_std_err: f64,
    non_separating: bool,
    total_pairs: usize,
    evaluated: usize,
    skipped_small_group: usize,
    failed_fits: usize,
    best_fit: &'a CoxFit,
}

/// Exposure codings a model cell can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exposure {
    /// Indicator columns for the three calcified grades against none.
    SeverityGrades,
    /// log2(area + 1) as one continuous column.
    Log2Bac,
    /// Single indicator for any calcification at all.
    AnyBac,
}

impl Exposure {
    pub const ALL: [Exposure; 3] = [Exposure::SeverityGrades, Exposure::Log2Bac, Exposure::AnyBac];

    pub fn parse(s: &str) -> Option<Exposure> {
        Exposure::ALL.into_iter().find(|e| e.key() == s.trim().to_ascii_lowercase())
    }

    pub fn key(self) -> &'static str {
        match self {
            Exposure::SeverityGrades => "severity",
            Exposure::Log2Bac => "log2_bac",
            Exposure::AnyBac => "any_bac",
        }
    }

    fn columns(self) -> &'static [&'static str] {
        match self {
            Exposure::SeverityGrades => &["mild", "moderate", "severe"],
            Exposure::Log2Bac => &["log2_bac"],
            Exposure::AnyBac => &["any_bac"],
        }
    }

    fn values(self, row: &AnalysisRow) -> Vec<f64> {
        match self {
            Exposure::SeverityGrades => match row.severity {
                Severity::NoBac => vec![0.0, 0.0, 0.0],
                Severity::Mild => vec![1.0, 0.0, 0.0],
                Severity::Moderate => vec![0.0, 1.0, 0.0],
                Severity::Severe => vec![0.0, 0.0, 1.0],
            },
            Exposure::Log2Bac => vec![row.log2_bac()],
            Exposure::AnyBac => vec![f64::from(u8::from(row.severity != Severity::NoBac))],
        }
    }
}

/// Why a subject has no pooled-cohort risk.
const EXCL_RACE: &str = "race_not_covered";
const EXCL_MISSING: &str = "missing_inputs";
const EXCL_RANGE: &str = "out_of_range";

/// Pooled-cohort risk per analysis row, or the reason none is computable.
/// [`fit_cell`] takes this so the risk is scored once per cohort, not once
/// per model cell.
pub fn ascvd_assignments(
    rows: &[AnalysisRow],
) -> Vec<std::result::Result<AscvdResult, &'static str>> {
    rows.iter().map(ascvd_assignment).collect()
}

fn ascvd_assignment(row: &AnalysisRow) -> std::result::Result<AscvdResult, &'static str> {
    let race_group = match row.race {
        Race::White => RaceGroup::WhiteOrOther,
        Race::Black => RaceGroup::AfricanAmerican,
        Race::Asian | Race::Other => return Err(EXCL_RACE),
    };
    let (Some(tc), Some(hdl), Some(sbp)) = (row.total_cholesterol, row.hdl, row.systolic_bp)
    else {
        return Err(EXCL_MISSING);
    };
    ascvd_score(&AscvdInput {
        sex: Sex::Female,
        race_group,
        age_years: row.age_at_index,
        total_cholesterol_mgdl: tc,
        hdl_mgdl: hdl,
        systolic_bp_mmhg: sbp,
        on_bp_treatment: row.on_antihypertensive,
        smoker: row.smoking,
        diabetic: row.diabetes,
    })
    .map_err(|_| EXCL_RANGE)
}

/// Run everything. Structural failures (unreadable inputs, invalid config)
/// return `Err`; analysis failures are recorded per analysis in the returned
/// summary and in `manifest.json`.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineSummary> {
    config.validate()?;
    for dir in ["km", "cox", "sweep", "under50", "ascvd"] {
        fs::create_dir_all(config.output_dir.join(dir))?;
    }

    let subjects_file = fs::File::open(&config.subjects_file).map_err(|e| {
        Error::Schema(format!("cannot open subject table {}: {e}", config.subjects_file.display()))
    })?;
    let parsed_subjects = parse_cohort(subjects_file, &config.subject_columns)?;
    let diagnoses_file = fs::File::open(&config.diagnoses_file).map_err(|e| {
        Error::Schema(format!(
            "cannot open diagnosis table {}: {e}",
            config.diagnoses_file.display()
        ))
    })?;
    let parsed_diagnoses = parse_diagnoses(diagnoses_file, &config.diagnosis_columns)?;

    let row_errors = parsed_subjects.rejected.len() + parsed_diagnoses.rejected.len();
    let build = assemble_cohort(
        parsed_subjects.subjects,
        &parsed_diagnoses.diagnoses,
        &default_mace_code_sets(),
        config.min_followup_years,
        row_errors,
    )?;
    let rows: Vec<AnalysisRow> = build
        .eligible
        .iter()
        .map(|e| AnalysisRow::from_subject(e, &config.thresholds))
        .collect::<Result<_>>()?;

    let pipeline = Pipeline {
        config,
        eligible: &build.eligible,
        exclusions: &build.report,
        rows: &rows,
        ascvd: ascvd_assignments(&rows),
    };

    let mut analyses = Vec::new();
    let mut record = |name: String, result: Result<Vec<String>>| match result {
        Ok(files) => analyses.push(AnalysisOutcome { analysis: name, files, error: None }),
        Err(e) => analyses.push(AnalysisOutcome {
            analysis: name,
            files: Vec::new(),
            error: Some(e.to_string()),
        }),
    };

    record("exclusion_report".into(), pipeline.exclusion_unit());
    record("table1".into(), pipeline.table1_unit());

    let mut km_entries: Vec<KmTestEntry> = Vec::new();
    for &endpoint in &config.endpoints {
        let strata = std::iter::once(None).chain(config.age_strata.iter().map(Some));
        for stratum in strata {
            let slug = stratum.map_or_else(|| "overall".to_string(), |s| slugify(&s.label));
            let name = format!("km__{}__{}", endpoint.key(), slug);
            match pipeline.km_unit(endpoint, stratum, &slug) {
                Ok((files, entry)) => {
                    km_entries.push(entry);
                    record(name, Ok(files));
                }
                Err(e) => record(name, Err(e)),
            }
        }
    }
    record(
        "km_tests".into(),
        pipeline.write_json("km/logrank.json", &km_entries).map(|f| vec![f]),
    );

    record("under50_any_bac".into(), pipeline.under50_unit());
    record("ascvd_km".into(), pipeline.ascvd_unit());

    record("cox__unadjusted".into(), pipeline.cox_unit("unadjusted", &[]));
    for set in &config.adjustment_sets {
        record(format!("cox__{}", slugify(&set.name)), pipeline.cox_unit(&set.name, &set.covariates));
    }

    record("threshold_sweep".into(), pipeline.sweep_unit());

    let manifest = Manifest {
        schema_version: "report-manifest.v1",
        seed: config.seed,
        min_followup_years: config.min_followup_years,
        thresholds: config.thresholds,
        endpoints: config.endpoints.iter().map(|e| e.key()).collect(),
        analyses: &analyses,
    };
    pipeline.write_json("manifest.json", &manifest)?;

    Ok(PipelineSummary { analyses, output_dir: config.output_dir.clone() })
}

struct Pipeline<'a> {
    config: &'a RunConfig,
    eligible: &'a [EligibleSubject],
    exclusions: &'a ExclusionReport,
    rows: &'a [AnalysisRow],
    /// Pooled-cohort risk per row, or the exclusion reason.
    ascvd: Vec<std::result::Result<AscvdResult, &'static str>>,
}

impl Pipeline<'_> {
    fn write_text(&self, rel: &str, text: &str) -> Result<String> {
        fs::write(self.config.output_dir.join(rel), text)?;
        Ok(rel.to_string())
    }

    fn write_json<T: Serialize>(&self, rel: &str, value: &T) -> Result<String> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(rel, &text)
    }

    fn exclusion_unit(&self) -> Result<Vec<String>> {
        Ok(vec![self.write_json("exclusion_report.json", self.exclusions)?])
    }

    fn table1_unit(&self) -> Result<Vec<String>> {
        let table = build_table1(
            self.eligible,
            &Table1Variable::ALL,
            &self.config.thresholds,
            Endpoint::CompositeMace,
        )?;
        Ok(vec![self.write_text("table1.csv", &table.to_delimited()?)?])
    }

    /// Survival curves for one endpoint within one age stratum (or the whole
    /// cohort), as a points CSV plus the rendered figure.
    fn km_unit(
        &self,
        endpoint: Endpoint,
        stratum: Option<&AgeStratum>,
        slug: &str,
    ) -> Result<(Vec<String>, KmTestEntry)> {
        let members: Vec<&AnalysisRow> = self
            .rows
            .iter()
            .filter(|r| stratum.map_or(true, |s| s.contains(r.age_at_index)))
            .collect();
        let stratum_label = stratum.map_or("overall", |s| s.label.as_str());
        if members.is_empty() {
            return Err(Error::InvalidInput(format!(
                "no eligible subjects in stratum `{stratum_label}`"
            )));
        }

        let mut labeled: Vec<(String, Vec<Observation>)> = Vec::new();
        for severity in Severity::ALL {
            let obs: Vec<Observation> = members
                .iter()
                .filter(|r| r.severity == severity)
                .map(|r| observation(r, endpoint))
                .collect();
            if !obs.is_empty() {
                labeled.push((severity.label().to_string(), obs));
            }
        }

        let base = format!("km/{}__{}", endpoint.key(), slug);
        let title = format!("{} by severity, {}", endpoint.label(), stratum_label);
        let (files, entry) = self.km_outputs(&base, &title, &labeled)?;
        Ok((
            files,
            KmTestEntry {
                endpoint: endpoint.key(),
                stratum: stratum_label.to_string(),
                ..entry
            },
        ))
    }

    /// Shared tail of every curve analysis: fit, write CSV and SVG, run the
    /// between-group log-rank test.
    fn km_outputs(
        &self,
        rel_base: &str,
        title: &str,
        labeled: &[(String, Vec<Observation>)],
    ) -> Result<(Vec<String>, KmTestEntry)> {
        let curves: Vec<(String, KmCurve)> = labeled
            .iter()
            .map(|(label, obs)| km_curve(obs).map(|c| (label.clone(), c)))
            .collect::<Result<_>>()?;

        let csv_text = km_points_csv(&curves)?;
        let max_t = curves
            .iter()
            .map(|(_, c)| c.max_duration())
            .fold(1.0f64, f64::max)
            .ceil();
        let ticks: Vec<f64> = (0..=5).map(|i| max_t * f64::from(i) / 5.0).collect();
        let series: Vec<PlotSeries> = curves
            .iter()
            .map(|(label, c)| PlotSeries::from_km(label.clone(), c, &ticks))
            .collect();
        let plot_config =
            PlotConfig { title: title.to_string(), x_ticks: ticks, ..PlotConfig::default() };
        let svg = km_plot_svg(&series, &plot_config)?;

        let groups: Vec<KmGroupCount> = labeled
            .iter()
            .zip(&curves)
            .map(|((label, obs), (_, curve))| KmGroupCount {
                label: label.clone(),
                n: obs.len(),
                events: curve.total_events,
            })
            .collect();
        let (logrank, note) = if labeled.len() >= 2 {
            let obs_groups: Vec<Vec<Observation>> =
                labeled.iter().map(|(_, obs)| obs.clone()).collect();
            match logrank_test(&obs_groups) {
                Ok(t) => (Some(t), None),
                Err(e) => (None, Some(e.to_string())),
            }
        } else {
            (None, Some("fewer than two non-empty groups".to_string()))
        };

        let files = vec![
            self.write_text(&format!("{rel_base}.csv"), &csv_text)?,
            self.write_text(&format!("{rel_base}.svg"), &svg)?,
        ];
        Ok((files, KmTestEntry { endpoint: "", stratum: String::new(), groups, logrank, note }))
    }

    /// Any-calcification analysis restricted to subjects under 50, where the
    /// graded severity groups are too thin to stand alone.
    fn under50_unit(&self) -> Result<Vec<String>> {
        let members: Vec<&AnalysisRow> =
            self.rows.iter().filter(|r| r.age_at_index < 50.0).collect();
        if members.is_empty() {
            return Err(Error::InvalidInput("no eligible subjects under 50".into()));
        }

        let endpoint = Endpoint::CompositeMace;
        let mut labeled: Vec<(String, Vec<Observation>)> = Vec::new();
        for (label, any) in [("No BAC", false), ("Any BAC", true)] {
            let obs: Vec<Observation> = members
                .iter()
                .filter(|r| (r.severity != Severity::NoBac) == any)
                .map(|r| observation(r, endpoint))
                .collect();
            if !obs.is_empty() {
                labeled.push((label.to_string(), obs));
            }
        }

        let title = format!("{} by any calcification, under 50", endpoint.label());
        let (mut files, entry) = self.km_outputs("under50/any_bac", &title, &labeled)?;

        let member_rows: Vec<AnalysisRow> = members.iter().map(|&r| r.clone()).collect();
        let model = fit_cell(&member_rows, &[], endpoint, Exposure::AnyBac, &self.ascvd);
        let summary = Under50Summary {
            schema_version: "under50-anybac.v1",
            n_under_50: members.len(),
            groups: entry.groups,
            logrank: entry.logrank,
            model,
        };
        files.push(self.write_json("under50/summary.json", &summary)?);
        Ok(files)
    }

    /// Survival stratified by pooled-cohort risk category instead of
    /// calcification, over the subjects whose risk is computable.
    fn ascvd_unit(&self) -> Result<Vec<String>> {
        let mut excluded = [0usize; 3];
        let mut labeled: Vec<(String, Vec<Observation>)> = Vec::new();
        let mut counts = [0usize; 4];
        for category in RiskCategory::ALL {
            let obs: Vec<Observation> = self
                .rows
                .iter()
                .zip(&self.ascvd)
                .filter(|(_, a)| a.as_ref().is_ok_and(|r| r.category == category))
                .map(|(r, _)| observation(r, Endpoint::CompositeMace))
                .collect();
            counts[category as usize] = obs.len();
            if !obs.is_empty() {
                labeled.push((category.label().to_string(), obs));
            }
        }
        for a in &self.ascvd {
            match a {
                Err(r) if *r == EXCL_RACE => excluded[0] += 1,
                Err(r) if *r == EXCL_MISSING => excluded[1] += 1,
                Err(_) => excluded[2] += 1,
                Ok(_) => {}
            }
        }
        let included: usize = counts.iter().sum();
        if included == 0 {
            return Err(Error::InvalidInput(
                "no subject has a computable ten-year risk".into(),
            ));
        }

        let title = format!("{} by ten-year risk category", Endpoint::CompositeMace.label());
        let (mut files, entry) = self.km_outputs("ascvd/km", &title, &labeled)?;
        let summary = AscvdSummary {
            schema_version: "ascvd-strata.v1",
            included,
            excluded_race_not_covered: excluded[0],
            excluded_missing_inputs: excluded[1],
            excluded_out_of_range: excluded[2],
            groups: entry.groups,
            logrank: entry.logrank,
        };
        files.push(self.write_json("ascvd/summary.json", &summary)?);
        Ok(files)
    }

    /// One labeled bundle: every configured endpoint crossed with both
    /// exposure codings under the given adjustment covariates.
    fn cox_unit(&self, model_name: &str, covariates: &[Covariate]) -> Result<Vec<String>> {
        if self.rows.is_empty() {
            return Err(Error::InvalidInput("no eligible subjects to fit".into()));
        }
        let mut cells = Vec::new();
        for &endpoint in &self.config.endpoints {
            for exposure in [Exposure::SeverityGrades, Exposure::Log2Bac] {
                cells.push(fit_cell(self.rows, covariates, endpoint, exposure, &self.ascvd));
            }
        }
        let bundle = CoxBundle {
            schema_version: "cox-bundle.v1",
            model: model_name,
            covariates: covariates.iter().flat_map(|c| c.columns()).copied().collect(),
            cells,
        };
        let rel = format!("cox/{}.json", slugify(model_name));
        Ok(vec![self.write_json(&rel, &bundle)?])
    }

    fn sweep_unit(&self) -> Result<Vec<String>> {
        let subjects: Vec<SweepSubject> = self
            .rows
            .iter()
            .map(|r| {
                let outcome = r.outcome(Endpoint::CompositeMace);
                SweepSubject {
                    bac_area_mm2: r.bac_area_mm2,
                    duration: outcome.duration_years(),
                    event: outcome.event,
                }
            })
            .collect();
        let result = sweep_thresholds(&subjects, &self.config.sweep)?;
        Ok(vec![
            self.write_text("sweep/trace.csv", &sweep_trace_csv(&result.trace)?)?,
            self.write_text("sweep/best.json", &sweep_best_json(&result)?)?,
        ])
    }
}

/// The full evaluated grid as CSV, one row per converged candidate pair.
pub fn sweep_trace_csv(trace: &[crate::sweep::SweepPoint]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "t1",
        "t2",
        "n_no_bac",
        "n_mild",
        "n_moderate",
        "n_severe",
        "hr_mild",
        "hr_moderate",
        "hr_severe",
        "objective",
    ])?;
    for p in trace {
        writer.write_record([
            p.t1.to_string(),
            p.t2.to_string(),
            p.group_sizes[0].to_string(),
            p.group_sizes[1].to_string(),
            p.group_sizes[2].to_string(),
            p.group_sizes[3].to_string(),
            p.hazard_ratios[0].to_string(),
            p.hazard_ratios[1].to_string(),
            p.hazard_ratios[2].to_string(),
            p.objective.to_string(),
        ])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// The winning pair with its diagnostics and subject-level refit, as pretty
/// JSON. The trace is deliberately left out, it goes in the CSV.
pub fn sweep_best_json(result: &crate::sweep::SweepResult) -> Result<String> {
    let summary = SweepSummary {
        schema_version: "sweep-result.v1",
        objective: result.objective.key(),
        best: &result.best,
        binding_gap: result.binding_gap,
        binding_gap_std_err: result.binding_gap_std_err,
        non_separating: result.non_separating,
        total_pairs: result.total_pairs,
        evaluated: result.evaluated,
        skipped_small_group: result.skipped_small_group,
        failed_fits: result.failed_fits,
        best_fit: &result.best_fit,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    Ok(text)
}

/// One subject's follow-up for an endpoint as a survival observation.
pub fn observation(row: &AnalysisRow, endpoint: Endpoint) -> Observation {
    let outcome = row.outcome(endpoint);
    if outcome.event {
        Observation::event(outcome.duration_years())
    } else {
        Observation::censored(outcome.duration_years())
    }
}

/// Build the design for one cell and fit it. Missing covariate values drop
/// the subject from this cell only; the drop count is part of the cell.
/// `ascvd` comes from [`ascvd_assignments`] over the same rows.
pub fn fit_cell(
    rows: &[AnalysisRow],
    covariates: &[Covariate],
    endpoint: Endpoint,
    exposure: Exposure,
    ascvd: &[std::result::Result<AscvdResult, &'static str>],
) -> CoxCell {
    let mut names: Vec<&'static str> = exposure.columns().to_vec();
    for c in covariates {
        names.extend_from_slice(c.columns());
    }

    let mut design: Vec<CoxRow> = Vec::with_capacity(rows.len());
    let mut dropped = 0usize;
    for (i, row) in rows.iter().enumerate() {
        let mut values = exposure.values(row);
        let mut complete = true;
        for c in covariates {
            match covariate_values(*c, row, i, ascvd) {
                Some(mut v) => values.append(&mut v),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            dropped += 1;
            continue;
        }
        let outcome = row.outcome(endpoint);
        design.push(CoxRow {
            duration: outcome.duration_years(),
            event: outcome.event,
            covariates: values,
        });
    }

    let n_events = design.iter().filter(|r| r.event).count();
    let base = CoxCell {
        endpoint: endpoint.key(),
        exposure: exposure.key(),
        n_total: rows.len(),
        n_used: design.len(),
        n_dropped_missing: dropped,
        n_events,
        converged: false,
        terms: Vec::new(),
        dropped_constant: Vec::new(),
        error: None,
    };

    match cox_fit(&design, &names, CoxOptions::default()) {
        Ok(fit) => CoxCell {
            converged: fit.converged,
            terms: fit
                .coefficients
                .iter()
                .map(|c| CoxTerm {
                    term: c.name.clone(),
                    hazard_ratio: c.hazard_ratio,
                    ci_lower: c.ci_lower,
                    ci_upper: c.ci_upper,
                    p_value: c.p_value,
                })
                .collect(),
            dropped_constant: fit.dropped_constant.clone(),
            ..base
        },
        Err(e) => CoxCell { error: Some(e.to_string()), ..base },
    }
}

fn covariate_values(
    c: Covariate,
    row: &AnalysisRow,
    i: usize,
    ascvd: &[std::result::Result<AscvdResult, &'static str>],
) -> Option<Vec<f64>> {
    let flag = |b: bool| vec![f64::from(u8::from(b))];
    match c {
        Covariate::Age => Some(vec![row.age_at_index]),
        Covariate::Race => Some(vec![
            f64::from(u8::from(row.race == Race::Asian)),
            f64::from(u8::from(row.race == Race::Black)),
            f64::from(u8::from(row.race == Race::Other)),
        ]),
        Covariate::Diabetes => Some(flag(row.diabetes)),
        Covariate::Smoking => Some(flag(row.smoking)),
        Covariate::Statins => Some(flag(row.on_statin)),
        Covariate::Antihypertensives => Some(flag(row.on_antihypertensive)),
        Covariate::SystolicBp => row.systolic_bp.map(|v| vec![v]),
        Covariate::TotalCholesterol => row.total_cholesterol.map(|v| vec![v]),
        Covariate::Hdl => row.hdl.map(|v| vec![v]),
        Covariate::Egfr => row.egfr.map(|v| vec![v]),
        Covariate::AscvdRisk => ascvd[i].as_ref().ok().map(|r| vec![r.ten_year_risk]),
    }
}

/// Points CSV across all groups of one figure, one row per event time.
pub fn km_points_csv(curves: &[(String, KmCurve)]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record([
        "group",
        "time",
        "n_at_risk",
        "n_events",
        "survival",
        "std_err",
        "ci_lower",
        "ci_upper",
    ])?;
    for (label, curve) in curves {
        for p in &curve.points {
            writer.write_record([
                label.clone(),
                p.time.to_string(),
                p.n_at_risk.to_string(),
                p.n_events.to_string(),
                p.survival.to_string(),
                p.std_err.to_string(),
                p.ci_lower.to_string(),
                p.ci_upper.to_string(),
            ])?;
        }
    }
    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
