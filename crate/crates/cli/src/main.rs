//! Command line front end. Each subcommand wraps one library entry point;
//! the full `report` pipeline chains them all.
//!
//! Exit codes: 0 on success, 1 when an analysis fails on valid input (a
//! model diverges, a validation tolerance is missed, a pipeline analysis
//! errors), 2 when the input itself is unusable (missing file, unknown
//! column, malformed config).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bacsurv::ascvd::{ascvd_score, AscvdInput, RaceGroup, Sex};
use bacsurv::bac::{Severity, SeverityThresholds};
use bacsurv::cohort::{
    assemble_cohort, default_mace_code_sets,
    parse::{parse_cohort, parse_diagnoses, ColumnMap, DiagnosisColumnMap},
    table::{read_analysis_csv, write_analysis_csv},
    AnalysisRow, CohortBuild, Endpoint,
};
use bacsurv::report::{
    ascvd_assignments, fit_cell, km_points_csv, observation, run_pipeline, sweep_best_json,
    sweep_trace_csv, Covariate, Exposure, RunConfig,
};
use bacsurv::sim::{simulate, write_raw_tables, SimConfig};
use bacsurv::survival::{km_curve, logrank_test, KmCurve, Observation};
use bacsurv::sweep::{sweep_thresholds, SweepConfig, SweepSubject};
use bacsurv::table1::{build_table1, Table1Variable};
use bacsurv::{Error, Result};

#[derive(Parser)]
#[command(
    name = "bacsurv",
    version,
    about = "Survival analysis for breast arterial calcification cohorts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Raw source tables plus the knobs that turn them into an eligible cohort.
#[derive(Args)]
struct RawInputArgs {
    /// Subject table CSV.
    #[arg(long)]
    subjects: PathBuf,
    /// Diagnosis table CSV.
    #[arg(long)]
    diagnoses: PathBuf,
    /// JSON file remapping subject column names.
    #[arg(long)]
    subject_columns: Option<PathBuf>,
    /// JSON file remapping diagnosis column names.
    #[arg(long)]
    diagnosis_columns: Option<PathBuf>,
    /// Years of follow-up a censored subject must reach to stay eligible.
    #[arg(long, default_value_t = 5.0)]
    min_followup_years: f64,
}

#[derive(Args)]
struct ThresholdArgs {
    /// Area below which calcification counts as segmentation noise (mm^2).
    #[arg(long, default_value_t = 2.0)]
    noise_floor: f64,
    /// Mild/moderate boundary (mm^2).
    #[arg(long, default_value_t = 10.0)]
    mild_upper: f64,
    /// Moderate/severe boundary (mm^2).
    #[arg(long, default_value_t = 40.0)]
    moderate_upper: f64,
}

impl ThresholdArgs {
    fn build(&self) -> Result<SeverityThresholds> {
        SeverityThresholds::new(self.noise_floor, self.mild_upper, self.moderate_upper)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse raw tables, apply eligibility, and write the analysis cohort.
    Ingest {
        #[command(flatten)]
        input: RawInputArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Output path for the flattened analysis cohort CSV.
        #[arg(long)]
        out: PathBuf,
        /// Optional path for the exclusion report JSON.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Demographic comparison table across severity and event status.
    Table1 {
        #[command(flatten)]
        input: RawInputArgs,
        #[command(flatten)]
        thresholds: ThresholdArgs,
        /// Endpoint defining the event split.
        #[arg(long, default_value = "mace", value_parser = endpoint_parser)]
        endpoint: Endpoint,
        /// Comma-separated variable subset; all variables when omitted.
        #[arg(long, value_delimiter = ',', value_parser = variable_parser)]
        variables: Vec<Table1Variable>,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Kaplan-Meier curves by severity group.
    Km {
        /// Analysis cohort CSV from `ingest`.
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "mace", value_parser = endpoint_parser)]
        endpoint: Endpoint,
        /// Keep subjects at or above this age.
        #[arg(long)]
        min_age: Option<f64>,
        /// Keep subjects under this age.
        #[arg(long)]
        max_age: Option<f64>,
        /// Curve points CSV; stdout when omitted.
        #[arg(long)]
        out_csv: Option<PathBuf>,
        /// Rendered figure.
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
    /// Log-rank test across the severity groups.
    Logrank {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "mace", value_parser = endpoint_parser)]
        endpoint: Endpoint,
    },
    /// Proportional hazards fit for one endpoint and exposure coding.
    Cox {
        #[arg(long)]
        cohort: PathBuf,
        #[arg(long, default_value = "mace", value_parser = endpoint_parser)]
        endpoint: Endpoint,
        /// Exposure coding: severity, log2_bac, or any_bac.
        #[arg(long, default_value = "severity", value_parser = exposure_parser)]
        exposure: Exposure,
        /// Comma-separated adjustment covariates.
        #[arg(long, value_delimiter = ',', value_parser = covariate_parser)]
        adjust: Vec<Covariate>,
        /// Fit JSON; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Ten-year pooled-cohort risk for every subject in the cohort.
    Ascvd {
        #[arg(long)]
        cohort: PathBuf,
        /// Per-subject CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score reference profiles and compare against expected risks.
    AscvdValidate {
        /// Profiles CSV with an expected_risk column.
        #[arg(long)]
        profiles: PathBuf,
        /// Per-profile comparison CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Minimum acceptable Pearson correlation.
        #[arg(long, default_value_t = 0.99)]
        min_r: f64,
        /// Maximum acceptable absolute risk difference (probability units).
        #[arg(long, default_value_t = 0.005)]
        max_abs_diff: f64,
    },
    /// Grid search for severity thresholds that spread the hazard ratios.
    Sweep {
        #[arg(long)]
        cohort: PathBuf,
        /// Sweep configuration JSON; library defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Evaluated grid CSV.
        #[arg(long)]
        out_trace: Option<PathBuf>,
        /// Winning pair JSON.
        #[arg(long)]
        out_best: Option<PathBuf>,
    },
    /// Generate a synthetic cohort as raw ingestion tables.
    Simulate {
        /// Simulation configuration JSON; defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override the configured cohort size.
        #[arg(long)]
        n: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Subject table output.
        #[arg(long)]
        subjects_out: PathBuf,
        /// Diagnosis table output.
        #[arg(long)]
        diagnoses_out: PathBuf,
    },
    /// Run the full reporting pipeline described by a config file.
    Report {
        /// Run configuration JSON.
        #[arg(long)]
        config: PathBuf,
    },
}

fn endpoint_parser(s: &str) -> std::result::Result<Endpoint, String> {
    Endpoint::parse(s).ok_or_else(|| {
        format!("unknown endpoint `{s}`; expected ami, stroke, heart_failure, death, or mace")
    })
}

fn exposure_parser(s: &str) -> std::result::Result<Exposure, String> {
    Exposure::parse(s)
        .ok_or_else(|| format!("unknown exposure `{s}`; expected severity, log2_bac, or any_bac"))
}

fn covariate_parser(s: &str) -> std::result::Result<Covariate, String> {
    Covariate::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Covariate::ALL.iter().map(|c| c.key()).collect();
        format!("unknown covariate `{s}`; expected one of {}", names.join(", "))
    })
}

fn variable_parser(s: &str) -> std::result::Result<Table1Variable, String> {
    Table1Variable::parse(s).ok_or_else(|| {
        let names: Vec<&str> = Table1Variable::ALL.iter().map(|v| v.key()).collect();
        format!("unknown variable `{s}`; expected one of {}", names.join(", "))
    })
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    std::process::exit(code);
}

/// Input and configuration problems exit 2; failures of an analysis over
/// readable input exit 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Schema(_)
        | Error::Row { .. }
        | Error::InvalidInput(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => 2,
        _ => 1,
    }
}

fn run(command: Command) -> Result<i32> {
    match command {
        Command::Ingest { input, thresholds, out, report } => {
            let thresholds = thresholds.build()?;
            let build = assemble(&input)?;
            let rows: Vec<AnalysisRow> = build
                .eligible
                .iter()
                .map(|e| AnalysisRow::from_subject(e, &thresholds))
                .collect::<Result<_>>()?;
            let file = fs::File::create(&out)?;
            write_analysis_csv(file, &rows)?;
            if let Some(report_path) = report {
                write_json_file(&report_path, &build.report)?;
            }
            let r = &build.report;
            println!(
                "{} input rows: {} eligible, {} parse errors, {} prior events, {} short follow-up -> {}",
                r.input_rows,
                r.eligible,
                r.parse_errors,
                r.excluded_prior_event,
                r.excluded_short_followup,
                out.display()
            );
            Ok(0)
        }
        Command::Table1 { input, thresholds, endpoint, variables, out } => {
            let thresholds = thresholds.build()?;
            let build = assemble(&input)?;
            let variables =
                if variables.is_empty() { Table1Variable::ALL.to_vec() } else { variables };
            let table = build_table1(&build.eligible, &variables, &thresholds, endpoint)?;
            emit(out.as_deref(), &table.to_delimited()?)?;
            Ok(0)
        }
        Command::Km { cohort, endpoint, min_age, max_age, out_csv, out_svg } => {
            let rows = load_rows(&cohort)?;
            let kept: Vec<&AnalysisRow> = rows
                .iter()
                .filter(|r| min_age.map_or(true, |a| r.age_at_index >= a))
                .filter(|r| max_age.map_or(true, |a| r.age_at_index < a))
                .collect();
            let curves = severity_curves(&kept, endpoint)?;
            emit(out_csv.as_deref(), &km_points_csv(&curves)?)?;
            if let Some(svg_path) = out_svg {
                let max_t = curves
                    .iter()
                    .map(|(_, c)| c.max_duration())
                    .fold(1.0f64, f64::max)
                    .ceil();
                let ticks: Vec<f64> = (0..=5).map(|i| max_t * f64::from(i) / 5.0).collect();
                let series: Vec<bacsurv::plot::PlotSeries> = curves
                    .iter()
                    .map(|(label, c)| bacsurv::plot::PlotSeries::from_km(label.clone(), c, &ticks))
                    .collect();
                let config = bacsurv::plot::PlotConfig {
                    title: format!("{} by severity", endpoint.label()),
                    x_ticks: ticks,
                    ..bacsurv::plot::PlotConfig::default()
                };
                fs::write(&svg_path, bacsurv::plot::km_plot_svg(&series, &config)?)?;
            }
            Ok(0)
        }
        Command::Logrank { cohort, endpoint } => {
            let rows = load_rows(&cohort)?;
            let kept: Vec<&AnalysisRow> = rows.iter().collect();
            let groups = severity_observations(&kept, endpoint);
            if groups.len() < 2 {
                return Err(Error::UndefinedStatistic(
                    "log-rank needs at least two non-empty severity groups".into(),
                ));
            }
            let labels: Vec<&str> = groups.iter().map(|(l, _)| l.as_str()).collect();
            let obs: Vec<Vec<Observation>> = groups.iter().map(|(_, o)| o.clone()).collect();
            let test = logrank_test(&obs)?;
            let payload = serde_json::json!({
                "endpoint": endpoint.key(),
                "groups": labels,
                "test": test,
            });
            println!("{}", serde_json::to_string_pretty(&payload)?);
            Ok(0)
        }
        Command::Cox { cohort, endpoint, exposure, adjust, out } => {
            let rows = load_rows(&cohort)?;
            let ascvd = ascvd_assignments(&rows);
            let cell = fit_cell(&rows, &adjust, endpoint, exposure, &ascvd);
            let mut text = serde_json::to_string_pretty(&cell)?;
            text.push('\n');
            emit(out.as_deref(), &text)?;
            if let Some(message) = &cell.error {
                return Err(Error::UndefinedStatistic(format!(
                    "fit failed for {}: {message}",
                    endpoint.key()
                )));
            }
            Ok(0)
        }
        Command::Ascvd { cohort, out } => {
            let rows = load_rows(&cohort)?;
            let assignments = ascvd_assignments(&rows);
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(["subject_id", "ten_year_risk", "category", "excluded_reason"])?;
            for (row, a) in rows.iter().zip(&assignments) {
                let (risk, category, reason) = match a {
                    Ok(r) => (r.ten_year_risk.to_string(), r.category.key().to_string(), String::new()),
                    Err(reason) => (String::new(), String::new(), (*reason).to_string()),
                };
                writer.write_record([row.subject_id.clone(), risk, category, reason])?;
            }
            let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
            emit(out.as_deref(), &String::from_utf8(bytes).expect("csv output is utf-8"))?;
            Ok(0)
        }
        Command::AscvdValidate { profiles, out, min_r, max_abs_diff } => {
            validate_profiles(&profiles, out.as_deref(), min_r, max_abs_diff)
        }
        Command::Sweep { cohort, config, out_trace, out_best } => {
            let rows = load_rows(&cohort)?;
            let sweep_config = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        Error::Schema(format!("cannot read config {}: {e}", path.display()))
                    })?;
                    serde_json::from_str::<SweepConfig>(&text)
                        .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?
                }
                None => SweepConfig::default(),
            };
            let subjects: Vec<SweepSubject> = rows
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
            let result = sweep_thresholds(&subjects, &sweep_config)?;
            if let Some(path) = out_trace {
                fs::write(&path, sweep_trace_csv(&result.trace)?)?;
            }
            if let Some(path) = out_best {
                fs::write(&path, sweep_best_json(&result)?)?;
            }
            println!(
                "best thresholds: t1={} t2={} objective={:.4} ({} of {} pairs evaluated)",
                result.best.t1,
                result.best.t2,
                result.best.objective,
                result.evaluated,
                result.total_pairs
            );
            if result.non_separating {
                eprintln!(
                    "warning: the winning pair does not separate its neighbouring groups at the one-sided 5% level"
                );
            }
            Ok(0)
        }
        Command::Simulate { config, n, seed, subjects_out, diagnoses_out } => {
            let mut sim_config = match config {
                Some(path) => {
                    let text = fs::read_to_string(&path).map_err(|e| {
                        Error::Schema(format!("cannot read config {}: {e}", path.display()))
                    })?;
                    serde_json::from_str::<SimConfig>(&text)
                        .map_err(|e| Error::Schema(format!("config {}: {e}", path.display())))?
                }
                None => SimConfig::default(),
            };
            if let Some(n) = n {
                sim_config.n_subjects = n;
            }
            if let Some(seed) = seed {
                sim_config.seed = seed;
            }
            let subjects = simulate(&sim_config)?;
            let events = subjects.iter().filter(|s| s.event).count();
            write_raw_tables(
                &subjects,
                fs::File::create(&subjects_out)?,
                fs::File::create(&diagnoses_out)?,
            )?;
            println!(
                "simulated {} subjects ({} events) -> {} + {}",
                subjects.len(),
                events,
                subjects_out.display(),
                diagnoses_out.display()
            );
            Ok(0)
        }
        Command::Report { config } => {
            let run_config = RunConfig::from_file(&config)?;
            let summary = run_pipeline(&run_config)?;
            for failure in summary.failures() {
                eprintln!(
                    "analysis {} failed: {}",
                    failure.analysis,
                    failure.error.as_deref().unwrap_or("unknown")
                );
            }
            let failed = summary.failures().len();
            println!(
                "{} analyses, {} failed, outputs in {}",
                summary.analyses.len(),
                failed,
                summary.output_dir.display()
            );
            Ok(if summary.all_ok() { 0 } else { 1 })
        }
    }
}

fn assemble(input: &RawInputArgs) -> Result<CohortBuild> {
    let subject_map: ColumnMap = match &input.subject_columns {
        Some(path) => load_json(path)?,
        None => ColumnMap::default(),
    };
    let diagnosis_map: DiagnosisColumnMap = match &input.diagnosis_columns {
        Some(path) => load_json(path)?,
        None => DiagnosisColumnMap::default(),
    };
    let subjects_file = fs::File::open(&input.subjects).map_err(|e| {
        Error::Schema(format!("cannot open subject table {}: {e}", input.subjects.display()))
    })?;
    let parsed_subjects = parse_cohort(subjects_file, &subject_map)?;
    let diagnoses_file = fs::File::open(&input.diagnoses).map_err(|e| {
        Error::Schema(format!("cannot open diagnosis table {}: {e}", input.diagnoses.display()))
    })?;
    let parsed_diagnoses = parse_diagnoses(diagnoses_file, &diagnosis_map)?;
    let row_errors = parsed_subjects.rejected.len() + parsed_diagnoses.rejected.len();
    assemble_cohort(
        parsed_subjects.subjects,
        &parsed_diagnoses.diagnoses,
        &default_mace_code_sets(),
        input.min_followup_years,
        row_errors,
    )
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Schema(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

fn write_json_file<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(fs::write(path, text)?)
}

fn load_rows(path: &Path) -> Result<Vec<AnalysisRow>> {
    let file = fs::File::open(path).map_err(|e| {
        Error::Schema(format!("cannot open cohort table {}: {e}", path.display()))
    })?;
    read_analysis_csv(file)
}

fn severity_observations(
    rows: &[&AnalysisRow],
    endpoint: Endpoint,
) -> Vec<(String, Vec<Observation>)> {
    let mut groups = Vec::new();
    for severity in Severity::ALL {
        let obs: Vec<Observation> = rows
            .iter()
            .filter(|r| r.severity == severity)
            .map(|r| observation(r, endpoint))
            .collect();
        if !obs.is_empty() {
            groups.push((severity.label().to_string(), obs));
        }
    }
    groups
}

fn severity_curves(rows: &[&AnalysisRow], endpoint: Endpoint) -> Result<Vec<(String, KmCurve)>> {
    let groups = severity_observations(rows, endpoint);
    if groups.is_empty() {
        return Err(Error::InvalidInput("no subjects after filtering".into()));
    }
    groups
        .into_iter()
        .map(|(label, obs)| km_curve(&obs).map(|c| (label, c)))
        .collect()
}

/// Write to the path, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => Ok(fs::write(path, text)?),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn validate_profiles(
    profiles: &Path,
    out: Option<&Path>,
    min_r: f64,
    max_abs_diff: f64,
) -> Result<i32> {
    let file = fs::File::open(profiles).map_err(|e| {
        Error::Schema(format!("cannot open profiles {}: {e}", profiles.display()))
    })?;
    let mut reader = csv::Reader::from_reader(file);
    let headers = reader.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("profiles file is missing column `{name}`")))
    };
    let sex_i = col("sex")?;
    let race_i = col("race_group")?;
    let age_i = col("age_years")?;
    let tc_i = col("total_cholesterol")?;
    let hdl_i = col("hdl")?;
    let sbp_i = col("systolic_bp")?;
    let bp_rx_i = col("on_bp_treatment")?;
    let smoker_i = col("smoker")?;
    let diabetic_i = col("diabetic")?;
    let expected_i = col("expected_risk")?;

    let parse_bool = |v: &str, line: u64| -> Result<bool> {
        match v.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "t" | "yes" | "y" => Ok(true),
            "0" | "false" | "f" | "no" | "n" => Ok(false),
            other => Err(Error::Row { line, message: format!("`{other}` is not a boolean") }),
        }
    };
    let parse_num = |v: &str, line: u64, name: &str| -> Result<f64> {
        v.trim().parse::<f64>().map_err(|_| Error::Row {
            line,
            message: format!("column `{name}`: `{v}` is not a number"),
        })
    };

    let mut computed = Vec::new();
    let mut expected = Vec::new();
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["expected_risk", "computed_risk", "abs_diff"])?;
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let line = i as u64 + 2;
        let sex = match record.get(sex_i).unwrap_or("").trim().to_ascii_lowercase().as_str() {
            "female" | "f" => Sex::Female,
            "male" | "m" => Sex::Male,
            other => {
                return Err(Error::Row { line, message: format!("`{other}` is not a sex") });
            }
        };
        let race_group = match record.get(race_i).unwrap_or("").trim().to_ascii_lowercase().as_str()
        {
            "white_or_other" | "white" | "other" => RaceGroup::WhiteOrOther,
            "african_american" | "black" => RaceGroup::AfricanAmerican,
            other => {
                return Err(Error::Row {
                    line,
                    message: format!("`{other}` is not a covered race group"),
                });
            }
        };
        let input = AscvdInput {
            sex,
            race_group,
            age_years: parse_num(record.get(age_i).unwrap_or(""), line, "age_years")?,
            total_cholesterol_mgdl: parse_num(
                record.get(tc_i).unwrap_or(""),
                line,
                "total_cholesterol",
            )?,
            hdl_mgdl: parse_num(record.get(hdl_i).unwrap_or(""), line, "hdl")?,
            systolic_bp_mmhg: parse_num(record.get(sbp_i).unwrap_or(""), line, "systolic_bp")?,
            on_bp_treatment: parse_bool(record.get(bp_rx_i).unwrap_or(""), line)?,
            smoker: parse_bool(record.get(smoker_i).unwrap_or(""), line)?,
            diabetic: parse_bool(record.get(diabetic_i).unwrap_or(""), line)?,
        };
        let want = parse_num(record.get(expected_i).unwrap_or(""), line, "expected_risk")?;
        let got = ascvd_score(&input)?.ten_year_risk;
        writer.write_record([
            want.to_string(),
            got.to_string(),
            (got - want).abs().to_string(),
        ])?;
        expected.push(want);
        computed.push(got);
    }
    if computed.len() < 2 {
        return Err(Error::InvalidInput("need at least two profiles to validate".into()));
    }

    let bytes = writer.into_inner().map_err(|e| Error::InvalidInput(e.to_string()))?;
    emit(out, &String::from_utf8(bytes).expect("csv output is utf-8"))?;

    let r = pearson_r(&expected, &computed);
    let worst = expected
        .iter()
        .zip(&computed)
        .map(|(w, g)| (w - g).abs())
        .fold(0.0f64, f64::max);
    println!(
        "profiles={} pearson_r={:.6} max_abs_diff={:.6}",
        computed.len(),
        r,
        worst
    );
    if r < min_r || worst > max_abs_diff {
        eprintln!(
            "validation failed: need pearson_r >= {min_r} and max_abs_diff <= {max_abs_diff}"
        );
        return Ok(1);
    }
    Ok(0)
}

fn pearson_r(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return f64::NAN;
    }
    cov / (vx * vy).sqrt()
}
