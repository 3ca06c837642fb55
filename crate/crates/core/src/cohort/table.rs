//! Flattened analysis table: one row per eligible subject with the graded
//! severity and all five endpoint outcomes, plus a canonical CSV form.
//!
//! The CSV is the hand-off format between ingestion and every downstream
//! analysis, so both directions live here and a written file reads back
//! bit-identically. Severity is graded once at write time; on read the
//! stored column is authoritative and no regrading happens.

use crate::bac::{log2_bac, Severity, SeverityThresholds};
use crate::cohort::{EligibleSubject, Endpoint, Race, TimeToEvent, DAYS_PER_YEAR};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Outcome of one endpoint for one subject.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EndpointOutcome {
    pub duration_days: f64,
    pub event: bool,
}

impl EndpointOutcome {
    pub fn duration_years(&self) -> f64 {
        self.duration_days / DAYS_PER_YEAR
    }
}

/// One eligible subject, flattened for analysis. Endpoint outcomes are in
/// [`Endpoint::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisRow {
    pub subject_id: String,
    pub age_at_index: f64,
    pub race: Race,
    pub hispanic: bool,
    pub diabetes: bool,
    pub smoking: bool,
    pub on_statin: bool,
    pub on_antihypertensive: bool,
    pub systolic_bp: Option<f64>,
    pub total_cholesterol: Option<f64>,
    pub hdl: Option<f64>,
    pub bmi: Option<f64>,
    pub egfr: Option<f64>,
    pub bac_area_mm2: f64,
    pub severity: Severity,
    pub endpoints: [EndpointOutcome; 5],
}

impl AnalysisRow {
    /// Grade severity and flatten one eligible subject.
    pub fn from_subject(e: &EligibleSubject, thresholds: &SeverityThresholds) -> Result<AnalysisRow> {
        let severity = e.severity(thresholds)?;
        let flat = |r: &TimeToEvent| EndpointOutcome {
            duration_days: r.duration_days,
            event: r.is_event(),
        };
        Ok(AnalysisRow {
            subject_id: e.subject.subject_id.clone(),
            age_at_index: e.subject.age_at_index,
            race: e.subject.race,
            hispanic: e.subject.hispanic,
            diabetes: e.subject.diabetes,
            smoking: e.subject.smoking,
            on_statin: e.subject.on_statin,
            on_antihypertensive: e.subject.on_antihypertensive,
            systolic_bp: e.subject.systolic_bp,
            total_cholesterol: e.subject.total_cholesterol,
            hdl: e.subject.hdl,
            bmi: e.subject.bmi,
            egfr: e.subject.egfr,
            bac_area_mm2: e.subject.bac_area_mm2,
            severity,
            endpoints: [
                flat(e.record(Endpoint::Ami)),
                flat(e.record(Endpoint::Stroke)),
                flat(e.record(Endpoint::HeartFailure)),
                flat(e.record(Endpoint::Death)),
                flat(e.record(Endpoint::CompositeMace)),
            ],
        })
    }

    pub fn outcome(&self, endpoint: Endpoint) -> &EndpointOutcome {
        &self.endpoints[endpoint.idx()]
    }

    /// log2(area + 1), the transform used for continuous-exposure models.
    pub fn log2_bac(&self) -> f64 {
        log2_bac(self.bac_area_mm2)
    }
}

fn header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "subject_id",
        "age_at_index",
        "race",
        "hispanic",
        "diabetes",
        "smoking",
        "on_statin",
        "on_antihypertensive",
        "systolic_bp",
        "total_cholesterol",
        "hdl",
        "bmi",
        "egfr",
        "bac_area_mm2",
        "severity",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for e in Endpoint::ALL {
        cols.push(format!("{}_days", e.key()));
        cols.push(format!("{}_event", e.key()));
    }
    cols
}

fn fmt_opt(v: Option<f64>) -> String {
    // Shortest round-tripping decimal form, so write-then-read is lossless
    // and repeated runs emit identical bytes.
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_bool(v: bool) -> &'static str {
    if v {
        "1"
    } else {
        "0"
    }
}

/// Write the canonical analysis CSV.
pub fn write_analysis_csv<W: Write>(writer: W, rows: &[AnalysisRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(header())?;
    for r in rows {
        let mut rec: Vec<String> = vec![
            r.subject_id.clone(),
            r.age_at_index.to_string(),
            r.race.key().to_string(),
            fmt_bool(r.hispanic).to_string(),
            fmt_bool(r.diabetes).to_string(),
            fmt_bool(r.smoking).to_string(),
            fmt_bool(r.on_statin).to_string(),
            fmt_bool(r.on_antihypertensive).to_string(),
            fmt_opt(r.systolic_bp),
            fmt_opt(r.total_cholesterol),
            fmt_opt(r.hdl),
            fmt_opt(r.bmi),
            fmt_opt(r.egfr),
            r.bac_area_mm2.to_string(),
            r.severity.key().to_string(),
        ];
        for o in &r.endpoints {
            rec.push(o.duration_days.to_string());
            rec.push(fmt_bool(o.event).to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Read the canonical analysis CSV back. The header must match the written
/// form exactly; the stored severity column is taken as-is.
pub fn read_analysis_csv<R: Read>(reader: R) -> Result<Vec<AnalysisRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let expected = header();
    let got: Vec<String> = rdr.headers()?.iter().map(|s| s.to_string()).collect();
    if got != expected {
        return Err(Error::Schema(format!(
            "analysis table header mismatch: expected {expected:?}, got {got:?}"
        )));
    }

    let parse_f64 = |s: &str, line: u64, col: &str| -> Result<f64> {
        s.parse::<f64>().map_err(|_| Error::Row {
            line,
            message: format!("column `{col}`: cannot parse `{s}` as a number"),
        })
    };
    let parse_opt = |s: &str, line: u64, col: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(s, line, col).map(Some)
        }
    };
    let parse_bool = |s: &str, line: u64, col: &str| -> Result<bool> {
        match s {
            "1" => Ok(true),
            "0" => Ok(false),
            _ => Err(Error::Row {
                line,
                message: format!("column `{col}`: expected 0 or 1, got `{s}`"),
            }),
        }
    };

    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec?;
        let f = |j: usize| rec.get(j).unwrap_or("").trim();

        let severity = Severity::parse(f(14)).ok_or_else(|| Error::Row {
            line,
            message: format!("column `severity`: unknown value `{}`", f(14)),
        })?;
        let race = Race::parse(f(2)).ok_or_else(|| Error::Row {
            line,
            message: format!("column `race`: unknown value `{}`", f(2)),
        })?;

        let mut endpoints = [EndpointOutcome { duration_days: 0.0, event: false }; 5];
        for (k, e) in Endpoint::ALL.into_iter().enumerate() {
            let base = 15 + 2 * k;
            endpoints[k] = EndpointOutcome {
                duration_days: parse_f64(f(base), line, &format!("{}_days", e.key()))?,
                event: parse_bool(f(base + 1), line, &format!("{}_event", e.key()))?,
            };
        }

        rows.push(AnalysisRow {
            subject_id: f(0).to_string(),
            age_at_index: parse_f64(f(1), line, "age_at_index")?,
            race,
            hispanic: parse_bool(f(3), line, "hispanic")?,
            diabetes: parse_bool(f(4), line, "diabetes")?,
            smoking: parse_bool(f(5), line, "smoking")?,
            on_statin: parse_bool(f(6), line, "on_statin")?,
            on_antihypertensive: parse_bool(f(7), line, "on_antihypertensive")?,
            systolic_bp: parse_opt(f(8), line, "systolic_bp")?,
            total_cholesterol: parse_opt(f(9), line, "total_cholesterol")?,
            hdl: parse_opt(f(10), line, "hdl")?,
            bmi: parse_opt(f(11), line, "bmi")?,
            egfr: parse_opt(f(12), line, "egfr")?,
            bac_area_mm2: parse_f64(f(13), line, "bac_area_mm2")?,
            severity,
            endpoints,
        });
    }
    Ok(rows)
}
