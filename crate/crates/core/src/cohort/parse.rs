//! Schema-mapped CSV ingestion for subject and diagnosis tables.
//!
//! Column names are configurable through [`ColumnMap`] so source extracts
//! keep their institutional headers. Structural problems (a missing required
//! column) fail the whole parse; row-level problems (bad date, under-age
//! subject, negative area) reject that row with its 1-based line number and
//! leave the rest of the file usable.

use crate::bac::{area_mm2, MaskSummary};
use crate::cohort::{DiagnosisRecord, Race, SubjectRecord};
use crate::error::{Error, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::Read;

fn default_date_format() -> String {
    "%Y-%m-%d".to_string()
}

macro_rules! default_col {
    ($fn_name:ident, $name:literal) => {
        fn $fn_name() -> String {
            $name.to_string()
        }
    };
}

default_col!(col_subject_id, "subject_id");
default_col!(col_index_date, "index_date");
default_col!(col_age, "age_at_index");
default_col!(col_race, "race");
default_col!(col_hispanic, "hispanic");
default_col!(col_diabetes, "diabetes");
default_col!(col_smoking, "smoking");
default_col!(col_on_statin, "on_statin");
default_col!(col_on_antihypertensive, "on_antihypertensive");
default_col!(col_systolic_bp, "systolic_bp");
default_col!(col_total_cholesterol, "total_cholesterol");
default_col!(col_hdl, "hdl");
default_col!(col_bmi, "bmi");
default_col!(col_egfr, "egfr");
default_col!(col_bac_area, "bac_area_mm2");
default_col!(col_pixel_count, "positive_pixel_count");
default_col!(col_row_spacing, "row_spacing_mm");
default_col!(col_col_spacing, "col_spacing_mm");
default_col!(col_last_followup, "last_followup_date");
default_col!(col_death_date, "death_date");
default_col!(col_code, "code");
default_col!(col_code_date, "code_date");

/// Maps canonical subject fields to the column names in the source table.
/// Every field defaults to its canonical name, so a table that already uses
/// them needs no configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    #[serde(default = "col_subject_id")]
    pub subject_id: String,
    #[serde(default = "col_index_date")]
    pub index_date: String,
    #[serde(default = "col_age")]
    pub age_at_index: String,
    #[serde(default = "col_race")]
    pub race: String,
    #[serde(default = "col_hispanic")]
    pub hispanic: String,
    #[serde(default = "col_diabetes")]
    pub diabetes: String,
    #[serde(default = "col_smoking")]
    pub smoking: String,
    #[serde(default = "col_on_statin")]
    pub on_statin: String,
    #[serde(default = "col_on_antihypertensive")]
    pub on_antihypertensive: String,
    #[serde(default = "col_systolic_bp")]
    pub systolic_bp: String,
    #[serde(default = "col_total_cholesterol")]
    pub total_cholesterol: String,
    #[serde(default = "col_hdl")]
    pub hdl: String,
    #[serde(default = "col_bmi")]
    pub bmi: String,
    #[serde(default = "col_egfr")]
    pub egfr: String,
    /// Precomputed BAC area column. Mutually exclusive per row with the
    /// pixel-summary columns.
    #[serde(default = "col_bac_area")]
    pub bac_area_mm2: String,
    #[serde(default = "col_pixel_count")]
    pub positive_pixel_count: String,
    #[serde(default = "col_row_spacing")]
    pub row_spacing_mm: String,
    #[serde(default = "col_col_spacing")]
    pub col_spacing_mm: String,
    #[serde(default = "col_last_followup")]
    pub last_followup_date: String,
    #[serde(default = "col_death_date")]
    pub death_date: String,
    /// chrono format string for all date columns.
    #[serde(default = "default_date_format")]
    pub date_format: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            subject_id: col_subject_id(),
            index_date: col_index_date(),
            age_at_index: col_age(),
            race: col_race(),
            hispanic: col_hispanic(),
            diabetes: col_diabetes(),
            smoking: col_smoking(),
            on_statin: col_on_statin(),
            on_antihypertensive: col_on_antihypertensive(),
            systolic_bp: col_systolic_bp(),
            total_cholesterol: col_total_cholesterol(),
            hdl: col_hdl(),
            bmi: col_bmi(),
            egfr: col_egfr(),
            bac_area_mm2: col_bac_area(),
            positive_pixel_count: col_pixel_count(),
            row_spacing_mm: col_row_spacing(),
            col_spacing_mm: col_col_spacing(),
            last_followup_date: col_last_followup(),
            death_date: col_death_date(),
            date_format: default_date_format(),
        }
    }
}

/// Column mapping for the diagnosis table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosisColumnMap {
    #[serde(default = "col_subject_id")]
    pub subject_id: String,
    #[serde(default = "col_code")]
    pub code: String,
    #[serde(default = "col_code_date")]
    pub code_date: String,
    #[serde(default = "default_date_format")]
    pub date_format: String,
}

impl Default for DiagnosisColumnMap {
    fn default() -> Self {
        DiagnosisColumnMap {
            subject_id: col_subject_id(),
            code: col_code(),
            code_date: col_code_date(),
            date_format: default_date_format(),
        }
    }
}

/// A rejected row: source line number (1-based, header is line 1) plus the
/// reason it was dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowDiagnostic {
    pub line: u64,
    pub message: String,
}

/// Parse outcome: accepted records plus per-row rejections. Every data row
/// of the input ends up in exactly one of the two.
#[derive(Debug)]
pub struct ParsedSubjects {
    pub subjects: Vec<SubjectRecord>,
    pub rejected: Vec<RowDiagnostic>,
}

#[derive(Debug)]
pub struct ParsedDiagnoses {
    pub diagnoses: Vec<DiagnosisRecord>,
    pub rejected: Vec<RowDiagnostic>,
}

struct HeaderIndex {
    by_name: HashMap<String, usize>,
}

impl HeaderIndex {
    fn new(headers: &csv::StringRecord) -> Self {
        let by_name = headers
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        HeaderIndex { by_name }
    }

    fn require(&self, col: &str) -> Result<usize> {
        self.by_name
            .get(col)
            .copied()
            .ok_or_else(|| Error::Schema(format!("required column `{col}` not found in header")))
    }

    fn optional(&self, col: &str) -> Option<usize> {
        self.by_name.get(col).copied()
    }
}

fn cell<'r>(record: &'r csv::StringRecord, idx: usize) -> &'r str {
    record.get(idx).unwrap_or("").trim()
}

fn opt_cell<'r>(record: &'r csv::StringRecord, idx: Option<usize>) -> Option<&'r str> {
    idx.map(|i| cell(record, i)).filter(|s| !s.is_empty())
}

fn parse_date(value: &str, format: &str, col: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(value, format)
        .map_err(|_| format!("column `{col}`: cannot parse `{value}` as date with format `{format}`"))
}

fn parse_f64(value: &str, col: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("column `{col}`: cannot parse `{value}` as a number"))
}

fn parse_bool(value: &str, col: &str) -> std::result::Result<bool, String> {
    match value.to_ascii_lowercase().as_str() {
        "1" | "true" | "t" | "yes" | "y" => Ok(true),
        "0" | "false" | "f" | "no" | "n" => Ok(false),
        _ => Err(format!("column `{col}`: cannot parse `{value}` as a boolean")),
    }
}

/// Read the subject table.
///
/// Required columns: id, index date, age, race, the four treatment/history
/// flags, last follow-up date, and a BAC source. The BAC source may be the
/// precomputed area column, the pixel-summary triple, or both columns
/// present in the header; per row exactly one of the two forms must be
/// filled. Missing optional cells become `None`, never zero.
pub fn parse_cohort<R: Read>(reader: R, map: &ColumnMap) -> Result<ParsedSubjects> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = HeaderIndex::new(&headers);

    let subject_id = idx.require(&map.subject_id)?;
    let index_date = idx.require(&map.index_date)?;
    let age = idx.require(&map.age_at_index)?;
    let race = idx.require(&map.race)?;
    let hispanic = idx.require(&map.hispanic)?;
    let diabetes = idx.require(&map.diabetes)?;
    let smoking = idx.require(&map.smoking)?;
    let on_statin = idx.require(&map.on_statin)?;
    let on_antihypertensive = idx.require(&map.on_antihypertensive)?;
    let last_followup = idx.require(&map.last_followup_date)?;

    let bac_area = idx.optional(&map.bac_area_mm2);
    let pixel_count = idx.optional(&map.positive_pixel_count);
    let row_spacing = idx.optional(&map.row_spacing_mm);
    let col_spacing = idx.optional(&map.col_spacing_mm);
    let has_mask_cols = pixel_count.is_some() && row_spacing.is_some() && col_spacing.is_some();
    if bac_area.is_none() && !has_mask_cols {
        return Err(Error::Schema(format!(
            "no BAC source: need column `{}` or the triple `{}`/`{}`/`{}`",
            map.bac_area_mm2, map.positive_pixel_count, map.row_spacing_mm, map.col_spacing_mm
        )));
    }

    let systolic_bp = idx.optional(&map.systolic_bp);
    let total_cholesterol = idx.optional(&map.total_cholesterol);
    let hdl = idx.optional(&map.hdl);
    let bmi = idx.optional(&map.bmi);
    let egfr = idx.optional(&map.egfr);
    let death_date = idx.optional(&map.death_date);

    let mut subjects = Vec::new();
    let mut rejected = Vec::new();
    let mut seen_ids: HashMap<String, u64> = HashMap::new();

    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2; // header occupies line 1
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowDiagnostic { line, message: format!("malformed CSV record: {e}") });
                continue;
            }
        };

        let row = || -> std::result::Result<SubjectRecord, String> {
            let id = cell(&rec, subject_id);
            if id.is_empty() {
                return Err(format!("column `{}`: empty subject id", map.subject_id));
            }
            if let Some(first) = seen_ids.get(id) {
                return Err(format!("duplicate subject id `{id}` (first seen on line {first})"));
            }

            let index = parse_date(cell(&rec, index_date), &map.date_format, &map.index_date)?;
            let followup =
                parse_date(cell(&rec, last_followup), &map.date_format, &map.last_followup_date)?;
            let age_v = parse_f64(cell(&rec, age), &map.age_at_index)?;
            let race_v = Race::parse(cell(&rec, race)).ok_or_else(|| {
                format!("column `{}`: unknown race `{}`", map.race, cell(&rec, race))
            })?;

            let area_cell = opt_cell(&rec, bac_area);
            let mask_cells = if has_mask_cols {
                let p = opt_cell(&rec, pixel_count);
                let r = opt_cell(&rec, row_spacing);
                let c = opt_cell(&rec, col_spacing);
                match (p, r, c) {
                    (Some(p), Some(r), Some(c)) => Some((p, r, c)),
                    (None, None, None) => None,
                    _ => return Err("pixel-summary columns are partially filled".to_string()),
                }
            } else {
                None
            };
            let bac_v = match (area_cell, mask_cells) {
                (Some(_), Some(_)) => {
                    return Err("row supplies both a BAC area and a pixel summary; they are mutually exclusive".to_string())
                }
                (None, None) => return Err("row supplies no BAC measurement".to_string()),
                (Some(a), None) => parse_f64(a, &map.bac_area_mm2)?,
                (None, Some((p, r, c))) => {
                    let mask = MaskSummary {
                        positive_pixel_count: p
                            .parse::<u64>()
                            .map_err(|_| format!("column `{}`: cannot parse `{p}` as a count", map.positive_pixel_count))?,
                        row_spacing_mm: parse_f64(r, &map.row_spacing_mm)?,
                        col_spacing_mm: parse_f64(c, &map.col_spacing_mm)?,
                    };
                    area_mm2(&mask).map_err(|e| e.to_string())?
                }
            };

            let opt_num = |icell: Option<usize>, name: &str| -> std::result::Result<Option<f64>, String> {
                match opt_cell(&rec, icell) {
                    Some(v) => Ok(Some(parse_f64(v, name)?)),
                    None => Ok(None),
                }
            };

            let death = match opt_cell(&rec, death_date) {
                Some(v) => Some(parse_date(v, &map.date_format, &map.death_date)?),
                None => None,
            };

            let record = SubjectRecord {
                subject_id: id.to_string(),
                index_date: index,
                age_at_index: age_v,
                race: race_v,
                hispanic: parse_bool(cell(&rec, hispanic), &map.hispanic)?,
                diabetes: parse_bool(cell(&rec, diabetes), &map.diabetes)?,
                smoking: parse_bool(cell(&rec, smoking), &map.smoking)?,
                on_statin: parse_bool(cell(&rec, on_statin), &map.on_statin)?,
                on_antihypertensive: parse_bool(cell(&rec, on_antihypertensive), &map.on_antihypertensive)?,
                systolic_bp: opt_num(systolic_bp, &map.systolic_bp)?,
                total_cholesterol: opt_num(total_cholesterol, &map.total_cholesterol)?,
                hdl: opt_num(hdl, &map.hdl)?,
                bmi: opt_num(bmi, &map.bmi)?,
                egfr: opt_num(egfr, &map.egfr)?,
                bac_area_mm2: bac_v,
                last_followup_date: followup,
                death_date: death,
            };
            record.validate().map_err(|e| e.to_string())?;
            Ok(record)
        };

        match row() {
            Ok(subject) => {
                seen_ids.insert(subject.subject_id.clone(), line);
                subjects.push(subject);
            }
            Err(message) => rejected.push(RowDiagnostic { line, message }),
        }
    }

    Ok(ParsedSubjects { subjects, rejected })
}

/// Read the diagnosis table. Row-level failures are collected, not fatal.
pub fn parse_diagnoses<R: Read>(reader: R, map: &DiagnosisColumnMap) -> Result<ParsedDiagnoses> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx = HeaderIndex::new(&headers);

    let subject_id = idx.require(&map.subject_id)?;
    let code = idx.require(&map.code)?;
    let code_date = idx.require(&map.code_date)?;

    let mut diagnoses = Vec::new();
    let mut rejected = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RowDiagnostic { line, message: format!("malformed CSV record: {e}") });
                continue;
            }
        };
        let id = cell(&rec, subject_id);
        let code_v = cell(&rec, code);
        if id.is_empty() || code_v.is_empty() {
            rejected.push(RowDiagnostic { line, message: "empty subject id or code".to_string() });
            continue;
        }
        match parse_date(cell(&rec, code_date), &map.date_format, &map.code_date) {
            Ok(d) => diagnoses.push(DiagnosisRecord {
                subject_id: id.to_string(),
                code: code_v.to_string(),
                code_date: d,
            }),
            Err(message) => rejected.push(RowDiagnostic { line, message }),
        }
    }
    Ok(ParsedDiagnoses { diagnoses, rejected })
}
