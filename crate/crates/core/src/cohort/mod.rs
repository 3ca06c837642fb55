//! Cohort data model: subject records, ICD-coded endpoint events, and the
//! derivation of per-endpoint time-to-event records with an auditable
//! eligibility filter.
//!
//! The flow is: [`parse::parse_cohort`] and [`parse::parse_diagnoses`] read
//! schema-mapped CSV into typed records, [`build_time_to_event`] turns one
//! subject's diagnosis history into five time-to-event records (four
//! component endpoints plus their composite), and [`apply_eligibility`]
//! partitions subjects into the analysis set and counted exclusion bins.
//! Every input row lands in exactly one bin, so the exclusion report always
//! adds back up to the input count.

pub mod icd;
pub mod parse;
pub mod table;

use crate::bac::{Severity, SeverityThresholds};
use crate::error::{Error, Result};
use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub use icd::{default_mace_code_sets, IcdCodeSet, MaceCodeSets};
pub use table::AnalysisRow;

/// Days per year used for all year/day conversions.
pub const DAYS_PER_YEAR: f64 = 365.25;

/// Follow-up floor (years) a censored subject must reach to stay in the
/// cohort. Other registries use longer floors (six years is common), so the
/// filter takes this as a parameter everywhere; this is only the default.
pub const DEFAULT_MIN_FOLLOWUP_YEARS: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Race {
    Asian,
    Black,
    White,
    Other,
}

impl Race {
    pub const ALL: [Race; 4] = [Race::Asian, Race::Black, Race::White, Race::Other];

    pub fn key(self) -> &'static str {
        match self {
            Race::Asian => "asian",
            Race::Black => "black",
            Race::White => "white",
            Race::Other => "other",
        }
    }

    pub fn parse(s: &str) -> Option<Race> {
        match s.trim().to_ascii_lowercase().as_str() {
            "asian" => Some(Race::Asian),
            "black" => Some(Race::Black),
            "white" => Some(Race::White),
            "other" => Some(Race::Other),
            _ => None,
        }
    }
}

impl std::fmt::Display for Race {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// One subject as ingested, before any event derivation.
///
/// `death_date` is carried on the record (when the source table has it) so
/// death can act both as an endpoint and as a censoring boundary for the
/// other endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectRecord {
    pub subject_id: String,
    pub index_date: NaiveDate,
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
    pub last_followup_date: NaiveDate,
    pub death_date: Option<NaiveDate>,
}

impl SubjectRecord {
    /// Field-level checks shared by every ingestion path: adult age, a
    /// non-negative finite BAC area, and a follow-up window that does not
    /// end before it starts.
    pub fn validate(&self) -> Result<()> {
        if !(self.age_at_index > 18.0) || !self.age_at_index.is_finite() {
            return Err(Error::InvalidInput(format!(
                "subject {}: age_at_index must be > 18, got {}",
                self.subject_id, self.age_at_index
            )));
        }
        if !self.bac_area_mm2.is_finite() || self.bac_area_mm2 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "subject {}: bac_area_mm2 must be finite and >= 0, got {}",
                self.subject_id, self.bac_area_mm2
            )));
        }
        if self.last_followup_date < self.index_date {
            return Err(Error::InvalidInput(format!(
                "subject {}: last_followup_date {} precedes index_date {}",
                self.subject_id, self.last_followup_date, self.index_date
            )));
        }
        Ok(())
    }

    /// Days from index to last follow-up.
    pub fn followup_days(&self) -> f64 {
        (self.last_followup_date - self.index_date).num_days() as f64
    }
}

/// One diagnosis code with its assignment date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisRecord {
    pub subject_id: String,
    pub code: String,
    pub code_date: NaiveDate,
}

/// Analysis endpoints. The composite is the earliest of the four components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Endpoint {
    Ami,
    Stroke,
    HeartFailure,
    Death,
    #[serde(rename = "mace", alias = "composite_mace")]
    CompositeMace,
}

impl Endpoint {
    pub const ALL: [Endpoint; 5] = [
        Endpoint::Ami,
        Endpoint::Stroke,
        Endpoint::HeartFailure,
        Endpoint::Death,
        Endpoint::CompositeMace,
    ];

    pub const COMPONENTS: [Endpoint; 4] =
        [Endpoint::Ami, Endpoint::Stroke, Endpoint::HeartFailure, Endpoint::Death];

    pub fn idx(self) -> usize {
        match self {
            Endpoint::Ami => 0,
            Endpoint::Stroke => 1,
            Endpoint::HeartFailure => 2,
            Endpoint::Death => 3,
            Endpoint::CompositeMace => 4,
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Endpoint::Ami => "ami",
            Endpoint::Stroke => "stroke",
            Endpoint::HeartFailure => "heart_failure",
            Endpoint::Death => "death",
            Endpoint::CompositeMace => "mace",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Endpoint::Ami => "Acute myocardial infarction",
            Endpoint::Stroke => "Ischemic stroke",
            Endpoint::HeartFailure => "Acute heart failure",
            Endpoint::Death => "All-cause death",
            Endpoint::CompositeMace => "Composite MACE",
        }
    }

    pub fn parse(s: &str) -> Option<Endpoint> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ami" | "mi" => Some(Endpoint::Ami),
            "stroke" => Some(Endpoint::Stroke),
            "heart_failure" | "hf" => Some(Endpoint::HeartFailure),
            "death" => Some(Endpoint::Death),
            "mace" | "composite" | "composite_mace" => Some(Endpoint::CompositeMace),
            _ => None,
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// First qualifying occurrence of an endpoint for one subject.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndpointEvent {
    pub subject_id: String,
    pub endpoint: Endpoint,
    pub event_date: NaiveDate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventStatus {
    Event,
    Censored,
}

/// One analysis record: time on study for one subject and endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeToEvent {
    pub subject_id: String,
    pub endpoint: Endpoint,
    /// Days from index date to event or censoring.
    pub duration_days: f64,
    pub status: EventStatus,
}

impl TimeToEvent {
    pub fn is_event(&self) -> bool {
        self.status == EventStatus::Event
    }
}

/// Result of deriving one subject's endpoint records.
#[derive(Debug, Clone, PartialEq)]
pub enum BuildOutcome {
    /// A qualifying code (or death) on or before the index date: the subject
    /// was not event-free at baseline and leaves the cohort.
    PriorEvent { endpoint: Endpoint, event_date: NaiveDate },
    /// Five records in `Endpoint::ALL` order.
    Followed([TimeToEvent; 5]),
}

/// Derive the five time-to-event records for one subject.
///
/// Rules, in order:
/// * any qualifying code or death dated on or before the index date makes
///   the subject a prior-event exclusion;
/// * each component endpoint takes its first qualifying code date after
///   index as the event;
/// * when the subject died, observation of non-death endpoints stops at the
///   death date (codes dated after death are ignored, censoring moves to the
///   death date);
/// * the composite takes the earliest component event, death included;
/// * otherwise the record is censored at last follow-up.
pub fn build_time_to_event(
    subject: &SubjectRecord,
    diagnoses: &[DiagnosisRecord],
    code_sets: &MaceCodeSets,
) -> BuildOutcome {
    let index = subject.index_date;

    // Death first: it bounds everything else.
    if let Some(d) = subject.death_date {
        if d <= index {
            return BuildOutcome::PriorEvent { endpoint: Endpoint::Death, event_date: d };
        }
    }

    // First qualifying code date per component endpoint, watching for codes
    // on or before index. A code dated after death is treated as a recording
    // artifact and ignored.
    let mut first: [Option<NaiveDate>; 3] = [None, None, None];
    let mut prior: Option<(Endpoint, NaiveDate)> = None;
    for diag in diagnoses {
        for (slot, endpoint) in
            [Endpoint::Ami, Endpoint::Stroke, Endpoint::HeartFailure].into_iter().enumerate()
        {
            let set = code_sets.for_endpoint(endpoint).expect("component endpoint has a code set");
            if !set.matches(&diag.code) {
                continue;
            }
            if diag.code_date <= index {
                let earlier = match prior {
                    Some((_, d)) => diag.code_date < d,
                    None => true,
                };
                if earlier {
                    prior = Some((endpoint, diag.code_date));
                }
            } else if subject.death_date.is_none_or(|d| diag.code_date <= d)
                && first[slot].is_none_or(|d| diag.code_date < d)
            {
                first[slot] = Some(diag.code_date);
            }
        }
    }
    if let Some((endpoint, event_date)) = prior {
        return BuildOutcome::PriorEvent { endpoint, event_date };
    }

    let censor_boundary = subject.death_date.unwrap_or(subject.last_followup_date);
    let days = |d: NaiveDate| (d - index).num_days() as f64;

    let component = |slot: usize, endpoint: Endpoint| match first[slot] {
        Some(date) => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint,
            duration_days: days(date),
            status: EventStatus::Event,
        },
        None => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint,
            duration_days: days(censor_boundary),
            status: EventStatus::Censored,
        },
    };

    let ami = component(0, Endpoint::Ami);
    let stroke = component(1, Endpoint::Stroke);
    let hf = component(2, Endpoint::HeartFailure);

    let death = match subject.death_date {
        Some(d) => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint: Endpoint::Death,
            duration_days: days(d),
            status: EventStatus::Event,
        },
        None => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint: Endpoint::Death,
            duration_days: days(subject.last_followup_date),
            status: EventStatus::Censored,
        },
    };

    // Composite: earliest component event if any occurred.
    let mut composite_event: Option<f64> = None;
    for rec in [&ami, &stroke, &hf, &death] {
        if rec.is_event() && composite_event.is_none_or(|d| rec.duration_days < d) {
            composite_event = Some(rec.duration_days);
        }
    }
    let composite = match composite_event {
        Some(duration_days) => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint: Endpoint::CompositeMace,
            duration_days,
            status: EventStatus::Event,
        },
        None => TimeToEvent {
            subject_id: subject.subject_id.clone(),
            endpoint: Endpoint::CompositeMace,
            duration_days: days(censor_boundary),
            status: EventStatus::Censored,
        },
    };

    BuildOutcome::Followed([ami, stroke, hf, death, composite])
}

/// One subject that survived all exclusion filters, with its five endpoint
/// records in `Endpoint::ALL` order.
#[derive(Debug, Clone)]
pub struct EligibleSubject {
    pub subject: SubjectRecord,
    pub records: [TimeToEvent; 5],
}

impl EligibleSubject {
    pub fn record(&self, endpoint: Endpoint) -> &TimeToEvent {
        &self.records[endpoint.idx()]
    }

    pub fn severity(&self, thresholds: &SeverityThresholds) -> Result<Severity> {
        thresholds.classify(self.subject.bac_area_mm2)
    }
}

/// Counted disposition of every input row. The bins partition the input:
/// `parse_errors + excluded_prior_event + excluded_short_followup + eligible`
/// always equals `input_rows`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub schema_version: String,
    pub input_rows: usize,
    pub parse_errors: usize,
    pub excluded_prior_event: usize,
    pub excluded_short_followup: usize,
    pub eligible: usize,
    pub min_followup_years: f64,
}

impl ExclusionReport {
    pub fn verify_partition(&self) -> Result<()> {
        let total = self.parse_errors
            + self.excluded_prior_event
            + self.excluded_short_followup
            + self.eligible;
        if total != self.input_rows {
            return Err(Error::InvalidInput(format!(
                "exclusion report does not partition the input: {} + {} + {} + {} != {}",
                self.parse_errors,
                self.excluded_prior_event,
                self.excluded_short_followup,
                self.eligible,
                self.input_rows
            )));
        }
        Ok(())
    }
}

/// Cohort after event derivation and eligibility filtering.
#[derive(Debug, Clone)]
pub struct CohortBuild {
    /// Sorted by subject id, so downstream analyses see a canonical order.
    pub eligible: Vec<EligibleSubject>,
    pub report: ExclusionReport,
}

/// Keep subjects that either had an event (any positive duration) or were
/// followed, event-free, for at least `min_followup_years`. Eligibility is
/// judged on the composite record: an event-free subject whose censoring
/// falls short of the floor cannot contribute the guaranteed window.
pub fn apply_eligibility(
    outcomes: Vec<(SubjectRecord, BuildOutcome)>,
    min_followup_years: f64,
    parse_errors: usize,
) -> Result<CohortBuild> {
    if !(min_followup_years >= 0.0) || !min_followup_years.is_finite() {
        return Err(Error::InvalidInput(format!(
            "min_followup_years must be finite and >= 0, got {min_followup_years}"
        )));
    }
    let floor_days = min_followup_years * DAYS_PER_YEAR;
    let input_rows = parse_errors + outcomes.len();

    let mut eligible = Vec::new();
    let mut prior = 0usize;
    let mut short = 0usize;
    for (subject, outcome) in outcomes {
        match outcome {
            BuildOutcome::PriorEvent { .. } => prior += 1,
            BuildOutcome::Followed(records) => {
                let composite = &records[Endpoint::CompositeMace.idx()];
                let keep = composite.is_event() || composite.duration_days >= floor_days;
                if keep {
                    eligible.push(EligibleSubject { subject, records });
                } else {
                    short += 1;
                }
            }
        }
    }
    eligible.sort_by(|a, b| a.subject.subject_id.cmp(&b.subject.subject_id));

    let report = ExclusionReport {
        schema_version: "exclusion-report.v1".to_string(),
        input_rows,
        parse_errors,
        excluded_prior_event: prior,
        excluded_short_followup: short,
        eligible: eligible.len(),
        min_followup_years,
    };
    report.verify_partition()?;
    Ok(CohortBuild { eligible, report })
}

/// Full derivation for a parsed cohort: group diagnoses per subject, build
/// endpoint records in parallel, then filter.
///
/// `parse_errors` is the count of raw rows rejected upstream so the
/// exclusion report can account for the whole input file.
pub fn assemble_cohort(
    subjects: Vec<SubjectRecord>,
    diagnoses: &[DiagnosisRecord],
    code_sets: &MaceCodeSets,
    min_followup_years: f64,
    parse_errors: usize,
) -> Result<CohortBuild> {
    let mut by_subject: BTreeMap<&str, Vec<&DiagnosisRecord>> = BTreeMap::new();
    for d in diagnoses {
        by_subject.entry(d.subject_id.as_str()).or_default().push(d);
    }

    let outcomes: Vec<(SubjectRecord, BuildOutcome)> = subjects
        .into_par_iter()
        .map(|s| {
            let diags = by_subject.get(s.subject_id.as_str());
            let outcome = match diags {
                Some(list) => {
                    let owned: Vec<DiagnosisRecord> = list.iter().map(|&d| d.clone()).collect();
                    build_time_to_event(&s, &owned, code_sets)
                }
                None => build_time_to_event(&s, &[], code_sets),
            };
            (s, outcome)
        })
        .collect();

    apply_eligibility(outcomes, min_followup_years, parse_errors)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn subject(id: &str) -> SubjectRecord {
        SubjectRecord {
            subject_id: id.to_string(),
            index_date: date("2010-01-02"),
            age_at_index: 55.0,
            race: Race::White,
            hispanic: false,
            diabetes: false,
            smoking: false,
            on_statin: false,
            on_antihypertensive: false,
            systolic_bp: None,
            total_cholesterol: None,
            hdl: None,
            bmi: None,
            egfr: None,
            bac_area_mm2: 3.4,
            last_followup_date: date("2018-03-04"),
            death_date: None,
        }
    }

    fn diag(id: &str, code: &str, d: &str) -> DiagnosisRecord {
        DiagnosisRecord { subject_id: id.to_string(), code: code.to_string(), code_date: date(d) }
    }

    #[test]
    fn followup_window_day_count() {
        // 2010-01-02 to 2018-03-04: 8 years with two leap days (2922) plus
        // 61 days from Jan 2 to Mar 4.
        let s = subject("a");
        s.validate().unwrap();
        assert_eq!(s.followup_days(), 2983.0);
    }

    #[test]
    fn age_and_window_validation() {
        let mut s = subject("a");
        s.age_at_index = 17.0;
        assert!(s.validate().is_err());
        s.age_at_index = 18.0; // boundary: must be strictly over 18
        assert!(s.validate().is_err());

        let mut s = subject("a");
        s.last_followup_date = date("2009-12-31");
        assert!(s.validate().is_err());

        let mut s = subject("a");
        s.bac_area_mm2 = -0.5;
        assert!(s.validate().is_err());
    }

    #[test]
    fn first_qualifying_code_becomes_the_event() {
        let sets = default_mace_code_sets();
        let s = subject("a");
        let diags = vec![
            diag("a", "I21.0", "2013-05-01"),
            diag("a", "I21.4", "2012-02-01"), // earlier AMI code wins
            diag("a", "E11.9", "2011-01-01"), // not an endpoint code
        ];
        match build_time_to_event(&s, &diags, &sets) {
            BuildOutcome::Followed(records) => {
                let ami = &records[Endpoint::Ami.idx()];
                assert_eq!(ami.status, EventStatus::Event);
                assert_eq!(ami.duration_days, (date("2012-02-01") - s.index_date).num_days() as f64);
                // Stroke never occurred: censored at last follow-up.
                let stroke = &records[Endpoint::Stroke.idx()];
                assert_eq!(stroke.status, EventStatus::Censored);
                assert_eq!(stroke.duration_days, 2983.0);
                // Composite picks up the AMI.
                let mace = &records[Endpoint::CompositeMace.idx()];
                assert_eq!(mace.status, EventStatus::Event);
                assert_eq!(mace.duration_days, ami.duration_days);
            }
            other => panic!("expected Followed, got {other:?}"),
        }
    }

    #[test]
    fn code_on_index_date_is_a_prior_event() {
        let sets = default_mace_code_sets();
        let s = subject("a");
        let diags = vec![diag("a", "410.21", "2010-01-02")];
        assert!(matches!(
            build_time_to_event(&s, &diags, &sets),
            BuildOutcome::PriorEvent { endpoint: Endpoint::Ami, .. }
        ));
    }

    #[test]
    fn death_censors_other_endpoints() {
        let sets = default_mace_code_sets();
        let mut s = subject("a");
        s.death_date = Some(date("2014-06-01"));
        let diags = vec![diag("a", "I63.42", "2015-01-01")]; // stroke code after death: ignored
        match build_time_to_event(&s, &diags, &sets) {
            BuildOutcome::Followed(records) => {
                let stroke = &records[Endpoint::Stroke.idx()];
                assert_eq!(stroke.status, EventStatus::Censored);
                assert_eq!(stroke.duration_days, (date("2014-06-01") - s.index_date).num_days() as f64);
                let death = &records[Endpoint::Death.idx()];
                assert_eq!(death.status, EventStatus::Event);
                let mace = &records[Endpoint::CompositeMace.idx()];
                assert_eq!(mace.status, EventStatus::Event);
                assert_eq!(mace.duration_days, death.duration_days);
            }
            other => panic!("expected Followed, got {other:?}"),
        }
    }

    #[test]
    fn eligibility_keeps_events_and_long_followup() {
        let sets = default_mace_code_sets();
        let mut outcomes = Vec::new();

        // Early event, short window: stays (events always count).
        let s1 = subject("s1");
        let d1 = vec![diag("s1", "I21.0", "2011-01-01")];
        let o1 = build_time_to_event(&s1, &d1, &sets);
        outcomes.push((s1, o1));

        // Event-free, 8 years: stays.
        let s2 = subject("s2");
        let o2 = build_time_to_event(&s2, &[], &sets);
        outcomes.push((s2, o2));

        // Event-free, 2 years: excluded for short follow-up.
        let mut s3 = subject("s3");
        s3.last_followup_date = date("2012-01-02");
        let o3 = build_time_to_event(&s3, &[], &sets);
        outcomes.push((s3, o3));

        // Prior event.
        let s4 = subject("s4");
        let d4 = vec![diag("s4", "434.91", "2009-06-01")];
        let o4 = build_time_to_event(&s4, &d4, &sets);
        outcomes.push((s4, o4));

        let built = apply_eligibility(outcomes, 5.0, 2).unwrap();
        assert_eq!(built.report.input_rows, 6);
        assert_eq!(built.report.parse_errors, 2);
        assert_eq!(built.report.excluded_prior_event, 1);
        assert_eq!(built.report.excluded_short_followup, 1);
        assert_eq!(built.report.eligible, 2);
        let ids: Vec<&str> = built.eligible.iter().map(|e| e.subject.subject_id.as_str()).collect();
        assert_eq!(ids, ["s1", "s2"]);
    }

    #[test]
    fn eligibility_floor_is_parameterized() {
        // 2983 days clears the 5-year floor (1826.25 days) but not a 9-year
        // floor (3287.25 days), so the event-free subject drops out.
        let sets = default_mace_code_sets();
        let s = subject("a");
        let o = build_time_to_event(&s, &[], &sets);
        let built = apply_eligibility(vec![(s, o)], 9.0, 0).unwrap();
        assert_eq!(built.report.excluded_short_followup, 1);
        assert_eq!(built.report.eligible, 0);
    }
}
