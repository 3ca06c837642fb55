//! Survival analysis engine for breast arterial calcification (BAC) cohorts.
//!
//! The crate covers the full path from raw cohort tables to published-style
//! analysis artifacts:
//!
//! * [`cohort`]: schema-mapped CSV ingestion, ICD-9/10 endpoint matching,
//!   time-to-event construction, and eligibility filtering with an auditable
//!   exclusion report.
//! * [`bac`]: calcified-pixel area quantification and severity grading.
//! * [`survival`]: Kaplan-Meier curves, k-sample log-rank tests, and Cox
//!   proportional hazards fits with Efron or Breslow tie handling.
//! * [`ascvd`]: the 2013 pooled cohort equations for 10-year ASCVD risk.
//! * [`stats`]: the supporting test battery (chi-square, Welch t, one-way
//!   ANOVA, Kruskal-Wallis) on top of in-house special functions.
//! * [`sweep`]: joint grid search for severity thresholds that maximize
//!   hazard separation between adjacent groups.
//! * [`sim`]: seeded synthetic cohort generation for calibration and
//!   recovery testing.
//! * [`table1`], [`plot`], [`report`]: cohort description tables, SVG curve
//!   rendering, and the deterministic end-to-end reporting pipeline.
//!
//! Everything downstream of ingestion is deterministic: fits canonicalize
//! input order before accumulating, the simulator derives one RNG stream per
//! subject from the config seed, and emitters format numbers stably, so a
//! pipeline run is byte-for-byte reproducible.

pub mod ascvd;
pub mod bac;
pub mod cohort;
pub mod error;
pub mod plot;
pub mod report;
pub mod sim;
pub mod stats;
pub mod survival;
pub mod sweep;
pub mod table1;

pub use error::{Error, Result};
