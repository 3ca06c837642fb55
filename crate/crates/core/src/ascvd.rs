//! 10-year atherosclerotic cardiovascular disease (ASCVD) risk via the 2013
//! pooled cohort equations.
//!
//! The engine evaluates the published sex- and race-specific proportional
//! hazards equations: a linear predictor over log-transformed age, lipids,
//! and blood pressure (with treatment, smoking, and diabetes terms), mapped
//! through the group's baseline 10-year survival. Coefficients live in a
//! versioned data table ([`COEFFICIENT_TABLE_VERSION`]) so a future
//! recalibration can ship alongside the original set.
//!
//! Inputs outside the published validity ranges are rejected with an error
//! naming the field; the engine never clamps. The race mapping is equally
//! strict: the equations are published for two groups only, and callers must
//! decide explicitly which group a cohort member is scored under (see
//! [`RaceGroup`]). Nothing here guesses.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Version tag of the embedded coefficient table.
pub const COEFFICIENT_TABLE_VERSION: &str = "pooled-cohort-2013.v1";

/// Validity ranges enforced on inputs, matching the published tool.
pub const AGE_RANGE: (f64, f64) = (40.0, 79.0);
pub const TOTAL_CHOLESTEROL_RANGE: (f64, f64) = (130.0, 320.0);
pub const HDL_RANGE: (f64, f64) = (20.0, 100.0);
pub const SBP_RANGE: (f64, f64) = (90.0, 200.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sex {
    Female,
    Male,
}

/// Equation group. The published equations cover non-Hispanic white and
/// African American cohorts; the white equations are conventionally applied
/// to "other" groups, but that choice belongs to the caller's configuration,
/// not to this engine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaceGroup {
    WhiteOrOther,
    AfricanAmerican,
}

/// One complete risk-factor profile. All fields are required; handling of
/// missing source data happens upstream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AscvdInput {
    pub sex: Sex,
    pub race_group: RaceGroup,
    pub age_years: f64,
    pub total_cholesterol_mgdl: f64,
    pub hdl_mgdl: f64,
    pub systolic_bp_mmhg: f64,
    pub on_bp_treatment: bool,
    pub smoker: bool,
    pub diabetic: bool,
}

/// Guideline risk bands on the 10-year risk, half-open below 20%.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskCategory {
    Low,
    Borderline,
    Intermediate,
    High,
}

impl RiskCategory {
    pub const ALL: [RiskCategory; 4] = [
        RiskCategory::Low,
        RiskCategory::Borderline,
        RiskCategory::Intermediate,
        RiskCategory::High,
    ];

    pub fn key(self) -> &'static str {
        match self {
            RiskCategory::Low => "low",
            RiskCategory::Borderline => "borderline",
            RiskCategory::Intermediate => "intermediate",
            RiskCategory::High => "high",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            RiskCategory::Low => "Low (<5%)",
            RiskCategory::Borderline => "Borderline (5 to <7.5%)",
            RiskCategory::Intermediate => "Intermediate (7.5 to <20%)",
            RiskCategory::High => "High (>=20%)",
        }
    }
}

impl std::fmt::Display for RiskCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscvdResult {
    /// 10-year first-event risk as a probability in [0, 1].
    pub ten_year_risk: f64,
    pub category: RiskCategory,
}

/// Per-group equation terms. A zero coefficient means the term is absent
/// from that group's published equation.
struct Coefficients {
    ln_age: f64,
    ln_age_sq: f64,
    ln_tc: f64,
    ln_age_ln_tc: f64,
    ln_hdl: f64,
    ln_age_ln_hdl: f64,
    ln_sbp_treated: f64,
    ln_age_ln_sbp_treated: f64,
    ln_sbp_untreated: f64,
    ln_age_ln_sbp_untreated: f64,
    smoker: f64,
    ln_age_smoker: f64,
    diabetic: f64,
    /// Group mean of the linear predictor, subtracted before exponentiation.
    mean_terms: f64,
    /// Baseline 10-year survival for the group.
    baseline_survival: f64,
}

const WHITE_FEMALE: Coefficients = Coefficients {
    ln_age: -29.799,
    ln_age_sq: 4.884,
    ln_tc: 13.540,
    ln_age_ln_tc: -3.114,
    ln_hdl: -13.578,
    ln_age_ln_hdl: 3.149,
    ln_sbp_treated: 2.019,
    ln_age_ln_sbp_treated: 0.0,
    ln_sbp_untreated: 1.957,
    ln_age_ln_sbp_untreated: 0.0,
    smoker: 7.574,
    ln_age_smoker: -1.665,
    diabetic: 0.661,
    mean_terms: -29.18,
    baseline_survival: 0.9665,
};

const BLACK_FEMALE: Coefficients = Coefficients {
    ln_age: 17.114,
    ln_age_sq: 0.0,
    ln_tc: 0.940,
    ln_age_ln_tc: 0.0,
    ln_hdl: -18.920,
    ln_age_ln_hdl: 4.475,
    ln_sbp_treated: 29.291,
    ln_age_ln_sbp_treated: -6.432,
    ln_sbp_untreated: 27.820,
    ln_age_ln_sbp_untreated: -6.087,
    smoker: 0.691,
    ln_age_smoker: 0.0,
    diabetic: 0.874,
    mean_terms: 86.61,
    baseline_survival: 0.9533,
};

const WHITE_MALE: Coefficients = Coefficients {
    ln_age: 12.344,
    ln_age_sq: 0.0,
    ln_tc: 11.853,
    ln_age_ln_tc: -2.664,
    ln_hdl: -7.990,
    ln_age_ln_hdl: 1.769,
    ln_sbp_treated: 1.797,
    ln_age_ln_sbp_treated: 0.0,
    ln_sbp_untreated: 1.764,
    ln_age_ln_sbp_untreated: 0.0,
    smoker: 7.837,
    ln_age_smoker: -1.795,
    diabetic: 0.658,
    mean_terms: 61.18,
    baseline_survival: 0.9144,
};

const BLACK_MALE: Coefficients = Coefficients {
    ln_age: 2.469,
    ln_age_sq: 0.0,
    ln_tc: 0.302,
    ln_age_ln_tc: 0.0,
    ln_hdl: -0.307,
    ln_age_ln_hdl: 0.0,
    ln_sbp_treated: 1.916,
    ln_age_ln_sbp_treated: 0.0,
    ln_sbp_untreated: 1.809,
    ln_age_ln_sbp_untreated: 0.0,
    smoker: 0.549,
    ln_age_smoker: 0.0,
    diabetic: 0.645,
    mean_terms: 19.54,
    baseline_survival: 0.8954,
};

fn coefficients_for(sex: Sex, race: RaceGroup) -> &'static Coefficients {
    match (sex, race) {
        (Sex::Female, RaceGroup::WhiteOrOther) => &WHITE_FEMALE,
        (Sex::Female, RaceGroup::AfricanAmerican) => &BLACK_FEMALE,
        (Sex::Male, RaceGroup::WhiteOrOther) => &WHITE_MALE,
        (Sex::Male, RaceGroup::AfricanAmerican) => &BLACK_MALE,
    }
}

fn check_range(field: &'static str, value: f64, (lo, hi): (f64, f64)) -> Result<()> {
    if !value.is_finite() || value < lo || value > hi {
        return Err(Error::OutOfRange { field, value, lo, hi });
    }
    Ok(())
}

/// Evaluate the 10-year risk for one profile.
pub fn ascvd_score(input: &AscvdInput) -> Result<AscvdResult> {
    check_range("age_years", input.age_years, AGE_RANGE)?;
    check_range("total_cholesterol_mgdl", input.total_cholesterol_mgdl, TOTAL_CHOLESTEROL_RANGE)?;
    check_range("hdl_mgdl", input.hdl_mgdl, HDL_RANGE)?;
    check_range("systolic_bp_mmhg", input.systolic_bp_mmhg, SBP_RANGE)?;

    let c = coefficients_for(input.sex, input.race_group);
    let ln_age = input.age_years.ln();
    let ln_tc = input.total_cholesterol_mgdl.ln();
    let ln_hdl = input.hdl_mgdl.ln();
    let ln_sbp = input.systolic_bp_mmhg.ln();

    let mut xb = c.ln_age * ln_age
        + c.ln_age_sq * ln_age * ln_age
        + c.ln_tc * ln_tc
        + c.ln_age_ln_tc * ln_age * ln_tc
        + c.ln_hdl * ln_hdl
        + c.ln_age_ln_hdl * ln_age * ln_hdl;
    if input.on_bp_treatment {
        xb += c.ln_sbp_treated * ln_sbp + c.ln_age_ln_sbp_treated * ln_age * ln_sbp;
    } else {
        xb += c.ln_sbp_untreated * ln_sbp + c.ln_age_ln_sbp_untreated * ln_age * ln_sbp;
    }
    if input.smoker {
        xb += c.smoker + c.ln_age_smoker * ln_age;
    }
    if input.diabetic {
        xb += c.diabetic;
    }

    let risk = 1.0 - c.baseline_survival.powf((xb - c.mean_terms).exp());
    debug_assert!((0.0..=1.0).contains(&risk));
    Ok(AscvdResult { ten_year_risk: risk, category: categorize_risk(risk)? })
}

/// Map a risk in [0, 1] to its guideline band.
pub fn categorize_risk(risk: f64) -> Result<RiskCategory> {
    if !risk.is_finite() || !(0.0..=1.0).contains(&risk) {
        return Err(Error::InvalidInput(format!("risk must lie in [0, 1], got {risk}")));
    }
    Ok(if risk < 0.05 {
        RiskCategory::Low
    } else if risk < 0.075 {
        RiskCategory::Borderline
    } else if risk < 0.20 {
        RiskCategory::Intermediate
    } else {
        RiskCategory::High
    })
}
