//! Breast arterial calcification quantification and severity grading.
//!
//! Upstream segmentation reduces each exam to a count of calcified pixels
//! plus the pixel spacing of the acquisition; this module turns that into a
//! physical area in mm² and grades it into four ordered severity groups on
//! half-open intervals. Areas under the noise floor count as no detectable
//! calcification.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Per-exam segmentation output: calcified pixel count and pixel pitch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskSummary {
    pub positive_pixel_count: u64,
    /// Physical distance between pixel rows, mm.
    pub row_spacing_mm: f64,
    /// Physical distance between pixel columns, mm.
    pub col_spacing_mm: f64,
}

/// Ordered severity grade. The derived `Ord` follows increasing calcification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    NoBac,
    Mild,
    Moderate,
    Severe,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::NoBac, Severity::Mild, Severity::Moderate, Severity::Severe];

    /// Stable machine-readable name, used in file output and column headers.
    pub fn key(self) -> &'static str {
        match self {
            Severity::NoBac => "no_bac",
            Severity::Mild => "mild",
            Severity::Moderate => "moderate",
            Severity::Severe => "severe",
        }
    }

    /// Human-readable label for tables and plot legends.
    pub fn label(self) -> &'static str {
        match self {
            Severity::NoBac => "No BAC",
            Severity::Mild => "Mild",
            Severity::Moderate => "Moderate",
            Severity::Severe => "Severe",
        }
    }

    pub fn parse(s: &str) -> Option<Severity> {
        match s.trim().to_ascii_lowercase().as_str() {
            "no_bac" | "nobac" | "none" | "no bac" => Some(Severity::NoBac),
            "mild" => Some(Severity::Mild),
            "moderate" => Some(Severity::Moderate),
            "severe" => Some(Severity::Severe),
            _ => None,
        }
    }
}

impl std::fmt::Display for Severity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.key())
    }
}

/// Severity cut points in mm². Group g spans [lower_g, upper_g) with the last
/// group unbounded above:
///
/// * No BAC:   [0, noise_floor)
/// * Mild:     [noise_floor, mild_upper)
/// * Moderate: [mild_upper, moderate_upper)
/// * Severe:   [moderate_upper, inf)
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeverityThresholds {
    pub noise_floor: f64,
    pub mild_upper: f64,
    pub moderate_upper: f64,
}

impl SeverityThresholds {
    pub fn new(noise_floor: f64, mild_upper: f64, moderate_upper: f64) -> Result<Self> {
        let t = SeverityThresholds { noise_floor, mild_upper, moderate_upper };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.noise_floor > 0.0
            && self.noise_floor < self.mild_upper
            && self.mild_upper < self.moderate_upper
            && self.moderate_upper.is_finite();
        if !ok {
            return Err(Error::InvalidInput(format!(
                "severity thresholds must satisfy 0 < noise_floor < mild_upper < moderate_upper, got ({}, {}, {})",
                self.noise_floor, self.mild_upper, self.moderate_upper
            )));
        }
        Ok(())
    }

    /// Grade an area in mm². Boundary values belong to the upper group.
    pub fn classify(&self, area_mm2: f64) -> Result<Severity> {
        if !area_mm2.is_finite() || area_mm2 < 0.0 {
            return Err(Error::InvalidInput(format!(
                "bac area must be finite and non-negative, got {area_mm2}"
            )));
        }
        Ok(if area_mm2 < self.noise_floor {
            Severity::NoBac
        } else if area_mm2 < self.mild_upper {
            Severity::Mild
        } else if area_mm2 < self.moderate_upper {
            Severity::Moderate
        } else {
            Severity::Severe
        })
    }
}

impl Default for SeverityThresholds {
    /// Operating points used for the main analyses: noise floor 2 mm²,
    /// mild/moderate boundary 10 mm², moderate/severe boundary 40 mm².
    fn default() -> Self {
        SeverityThresholds { noise_floor: 2.0, mild_upper: 10.0, moderate_upper: 40.0 }
    }
}

/// Physical calcified area: pixel count times the area of one pixel.
pub fn area_mm2(mask: &MaskSummary) -> Result<f64> {
    let ok = mask.row_spacing_mm.is_finite()
        && mask.col_spacing_mm.is_finite()
        && mask.row_spacing_mm > 0.0
        && mask.col_spacing_mm > 0.0;
    if !ok {
        return Err(Error::InvalidInput(format!(
            "pixel spacings must be positive and finite, got ({}, {})",
            mask.row_spacing_mm, mask.col_spacing_mm
        )));
    }
    Ok(mask.positive_pixel_count as f64 * mask.row_spacing_mm * mask.col_spacing_mm)
}

/// Variance-stabilizing transform used for continuous-exposure models:
/// log2(area + 1). Zero area maps to zero.
pub fn log2_bac(area_mm2: f64) -> f64 {
    debug_assert!(area_mm2 >= 0.0);
    (area_mm2 + 1.0).log2()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn area_from_pixel_count_and_spacing() {
        // 120 pixels at 0.07 mm pitch: 120 * 0.0049 = 0.588 mm².
        let m = MaskSummary { positive_pixel_count: 120, row_spacing_mm: 0.07, col_spacing_mm: 0.07 };
        assert!((area_mm2(&m).unwrap() - 0.588).abs() < 1e-12);
    }

    #[test]
    fn zero_pixels_is_zero_area() {
        let m = MaskSummary { positive_pixel_count: 0, row_spacing_mm: 0.05, col_spacing_mm: 0.05 };
        assert_eq!(area_mm2(&m).unwrap(), 0.0);
    }

    #[test]
    fn nonpositive_spacing_rejected() {
        let m = MaskSummary { positive_pixel_count: 10, row_spacing_mm: 0.0, col_spacing_mm: 0.07 };
        assert!(area_mm2(&m).is_err());
    }

    #[test]
    fn default_grade_boundaries_are_half_open() {
        let t = SeverityThresholds::default();
        assert_eq!(t.classify(0.0).unwrap(), Severity::NoBac);
        assert_eq!(t.classify(1.999).unwrap(), Severity::NoBac);
        assert_eq!(t.classify(2.0).unwrap(), Severity::Mild);
        assert_eq!(t.classify(9.999).unwrap(), Severity::Mild);
        assert_eq!(t.classify(10.0).unwrap(), Severity::Moderate);
        assert_eq!(t.classify(39.999).unwrap(), Severity::Moderate);
        assert_eq!(t.classify(40.0).unwrap(), Severity::Severe);
        assert_eq!(t.classify(700.0).unwrap(), Severity::Severe);
    }

    #[test]
    fn negative_and_nonfinite_area_rejected() {
        let t = SeverityThresholds::default();
        assert!(t.classify(-0.1).is_err());
        assert!(t.classify(f64::NAN).is_err());
        assert!(t.classify(f64::INFINITY).is_err());
    }

    #[test]
    fn bad_threshold_order_rejected() {
        assert!(SeverityThresholds::new(10.0, 2.0, 40.0).is_err());
        assert!(SeverityThresholds::new(0.0, 10.0, 40.0).is_err());
        assert!(SeverityThresholds::new(2.0, 10.0, 10.0).is_err());
    }

    #[test]
    fn log2_transform_anchor_points() {
        assert_eq!(log2_bac(0.0), 0.0);
        assert_eq!(log2_bac(1.0), 1.0);
        assert_eq!(log2_bac(7.0), 3.0);
    }

    proptest! {
        #[test]
        fn classify_monotone_in_area(a in 0.0..800.0f64, b in 0.0..800.0f64) {
            let t = SeverityThresholds::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(t.classify(lo).unwrap() <= t.classify(hi).unwrap());
        }

        #[test]
        fn every_area_gets_exactly_one_grade(a in 0.0..1e6f64) {
            // classify is total on [0, inf); check the grade is consistent
            // with its defining interval.
            let t = SeverityThresholds::default();
            let g = t.classify(a).unwrap();
            let expected = if a < 2.0 {
                Severity::NoBac
            } else if a < 10.0 {
                Severity::Mild
            } else if a < 40.0 {
                Severity::Moderate
            } else {
                Severity::Severe
            };
            prop_assert_eq!(g, expected);
        }

        #[test]
        fn log2_strictly_increasing(a in 0.0..1e9f64, delta in 1e-6..1e3f64) {
            prop_assert!(log2_bac(a + delta) > log2_bac(a));
        }

        #[test]
        fn log2_doubling_adds_one(k in 0u32..30) {
            // area = 2^k - 1 maps exactly to k.
            let area = (1u64 << k) as f64 - 1.0;
            prop_assert_eq!(log2_bac(area), k as f64);
        }

        #[test]
        fn area_linear_in_pixel_count(n in 0u64..1_000_000, s in 0.01..0.2f64) {
            let one = MaskSummary { positive_pixel_count: 1, row_spacing_mm: s, col_spacing_mm: s };
            let many = MaskSummary { positive_pixel_count: n, row_spacing_mm: s, col_spacing_mm: s };
            let unit = area_mm2(&one).unwrap();
            prop_assert!((area_mm2(&many).unwrap() - n as f64 * unit).abs() <= 1e-9 * (n as f64).max(1.0));
        }
    }
}
