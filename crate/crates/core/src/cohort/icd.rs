//! ICD-9/ICD-10 code sets and matching.
//!
//! A code set holds exact codes plus prefix stems. Matching normalizes the
//! probe (trim, uppercase, dots kept) and accepts it when it equals an exact
//! code, equals a stem, or extends a stem past a dot: stem `I63` matches
//! `I63` and `I63.42` but not `I639`. Prefix entries may be written with a
//! trailing `*` or `.*` wildcard, which is stripped at construction.

use crate::cohort::Endpoint;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Canonical code form used for storage and matching.
pub fn normalize_code(code: &str) -> String {
    code.trim().to_ascii_uppercase()
}

fn normalize_prefix(entry: &str) -> String {
    let c = normalize_code(entry);
    let c = c.strip_suffix(".*").or_else(|| c.strip_suffix('*')).unwrap_or(&c);
    c.trim_end_matches('.').to_string()
}

/// Exact codes plus prefix stems identifying one endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdCodeSet {
    pub name: String,
    pub exact_codes: BTreeSet<String>,
    pub prefix_codes: BTreeSet<String>,
}

impl IcdCodeSet {
    /// Build a set from raw entries. Entries are normalized; prefix entries
    /// may carry a `*` / `.*` wildcard suffix. The two sets must be disjoint
    /// and their union non-empty.
    pub fn new<'a>(
        name: &str,
        exact: impl IntoIterator<Item = &'a str>,
        prefixes: impl IntoIterator<Item = &'a str>,
    ) -> Result<Self> {
        let exact_codes: BTreeSet<String> = exact.into_iter().map(normalize_code).collect();
        let prefix_codes: BTreeSet<String> = prefixes.into_iter().map(|p| normalize_prefix(p)).collect();
        if exact_codes.is_empty() && prefix_codes.is_empty() {
            return Err(Error::InvalidInput(format!("code set `{name}` is empty")));
        }
        if let Some(dup) = exact_codes.intersection(&prefix_codes).next() {
            return Err(Error::InvalidInput(format!(
                "code set `{name}`: `{dup}` appears as both an exact code and a prefix"
            )));
        }
        if exact_codes.iter().chain(&prefix_codes).any(|c| c.is_empty()) {
            return Err(Error::InvalidInput(format!("code set `{name}` contains an empty entry")));
        }
        Ok(IcdCodeSet { name: name.to_string(), exact_codes, prefix_codes })
    }

    /// True when `code` belongs to this set. Pure: no I/O, no state.
    pub fn matches(&self, code: &str) -> bool {
        let c = normalize_code(code);
        if self.exact_codes.contains(&c) {
            return true;
        }
        self.prefix_codes.iter().any(|stem| {
            c == *stem || (c.len() > stem.len() && c.starts_with(stem) && c.as_bytes()[stem.len()] == b'.')
        })
    }
}

/// The three coded component endpoints. Death is determined by the death
/// date on the subject record, not by codes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaceCodeSets {
    pub ami: IcdCodeSet,
    pub stroke: IcdCodeSet,
    pub heart_failure: IcdCodeSet,
}

impl MaceCodeSets {
    pub fn for_endpoint(&self, endpoint: Endpoint) -> Option<&IcdCodeSet> {
        match endpoint {
            Endpoint::Ami => Some(&self.ami),
            Endpoint::Stroke => Some(&self.stroke),
            Endpoint::HeartFailure => Some(&self.heart_failure),
            Endpoint::Death | Endpoint::CompositeMace => None,
        }
    }
}

/// Default endpoint definitions.
///
/// AMI: the ICD-9 410 family (initial and subsequent episode codes) and the
/// ICD-10 I21 acute infarction codes. Stroke: ICD-9 occlusion-with-infarction
/// codes from the 433/434 families and all of ICD-10 I63. Acute heart
/// failure: the ICD-9 428 acute/acute-on-chronic codes and matching ICD-10
/// I50 acute codes.
pub fn default_mace_code_sets() -> MaceCodeSets {
    let ami = IcdCodeSet::new(
        "ami",
        [
            // ICD-9
            "410.0", "410.00", "410.01", "410.1", "410.10", "410.11", "410.2", "410.20",
            "410.21", "410.3", "410.30", "410.31", "410.4", "410.40", "410.41", "410.5",
            "410.50", "410.51", "410.6", "410.60", "410.61", "410.7", "410.70", "410.71",
            "410.8", "410.80", "410.81", "410.9", "410.90", "410.91",
            // ICD-10
            "I21.0", "I21.01", "I21.02", "I21.09", "I21.1", "I21.11", "I21.19", "I21.2",
            "I21.21", "I21.29", "I21.3", "I21.4", "I21.9",
        ],
        [],
    )
    .expect("static AMI code set is well formed");

    let stroke = IcdCodeSet::new(
        "stroke",
        [
            "433.01", "433.11", "433.21", "433.31", "433.81", "433.91", "434.01", "434.11",
            "434.91",
        ],
        ["I63"],
    )
    .expect("static stroke code set is well formed");

    let heart_failure = IcdCodeSet::new(
        "heart_failure",
        ["428.23", "428.33", "428.41", "428.43", "I50.21", "I50.23", "I50.33", "I50.43", "I50.813"],
        [],
    )
    .expect("static heart failure code set is well formed");

    MaceCodeSets { ami, stroke, heart_failure }
}
