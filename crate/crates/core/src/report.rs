//! Verification reports: named checks with their worst error and tolerance.

use serde::{Deserialize, Serialize};

/// How a check's value is compared with its threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Passes when `max_error ≤ tolerance`.
    #[default]
    Le,
    /// Passes when `max_error > tolerance`; used for checks that demand a
    /// quantity be large, such as a spread.
    Gt,
}

impl Comparison {
    fn is_le(&self) -> bool {
        *self == Comparison::Le
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub max_error: f64,
    pub tolerance: f64,
    pub pass: bool,
    pub samples: usize,
    #[serde(default, skip_serializing_if = "Comparison::is_le")]
    pub comparison: Comparison,
}

impl CheckEntry {
    /// `max_error ≤ tolerance`; a NaN error fails.
    pub fn at_most(name: impl Into<String>, max_error: f64, tolerance: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            max_error,
            tolerance,
            pass: max_error <= tolerance,
            samples,
            comparison: Comparison::Le,
        }
    }

    /// `value > threshold`.
    pub fn above(name: impl Into<String>, value: f64, threshold: f64, samples: usize) -> Self {
        Self {
            name: name.into(),
            max_error: value,
            tolerance: threshold,
            pass: value > threshold,
            samples,
            comparison: Comparison::Gt,
        }
    }

    /// A check that could not be evaluated.
    pub fn failed(name: impl Into<String>, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            max_error: f64::INFINITY,
            tolerance,
            pass: false,
            samples: 0,
            comparison: Comparison::Le,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VerificationReport {
    pub checks: Vec<CheckEntry>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn new(checks: Vec<CheckEntry>) -> Self {
        let pass = checks.iter().all(|c| c.pass);
        Self { checks, pass }
    }

    pub fn push(&mut self, entry: CheckEntry) {
        self.checks.push(entry);
        self.pass = self.checks.iter().all(|c| c.pass);
    }

    pub fn get(&self, name: &str) -> Option<&CheckEntry> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Pretty JSON with a trailing newline. JSON has no infinity, so
    /// non-finite errors are written as `null`.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
