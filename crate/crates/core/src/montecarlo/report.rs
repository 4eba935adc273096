use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// One measured quantity, optionally tied to a tail index `N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub n: Option<u64>,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparator {
    AtMost(f64),
    AtLeast(f64),
    Within { target: f64, tol: f64 },
    Between { lo: f64, hi: f64 },
}

impl Comparator {
    pub fn accepts(&self, v: f64) -> bool {
        match *self {
            Comparator::AtMost(t) => v <= t,
            Comparator::AtLeast(t) => v >= t,
            Comparator::Within { target, tol } => (v - target).abs() <= tol,
            Comparator::Between { lo, hi } => lo <= v && v <= hi,
        }
    }
}

/// A metric compared against a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: Comparator,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, threshold: Comparator) -> Self {
        Self {
            name: name.into(),
            value,
            threshold,
            passed: threshold.accepts(value),
        }
    }
}

/// Result of one verification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub test: String,
    pub seq: String,
    pub params: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub sample_size: u64,
    pub metrics: Vec<Metric>,
    pub checks: Vec<Check>,
    pub verdict: bool,
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timestamp: Option<String>,
}

impl VerificationReport {
    pub fn new(test: impl Into<String>, seq: impl Into<String>) -> Self {
        Self {
            test: test.into(),
            seq: seq.into(),
            params: BTreeMap::new(),
            seed: None,
            sample_size: 0,
            metrics: Vec::new(),
            checks: Vec::new(),
            verdict: true,
            notes: Vec::new(),
            timestamp: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.params.insert(key.to_string(), v);
        self
    }

    pub fn metric(&mut self, name: &str, n: Option<u64>, value: f64) -> &mut Self {
        self.metrics.push(Metric {
            name: name.to_string(),
            n,
            value,
        });
        self
    }

    pub fn check(&mut self, name: impl Into<String>, value: f64, threshold: Comparator) -> &mut Self {
        self.checks.push(Check::new(name, value, threshold));
        self.verdict = Self::decide(&self.checks);
        self
    }

    pub fn note(&mut self, text: impl Into<String>) -> &mut Self {
        self.notes.push(text.into());
        self
    }

    /// Pass iff every check passes.
    pub fn decide(checks: &[Check]) -> bool {
        checks.iter().all(|c| c.threshold.accepts(c.value))
    }

    pub fn passed(&self) -> bool {
        Self::decide(&self.checks)
    }

    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Appends another report's metrics and checks under a name prefix.
    pub fn absorb(&mut self, prefix: &str, other: VerificationReport) {
        for m in other.metrics {
            self.metrics.push(Metric {
                name: format!("{prefix}.{}", m.name),
                ..m
            });
        }
        for c in other.checks {
            self.checks.push(Check {
                name: format!("{prefix}.{}", c.name),
                ..c
            });
        }
        self.notes.extend(other.notes);
        self.verdict = Self::decide(&self.checks);
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    /// One row per metric and per check: `test,kind,name,n,value,passed`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,kind,name,n,value,passed\n");
        for m in &self.metrics {
            let n = m.n.map(|n| n.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},metric,{},{},{:.16e},", self.test, m.name, n, m.value);
        }
        for c in &self.checks {
            let _ = writeln!(out, "{},check,{},,{:.16e},{}", self.test, c.name, c.value, c.passed);
        }
        let _ = writeln!(out, "{},verdict,pass,,,{}", self.test, self.verdict);
        out
    }
}
