//! Report types shared by every experiment.

use serde::{Deserialize, Serialize};

use super::ExperimentKind;
use crate::stats::MeanSe;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    AtMost,
    AtLeast,
    Below,
    Above,
}

impl Comparison {
    fn holds(self, estimate: f64, threshold: f64) -> bool {
        match self {
            Comparison::AtMost => estimate <= threshold,
            Comparison::AtLeast => estimate >= threshold,
            Comparison::Below => estimate < threshold,
            Comparison::Above => estimate > threshold,
        }
    }
}

/// One pass/fail decision with the numbers behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub name: String,
    pub estimate: f64,
    pub stderr: Option<f64>,
    pub threshold: f64,
    pub comparison: Comparison,
    pub pass: bool,
    /// Informational criteria are reported but do not decide the verdict.
    pub gating: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CriterionResult {
    pub fn new(name: &str, estimate: f64, comparison: Comparison, threshold: f64) -> Self {
        Self {
            name: name.to_string(),
            estimate,
            stderr: None,
            threshold,
            comparison,
            // NaN never passes.
            pass: comparison.holds(estimate, threshold),
            gating: true,
            note: None,
        }
    }

    pub fn at_most(name: &str, estimate: f64, threshold: f64) -> Self {
        Self::new(name, estimate, Comparison::AtMost, threshold)
    }

    pub fn at_least(name: &str, estimate: f64, threshold: f64) -> Self {
        Self::new(name, estimate, Comparison::AtLeast, threshold)
    }

    pub fn with_stderr(mut self, se: f64) -> Self {
        self.stderr = Some(se);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    pub fn informational(mut self) -> Self {
        self.gating = false;
        self
    }

    /// A criterion that could not be evaluated.
    pub fn failed(name: &str, threshold: f64, reason: impl Into<String>) -> Self {
        Self::at_most(name, f64::NAN, threshold).with_note(reason)
    }
}

/// Time series with standard errors, written as `t,mean,stderr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub name: String,
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Curve {
    pub fn from_stats(name: &str, t: Vec<f64>, stats: &[MeanSe]) -> Self {
        Self {
            name: name.to_string(),
            t,
            mean: stats.iter().map(|s| s.mean).collect(),
            stderr: stats.iter().map(|s| s.stderr).collect(),
        }
    }
}

/// Free-form numeric table, written as CSV with the given header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self { name: name.to_string(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub path_id: u64,
    pub step: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: Option<String>,
    pub seed: u64,
    pub code_version: String,
    pub paths: usize,
    pub path_offset: u64,
    pub dt: f64,
    pub h: f64,
    pub horizon: f64,
    pub record_every: usize,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub kind: ExperimentKind,
    pub pass: bool,
    pub criteria: Vec<CriterionResult>,
    pub curves: Vec<Curve>,
    pub tables: Vec<Table>,
    pub divergences: Vec<Divergence>,
    pub notes: Vec<String>,
    pub provenance: Provenance,
}

impl ExperimentReport {
    pub fn new(kind: ExperimentKind, provenance: Provenance) -> Self {
        Self {
            kind,
            pass: false,
            criteria: Vec::new(),
            curves: Vec::new(),
            tables: Vec::new(),
            divergences: Vec::new(),
            notes: Vec::new(),
            provenance,
        }
    }

    pub fn push(&mut self, c: CriterionResult) {
        self.criteria.push(c);
        self.refresh();
    }

    /// Recomputes the verdict: every gating criterion must pass, and there must be at least one.
    pub fn refresh(&mut self) {
        let mut gating = self.criteria.iter().filter(|c| c.gating).peekable();
        self.pass = gating.peek().is_some() && gating.all(|c| c.pass);
    }

    pub fn criterion(&self, name: &str) -> Option<&CriterionResult> {
        self.criteria.iter().find(|c| c.name == name)
    }

    pub fn curve(&self, name: &str) -> Option<&Curve> {
        self.curves.iter().find(|c| c.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|c| c.name == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nan_fails_and_verdict_needs_gating() {
        assert!(!CriterionResult::at_most("x", f64::NAN, 1.0).pass);
        assert!(CriterionResult::new("y", 0.5, Comparison::Below, 1.0).pass);
        assert!(!CriterionResult::new("y", 1.0, Comparison::Below, 1.0).pass);
        let prov = Provenance {
            config_hash: None,
            seed: 0,
            code_version: String::new(),
            paths: 1,
            path_offset: 0,
            dt: 1.0,
            h: 1.0,
            horizon: 1.0,
            record_every: 1,
            slack: 0.0,
        };
        let mut r = ExperimentReport::new(ExperimentKind::Contraction, prov);
        r.push(CriterionResult::at_most("info", 2.0, 1.0).informational());
        assert!(!r.pass);
        r.push(CriterionResult::at_least("gate", 2.0, 1.0));
        assert!(r.pass);
        r.push(CriterionResult::at_least("gate2", 0.0, 1.0));
        assert!(!r.pass);
    }
}
