//! The per-run analysis report: one JSON document holding every table,
//! estimate, verdict and conclusion, plus the configuration needed to
//! reproduce it.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::{BalanceTable, TrimReport};
use crate::decision::{conclude_values, Conclusion};
use crate::error::{Error, Result};
use crate::estimators::Estimate;
use crate::sensitivity::SensitivityReport;

pub const REPORT_SCHEMA_VERSION: &str = "1.0";

/// What produced an artifact. Worker count is deliberately absent: it never
/// changes results.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub settings: BTreeMap<String, String>,
}

impl RunMetadata {
    pub fn new(command: &str, seed: Option<u64>) -> Self {
        Self {
            tool: "trialgen".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            settings: BTreeMap::new(),
        }
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.settings.insert(key.to_string(), value.to_string());
        self
    }

    /// `key: value` lines, for embedding as comments in figures and CSVs.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("tool: {} {}", self.tool, self.version),
            format!("command: {}", self.command),
        ];
        if let Some(s) = self.seed {
            out.push(format!("seed: {s}"));
        }
        out.extend(self.settings.iter().map(|(k, v)| format!("{k}: {v}")));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConclusionRecord {
    pub conclusion: Conclusion,
    pub lower: f64,
    pub upper: f64,
    pub lower_robust: bool,
    pub upper_robust: bool,
    pub narrative: String,
    /// Why the conclusion is indeterminate for reasons outside the table.
    pub diagnostic: Option<String>,
}

impl ConclusionRecord {
    pub fn new(
        lower: f64,
        upper: f64,
        lower_robust: bool,
        upper_robust: bool,
        treatment: &str,
        comparator: &str,
    ) -> Result<Self> {
        let conclusion = conclude_values(lower, lower_robust, upper, upper_robust)?;
        let diagnostic = (lower == 0.0 || upper == 0.0)
            .then(|| "a bound is exactly zero and has no sign".to_string());
        Ok(Self {
            conclusion,
            lower,
            upper,
            lower_robust,
            upper_robust,
            narrative: conclusion.narrative(treatment, comparator),
            diagnostic,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub outcome: String,
    pub rct_diff: Estimate,
    pub generalized: Estimate,
    /// Absent when the sensitivity step was not run.
    pub sensitivity: Option<SensitivityReport>,
    /// Emitted figure files, relative to the output directory.
    pub figures: Vec<String>,
    pub conclusion: Option<ConclusionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub metadata: RunMetadata,
    pub treatment: String,
    pub comparator: String,
    pub balance: Option<BalanceTable>,
    pub trim: Option<TrimReport>,
    pub outcomes: Vec<OutcomeReport>,
}

pub fn build_report(
    metadata: RunMetadata,
    treatment: &str,
    comparator: &str,
    balance: Option<BalanceTable>,
    trim: Option<TrimReport>,
    outcomes: Vec<OutcomeReport>,
) -> Result<AnalysisReport> {
    if outcomes.is_empty() {
        return Err(Error::InvalidArgument("report needs at least one outcome".into()));
    }
    Ok(AnalysisReport {
        schema_version: REPORT_SCHEMA_VERSION.into(),
        metadata,
        treatment: treatment.into(),
        comparator: comparator.into(),
        balance,
        trim,
        outcomes,
    })
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for line in self.metadata.lines() {
            let _ = writeln!(out, "# {line}");
        }
        if let Some(b) = &self.balance {
            let _ = writeln!(out, "\nBaseline balance\n{}", b.to_text());
        }
        if let Some(t) = &self.trim {
            let _ = writeln!(out, "\nSupport trimming\n{}", t.to_text());
        }
        let mut rows = vec![["outcome", "method", "estimate", "se", "95% CI"].map(String::from).to_vec()];
        for o in &self.outcomes {
            for e in [&o.rct_diff, &o.generalized] {
                rows.push(vec![
                    o.outcome.clone(),
                    e.method.label().to_string(),
                    format!("{:.3}", e.point),
                    format!("{:.3}", e.se),
                    format!("({:.3}, {:.3})", e.ci_low, e.ci_high),
                ]);
            }
        }
        let _ = writeln!(out, "\nEstimates\n{}", crate::dataset::align_rows(&rows));
        for o in &self.outcomes {
            if let Some(s) = &o.sensitivity {
                let _ = writeln!(out, "Sensitivity: {}\n{}", o.outcome, s.to_text());
            }
        }
        for o in &self.outcomes {
            match &o.conclusion {
                Some(c) => {
                    let _ = writeln!(out, "{}: {} ({}).", o.outcome, c.narrative, c.conclusion);
                    if let Some(d) = &c.diagnostic {
                        let _ = writeln!(out, "  note: {d}");
                    }
                }
                None => {
                    let _ = writeln!(out, "{}: sensitivity not run, no conclusion.", o.outcome);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{IntervalKind, Method, TargetPopulation};

    fn est(method: Method) -> Estimate {
        Estimate {
            method,
            outcome: "y".into(),
            normalized: true,
            target: TargetPopulation::Combined,
            point: -1.0,
            se: 0.5,
            ci_low: -2.0,
            ci_high: 0.1,
            interval: IntervalKind::Percentile,
            replicates: 100,
            failed_replicates: 0,
            seed: Some(3),
        }
    }

    #[test]
    fn minimal_report_marks_sensitivity_absent() {
        let o = OutcomeReport {
            outcome: "y".into(),
            rct_diff: est(Method::RctDiff),
            generalized: est(Method::Aipsw),
            sensitivity: None,
            figures: vec![],
            conclusion: None,
        };
        let r = build_report(RunMetadata::new("estimate", Some(3)), "T", "C", None, None, vec![o]).unwrap();
        let json = r.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["outcomes"][0]["sensitivity"].is_null());
        assert_eq!(v["schema_version"], REPORT_SCHEMA_VERSION);
        assert!(r.to_text().contains("sensitivity not run"));
        assert_eq!(json, r.to_json().unwrap());
    }

    #[test]
    fn empty_report_rejected() {
        assert!(build_report(RunMetadata::default(), "T", "C", None, None, vec![]).is_err());
    }

    #[test]
    fn zero_bound_carries_diagnostic() {
        let c = ConclusionRecord::new(0.0, 1.0, true, true, "T", "C").unwrap();
        assert_eq!(c.conclusion, Conclusion::Indeterminate);
        assert!(c.diagnostic.is_some());
    }
}
