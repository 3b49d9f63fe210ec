use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CovariateKind, StudyDataset};
use crate::error::{Error, Result};
use crate::stats::{self, TestResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
}

impl GroupSummary {
    fn of(xs: &[f64]) -> Self {
        Self {
            n: xs.len(),
            mean: stats::mean(xs),
            sd: stats::std_dev(xs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    KolmogorovSmirnov,
    TwoProportionZ,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub kind: CovariateKind,
    pub treatment: GroupSummary,
    pub control: GroupSummary,
    pub trial: GroupSummary,
    pub target: GroupSummary,
    pub test: TestKind,
    /// D for K-S; Z (trial minus target) for the proportion test.
    pub statistic: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
}

fn cell(g: &GroupSummary, kind: CovariateKind) -> String {
    match kind {
        CovariateKind::Binary => format!("{:.3}({:.3})", g.mean, g.sd),
        CovariateKind::Continuous => format!("{:.2}({:.2})", g.mean, g.sd),
    }
}

fn p_cell(p: f64) -> String {
    if p < 0.001 {
        "<0.001".into()
    } else {
        format!("{p:.3}")
    }
}

impl BalanceTable {
    /// Aligned text table: mean(sd) per group, then the test p-value.
    pub fn to_text(&self) -> String {
        let Some(first) = self.rows.first() else {
            return String::new();
        };
        let header = vec![
            "Characteristic".to_string(),
            format!("Treatment(N={})", first.treatment.n),
            format!("Control(N={})", first.control.n),
            format!("Trial(N={})", first.trial.n),
            format!("Target(N={})", first.target.n),
            "Test".to_string(),
            "p-value".to_string(),
        ];
        let mut rows = vec![header];
        for r in &self.rows {
            rows.push(vec![
                r.covariate.clone(),
                cell(&r.treatment, r.kind),
                cell(&r.control, r.kind),
                cell(&r.trial, r.kind),
                cell(&r.target, r.kind),
                match r.test {
                    TestKind::KolmogorovSmirnov => format!("D={:.3}", r.statistic),
                    TestKind::TwoProportionZ => format!("Z={:.3}", r.statistic),
                },
                p_cell(r.p_value),
            ]);
        }
        align(&rows)
    }
}

pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        let _ = writeln!(out, "{}", line.join("  ").trim_end());
    }
    out
}

pub fn balance_table(trial: &StudyDataset, target: &StudyDataset) -> Result<BalanceTable> {
    if trial.schema() != target.schema() {
        return Err(Error::InvalidArgument("trial and target schemas differ".into()));
    }
    let arms = trial.arms();
    let mut rows = Vec::new();
    for (j, cov) in trial.schema().entries().iter().enumerate() {
        let all = trial.column(j);
        let treated: Vec<f64> = all.iter().zip(&arms).filter(|(_, &a)| a == 1).map(|(x, _)| *x).collect();
        let control: Vec<f64> = all.iter().zip(&arms).filter(|(_, &a)| a == 0).map(|(x, _)| *x).collect();
        let tgt = target.column(j);
        for (name, group) in [("treatment", &treated), ("control", &control), ("target", &tgt)] {
            if group.len() < 2 {
                return Err(Error::DegenerateSample(format!(
                    "{name} group has {} units, need at least 2",
                    group.len()
                )));
            }
        }
        let (test, TestResult { statistic, p_value }) = match cov.kind {
            CovariateKind::Continuous => (TestKind::KolmogorovSmirnov, stats::ks_test(&all, &tgt)),
            CovariateKind::Binary => (TestKind::TwoProportionZ, stats::two_proportion_z_test(&all, &tgt)),
        };
        rows.push(BalanceRow {
            covariate: cov.name.clone(),
            kind: cov.kind,
            treatment: GroupSummary::of(&treated),
            control: GroupSummary::of(&control),
            trial: GroupSummary::of(&all),
            target: GroupSummary::of(&tgt),
            test,
            statistic,
            p_value,
        });
    }
    Ok(BalanceTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CovariateSchema, Source, UnitRecord};
    use std::collections::BTreeMap;

    fn data() -> (StudyDataset, StudyDataset) {
        let schema = CovariateSchema::parse("age:continuous\nsex:binary").unwrap();
        let rows = [(50.0, 1.0), (61.0, 0.0), (45.0, 1.0), (38.0, 0.0), (55.0, 1.0), (47.0, 0.0)];
        let trial = StudyDataset::new(
            schema.clone(),
            Source::Trial,
            vec!["y".into()],
            rows.iter()
                .enumerate()
                .map(|(i, &(a, s))| UnitRecord::trial(vec![a, s], (i % 2) as u8, BTreeMap::from([("y".into(), 1.0)])))
                .collect(),
        )
        .unwrap();
        let target = StudyDataset::new(
            schema,
            Source::Target,
            vec![],
            rows.iter().map(|&(a, s)| UnitRecord::target(vec![a, s])).collect(),
        )
        .unwrap();
        (trial, target)
    }

    #[test]
    fn identical_cohorts_are_balanced() {
        let (trial, target) = data();
        let table = balance_table(&trial, &target).unwrap();
        assert_eq!(table.rows[0].test, TestKind::KolmogorovSmirnov);
        assert_eq!(table.rows[0].statistic, 0.0);
        assert_eq!(table.rows[0].p_value, 1.0);
        assert_eq!(table.rows[1].p_value, 1.0);
        assert_eq!(table.rows[0].treatment.n, 3);
        let text = table.to_text();
        assert!(text.contains("Characteristic"));
        assert!(text.contains("age"));
    }

    #[test]
    fn tiny_group_is_degenerate() {
        let (trial, target) = data();
        let target = target.subset(&[0]);
        assert!(matches!(balance_table(&trial, &target), Err(Error::DegenerateSample(_))));
    }
}
