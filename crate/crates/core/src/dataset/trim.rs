use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CovariateKind, StudyDataset};
use crate::error::{Error, Result};
use crate::models::{fit_sampling_model, FeatureSpec, LogisticModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrimMethod {
    SamplingScore,
    CovariateRange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrimReport {
    pub method: TrimMethod,
    pub target_before: usize,
    pub target_after: usize,
    pub dropped: usize,
    /// Units failing each rule. A unit outside several covariate ranges is
    /// counted under each of them.
    pub dropped_by_rule: BTreeMap<String, usize>,
    /// Trial range of the sampling score, for the sampling-score method.
    pub score_range: Option<(f64, f64)>,
}

impl TrimReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let method = match self.method {
            TrimMethod::SamplingScore => "sampling-score",
            TrimMethod::CovariateRange => "covariate-range",
        };
        let _ = writeln!(out, "trim method     {method}");
        let _ = writeln!(out, "target before   {:>8}", self.target_before);
        let _ = writeln!(out, "target after    {:>8}", self.target_after);
        let _ = writeln!(out, "dropped         {:>8}", self.dropped);
        if let Some((lo, hi)) = self.score_range {
            let _ = writeln!(out, "score range     [{lo:.6}, {hi:.6}]");
        }
        for (rule, n) in &self.dropped_by_rule {
            let _ = writeln!(out, "  {rule:<20} {n:>8}");
        }
        out
    }
}

/// Support rule learned from the trial; applying it never refits, so
/// trimming an already-trimmed target is a no-op.
#[derive(Debug, Clone)]
pub enum SupportTrimmer {
    SamplingScore { model: LogisticModel, range: (f64, f64) },
    CovariateRange { ranges: Vec<(usize, String, f64, f64)> },
}

impl SupportTrimmer {
    pub fn fit(trial: &StudyDataset, target: &StudyDataset, method: TrimMethod) -> Result<Self> {
        if trial.schema() != target.schema() {
            return Err(Error::InvalidArgument("trial and target schemas differ".into()));
        }
        match method {
            TrimMethod::SamplingScore => {
                let spec = FeatureSpec::linear(trial.schema().len());
                let model = fit_sampling_model(trial, target, &spec)?;
                let (lo, hi) = trial
                    .covariate_rows()
                    .map(|x| model.predict(x))
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
                Ok(Self::SamplingScore {
                    model,
                    range: (lo, hi),
                })
            }
            TrimMethod::CovariateRange => {
                let ranges = trial
                    .schema()
                    .entries()
                    .iter()
                    .enumerate()
                    .filter(|(_, c)| c.kind == CovariateKind::Continuous)
                    .map(|(j, c)| {
                        let col = trial.column(j);
                        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        (j, c.name.clone(), lo, hi)
                    })
                    .collect();
                Ok(Self::CovariateRange { ranges })
            }
        }
    }

    pub fn apply(&self, target: &StudyDataset) -> Result<(StudyDataset, TrimReport)> {
        let mut keep = Vec::new();
        let mut dropped_by_rule = BTreeMap::new();
        let (method, score_range) = match self {
            SupportTrimmer::SamplingScore { model, range } => {
                for (i, x) in target.covariate_rows().enumerate() {
                    let p = model.predict(x);
                    if p >= range.0 && p <= range.1 {
                        keep.push(i);
                    } else {
                        let rule = if p < range.0 { "score-below-trial" } else { "score-above-trial" };
                        *dropped_by_rule.entry(rule.to_string()).or_insert(0) += 1;
                    }
                }
                (TrimMethod::SamplingScore, Some(*range))
            }
            SupportTrimmer::CovariateRange { ranges } => {
                for (i, x) in target.covariate_rows().enumerate() {
                    let mut inside = true;
                    for (j, name, lo, hi) in ranges {
                        if x[*j] < *lo || x[*j] > *hi {
                            inside = false;
                            *dropped_by_rule.entry(name.clone()).or_insert(0) += 1;
                        }
                    }
                    if inside {
                        keep.push(i);
                    }
                }
                (TrimMethod::CovariateRange, None)
            }
        };
        if keep.is_empty() {
            return Err(Error::EmptyAfterTrim);
        }
        let trimmed = target.subset(&keep);
        let report = TrimReport {
            method,
            target_before: target.len(),
            target_after: trimmed.len(),
            dropped: target.len() - trimmed.len(),
            dropped_by_rule,
            score_range,
        };
        Ok((trimmed, report))
    }
}

pub fn trim_to_support(
    trial: &StudyDataset,
    target: &StudyDataset,
    method: TrimMethod,
) -> Result<(StudyDataset, TrimReport)> {
    SupportTrimmer::fit(trial, target, method)?.apply(target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CovariateSchema, Source, UnitRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;

    fn schema() -> CovariateSchema {
        CovariateSchema::parse("age:continuous\nsex:binary").unwrap()
    }

    fn trial_from(xs: &[(f64, f64)]) -> StudyDataset {
        let records = xs
            .iter()
            .enumerate()
            .map(|(i, &(a, s))| UnitRecord::trial(vec![a, s], (i % 2) as u8, BTreeMap::from([("y".into(), 0.0)])))
            .collect();
        StudyDataset::new(schema(), Source::Trial, vec!["y".into()], records).unwrap()
    }

    fn target_from(xs: &[(f64, f64)]) -> StudyDataset {
        let records = xs.iter().map(|&(a, s)| UnitRecord::target(vec![a, s])).collect();
        StudyDataset::new(schema(), Source::Target, vec![], records).unwrap()
    }

    #[test]
    fn covariate_range_drops_out_of_range_age() {
        let trial = trial_from(&[(18.0, 0.0), (40.0, 1.0), (65.0, 0.0), (30.0, 1.0)]);
        let target = target_from(&[(20.0, 1.0), (80.0, 0.0), (64.0, 1.0)]);
        let (kept, report) = trim_to_support(&trial, &target, TrimMethod::CovariateRange).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(report.dropped, 1);
        assert_eq!(report.dropped_by_rule["age"], 1);
    }

    #[test]
    fn identical_cohorts_drop_nothing() {
        let xs = [(18.0, 0.0), (40.0, 1.0), (65.0, 0.0), (30.0, 1.0)];
        let (kept, report) =
            trim_to_support(&trial_from(&xs), &target_from(&xs), TrimMethod::CovariateRange).unwrap();
        assert_eq!(kept.len(), 4);
        assert_eq!(report.dropped, 0);
    }

    #[test]
    fn empty_after_trim() {
        let trial = trial_from(&[(18.0, 0.0), (40.0, 1.0)]);
        let target = target_from(&[(90.0, 1.0)]);
        assert!(matches!(
            trim_to_support(&trial, &target, TrimMethod::CovariateRange),
            Err(Error::EmptyAfterTrim)
        ));
    }

    #[test]
    fn sampling_score_trim_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let trial: Vec<(f64, f64)> = (0..300).map(|_| (rng.random_range(20.0..60.0), rng.random_range(0..2) as f64)).collect();
        let target: Vec<(f64, f64)> = (0..600).map(|_| (rng.random_range(25.0..80.0), rng.random_range(0..2) as f64)).collect();
        let trial = trial_from(&trial);
        let target = target_from(&target);
        let trimmer = SupportTrimmer::fit(&trial, &target, TrimMethod::SamplingScore).unwrap();
        let (once, first) = trimmer.apply(&target).unwrap();
        assert!(first.dropped > 0);
        let (twice, second) = trimmer.apply(&once).unwrap();
        assert_eq!(second.dropped, 0);
        assert_eq!(twice, once);
    }
}
