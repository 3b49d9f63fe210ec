//! Effect estimators: trial difference in means, and the generalized
//! outcome-model, IPSW and AIPSW estimators.
//!
//! The generalized estimators are pure functions of [`NuisanceValues`], the
//! per-unit evaluations of the fitted nuisance models. With S_i the trial
//! indicator, w_i = 1/p(X_i) and e_a the probability of the unit's own arm,
//! AIPSW over the combined sample of N = n + m units is
//!
//! ```text
//! (1/N) sum_i { S_i A_i w_i/e_1 (Y_i - g_1) - S_i (1-A_i) w_i/e_0 (Y_i - g_0) + (g_1 - g_0) }
//! ```
//!
//! The normalized form replaces 1/N in each residual term by the in-arm
//! sum of S_i 1{A_i = a} w_i/e_a (Hajek normalization per arm). For the
//! target-only population the weights become (1 - p)/p, the augmentation
//! averages over target units, and the unnormalized divisor is m.

mod bootstrap;

use serde::{Deserialize, Serialize};

use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::models::{FittedModels, WeightSet};
use crate::stats::{self, Z_975};

pub use bootstrap::{bootstrap_ci, point_estimate, EstimatorSpec, MAX_FAILED_SHARE, MIN_REPLICATES};

/// Sampling scores below this are flagged in positivity diagnostics.
pub const POSITIVITY_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    RctDiff,
    Om,
    Ipsw,
    Aipsw,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::RctDiff => "rct-diff",
            Method::Om => "om",
            Method::Ipsw => "ipsw",
            Method::Aipsw => "aipsw",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPopulation {
    /// Trial plus target units (n + m).
    Combined,
    TargetOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalKind {
    Normal,
    Percentile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub method: Method,
    pub outcome: String,
    pub normalized: bool,
    pub target: TargetPopulation,
    pub point: f64,
    pub se: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub interval: IntervalKind,
    #[serde(rename = "B")]
    pub replicates: usize,
    pub failed_replicates: usize,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialUnit {
    pub y: f64,
    pub arm: u8,
    /// 1/p(X), possibly truncated.
    pub inv_score: f64,
    /// e(X) = Pr[A = 1 | X, S = 1].
    pub propensity: f64,
    pub g0: f64,
    pub g1: f64,
}

impl TrialUnit {
    fn arm_probability(&self) -> f64 {
        if self.arm == 1 {
            self.propensity
        } else {
            1.0 - self.propensity
        }
    }

    /// Transformed outcome A Y/e - (1 - A) Y/(1 - e).
    pub fn pseudo_effect(&self) -> f64 {
        if self.arm == 1 {
            self.y / self.propensity
        } else {
            -self.y / (1.0 - self.propensity)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetUnit {
    pub score: f64,
    pub g0: f64,
    pub g1: f64,
}

/// Fitted nuisance functions evaluated at every unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceValues {
    pub trial: Vec<TrialUnit>,
    pub target: Vec<TargetUnit>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositivityDiagnostics {
    pub min_score: f64,
    pub below_floor: usize,
}

impl NuisanceValues {
    /// `trial` must already be restricted to units observing `outcome`.
    pub fn evaluate(
        trial: &StudyDataset,
        target: &StudyDataset,
        models: &FittedModels,
        outcome: &str,
        truncate: Option<f64>,
    ) -> Result<Self> {
        let y = trial.outcome_values(outcome);
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                row: i + 1,
                column: outcome.to_string(),
            });
        }
        let mut inv: Vec<f64> = trial.covariate_rows().map(|x| 1.0 / models.sampling.predict(x)).collect();
        if let Some(unit) = inv.iter().position(|w| !w.is_finite()) {
            return Err(Error::NonFiniteWeight { unit });
        }
        if let Some((lo, hi)) = WeightSet::from_raw(&inv, truncate)?.truncation {
            for w in &mut inv {
                *w = w.clamp(lo, hi);
            }
        }
        let trial_units = trial
            .records()
            .iter()
            .zip(y.iter().zip(&inv))
            .map(|(r, (&y, &inv_score))| {
                let x = r.covariates.as_slice();
                TrialUnit {
                    y,
                    arm: r.arm.unwrap_or(0),
                    inv_score,
                    propensity: models.propensity.predict(x),
                    g0: models.outcome.predict(x, 0),
                    g1: models.outcome.predict(x, 1),
                }
            })
            .collect();
        let target_units = target
            .covariate_rows()
            .map(|x| TargetUnit {
                score: models.sampling.predict(x),
                g0: models.outcome.predict(x, 0),
                g1: models.outcome.predict(x, 1),
            })
            .collect();
        Ok(Self {
            trial: trial_units,
            target: target_units,
        })
    }

    pub fn positivity(&self) -> PositivityDiagnostics {
        let scores = self
            .trial
            .iter()
            .map(|u| 1.0 / u.inv_score)
            .chain(self.target.iter().map(|u| u.score));
        let mut min_score = f64::INFINITY;
        let mut below_floor = 0;
        for s in scores {
            min_score = min_score.min(s);
            if s < POSITIVITY_FLOOR {
                below_floor += 1;
            }
        }
        PositivityDiagnostics {
            min_score,
            below_floor,
        }
    }

    fn population_size(&self, pop: TargetPopulation) -> f64 {
        match pop {
            TargetPopulation::Combined => (self.trial.len() + self.target.len()) as f64,
            TargetPopulation::TargetOnly => self.target.len() as f64,
        }
    }

    /// Sampling weight of a trial unit for the chosen population.
    fn sampling_weight(u: &TrialUnit, pop: TargetPopulation) -> f64 {
        match pop {
            TargetPopulation::Combined => u.inv_score,
            TargetPopulation::TargetOnly => u.inv_score - 1.0,
        }
    }

    /// Per-arm sums of w * value and of w, w = sampling weight / e_a.
    fn arm_sums(&self, pop: TargetPopulation, value: impl Fn(&TrialUnit) -> f64) -> Result<[(f64, f64); 2]> {
        let mut num = [Vec::new(), Vec::new()];
        let mut den = [Vec::new(), Vec::new()];
        for (i, u) in self.trial.iter().enumerate() {
            let w = Self::sampling_weight(u, pop) / u.arm_probability();
            if !w.is_finite() {
                return Err(Error::NonFiniteWeight { unit: i });
            }
            let a = u.arm as usize;
            num[a].push(w * value(u));
            den[a].push(w);
        }
        Ok([0, 1].map(|a| {
            (
                stats::compensated_sum(num[a].iter().copied()),
                stats::compensated_sum(den[a].iter().copied()),
            )
        }))
    }

    /// Mean of g_1 - g_0 over the chosen population.
    fn augmentation(&self, pop: TargetPopulation) -> f64 {
        let trial = self.trial.iter().map(|u| u.g1 - u.g0);
        let target = self.target.iter().map(|u| u.g1 - u.g0);
        match pop {
            TargetPopulation::Combined => {
                stats::compensated_sum(trial.chain(target)) / self.population_size(pop)
            }
            TargetPopulation::TargetOnly => stats::compensated_sum(target) / self.population_size(pop),
        }
    }

    fn weighted_contrast(
        &self,
        pop: TargetPopulation,
        normalized: bool,
        value: impl Fn(&TrialUnit, u8) -> f64,
    ) -> Result<f64> {
        let sums = self.arm_sums(pop, |u| value(u, u.arm))?;
        let n = self.population_size(pop);
        let arm_term = |(num, den): (f64, f64)| -> Result<f64> {
            let d = if normalized { den } else { n };
            if !(d > 0.0) {
                return Err(Error::ZeroDenominator("empty arm or population".into()));
            }
            Ok(num / d)
        };
        Ok(arm_term(sums[1])? - arm_term(sums[0])?)
    }
}

/// Outcome-model estimator: mean of g_1 - g_0 over the population.
pub fn om_estimate(values: &NuisanceValues, pop: TargetPopulation) -> Result<f64> {
    if pop == TargetPopulation::TargetOnly && values.target.is_empty() {
        return Err(Error::DegenerateSample("target population is empty".into()));
    }
    Ok(values.augmentation(pop))
}

pub fn ipsw_estimate(values: &NuisanceValues, pop: TargetPopulation, normalized: bool) -> Result<f64> {
    values.weighted_contrast(pop, normalized, |u, _| u.y)
}

pub fn aipsw_estimate(values: &NuisanceValues, pop: TargetPopulation, normalized: bool) -> Result<f64> {
    let residual = values.weighted_contrast(pop, normalized, |u, a| {
        u.y - if a == 1 { u.g1 } else { u.g0 }
    })?;
    Ok(residual + om_estimate(values, pop)?)
}

/// Difference of arm means inside the trial with a normal-approximation
/// interval.
pub fn estimate_rct_diff(trial: &StudyDataset, outcome: &str) -> Result<Estimate> {
    let data = trial.for_outcome(outcome)?;
    let y = data.outcome_values(outcome);
    let arms = data.arms();
    let pick = |a: u8| -> Vec<f64> { y.iter().zip(&arms).filter(|(_, &x)| x == a).map(|(v, _)| *v).collect() };
    let (treated, control) = (pick(1), pick(0));
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::DegenerateSample("each arm needs two units".into()));
    }
    let point = stats::mean(&treated) - stats::mean(&control);
    let se = (stats::variance(&treated) / treated.len() as f64 + stats::variance(&control) / control.len() as f64).sqrt();
    Ok(Estimate {
        method: Method::RctDiff,
        outcome: outcome.to_string(),
        normalized: false,
        target: TargetPopulation::Combined,
        point,
        se,
        ci_low: point - Z_975 * se,
        ci_high: point + Z_975 * se,
        interval: IntervalKind::Normal,
        replicates: 0,
        failed_replicates: 0,
        seed: None,
    })
}
