//! Nuisance models: sampling score p(X) = Pr[S=1|X], trial propensity
//! e(X) = Pr[A=1|X,S=1], per-arm outcome regressions g_a(X), and the
//! participation weights built from the sampling score.

mod features;
mod logistic;
mod ols;
mod weights;

use serde::{Deserialize, Serialize};

use crate::dataset::{Source, StudyDataset};
use crate::error::{Error, Result};

pub use features::{FeatureMatrix, FeatureSpec, Term};
pub use logistic::{fit_logistic, fit_logistic_with, LogisticFit, LogisticOptions, MAX_ITERATIONS, SCORE_TOLERANCE};
pub use ols::{fit_ols, LinearFit};
pub use weights::{participation_weights, WeightSet};

pub(crate) use logistic::expit;

/// A logistic fit together with the terms it was fit on, so it can score
/// raw covariate rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub spec: FeatureSpec,
    pub fit: LogisticFit,
}

impl LogisticModel {
    pub fn predict(&self, covariates: &[f64]) -> f64 {
        self.spec.with_row(covariates, |x| self.fit.predict(x))
    }
}

/// Fits Pr[S = 1 | X] on the stacked trial (S = 1) and target (S = 0) units.
pub fn fit_sampling_model(
    trial: &StudyDataset,
    target: &StudyDataset,
    spec: &FeatureSpec,
) -> Result<LogisticModel> {
    if trial.schema() != target.schema() {
        return Err(Error::InvalidArgument("trial and target schemas differ".into()));
    }
    let design = spec.design(trial.covariate_rows().chain(target.covariate_rows()));
    let labels: Vec<f64> = std::iter::repeat_n(1.0, trial.len())
        .chain(std::iter::repeat_n(0.0, target.len()))
        .collect();
    let fit = fit_logistic(&design, &labels)?;
    Ok(LogisticModel {
        spec: spec.clone(),
        fit,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropensityMode {
    /// e(X) = c for a design-known randomization probability.
    KnownConstant(f64),
    /// e(X) = observed treated fraction of the trial.
    ObservedFraction,
    /// Logistic regression of A on the given terms over trial units.
    Fitted(FeatureSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propensity {
    Constant(f64),
    Fitted(LogisticModel),
}

impl Propensity {
    pub fn predict(&self, covariates: &[f64]) -> f64 {
        match self {
            Propensity::Constant(c) => *c,
            Propensity::Fitted(m) => m.predict(covariates),
        }
    }

    /// Probability of the unit's own arm, e_a(X).
    pub fn arm_probability(&self, covariates: &[f64], arm: u8) -> f64 {
        let e = self.predict(covariates);
        if arm == 1 {
            e
        } else {
            1.0 - e
        }
    }
}

pub fn fit_trial_propensity(trial: &StudyDataset, mode: &PropensityMode) -> Result<Propensity> {
    if trial.source() != Source::Trial {
        return Err(Error::InvalidArgument("propensity needs trial data".into()));
    }
    match mode {
        PropensityMode::KnownConstant(c) => {
            if !(*c > 0.0 && *c < 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "constant propensity {c} is outside (0, 1)"
                )));
            }
            Ok(Propensity::Constant(*c))
        }
        PropensityMode::ObservedFraction => Ok(Propensity::Constant(trial.treated_fraction())),
        PropensityMode::Fitted(spec) => {
            let design = spec.design(trial.covariate_rows());
            let labels: Vec<f64> = trial.arms().into_iter().map(f64::from).collect();
            let fit = fit_logistic(&design, &labels)?;
            Ok(Propensity::Fitted(LogisticModel {
                spec: spec.clone(),
                fit,
            }))
        }
    }
}

/// Linear outcome regressions, one per arm, fit on trial units only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeFit {
    pub outcome: String,
    pub spec: FeatureSpec,
    pub control: LinearFit,
    pub treated: LinearFit,
}

impl OutcomeFit {
    pub fn predict(&self, covariates: &[f64], arm: u8) -> f64 {
        let fit = if arm == 1 { &self.treated } else { &self.control };
        self.spec.with_row(covariates, |x| fit.predict(x))
    }

    /// g_1(X) - g_0(X)
    pub fn effect(&self, covariates: &[f64]) -> f64 {
        self.spec
            .with_row(covariates, |x| self.treated.predict(x) - self.control.predict(x))
    }
}

pub fn fit_outcome_models(trial: &StudyDataset, outcome: &str, spec: &FeatureSpec) -> Result<OutcomeFit> {
    let data = trial.for_outcome(outcome)?;
    let y = data.outcome_values(outcome);
    let arms = data.arms();
    let fit_arm = |arm: u8| -> Result<LinearFit> {
        let idx: Vec<usize> = (0..data.len()).filter(|&i| arms[i] == arm).collect();
        if idx.len() < spec.len() + 2 {
            return Err(Error::InvalidArgument(format!(
                "arm {arm} has {} units with `{outcome}`, need at least {}",
                idx.len(),
                spec.len() + 2
            )));
        }
        let design = spec.design(idx.iter().map(|&i| data.records()[i].covariates.as_slice()));
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        fit_ols(&design, &ys)
    };
    Ok(OutcomeFit {
        outcome: outcome.to_string(),
        spec: spec.clone(),
        control: fit_arm(0)?,
        treated: fit_arm(1)?,
    })
}

/// Model formulas and options used to build [`FittedModels`]; the bootstrap
/// refits from this on every replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub sampling: FeatureSpec,
    pub outcome: FeatureSpec,
    pub propensity: PropensityMode,
}

impl ModelSpec {
    /// Main effects everywhere, propensity at the observed treated fraction.
    pub fn main_effects(p: usize) -> Self {
        Self {
            sampling: FeatureSpec::linear(p),
            outcome: FeatureSpec::linear(p),
            propensity: PropensityMode::ObservedFraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModels {
    pub sampling: LogisticModel,
    pub propensity: Propensity,
    pub outcome: OutcomeFit,
}

impl FittedModels {
    pub fn fit(
        trial: &StudyDataset,
        target: &StudyDataset,
        outcome: &str,
        spec: &ModelSpec,
    ) -> Result<Self> {
        let trial = trial.for_outcome(outcome)?;
        Ok(Self {
            sampling: fit_sampling_model(&trial, target, &spec.sampling)?,
            propensity: fit_trial_propensity(&trial, &spec.propensity)?,
            outcome: fit_outcome_models(&trial, outcome, &spec.outcome)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{CovariateSchema, UnitRecord};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::collections::BTreeMap;

    fn trial(n: usize, seed: u64, y: impl Fn(f64, u8, &mut ChaCha8Rng) -> f64) -> StudyDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let schema = CovariateSchema::parse("x1:continuous").unwrap();
        let records = (0..n)
            .map(|i| {
                let x: f64 = rng.sample(StandardNormal);
                let a = (i % 2) as u8;
                let yv = y(x, a, &mut rng);
                UnitRecord::trial(vec![x], a, BTreeMap::from([("y".to_string(), yv)]))
            })
            .collect();
        StudyDataset::new(schema, Source::Trial, vec!["y".into()], records).unwrap()
    }

    #[test]
    fn constant_outcome_gives_constant_predictions() {
        let t = trial(40, 1, |_, _, _| 5.0);
        let fit = fit_outcome_models(&t, "y", &FeatureSpec::linear(1)).unwrap();
        for x in [-3.0, 0.0, 7.5] {
            assert!((fit.predict(&[x], 0) - 5.0).abs() < 1e-10);
            assert!((fit.predict(&[x], 1) - 5.0).abs() < 1e-10);
        }
    }

    #[test]
    fn small_arm_is_precondition_error() {
        let t = trial(5, 1, |x, _, _| x);
        let err = fit_outcome_models(&t, "y", &FeatureSpec::linear(1)).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn propensity_modes() {
        let t = trial(602, 2, |x, _, _| x);
        let c = 300.0 / 602.0;
        let p = fit_trial_propensity(&t, &PropensityMode::KnownConstant(c)).unwrap();
        assert_eq!(p.predict(&[1.0]), c);
        assert!((c - 0.4983).abs() < 1e-4);
        assert!(fit_trial_propensity(&t, &PropensityMode::KnownConstant(1.0)).is_err());
        assert!(fit_trial_propensity(&t, &PropensityMode::KnownConstant(0.0)).is_err());

        let fitted = fit_trial_propensity(&t, &PropensityMode::Fitted(FeatureSpec::linear(1))).unwrap();
        match fitted {
            Propensity::Fitted(m) => {
                let bound = 4.0 / (602f64).sqrt();
                assert!(m.fit.coefficients[1].abs() < bound);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn outcome_fit_uses_own_arm_only() {
        let t = trial(400, 3, |x, a, rng| {
            if a == 1 {
                1.0 + 2.0 * x
            } else {
                -4.0 + 0.5 * x + 1e-3 * rng.sample::<f64, _>(StandardNormal)
            }
        });
        let fit = fit_outcome_models(&t, "y", &FeatureSpec::linear(1)).unwrap();
        assert!((fit.treated.coefficients[0] - 1.0).abs() < 1e-9);
        assert!((fit.treated.coefficients[1] - 2.0).abs() < 1e-9);
        assert!((fit.control.coefficients[0] + 4.0).abs() < 1e-3);
        assert!((fit.effect(&[2.0]) - (5.0 - -3.0)).abs() < 1e-2);
    }
}
