//! Stratified nonparametric bootstrap: trial and target cohorts are
//! resampled separately, every nuisance model is refit, and the estimator is
//! recomputed.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    aipsw_estimate, estimate_rct_diff, ipsw_estimate, om_estimate, Estimate, IntervalKind, Method,
    NuisanceValues, TargetPopulation,
};
use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::models::{FittedModels, ModelSpec};
use crate::parallel::{map_indexed, replicate_rng};
use crate::stats;

pub const MIN_REPLICATES: usize = 100;
/// Largest tolerated share of failed replicates.
pub const MAX_FAILED_SHARE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub method: Method,
    pub normalized: bool,
    pub target: TargetPopulation,
    pub models: ModelSpec,
    /// Symmetric quantile truncation of 1/p(X).
    pub truncate: Option<f64>,
}

impl EstimatorSpec {
    /// Normalized AIPSW over the combined population with main-effect models.
    pub fn default_for(p: usize) -> Self {
        Self {
            method: Method::Aipsw,
            normalized: true,
            target: TargetPopulation::Combined,
            models: ModelSpec::main_effects(p),
            truncate: None,
        }
    }
}

/// Fits the nuisance models and evaluates the estimator. `trial` may carry
/// units with the outcome missing; they are excluded here.
pub fn point_estimate(
    spec: &EstimatorSpec,
    trial: &StudyDataset,
    target: &StudyDataset,
    outcome: &str,
) -> Result<f64> {
    if spec.method == Method::RctDiff {
        return Ok(estimate_rct_diff(trial, outcome)?.point);
    }
    let trial = trial.for_outcome(outcome)?;
    let models = FittedModels::fit(&trial, target, outcome, &spec.models)?;
    let values = NuisanceValues::evaluate(&trial, target, &models, outcome, spec.truncate)?;
    evaluate(spec, &values)
}

pub(crate) fn evaluate(spec: &EstimatorSpec, values: &NuisanceValues) -> Result<f64> {
    match spec.method {
        Method::Om => om_estimate(values, spec.target),
        Method::Ipsw => ipsw_estimate(values, spec.target, spec.normalized),
        Method::Aipsw => aipsw_estimate(values, spec.target, spec.normalized),
        Method::RctDiff => Err(Error::InvalidArgument(
            "rct-diff does not use nuisance values".into(),
        )),
    }
}

fn resample<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Percentile bootstrap interval. Replicate `r` draws from its own RNG
/// stream keyed by `(seed, r)`, so the result does not depend on the number
/// of worker threads.
pub fn bootstrap_ci(
    spec: &EstimatorSpec,
    trial: &StudyDataset,
    target: &StudyDataset,
    outcome: &str,
    replicates: usize,
    seed: u64,
) -> Result<Estimate> {
    if replicates < MIN_REPLICATES {
        return Err(Error::InvalidArgument(format!(
            "bootstrap needs at least {MIN_REPLICATES} replicates, got {replicates}"
        )));
    }
    let trial = trial.for_outcome(outcome)?;
    let point = point_estimate(spec, &trial, target, outcome)?;

    let draws: Vec<Option<f64>> = map_indexed(replicates, |r| {
        let mut rng = replicate_rng(seed, r as u64);
        let t_idx = resample(trial.len(), &mut rng);
        let s_idx = resample(target.len(), &mut rng);
        let bt = trial.subset(&t_idx);
        let bs = target.subset(&s_idx);
        point_estimate(spec, &bt, &bs, outcome).ok().filter(|v| v.is_finite())
    });
    let mut values: Vec<f64> = draws.iter().flatten().copied().collect();
    let failed = replicates - values.len();
    if failed as f64 > MAX_FAILED_SHARE * replicates as f64 {
        return Err(Error::ReplicateFailure {
            failed,
            total: replicates,
        });
    }
    let se = stats::std_dev(&values);
    values.sort_by(f64::total_cmp);
    Ok(Estimate {
        method: spec.method,
        outcome: outcome.to_string(),
        normalized: spec.normalized,
        target: spec.target,
        point,
        se,
        ci_low: stats::quantile_sorted(&values, 0.025),
        ci_high: stats::quantile_sorted(&values, 0.975),
        interval: IntervalKind::Percentile,
        replicates,
        failed_replicates: failed,
        seed: Some(seed),
    })
}
