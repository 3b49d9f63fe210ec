use serde::{Deserialize, Serialize};

use super::{SimConfig, Simulator, OUTCOME};
use crate::error::{Error, Result};
use crate::estimators::{bootstrap_ci, point_estimate, EstimatorSpec, Method};
use crate::estimators::MAX_FAILED_SHARE;
use crate::parallel::map_indexed;
use crate::stats;

pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEstimator {
    pub label: String,
    pub spec: EstimatorSpec,
}

impl McEstimator {
    /// OM, IPSW and AIPSW on the configuration's analyst models.
    pub fn standard_set(cfg: &SimConfig) -> Vec<Self> {
        [Method::Om, Method::Ipsw, Method::Aipsw]
            .into_iter()
            .map(|method| Self {
                label: method.label().to_string(),
                spec: EstimatorSpec {
                    method,
                    normalized: cfg.normalized,
                    target: cfg.target_population,
                    models: cfg.model_spec(),
                    truncate: None,
                },
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McOptions {
    pub reps: usize,
    pub seed: u64,
    /// Bootstrap replicates per study; `None` skips intervals and coverage.
    pub bootstrap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub mean_estimate: f64,
    pub mean_bias: f64,
    pub bias_mcse: f64,
    pub empirical_sd: f64,
    pub sd_mcse: f64,
    pub rmse: f64,
    pub coverage: Option<f64>,
    pub coverage_mcse: Option<f64>,
    pub mean_se: Option<f64>,
    pub replicates: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McResult {
    pub truth: f64,
    pub reps: usize,
    pub seed: u64,
    pub bootstrap: Option<usize>,
    pub config: SimConfig,
    pub estimators: Vec<EstimatorSummary>,
}

/// Bootstrap seed for one study, decorrelated from the data stream.
fn bootstrap_seed(seed: u64, replicate: usize) -> u64 {
    seed ^ (replicate as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct RepOutcome {
    point: f64,
    interval: Option<(f64, f64, f64)>,
}

/// Replicate r draws study r from stream r, so results depend only on
/// `(config, seed, reps)` and not on scheduling.
pub fn run_mc(cfg: &SimConfig, estimators: &[McEstimator], options: McOptions) -> Result<McResult> {
    if options.reps < MIN_REPS {
        return Err(Error::InvalidArgument(format!(
            "Monte Carlo needs at least {MIN_REPS} replicates, got {}",
            options.reps
        )));
    }
    if estimators.is_empty() {
        return Err(Error::InvalidArgument("no estimators to evaluate".into()));
    }
    let sim = Simulator::new(cfg.clone(), options.seed)?;
    let truth = sim.truth();

    let per_rep: Vec<Vec<Option<RepOutcome>>> = map_indexed(options.reps, |r| {
        let Ok(draw) = sim.draw(options.seed, r as u64) else {
            return estimators.iter().map(|_| None).collect();
        };
        estimators
            .iter()
            .map(|e| match options.bootstrap {
                None => point_estimate(&e.spec, &draw.trial, &draw.target, OUTCOME)
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(|point| RepOutcome { point, interval: None }),
                Some(b) => bootstrap_ci(&e.spec, &draw.trial, &draw.target, OUTCOME, b, bootstrap_seed(options.seed, r))
                    .ok()
                    .map(|est| RepOutcome {
                        point: est.point,
                        interval: Some((est.ci_low, est.ci_high, est.se)),
                    }),
            })
            .collect()
    });

    let mut summaries = Vec::with_capacity(estimators.len());
    for (k, e) in estimators.iter().enumerate() {
        let ok: Vec<&RepOutcome> = per_rep.iter().filter_map(|row| row[k].as_ref()).collect();
        let failed = options.reps - ok.len();
        if failed as f64 > MAX_FAILED_SHARE * options.reps as f64 {
            return Err(Error::ReplicateFailure {
                failed,
                total: options.reps,
            });
        }
        let points: Vec<f64> = ok.iter().map(|o| o.point).collect();
        let n = points.len() as f64;
        let mean = stats::mean(&points);
        let sd = stats::std_dev(&points);
        let mse = stats::compensated_sum(points.iter().map(|p| (p - truth) * (p - truth))) / n;
        let (coverage, coverage_mcse, mean_se) = if options.bootstrap.is_some() {
            let hits = ok
                .iter()
                .filter(|o| matches!(o.interval, Some((lo, hi, _)) if lo <= truth && truth <= hi))
                .count() as f64;
            let cov = hits / n;
            let ses: Vec<f64> = ok.iter().filter_map(|o| o.interval.map(|i| i.2)).collect();
            (Some(cov), Some((cov * (1.0 - cov) / n).sqrt()), Some(stats::mean(&ses)))
        } else {
            (None, None, None)
        };
        summaries.push(EstimatorSummary {
            label: e.label.clone(),
            mean_estimate: mean,
            mean_bias: mean - truth,
            bias_mcse: sd / n.sqrt(),
            empirical_sd: sd,
            sd_mcse: sd / (2.0 * (n - 1.0)).sqrt(),
            rmse: mse.sqrt(),
            coverage,
            coverage_mcse,
            mean_se,
            replicates: ok.len(),
            failed,
        });
    }
    Ok(McResult {
        truth,
        reps: options.reps,
        seed: options.seed,
        bootstrap: options.bootstrap,
        config: cfg.clone(),
        estimators: summaries,
    })
}

impl McResult {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_text(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let mut rows = vec![[
            "estimator", "mean", "bias", "MCSE(bias)", "SD", "MCSE(SD)", "RMSE", "coverage", "MCSE(cov)", "reps",
        ]
        .map(String::from)
        .to_vec()];
        for e in &self.estimators {
            rows.push(vec![
                e.label.clone(),
                format!("{:.4}", e.mean_estimate),
                format!("{:.4}", e.mean_bias),
                format!("{:.4}", e.bias_mcse),
                format!("{:.4}", e.empirical_sd),
                format!("{:.4}", e.sd_mcse),
                format!("{:.4}", e.rmse),
                opt(e.coverage),
                opt(e.coverage_mcse),
                format!("{}", e.replicates),
            ]);
        }
        format!(
            "truth = {:.6}  reps = {}  seed = {}\n{}",
            self.truth,
            self.reps,
            self.seed,
            crate::dataset::align_rows(&rows)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::double_robustness_config;

    fn small() -> SimConfig {
        let mut cfg = double_robustness_config();
        cfg.n_trial = 150;
        cfg.m_target = 300;
        cfg.truth_draws = 20_000;
        cfg
    }

    #[test]
    fn too_few_reps_rejected() {
        let cfg = small();
        let est = McEstimator::standard_set(&cfg);
        let r = run_mc(&cfg, &est, McOptions { reps: 10, seed: 1, bootstrap: None });
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn summary_is_reproducible() {
        let cfg = small();
        let est = McEstimator::standard_set(&cfg);
        let opts = McOptions { reps: 100, seed: 11, bootstrap: None };
        let a = run_mc(&cfg, &est, opts).unwrap();
        let b = run_mc(&cfg, &est, opts).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.estimators.len(), 3);
        assert!(a.to_text().contains("aipsw"));
    }
}
