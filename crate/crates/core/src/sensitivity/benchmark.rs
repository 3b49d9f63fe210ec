//! Leave-one-out covariate benchmarking.
//!
//! Dropping covariate j from the sampling model and rebuilding the weights
//! gives eps_j = w^(-j) - w, with the full-model weights as the reference.
//! Its share of weight variance and its correlation with the effect errors
//! say how strong a confounder "like X_j" would be.

use serde::{Deserialize, Serialize};

use super::{bias_at, SensitivityContext, SensitivityParams};
use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::models::{fit_sampling_model, participation_weights, FittedModels};
use crate::stats;

/// Bisection tolerance on the scale factor k.
pub const K_TOLERANCE: f64 = 1e-9;

/// Bound-independent strength of one benchmark covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkStrength {
    pub covariate: String,
    pub r2: f64,
    pub rho: f64,
    /// Bias a confounder with this (R2, rho) would induce.
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkFailure {
    pub covariate: String,
    pub reason: String,
}

/// Benchmark strength judged against one bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub covariate: String,
    pub r2: f64,
    pub rho: f64,
    pub bias: f64,
    /// bound / bias. Positive when the benchmark pushes the bound toward
    /// zero; in (0, 1] a confounder no stronger than the benchmark already
    /// flips the bound's sign. Absent when the bias is exactly zero.
    pub mrcs: Option<f64>,
    /// Multiple of R2 (rho held at the benchmark) reaching the bound.
    /// Negative when the benchmark pushes away from zero. Absent when no
    /// finite multiple reaches the bound.
    pub k_sigma_min: Option<f64>,
    /// Multiple of rho (R2 held at the benchmark) reaching the bound,
    /// limited to |k rho| <= rho_max. Sign convention as for k_sigma_min.
    pub k_rho_min: Option<f64>,
}

impl BenchmarkStrength {
    pub fn against(&self, bound: f64, ctx: &SensitivityContext, rho_max: f64) -> BenchmarkRow {
        let mrcs = if self.bias != 0.0 { Some(bound / self.bias) } else { None };
        let sign = if self.bias * bound >= 0.0 { 1.0 } else { -1.0 };
        let k_sigma = solve_k_sigma(self.r2, self.rho, bound, ctx.var_w, ctx.sigma_xi).map(|k| sign * k);
        let k_rho = solve_k_rho(self.r2, self.rho, bound, ctx.var_w, ctx.sigma_xi, rho_max).map(|k| sign * k);
        BenchmarkRow {
            covariate: self.covariate.clone(),
            r2: self.r2,
            rho: self.rho,
            bias: self.bias,
            mrcs,
            k_sigma_min: k_sigma,
            k_rho_min: k_rho,
        }
    }
}

/// Bisection for the root of an increasing function on [lo, hi].
fn bisect(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    while hi - lo > K_TOLERANCE * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Smallest k > 0 with |bias(k R2, rho)| = |bound|, searched over
/// k R2 < 1. `None` when the bias is identically zero.
pub fn solve_k_sigma(r2: f64, rho: f64, bound: f64, var_w: f64, sigma_xi: f64) -> Option<f64> {
    if bound == 0.0 {
        return Some(0.0);
    }
    if r2 <= 0.0 || rho == 0.0 || var_w <= 0.0 || sigma_xi <= 0.0 {
        return None;
    }
    let level = bound.abs();
    let f = |k: f64| {
        let r = (k * r2).min(1.0 - f64::EPSILON);
        bias_at(SensitivityParams { r2: r, rho: rho.abs() }, var_w, sigma_xi).unwrap_or(f64::INFINITY) - level
    };
    let hi = (1.0 - f64::EPSILON) / r2;
    if f(hi) < 0.0 {
        return None;
    }
    Some(bisect(0.0, hi, f))
}

/// Smallest k > 0 with |bias(R2, k rho)| = |bound| and |k rho| <= rho_max.
pub fn solve_k_rho(r2: f64, rho: f64, bound: f64, var_w: f64, sigma_xi: f64, rho_max: f64) -> Option<f64> {
    if bound == 0.0 {
        return Some(0.0);
    }
    if r2 <= 0.0 || r2 >= 1.0 || rho == 0.0 {
        return None;
    }
    let level = bound.abs();
    let f = |k: f64| {
        bias_at(SensitivityParams { r2, rho: (k * rho.abs()).min(1.0) }, var_w, sigma_xi).unwrap_or(f64::INFINITY)
            - level
    };
    let hi = rho_max / rho.abs();
    if f(hi) < 0.0 {
        return None;
    }
    Some(bisect(0.0, hi, f))
}

/// Leave-one-out refits of the sampling model, one per covariate.
pub fn benchmark_covariates(
    trial: &StudyDataset,
    target: &StudyDataset,
    models: &FittedModels,
    ctx: &SensitivityContext,
    truncate: Option<f64>,
) -> Result<(Vec<BenchmarkStrength>, Vec<BenchmarkFailure>)> {
    let schema = trial.schema();
    if schema.len() < 2 {
        return Err(Error::InvalidArgument(
            "benchmarking needs at least two covariates".into(),
        ));
    }
    if ctx.var_w <= 0.0 {
        return Err(Error::ZeroDenominator("estimated weights have no variance".into()));
    }
    let results: Vec<Result<BenchmarkStrength>> = crate::parallel::map_indexed(schema.len(), |j| {
        let reduced = models.sampling.spec.without_covariate(j);
        let refit = fit_sampling_model(trial, target, &reduced)?;
        let w = participation_weights(trial, &refit, truncate)?;
        let eps: Vec<f64> = w.weights.iter().zip(&ctx.weights).map(|(a, b)| a - b).collect();
        let r2 = stats::variance(&eps) / ctx.var_w;
        let rho = stats::correlation(&eps, &ctx.xi_hat);
        let bias = bias_at(SensitivityParams { r2, rho }, ctx.var_w, ctx.sigma_xi)?;
        Ok(BenchmarkStrength {
            covariate: schema.entries()[j].name.clone(),
            r2,
            rho,
            bias,
        })
    });
    let mut strengths = Vec::new();
    let mut failures = Vec::new();
    for (j, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => strengths.push(s),
            Err(e) => failures.push(BenchmarkFailure {
                covariate: schema.entries()[j].name.clone(),
                reason: e.to_string(),
            }),
        }
    }
    Ok((strengths, failures))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RobustnessRule {
    /// Robust unless some benchmark has MRCS in (0, 1].
    NoKillerBenchmark,
    /// Robust if at least one benchmark is not a killer.
    AnyNonKillerBenchmark,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessVerdict {
    pub robust: bool,
    pub rule: RobustnessRule,
    /// Set when the bound is exactly zero and has no sign to protect.
    pub degenerate: bool,
    /// Benchmark with the smallest MRCS in (0, 1], when one exists.
    pub offending: Option<String>,
    pub offending_mrcs: Option<f64>,
}

fn is_killer(row: &BenchmarkRow) -> bool {
    matches!(row.mrcs, Some(m) if m > 0.0 && m <= 1.0)
}

pub fn assess_bound(bound: f64, rows: &[BenchmarkRow], rule: RobustnessRule) -> Result<RobustnessVerdict> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("no benchmark rows to assess".into()));
    }
    let worst = rows
        .iter()
        .filter(|r| is_killer(r))
        .min_by(|a, b| a.mrcs.unwrap().total_cmp(&b.mrcs.unwrap()));
    let robust = match rule {
        RobustnessRule::NoKillerBenchmark => worst.is_none(),
        RobustnessRule::AnyNonKillerBenchmark => rows.iter().any(|r| !is_killer(r)),
    };
    Ok(RobustnessVerdict {
        robust: robust && bound != 0.0,
        rule,
        degenerate: bound == 0.0,
        offending: worst.map(|r| r.covariate.clone()),
        offending_mrcs: worst.and_then(|r| r.mrcs),
    })
}
