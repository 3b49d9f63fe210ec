//! Omitted-variable-bias sensitivity analysis for the weighted estimators.
//!
//! An unmeasured confounder perturbs the estimated weights by
//! eps_i = w_i - w*_i. With R2 = var(eps)/var(w*) and rho the correlation
//! between eps and the individual-effect error xi, the induced bias is
//!
//! ```text
//! bias = rho * sqrt(var(w) * R2 / (1 - R2) * sigma_xi^2)
//! ```
//!
//! A positive bias means the estimate overstates the effect, so the
//! confounder-corrected value of a bound b is b - bias.

mod benchmark;
mod contour;

use serde::{Deserialize, Serialize};

use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::estimators::{EstimatorSpec, NuisanceValues};
use crate::models::{FittedModels, WeightSet};
use crate::stats;

pub use benchmark::{
    assess_bound, benchmark_covariates, solve_k_rho, solve_k_sigma, BenchmarkFailure, BenchmarkRow, BenchmarkStrength,
    RobustnessRule, RobustnessVerdict,
};
pub use contour::{contour_grid, BenchmarkPoint, ContourGrid};

/// Propensities closer than this to 0 or 1 make the pseudo effects unusable.
const PROPENSITY_MARGIN: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityParams {
    /// R2 = var(eps)/var(w*), in [0, 1).
    pub r2: f64,
    /// Correlation between weight error and effect error, in [-1, 1].
    pub rho: f64,
}

/// Bias induced by a confounder of strength `params`.
pub fn bias_at(params: SensitivityParams, var_w: f64, sigma_xi: f64) -> Result<f64> {
    let SensitivityParams { r2, rho } = params;
    if !(0.0..1.0).contains(&r2) {
        return Err(Error::R2OutOfRange(r2));
    }
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho = {rho} is outside [-1, 1]")));
    }
    Ok(rho * (var_w * r2 / (1.0 - r2) * sigma_xi * sigma_xi).sqrt())
}

/// Common strength R2 = rho^2 = RV_q at which the bias equals q |mu_hat|.
pub fn robustness_value(q: f64, mu_hat: f64, var_w: f64, sigma_xi: f64) -> Result<f64> {
    if !(q > 0.0) {
        return Err(Error::InvalidArgument(format!("q = {q} must be positive")));
    }
    let denom = sigma_xi * sigma_xi * var_w;
    if !(denom > 0.0) {
        return Err(Error::ZeroDenominator("sigma_xi^2 * var(w) is zero".into()));
    }
    let b = q * q * mu_hat * mu_hat / denom;
    if b == 0.0 {
        return Ok(0.0);
    }
    // 0.5 (sqrt(b^2 + 4b) - b), rearranged to avoid cancellation at large b.
    Ok(2.0 / ((1.0 + 4.0 / b).sqrt() + 1.0))
}

/// Standard deviation of the pseudo individual effects, used as the upper
/// bound on sigma_xi.
pub fn sigma_xi_bound(values: &NuisanceValues) -> Result<f64> {
    if values.trial.len() < 2 {
        return Err(Error::DegenerateSample("need two trial units for sigma_xi".into()));
    }
    if values
        .trial
        .iter()
        .any(|u| !(u.propensity > PROPENSITY_MARGIN && u.propensity < 1.0 - PROPENSITY_MARGIN))
    {
        return Err(Error::InvalidArgument("propensity is not bounded away from 0 and 1".into()));
    }
    let tau: Vec<f64> = values.trial.iter().map(|u| u.pseudo_effect()).collect();
    Ok(stats::std_dev(&tau))
}

/// Everything the bias formula needs about one fitted analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityContext {
    pub var_w: f64,
    pub sigma_xi: f64,
    /// Point estimate the individual-effect errors are centred on.
    pub estimate: f64,
    /// Normalized participation weights over trial units.
    pub weights: Vec<f64>,
    /// tau_i = A Y/e - (1 - A) Y/(1 - e)
    pub pseudo_effects: Vec<f64>,
    /// xi_i = tau_i - estimate
    pub xi_hat: Vec<f64>,
}

impl SensitivityContext {
    pub fn new(values: &NuisanceValues, estimate: f64, truncate: Option<f64>) -> Result<Self> {
        let raw: Vec<f64> = values.trial.iter().map(|u| u.inv_score).collect();
        let weights = WeightSet::from_raw(&raw, truncate)?;
        let sigma_xi = sigma_xi_bound(values)?;
        let pseudo_effects: Vec<f64> = values.trial.iter().map(|u| u.pseudo_effect()).collect();
        let xi_hat = pseudo_effects.iter().map(|t| t - estimate).collect();
        Ok(Self {
            var_w: weights.variance(),
            sigma_xi,
            estimate,
            weights: weights.weights,
            pseudo_effects,
            xi_hat,
        })
    }

    pub fn bias_at(&self, params: SensitivityParams) -> Result<f64> {
        bias_at(params, self.var_w, self.sigma_xi)
    }

    pub fn robustness_value(&self, q: f64, mu_hat: f64) -> Result<f64> {
        robustness_value(q, mu_hat, self.var_w, self.sigma_xi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityOptions {
    pub q: f64,
    /// Rows (rho^2 axis) and columns (R2 axis).
    pub resolution: (usize, usize),
    pub r2_max: f64,
    /// Admissible |rho| for the k_rho search.
    pub rho_max: f64,
    pub rule: RobustnessRule,
}

impl Default for SensitivityOptions {
    fn default() -> Self {
        Self {
            q: 1.0,
            resolution: (200, 200),
            r2_max: 0.95,
            rho_max: 1.0,
            rule: RobustnessRule::NoKillerBenchmark,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundSide {
    Lower,
    Upper,
}

impl BoundSide {
    pub fn label(self) -> &'static str {
        match self {
            BoundSide::Lower => "lower",
            BoundSide::Upper => "upper",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSensitivity {
    pub side: BoundSide,
    pub value: f64,
    /// RV_q with the bound in place of the estimate.
    pub robustness_value: f64,
    pub benchmarks: Vec<BenchmarkRow>,
    pub verdict: RobustnessVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub outcome: String,
    pub estimate: f64,
    pub var_w: f64,
    pub sigma_xi: f64,
    pub q: f64,
    /// RV_q for the point estimate.
    pub robustness_value: f64,
    pub strengths: Vec<BenchmarkStrength>,
    pub failures: Vec<BenchmarkFailure>,
    pub bounds: Vec<BoundSensitivity>,
    /// How the individual-effect errors were operationalized.
    pub xi_definition: String,
    pub benchmark_reference: String,
}

impl SensitivityReport {
    /// Aligned text in the benchmark-table layout (k_sigma, k_rho, MRCS, RV).
    pub fn to_text(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
        let mut rows = vec![vec![
            "Outcome".to_string(),
            "Bound".into(),
            "Variable".into(),
            "R2".into(),
            "rho".into(),
            "bias".into(),
            "k_sigma_min".into(),
            "k_rho_min".into(),
            "MRCS".into(),
            "RV".into(),
        ]];
        for b in &self.bounds {
            for (i, r) in b.benchmarks.iter().enumerate() {
                let last = i + 1 == b.benchmarks.len();
                rows.push(vec![
                    if i == 0 { self.outcome.clone() } else { String::new() },
                    if i == 0 { format!("{} {:.3}", b.side.label(), b.value) } else { String::new() },
                    r.covariate.clone(),
                    format!("{:.4}", r.r2),
                    format!("{:.4}", r.rho),
                    format!("{:.4}", r.bias),
                    fmt(r.k_sigma_min),
                    fmt(r.k_rho_min),
                    fmt(r.mrcs),
                    if last { format!("{:.3}", b.robustness_value) } else { String::new() },
                ]);
            }
        }
        let mut out = crate::dataset::align_rows(&rows);
        out.push_str(&format!(
            "var(w) = {:.6}  sigma_xi = {:.6}  RV(point, q={}) = {:.4}\n",
            self.var_w, self.sigma_xi, self.q, self.robustness_value
        ));
        for b in &self.bounds {
            out.push_str(&format!(
                "{} bound {:.4}: {}\n",
                b.side.label(),
                b.value,
                if b.verdict.robust { "robust" } else { "not robust" }
            ));
        }
        for f in &self.failures {
            out.push_str(&format!("benchmark {} failed: {}\n", f.covariate, f.reason));
        }
        out
    }
}

/// Runs the full sensitivity analysis for one outcome on both interval
/// bounds. Returns the report and one contour grid per bound (lower, upper).
pub fn analyze(
    trial: &StudyDataset,
    target: &StudyDataset,
    outcome: &str,
    spec: &EstimatorSpec,
    estimate: f64,
    bounds: (f64, f64),
    options: &SensitivityOptions,
) -> Result<(SensitivityReport, Vec<ContourGrid>)> {
    let trial = trial.for_outcome(outcome)?;
    let models = FittedModels::fit(&trial, target, outcome, &spec.models)?;
    let values = NuisanceValues::evaluate(&trial, target, &models, outcome, spec.truncate)?;
    let ctx = SensitivityContext::new(&values, estimate, spec.truncate)?;
    let (strengths, failures) = benchmark_covariates(&trial, target, &models, &ctx, spec.truncate)?;
    let rv = ctx.robustness_value(options.q, estimate)?;

    let mut bound_reports = Vec::new();
    let mut grids = Vec::new();
    for (side, value) in [(BoundSide::Lower, bounds.0), (BoundSide::Upper, bounds.1)] {
        let rows: Vec<BenchmarkRow> = strengths
            .iter()
            .map(|s| s.against(value, &ctx, options.rho_max))
            .collect();
        let verdict = assess_bound(value, &rows, options.rule)?;
        let grid = contour_grid(&ctx, value, options.resolution, options.r2_max, &rows)?;
        bound_reports.push(BoundSensitivity {
            side,
            value,
            robustness_value: ctx.robustness_value(options.q, value)?,
            benchmarks: rows,
            verdict,
        });
        grids.push(grid);
    }
    let report = SensitivityReport {
        outcome: outcome.to_string(),
        estimate,
        var_w: ctx.var_w,
        sigma_xi: ctx.sigma_xi,
        q: options.q,
        robustness_value: rv,
        strengths,
        failures,
        bounds: bound_reports,
        xi_definition: "pseudo effect A*Y/e - (1-A)*Y/(1-e) minus the point estimate".into(),
        benchmark_reference: "leave-one-out weights minus full-model weights".into(),
    };
    Ok((report, grids))
}
