//! Synthetic trial and target cohorts with known ground truth, and Monte
//! Carlo evaluation of the estimators against it.
//!
//! A superpopulation unit has covariates X ~ MVN(mean, cov), optionally
//! dichotomized at the mean, and joins the trial with probability
//! expit(a0 + a'X + aq X_q^2 + h U). Draws are routed to the trial or the
//! target until both quotas are filled. Inside the trial A ~ Bernoulli(c)
//! and Y(a) = b_a0 + b_a'X + g_a X_q^2 + a k U + N(0, noise^2), where U is a
//! hidden confounder never shown to the analyst.

mod mc;

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{Covariate, CovariateKind, CovariateSchema, Source, StudyDataset, UnitRecord};
use crate::error::{Error, Result};
use crate::estimators::TargetPopulation;
use crate::models::{expit, FeatureSpec, ModelSpec, PropensityMode, Term};
use crate::parallel::replicate_rng;
use crate::stats;

pub use mc::{run_mc, EstimatorSummary, McEstimator, McOptions, McResult};

/// Name of the simulated outcome column.
pub const OUTCOME: &str = "y";

/// Stream reserved for the truth oracle, far from any replicate index.
const ORACLE_STREAM: u64 = u64::MAX;

/// Draws attempted per requested unit before giving up on filling quotas.
const MAX_DRAWS_PER_UNIT: usize = 1000;

/// Unmeasured confounder U = r Z_twin + sqrt(1 - r^2) e on the standardized
/// twin covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HiddenConfounder {
    /// Visible covariate U is correlated with.
    pub twin: usize,
    pub correlation: f64,
    /// Coefficient on U in the selection logit.
    pub selection: f64,
    /// Shift in the individual effect per unit of U.
    pub effect: f64,
}

fn default_truth_draws() -> usize {
    1_000_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_trial: usize,
    pub m_target: usize,
    pub means: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
    /// Covariates reported as 1{X_j > mean_j}.
    #[serde(default)]
    pub binary: Vec<usize>,
    pub selection_intercept: f64,
    pub selection: Vec<f64>,
    /// Covariate whose square enters selection and outcomes.
    #[serde(default)]
    pub quadratic: usize,
    #[serde(default)]
    pub selection_quadratic: f64,
    /// Randomization probability c.
    pub propensity: f64,
    /// Intercepts for (control, treated).
    pub outcome_intercept: [f64; 2],
    pub outcome_control: Vec<f64>,
    pub outcome_treated: Vec<f64>,
    /// Coefficients on X_q^2 for (control, treated).
    #[serde(default)]
    pub outcome_quadratic: [f64; 2],
    pub noise_sd: f64,
    /// Analyst's sampling model omits the X_q^2 term.
    #[serde(default)]
    pub sampling_wrong: bool,
    /// Analyst's outcome model omits the X_q^2 term.
    #[serde(default)]
    pub outcome_wrong: bool,
    #[serde(default)]
    pub hidden: Option<HiddenConfounder>,
    #[serde(default = "default_true")]
    pub normalized: bool,
    #[serde(default = "default_target")]
    pub target_population: TargetPopulation,
    #[serde(default = "default_truth_draws")]
    pub truth_draws: usize,
    /// Fallback when no seed is passed on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_target() -> TargetPopulation {
    TargetPopulation::Combined
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn p(&self) -> usize {
        self.means.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let p = self.p();
        if p == 0 {
            return bad("at least one covariate is required".into());
        }
        if self.n_trial == 0 || self.m_target == 0 {
            return bad("n_trial and m_target must be positive".into());
        }
        if !(self.propensity > 0.0 && self.propensity < 1.0) {
            return bad(format!("propensity {} is outside (0, 1)", self.propensity));
        }
        if self.covariance.len() != p || self.covariance.iter().any(|r| r.len() != p) {
            return bad(format!("covariance must be {p}x{p}"));
        }
        for (name, v) in [
            ("selection", &self.selection),
            ("outcome_control", &self.outcome_control),
            ("outcome_treated", &self.outcome_treated),
        ] {
            if v.len() != p {
                return bad(format!("{name} has {} entries, expected {p}", v.len()));
            }
        }
        if self.quadratic >= p || self.binary.iter().any(|&j| j >= p) {
            return bad("covariate index out of range".into());
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be non-negative".into());
        }
        if self.truth_draws < 1000 {
            return bad("truth_draws must be at least 1000".into());
        }
        if let Some(h) = &self.hidden {
            if h.twin >= p || !(-1.0..=1.0).contains(&h.correlation) {
                return bad("hidden confounder twin or correlation out of range".into());
            }
        }
        for i in 0..p {
            for j in 0..i {
                if (self.covariance[i][j] - self.covariance[j][i]).abs() > 1e-12 {
                    return bad("covariance is not symmetric".into());
                }
            }
        }
        covariance_root(&self.covariance)?;
        Ok(())
    }

    pub fn schema(&self) -> CovariateSchema {
        let entries = (0..self.p())
            .map(|j| Covariate {
                name: format!("x{}", j + 1),
                kind: if self.binary.contains(&j) {
                    CovariateKind::Binary
                } else {
                    CovariateKind::Continuous
                },
            })
            .collect();
        CovariateSchema::new(entries).expect("generated names are valid")
    }

    /// The analyst's models. A "wrong" model drops the quadratic term.
    pub fn model_spec(&self) -> ModelSpec {
        let p = self.p();
        let q = Term::Square(self.quadratic);
        let sampling = if self.sampling_wrong || self.selection_quadratic == 0.0 {
            FeatureSpec::linear(p)
        } else {
            FeatureSpec::linear(p).with(q)
        };
        let outcome = if self.outcome_wrong || self.outcome_quadratic == [0.0, 0.0] {
            FeatureSpec::linear(p)
        } else {
            FeatureSpec::linear(p).with(q)
        };
        ModelSpec {
            sampling,
            outcome,
            propensity: PropensityMode::KnownConstant(self.propensity),
        }
    }
}

/// Square root L with L L' = cov, via the symmetric eigendecomposition so
/// semidefinite matrices are accepted.
fn covariance_root(cov: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let p = cov.len();
    let m = DMatrix::from_fn(p, p, |i, j| cov[i][j]);
    let eig = SymmetricEigen::new(m);
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if eig.eigenvalues.iter().any(|&v| v < -1e-10 * scale) {
        return Err(Error::InvalidConfig("covariance is not positive semidefinite".into()));
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

/// One superpopulation draw.
struct Unit {
    x: Vec<f64>,
    u: f64,
}

/// One simulated study.
#[derive(Debug, Clone)]
pub struct SimDraw {
    pub trial: StudyDataset,
    pub target: StudyDataset,
}

/// Data generator with its oracle truth computed once.
#[derive(Debug, Clone)]
pub struct Simulator {
    cfg: SimConfig,
    root: DMatrix<f64>,
    truth: f64,
    trial_effect: f64,
    target_effect: f64,
}

impl Simulator {
    /// Validates `cfg` and computes the truth from `cfg.truth_draws` oracle
    /// draws on a stream separate from every replicate.
    pub fn new(cfg: SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let root = covariance_root(&cfg.covariance)?;
        let mut sim = Self {
            cfg,
            root,
            truth: f64::NAN,
            trial_effect: f64::NAN,
            target_effect: f64::NAN,
        };
        let mut rng = replicate_rng(seed, ORACLE_STREAM);
        let mut num = [Vec::new(), Vec::new()];
        let mut den = [Vec::new(), Vec::new()];
        for _ in 0..sim.cfg.truth_draws {
            let unit = sim.draw_unit(&mut rng);
            let pi = sim.selection_probability(&unit);
            let tau = sim.effect(&unit);
            num[1].push(pi * tau);
            den[1].push(pi);
            num[0].push((1.0 - pi) * tau);
            den[0].push(1.0 - pi);
        }
        let cond = |s: usize| stats::compensated_sum(num[s].iter().copied()) / stats::compensated_sum(den[s].iter().copied());
        sim.trial_effect = cond(1);
        sim.target_effect = cond(0);
        let (n, m) = (sim.cfg.n_trial as f64, sim.cfg.m_target as f64);
        sim.truth = match sim.cfg.target_population {
            TargetPopulation::Combined => (n * sim.trial_effect + m * sim.target_effect) / (n + m),
            TargetPopulation::TargetOnly => sim.target_effect,
        };
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    /// Effect over the configured target population.
    pub fn truth(&self) -> f64 {
        self.truth
    }

    /// E[tau | S = 1] and E[tau | S = 0].
    pub fn conditional_effects(&self) -> (f64, f64) {
        (self.trial_effect, self.target_effect)
    }

    fn draw_unit<R: Rng>(&self, rng: &mut R) -> Unit {
        let p = self.cfg.p();
        let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
        let mut x: Vec<f64> = (0..p)
            .map(|i| self.cfg.means[i] + (0..p).map(|k| self.root[(i, k)] * z[k]).sum::<f64>())
            .collect();
        let u = match &self.cfg.hidden {
            Some(h) => {
                let sd = self.cfg.covariance[h.twin][h.twin].sqrt();
                let zt = if sd > 0.0 { (x[h.twin] - self.cfg.means[h.twin]) / sd } else { 0.0 };
                let e: f64 = rng.sample(StandardNormal);
                h.correlation * zt + (1.0 - h.correlation * h.correlation).sqrt() * e
            }
            None => 0.0,
        };
        for &j in &self.cfg.binary {
            x[j] = f64::from(u8::from(x[j] > self.cfg.means[j]));
        }
        Unit { x, u }
    }

    fn selection_probability(&self, unit: &Unit) -> f64 {
        let c = &self.cfg;
        let xq = unit.x[c.quadratic];
        let mut eta = c.selection_intercept
            + c.selection.iter().zip(&unit.x).map(|(a, x)| a * x).sum::<f64>()
            + c.selection_quadratic * xq * xq;
        if let Some(h) = &c.hidden {
            eta += h.selection * unit.u;
        }
        expit(eta)
    }

    fn mean_outcome(&self, unit: &Unit, arm: u8) -> f64 {
        let c = &self.cfg;
        let a = arm as usize;
        let beta = if arm == 1 { &c.outcome_treated } else { &c.outcome_control };
        let xq = unit.x[c.quadratic];
        let mut y = c.outcome_intercept[a]
            + beta.iter().zip(&unit.x).map(|(b, x)| b * x).sum::<f64>()
            + c.outcome_quadratic[a] * xq * xq;
        if arm == 1 {
            if let Some(h) = &c.hidden {
                y += h.effect * unit.u;
            }
        }
        y
    }

    fn effect(&self, unit: &Unit) -> f64 {
        self.mean_outcome(unit, 1) - self.mean_outcome(unit, 0)
    }

    /// Study for replicate `replicate`; identical for identical
    /// `(seed, replicate)`.
    pub fn draw(&self, seed: u64, replicate: u64) -> Result<SimDraw> {
        let mut rng = replicate_rng(seed, replicate);
        let c = &self.cfg;
        let mut trial = Vec::with_capacity(c.n_trial);
        let mut target = Vec::with_capacity(c.m_target);
        let budget = MAX_DRAWS_PER_UNIT * (c.n_trial + c.m_target);
        let mut draws = 0;
        while trial.len() < c.n_trial || target.len() < c.m_target {
            draws += 1;
            if draws > budget {
                return Err(Error::InvalidConfig(
                    "selection is too extreme to fill the trial and target quotas".into(),
                ));
            }
            let unit = self.draw_unit(&mut rng);
            let in_trial = rng.random::<f64>() < self.selection_probability(&unit);
            if in_trial && trial.len() < c.n_trial {
                let arm = u8::from(rng.random::<f64>() < c.propensity);
                let noise: f64 = rng.sample(StandardNormal);
                let y = self.mean_outcome(&unit, arm) + c.noise_sd * noise;
                trial.push(UnitRecord::trial(unit.x, arm, [(OUTCOME.to_string(), y)].into()));
            } else if !in_trial && target.len() < c.m_target {
                target.push(UnitRecord::target(unit.x));
            }
        }
        let schema = self.cfg.schema();
        Ok(SimDraw {
            trial: StudyDataset::new(schema.clone(), Source::Trial, vec![OUTCOME.into()], trial)?,
            target: StudyDataset::new(schema, Source::Target, vec![], target)?,
        })
    }
}

/// Convenience wrapper: one study plus its truth.
pub fn generate(cfg: &SimConfig, seed: u64) -> Result<(StudyDataset, StudyDataset, f64)> {
    let sim = Simulator::new(cfg.clone(), seed)?;
    let d = sim.draw(seed, 0)?;
    Ok((d.trial, d.target, sim.truth()))
}

/// Double-robustness design: four covariates, selection and effect both
/// depending on the square of the first.
pub fn double_robustness_config() -> SimConfig {
    SimConfig {
        n_trial: 500,
        m_target: 2000,
        means: vec![0.0; 4],
        covariance: (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.2 }).collect())
            .collect(),
        binary: vec![3],
        selection_intercept: -2.0,
        selection: vec![0.3, -0.3, 0.2, 0.3],
        quadratic: 0,
        selection_quadratic: 0.5,
        propensity: 0.5,
        outcome_intercept: [0.0, 1.0],
        outcome_control: vec![1.0, 0.5, -0.5, 0.3],
        outcome_treated: vec![1.5, 0.5, 0.0, 0.3],
        outcome_quadratic: [0.0, 0.8],
        noise_sd: 1.0,
        sampling_wrong: false,
        outcome_wrong: false,
        hidden: None,
        normalized: true,
        target_population: TargetPopulation::Combined,
        truth_draws: default_truth_draws(),
        seed: None,
    }
}

/// Benchmarking design: the second covariate drives both trial selection and
/// effect modification, and has a hidden twin doing the same.
pub fn benchmark_fidelity_config() -> SimConfig {
    SimConfig {
        n_trial: 2000,
        m_target: 4000,
        means: vec![0.0; 4],
        covariance: (0..4)
            .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.1 }).collect())
            .collect(),
        binary: vec![3],
        selection_intercept: -1.0,
        selection: vec![0.5, 0.12, -0.4, 0.3],
        quadratic: 0,
        selection_quadratic: 0.0,
        propensity: 0.5,
        outcome_intercept: [0.0, 1.0],
        outcome_control: vec![1.0, 0.5, -0.5, 0.3],
        outcome_treated: vec![1.0, 2.5, -0.5, 0.3],
        outcome_quadratic: [0.0, 0.0],
        noise_sd: 1.0,
        sampling_wrong: false,
        outcome_wrong: false,
        hidden: Some(HiddenConfounder {
            twin: 1,
            correlation: 0.5,
            selection: 0.1,
            effect: 0.5,
        }),
        normalized: true,
        target_population: TargetPopulation::Combined,
        truth_draws: 100_000,
        seed: None,
    }
}

/// Seven-covariate design (five continuous, two binary) at desk scale.
pub fn desk_config(n_trial: usize, m_target: usize) -> SimConfig {
    let p = 7;
    SimConfig {
        n_trial,
        m_target,
        means: vec![0.0; p],
        covariance: (0..p)
            .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.15 }).collect())
            .collect(),
        binary: vec![5, 6],
        selection_intercept: -1.2,
        selection: vec![0.5, -0.4, 0.3, 0.0, 0.2, 0.4, -0.3],
        quadratic: 0,
        selection_quadratic: 0.0,
        propensity: 0.5,
        outcome_intercept: [0.0, -1.0],
        outcome_control: vec![2.0, 1.0, -0.5, 0.5, 0.0, 1.0, 0.5],
        outcome_treated: vec![2.5, 1.0, -0.5, 0.5, 0.0, 1.5, 0.5],
        outcome_quadratic: [0.0, 0.0],
        noise_sd: 3.0,
        sampling_wrong: false,
        outcome_wrong: false,
        hidden: None,
        normalized: true,
        target_population: TargetPopulation::Combined,
        truth_draws: 10_000,
        seed: None,
    }
}

/// A study with two follow-up outcomes, `week4` (the simulated outcome) and
/// `week8` (its damped copy plus noise, missing for every 25th trial unit).
pub fn desk_study(n_trial: usize, m_target: usize, seed: u64) -> Result<(StudyDataset, StudyDataset)> {
    let sim = Simulator::new(desk_config(n_trial, m_target), seed)?;
    let draw = sim.draw(seed, 0)?;
    let mut rng = replicate_rng(seed, 1);
    let records = draw
        .trial
        .records()
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let y = r.outcomes[OUTCOME];
            let mut outcomes = std::collections::BTreeMap::from([("week4".to_string(), y)]);
            let noise: f64 = rng.sample(StandardNormal);
            if i % 25 != 24 {
                outcomes.insert("week8".into(), 0.8 * y + noise);
            }
            UnitRecord::trial(r.covariates.clone(), r.arm.unwrap_or(0), outcomes)
        })
        .collect();
    let trial = StudyDataset::new(
        draw.trial.schema().clone(),
        Source::Trial,
        vec!["week4".into(), "week8".into()],
        records,
    )?;
    Ok((trial, draw.target))
}
