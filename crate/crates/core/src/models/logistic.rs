//! Logistic regression by iteratively reweighted least squares.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};

/// Convergence threshold on max |score|.
pub const SCORE_TOLERANCE: f64 = 1e-8;
pub const MAX_ITERATIONS: usize = 100;

/// A standardized slope this large means odds change by e^25 per standard
/// deviation: only reachable when the classes are separable.
const SEPARATION_SLOPE: f64 = 25.0;

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// Fit on centred and scaled features, report original-scale coefficients.
    pub standardize: bool,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            standardize: true,
            max_iterations: MAX_ITERATIONS,
            tolerance: SCORE_TOLERANCE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    /// Intercept first, then one coefficient per feature column.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub max_abs_score: f64,
}

pub(crate) fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

impl LogisticFit {
    pub fn linear_predictor(&self, features: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }

    pub fn predict(&self, features: &[f64]) -> f64 {
        expit(self.linear_predictor(features))
    }
}

pub fn fit_logistic(features: &FeatureMatrix, labels: &[f64]) -> Result<LogisticFit> {
    fit_logistic_with(features, labels, LogisticOptions::default())
}

pub fn fit_logistic_with(
    features: &FeatureMatrix,
    labels: &[f64],
    options: LogisticOptions,
) -> Result<LogisticFit> {
    let n = features.nrows();
    let k = features.ncols();
    let dim = k + 1;
    if labels.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {n} rows",
            labels.len()
        )));
    }
    if n < k + 2 {
        return Err(Error::InvalidArgument(format!(
            "logistic fit needs at least {} rows, got {n}",
            k + 2
        )));
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let positives = labels.iter().filter(|&&y| y == 1.0).count();
    if positives == 0 || positives == n {
        return Err(Error::DegenerateSample(
            "logistic labels contain a single class".into(),
        ));
    }

    // Column centring/scaling; identity when not standardizing.
    let mut centre = vec![0.0; k];
    let mut scale = vec![1.0; k];
    for j in 0..k {
        let col = features.column(j);
        let sd = crate::stats::std_dev(&col);
        if sd == 0.0 || !sd.is_finite() {
            return Err(Error::RankDeficient(format!("feature column {j} is constant")));
        }
        if options.standardize {
            centre[j] = crate::stats::mean(&col);
            scale[j] = sd;
        }
    }
    // Row-major working design with intercept column.
    let mut z = Vec::with_capacity(n * dim);
    for i in 0..n {
        z.push(1.0);
        for (j, x) in features.row(i).iter().enumerate() {
            z.push((x - centre[j]) / scale[j]);
        }
    }
    check_rank(&z, n, dim)?;

    let ybar = positives as f64 / n as f64;
    let mut beta = DVector::zeros(dim);
    beta[0] = (ybar / (1.0 - ybar)).ln();

    let mut prob = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    let mut max_abs_score;
    let mut ll = log_likelihood(&z, dim, labels, &beta, &mut prob);
    let mut hessian = DMatrix::zeros(dim, dim);
    let mut upper = vec![0.0; dim * dim];

    loop {
        let mut score = DVector::zeros(dim);
        upper.fill(0.0);
        for ((row, &p), &y) in z.chunks_exact(dim).zip(&prob).zip(labels) {
            let w = p * (1.0 - p);
            let r = y - p;
            for (a, &xa) in row.iter().enumerate() {
                score[a] += xa * r;
                let wa = w * xa;
                for (h, &xb) in upper[a * dim + a..(a + 1) * dim].iter_mut().zip(&row[a..]) {
                    *h += wa * xb;
                }
            }
        }
        for a in 0..dim {
            for b in a..dim {
                hessian[(a, b)] = upper[a * dim + b];
                hessian[(b, a)] = upper[a * dim + b];
            }
        }
        max_abs_score = score.amax();
        if max_abs_score < options.tolerance {
            converged = true;
            break;
        }
        if iterations >= options.max_iterations {
            break;
        }
        iterations += 1;

        let step = match hessian.clone().cholesky() {
            Some(chol) => chol.solve(&score),
            None => return Err(Error::Separation),
        };
        // Step halving keeps the log-likelihood monotone.
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta + &step * t;
            let cand_ll = log_likelihood(&z, dim, labels, &candidate, &mut prob);
            if cand_ll.is_finite() && cand_ll >= ll - 1e-12 * ll.abs() {
                beta = candidate;
                ll = cand_ll;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // Restore predictor for the current beta; no progress possible.
            log_likelihood(&z, dim, labels, &beta, &mut prob);
            break;
        }
        let max_slope = beta.iter().skip(1).fold(0.0_f64, |m, b| m.max(b.abs()));
        let scaled_max = if options.standardize {
            max_slope
        } else {
            (0..k).fold(0.0_f64, |m, j| {
                m.max((beta[j + 1] * crate::stats::std_dev(&features.column(j))).abs())
            })
        };
        if scaled_max > SEPARATION_SLOPE || ll > -1e-8 * n as f64 {
            return Err(Error::Separation);
        }
    }

    // Covariance on the working scale, then mapped back.
    let cov_work = hessian
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| DMatrix::from_element(dim, dim, f64::NAN));
    let mut transform = DMatrix::<f64>::identity(dim, dim);
    for j in 0..k {
        transform[(j + 1, j + 1)] = 1.0 / scale[j];
        transform[(0, j + 1)] = -centre[j] / scale[j];
    }
    let coef = &transform * &beta;
    let cov = &transform * cov_work * transform.transpose();

    Ok(LogisticFit {
        coefficients: coef.iter().copied().collect(),
        std_errors: (0..dim).map(|a| cov[(a, a)].max(0.0).sqrt()).collect(),
        converged,
        iterations,
        max_abs_score,
    })
}

/// Log-likelihood at `beta`; fitted probabilities are left in `prob`.
fn log_likelihood(z: &[f64], dim: usize, labels: &[f64], beta: &DVector<f64>, prob: &mut [f64]) -> f64 {
    let beta = beta.as_slice();
    let mut ll = 0.0;
    for ((row, p), &y) in z.chunks_exact(dim).zip(prob.iter_mut()).zip(labels) {
        let v: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        // log(1 + e^v) and expit(v) from one exponential
        let e = (-v.abs()).exp();
        *p = if v >= 0.0 { 1.0 / (1.0 + e) } else { e / (1.0 + e) };
        ll += y * v - (v.max(0.0) + e.ln_1p());
    }
    ll
}

/// Rejects designs whose scaled Gram matrix is numerically singular.
fn check_rank(z: &[f64], n: usize, dim: usize) -> Result<()> {
    let mut gram = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..n {
        let row = &z[i * dim..(i + 1) * dim];
        for a in 0..dim {
            for b in a..dim {
                gram[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            gram[(a, b)] = gram[(b, a)];
        }
    }
    // Equilibrate so the ratio test is scale-free.
    let d: Vec<f64> = (0..dim).map(|a| gram[(a, a)].sqrt()).collect();
    for a in 0..dim {
        for b in 0..dim {
            gram[(a, b)] /= d[a] * d[b];
        }
    }
    let eig = gram.symmetric_eigenvalues();
    let max = eig.amax();
    let min = eig.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    if !(min > 1e-12 * max) {
        return Err(Error::RankDeficient("collinear feature columns".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn simulate(n: usize, b0: f64, b1: f64, seed: u64) -> (FeatureMatrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let ys = xs
            .iter()
            .map(|&x| if rng.random::<f64>() < expit(b0 + b1 * x) { 1.0 } else { 0.0 })
            .collect();
        (FeatureMatrix::from_row_major(n, 1, xs), ys)
    }

    #[test]
    fn recovers_generating_coefficients() {
        let (x, y) = simulate(5000, 0.5, 1.2, 11);
        let fit = fit_logistic(&x, &y).unwrap();
        assert!(fit.converged);
        assert!(fit.max_abs_score < SCORE_TOLERANCE);
        for (est, (truth, se)) in fit.coefficients.iter().zip([0.5, 1.2].iter().zip(&fit.std_errors)) {
            assert!((est - truth).abs() < 3.0 * se, "{est} vs {truth} (se {se})");
        }
    }

    #[test]
    fn null_model_has_small_coefficients() {
        let n = 4000;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..2 * n).map(|_| rng.sample(StandardNormal)).collect();
        let ys: Vec<f64> = (0..n).map(|i| (i % 2) as f64).collect();
        let fit = fit_logistic(&FeatureMatrix::from_row_major(n, 2, xs), &ys).unwrap();
        let bound = 4.0 / (n as f64).sqrt();
        assert!(fit.coefficients.iter().all(|b| b.abs() < bound), "{:?}", fit.coefficients);
    }

    #[test]
    fn intercept_score_equation_holds() {
        let (x, y) = simulate(800, -0.7, 0.9, 5);
        let fit = fit_logistic(&x, &y).unwrap();
        let mean_p: f64 = (0..x.nrows()).map(|i| fit.predict(x.row(i))).sum::<f64>() / 800.0;
        let mean_y = y.iter().sum::<f64>() / 800.0;
        assert!((mean_p - mean_y).abs() < 1e-8);
    }

    #[test]
    fn standardization_does_not_change_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 600;
        let mut data = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let age = 50.0 + 9.0 * rng.sample::<f64, _>(StandardNormal);
            let sbp = 145.0 + 8.0 * rng.sample::<f64, _>(StandardNormal);
            data.extend([age, sbp]);
            let p = expit(-20.0 + 0.05 * age + 0.12 * sbp);
            y.push(if rng.random::<f64>() < p { 1.0 } else { 0.0 });
        }
        let x = FeatureMatrix::from_row_major(n, 2, data);
        let std = fit_logistic_with(&x, &y, LogisticOptions::default()).unwrap();
        let raw = fit_logistic_with(
            &x,
            &y,
            LogisticOptions {
                standardize: false,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(raw.converged && std.converged);
        for i in 0..n {
            assert!((std.predict(x.row(i)) - raw.predict(x.row(i))).abs() < 1e-10);
        }
    }

    #[test]
    fn separated_labels_are_an_error() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = (0..20).map(|i| if i >= 10 { 1.0 } else { 0.0 }).collect();
        let err = fit_logistic(&FeatureMatrix::from_row_major(20, 1, xs), &ys).unwrap_err();
        assert!(matches!(err, Error::Separation), "{err:?}");
    }

    #[test]
    fn collinear_design_is_rank_deficient() {
        let mut data = Vec::new();
        let mut y = Vec::new();
        for i in 0..50 {
            let x = i as f64 * 0.1;
            data.extend([x, 2.0 * x + 1.0]);
            y.push((i % 3 == 0) as u8 as f64);
        }
        let err = fit_logistic(&FeatureMatrix::from_row_major(50, 2, data), &y).unwrap_err();
        assert!(matches!(err, Error::RankDeficient(_)), "{err:?}");
    }

    #[test]
    fn single_class_rejected() {
        let x = FeatureMatrix::from_row_major(5, 1, vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(fit_logistic(&x, &[1.0; 5]).is_err());
    }
}
