use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::features::FeatureMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_variance: f64,
    pub n: usize,
}

impl LinearFit {
    pub fn predict(&self, features: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(features)
                .map(|(b, x)| b * x)
                .sum::<f64>()
    }
}

/// Ordinary least squares with intercept, solved by Householder QR.
pub fn fit_ols(features: &FeatureMatrix, y: &[f64]) -> Result<LinearFit> {
    let n = features.nrows();
    let k = features.ncols();
    let dim = k + 1;
    if y.len() != n {
        return Err(Error::InvalidArgument(format!("{} responses for {n} rows", y.len())));
    }
    if n < k + 2 {
        return Err(Error::InvalidArgument(format!(
            "least squares needs at least {} rows, got {n}",
            k + 2
        )));
    }
    let design = DMatrix::from_fn(n, dim, |i, j| if j == 0 { 1.0 } else { features.row(i)[j - 1] });
    // Column scaling so the rank test does not depend on units.
    let norms: Vec<f64> = (0..dim).map(|j| design.column(j).norm()).collect();
    if norms.contains(&0.0) {
        return Err(Error::RankDeficient("all-zero feature column".into()));
    }
    let mut scaled = design.clone();
    for (j, norm) in norms.iter().enumerate() {
        scaled.column_mut(j).unscale_mut(*norm);
    }
    let qr = scaled.qr();
    let r = qr.r();
    let diag_max = (0..dim).fold(0.0_f64, |m, j| m.max(r[(j, j)].abs()));
    if (0..dim).any(|j| r[(j, j)].abs() <= 1e-10 * diag_max) {
        return Err(Error::RankDeficient("collinear regressors".into()));
    }
    let rhs = DVector::from_column_slice(y);
    let qty = qr.q().transpose() * &rhs;
    let scaled_beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let beta: Vec<f64> = scaled_beta.iter().zip(&norms).map(|(b, s)| b / s).collect();

    let fitted = &design * DVector::from_column_slice(&beta);
    let rss: f64 = crate::stats::compensated_sum(
        fitted.iter().zip(y).map(|(f, yi)| (yi - f) * (yi - f)),
    );
    let residual_variance = rss / (n - dim) as f64;
    let r_inv = r
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::RankDeficient("singular triangular factor".into()))?;
    let std_errors = (0..dim)
        .map(|j| {
            let row_norm2: f64 = r_inv.row(j).iter().map(|v| v * v).sum();
            (residual_variance * row_norm2).sqrt() / norms[j]
        })
        .collect();

    Ok(LinearFit {
        coefficients: beta,
        std_errors,
        residual_variance,
        n,
    })
}
