use serde::{Deserialize, Serialize};

use super::LogisticModel;
use crate::dataset::StudyDataset;
use crate::error::{Error, Result};
use crate::stats;

/// Participation weights w_i = 1/p(X_i) over trial units, rescaled to mean
/// one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSet {
    pub weights: Vec<f64>,
    /// Raw-weight clamp bounds when truncation was requested.
    pub truncation: Option<(f64, f64)>,
}

impl WeightSet {
    /// Optional symmetric quantile truncation, then mean-one normalization.
    pub fn from_raw(raw: &[f64], truncate: Option<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::DegenerateSample("no weights".into()));
        }
        if let Some(unit) = raw.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFiniteWeight { unit });
        }
        let mut w = raw.to_vec();
        let truncation = match truncate {
            None => None,
            Some(q) if (0.0..0.5).contains(&q) => {
                let mut sorted = w.clone();
                sorted.sort_by(f64::total_cmp);
                let lo = stats::quantile_sorted(&sorted, q);
                let hi = stats::quantile_sorted(&sorted, 1.0 - q);
                for v in &mut w {
                    *v = v.clamp(lo, hi);
                }
                Some((lo, hi))
            }
            Some(q) => {
                return Err(Error::InvalidArgument(format!(
                    "truncation quantile {q} is outside [0, 0.5)"
                )))
            }
        };
        let m = stats::mean(&w);
        if !(m > 0.0) {
            return Err(Error::ZeroDenominator("weights sum to zero".into()));
        }
        for v in &mut w {
            *v /= m;
        }
        Ok(Self {
            weights: w,
            truncation,
        })
    }

    pub fn variance(&self) -> f64 {
        stats::variance(&self.weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

pub fn participation_weights(
    trial: &StudyDataset,
    sampling: &LogisticModel,
    truncate: Option<f64>,
) -> Result<WeightSet> {
    if !sampling.fit.converged {
        return Err(Error::NotConverged {
            iterations: sampling.fit.iterations,
            max_abs_score: sampling.fit.max_abs_score,
        });
    }
    let raw: Vec<f64> = trial.covariate_rows().map(|x| 1.0 / sampling.predict(x)).collect();
    WeightSet::from_raw(&raw, truncate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_to_mean_one() {
        let ws = WeightSet::from_raw(&[1.0, 2.0, 3.0, 4.0], None).unwrap();
        let expected = [0.4, 0.8, 1.2, 1.6];
        for (w, e) in ws.weights.iter().zip(expected) {
            assert!((w - e).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_weights_become_one() {
        let ws = WeightSet::from_raw(&[2.0; 7], None).unwrap();
        assert!(ws.weights.iter().all(|&w| (w - 1.0).abs() < 1e-15));
    }

    #[test]
    fn truncation_caps_at_upper_quantile() {
        // Heavy tail: Pareto-like raw weights.
        let raw: Vec<f64> = (1..=200).map(|i| 1.0 / (i as f64 / 201.0).powf(1.5)).collect();
        let ws = WeightSet::from_raw(&raw, Some(0.05)).unwrap();
        // Brute-force type-7 quantile.
        let mut sorted = raw.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let h: f64 = 199.0 * 0.95;
        let q95 = sorted[h as usize] + (h - h.floor()) * (sorted[h as usize + 1] - sorted[h as usize]);
        let clamped_mean: f64 = raw
            .iter()
            .map(|w| w.clamp(ws.truncation.unwrap().0, q95))
            .sum::<f64>()
            / 200.0;
        let max = ws.weights.iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - q95 / clamped_mean).abs() < 1e-12);
        assert!((ws.truncation.unwrap().1 - q95).abs() < 1e-12);
    }

    #[test]
    fn rejects_infinite_weight() {
        let err = WeightSet::from_raw(&[1.0, f64::INFINITY], None).unwrap_err();
        assert!(matches!(err, Error::NonFiniteWeight { unit: 1 }));
    }

    #[test]
    fn rescaling_raw_weights_is_invisible() {
        let raw = [0.3, 5.0, 1.7, 2.2];
        let a = WeightSet::from_raw(&raw, None).unwrap();
        let scaled: Vec<f64> = raw.iter().map(|w| w * 13.0).collect();
        let b = WeightSet::from_raw(&scaled, None).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-14);
        }
    }
}
