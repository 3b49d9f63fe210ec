use serde::{Deserialize, Serialize};

use super::{BenchmarkRow, SensitivityContext, SensitivityParams};
use crate::error::{Error, Result};

/// A benchmark covariate placed on the contour axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkPoint {
    pub label: String,
    pub r2: f64,
    pub rho2: f64,
    /// Whether the benchmark's rho points toward the killer direction.
    pub same_direction: bool,
}

/// Bias over an (R2, rho^2) grid for one bound. `bias[i][j]` is at
/// `rho2_axis[i]`, `r2_axis[j]`; rho carries the sign of the bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourGrid {
    pub r2_axis: Vec<f64>,
    pub rho2_axis: Vec<f64>,
    pub bias: Vec<Vec<f64>>,
    pub killer: Vec<Vec<bool>>,
    pub killer_level: f64,
    pub target_bound: f64,
    /// The bound is exactly zero, so every cell counts as killer.
    pub degenerate: bool,
    pub benchmark_points: Vec<BenchmarkPoint>,
}

fn axis(n: usize, hi: f64) -> Vec<f64> {
    (0..n).map(|i| hi * i as f64 / (n - 1) as f64).collect()
}

pub fn contour_grid(
    ctx: &SensitivityContext,
    bound: f64,
    resolution: (usize, usize),
    r2_max: f64,
    rows: &[BenchmarkRow],
) -> Result<ContourGrid> {
    let (nr, nc) = resolution;
    if nr < 2 || nc < 2 {
        return Err(Error::InvalidArgument(format!(
            "contour grid needs at least 2x2 cells, got {nr}x{nc}"
        )));
    }
    if !(r2_max > 0.0 && r2_max < 1.0) {
        return Err(Error::R2OutOfRange(r2_max));
    }
    let sign = if bound < 0.0 { -1.0 } else { 1.0 };
    let level = bound.abs();
    let r2_axis = axis(nc, r2_max);
    let rho2_axis = axis(nr, 1.0);
    let mut bias = Vec::with_capacity(nr);
    let mut killer = Vec::with_capacity(nr);
    for &rho2 in &rho2_axis {
        let rho = sign * rho2.sqrt();
        let row: Vec<f64> = r2_axis
            .iter()
            .map(|&r2| ctx.bias_at(SensitivityParams { r2, rho }))
            .collect::<Result<_>>()?;
        killer.push(row.iter().map(|b| bound == 0.0 || b.abs() >= level).collect());
        bias.push(row);
    }
    let benchmark_points = rows
        .iter()
        .map(|r| BenchmarkPoint {
            label: r.covariate.clone(),
            r2: r.r2,
            rho2: r.rho * r.rho,
            same_direction: r.rho * sign > 0.0,
        })
        .collect();
    Ok(ContourGrid {
        r2_axis,
        rho2_axis,
        bias,
        killer,
        killer_level: level,
        target_bound: bound,
        degenerate: bound == 0.0,
        benchmark_points,
    })
}

impl ContourGrid {
    /// Long format: r2, rho2, bias, is_killer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r2,rho2,bias,is_killer\n");
        for (i, rho2) in self.rho2_axis.iter().enumerate() {
            for (j, r2) in self.r2_axis.iter().enumerate() {
                out.push_str(&format!("{r2},{rho2},{},{}\n", self.bias[i][j], self.killer[i][j]));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> SensitivityContext {
        SensitivityContext {
            var_w: 0.6,
            sigma_xi: 4.0,
            estimate: -1.2,
            weights: vec![],
            pseudo_effects: vec![],
            xi_hat: vec![],
        }
    }

    #[test]
    fn axes_have_zero_bias() {
        let g = contour_grid(&ctx(), -0.8, (11, 13), 0.9, &[]).unwrap();
        assert!(g.bias[0].iter().all(|&b| b == 0.0));
        assert!(g.bias.iter().all(|row| row[0] == 0.0));
        assert_eq!(g.r2_axis.len(), 13);
        assert_eq!(g.rho2_axis.len(), 11);
        assert!(!g.killer[0][12]);
    }

    #[test]
    fn rho_signed_toward_bound() {
        let neg = contour_grid(&ctx(), -0.8, (5, 5), 0.9, &[]).unwrap();
        let pos = contour_grid(&ctx(), 0.8, (5, 5), 0.9, &[]).unwrap();
        assert!(neg.bias[4][4] < 0.0);
        assert!(pos.bias[4][4] > 0.0);
    }

    #[test]
    fn zero_bound_is_degenerate() {
        let g = contour_grid(&ctx(), 0.0, (3, 3), 0.5, &[]).unwrap();
        assert!(g.degenerate);
        assert!(g.killer.iter().flatten().all(|&k| k));
    }

    #[test]
    fn rv_cell_sits_on_contour() {
        let c = ctx();
        let rv = c.robustness_value(1.0, c.estimate).unwrap();
        let b = c.bias_at(SensitivityParams { r2: rv, rho: -rv.sqrt() }).unwrap();
        assert!((b.abs() - c.estimate.abs()).abs() < 1e-10);
    }

    #[test]
    fn preconditions() {
        assert!(contour_grid(&ctx(), 1.0, (1, 5), 0.5, &[]).is_err());
        assert!(contour_grid(&ctx(), 1.0, (5, 5), 1.0, &[]).is_err());
    }

    #[test]
    fn csv_long_format() {
        let g = contour_grid(&ctx(), 1.0, (2, 3), 0.5, &[]).unwrap();
        let csv = g.to_csv();
        assert_eq!(csv.lines().count(), 1 + 6);
        assert!(csv.starts_with("r2,rho2,bias,is_killer\n0,0,0,false"));
    }
}
