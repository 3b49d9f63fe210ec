//! Browser bindings: the bias contour with robustness values, the
//! conclusion table, and a small double-robustness simulation.

use wasm_bindgen::prelude::*;

use trialgen::decision::conclude_values;
use trialgen::plot::contour_svg;
use trialgen::sensitivity::{
    bias_at, contour_grid, robustness_value, BenchmarkStrength, SensitivityContext, SensitivityParams,
};
use trialgen::simulation::{double_robustness_config, run_mc, McEstimator, McOptions, SimConfig};

const GRID: (usize, usize) = (120, 120);
const R2_MAX: f64 = 0.95;
const MAX_REPS: usize = 400;

fn context(var_w: f64, sigma_xi: f64, bound: f64) -> Result<SensitivityContext, String> {
    if !(var_w > 0.0 && sigma_xi > 0.0) {
        return Err("var(w) and sigma_xi must be positive".into());
    }
    if !bound.is_finite() {
        return Err("bound must be a finite number".into());
    }
    Ok(SensitivityContext {
        var_w,
        sigma_xi,
        estimate: bound,
        weights: Vec::new(),
        pseudo_effects: Vec::new(),
        xi_hat: Vec::new(),
    })
}

/// Contour SVG for `bound`, with an optional benchmark at `(r2, rho)`.
/// A non-finite `bench_r2` means no benchmark.
pub fn contour(var_w: f64, sigma_xi: f64, bound: f64, bench_r2: f64, bench_rho: f64) -> Result<String, String> {
    let ctx = context(var_w, sigma_xi, bound)?;
    let mut rows = Vec::new();
    if bench_r2.is_finite() {
        let params = SensitivityParams {
            r2: bench_r2,
            rho: bench_rho,
        };
        let bias = bias_at(params, var_w, sigma_xi).map_err(|e| e.to_string())?;
        let strength = BenchmarkStrength {
            covariate: "benchmark".into(),
            r2: bench_r2,
            rho: bench_rho,
            bias,
        };
        rows.push(strength.against(bound, &ctx, 1.0));
    }
    let grid = contour_grid(&ctx, bound, GRID, R2_MAX, &rows).map_err(|e| e.to_string())?;
    Ok(contour_svg(&grid, &format!("bias contours for bound {bound}"), &[]))
}

/// Robustness value RV_q of `value`.
pub fn rv(q: f64, value: f64, var_w: f64, sigma_xi: f64) -> Result<f64, String> {
    robustness_value(q, value, var_w, sigma_xi).map_err(|e| e.to_string())
}

/// Conclusion label and narrative for two bounds.
pub fn conclusion(
    lower: f64,
    lower_robust: bool,
    upper: f64,
    upper_robust: bool,
    treatment: &str,
    comparator: &str,
) -> Result<String, String> {
    let c = conclude_values(lower, lower_robust, upper, upper_robust).map_err(|e| e.to_string())?;
    Ok(format!("{}: {}", c.label(), c.narrative(treatment, comparator)))
}

/// OM, IPSW and AIPSW over `reps` small studies. `scenario` is one of
/// `correct`, `sampling-wrong` or `outcome-wrong`.
pub fn simulation(scenario: &str, reps: usize, seed: u64) -> Result<String, String> {
    let (sampling_wrong, outcome_wrong) = match scenario {
        "correct" => (false, false),
        "sampling-wrong" => (true, false),
        "outcome-wrong" => (false, true),
        other => return Err(format!("unknown scenario {other:?}")),
    };
    if reps > MAX_REPS {
        return Err(format!("at most {MAX_REPS} replicates in the browser"));
    }
    let cfg = SimConfig {
        n_trial: 200,
        m_target: 800,
        truth_draws: 50_000,
        sampling_wrong,
        outcome_wrong,
        ..double_robustness_config()
    };
    let result = run_mc(
        &cfg,
        &McEstimator::standard_set(&cfg),
        McOptions {
            reps,
            seed,
            bootstrap: None,
        },
    )
    .map_err(|e| e.to_string())?;
    Ok(result.to_text())
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = contourSvg)]
pub fn contour_js(var_w: f64, sigma_xi: f64, bound: f64, bench_r2: f64, bench_rho: f64) -> Result<String, JsValue> {
    js(contour(var_w, sigma_xi, bound, bench_r2, bench_rho))
}

#[wasm_bindgen(js_name = robustnessValue)]
pub fn rv_js(q: f64, value: f64, var_w: f64, sigma_xi: f64) -> Result<f64, JsValue> {
    rv(q, value, var_w, sigma_xi).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = conclude)]
pub fn conclusion_js(
    lower: f64,
    lower_robust: bool,
    upper: f64,
    upper_robust: bool,
    treatment: &str,
    comparator: &str,
) -> Result<String, JsValue> {
    js(conclusion(lower, lower_robust, upper, upper_robust, treatment, comparator))
}

#[wasm_bindgen(js_name = simulate)]
pub fn simulation_js(scenario: &str, reps: usize, seed: u64) -> Result<String, JsValue> {
    js(simulation(scenario, reps, seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn contour_renders_with_and_without_benchmark() {
        let plain = contour(0.8, 2.0, -0.5, f64::NAN, 0.0).unwrap();
        assert!(plain.starts_with("<svg") || plain.contains("<svg"));
        let marked = contour(0.8, 2.0, -0.5, 0.1, -0.3).unwrap();
        assert!(marked.contains("<circle"));
        assert!(contour(0.0, 2.0, -0.5, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn rv_matches_core() {
        let v = rv(1.0, 2.0, 1.0, 2.0).unwrap();
        assert!((v - (5f64.sqrt() - 1.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn conclusion_text() {
        let t = conclusion(-1.0, true, 2.0, true, "A", "B").unwrap();
        assert!(t.starts_with("no difference"));
        assert!(conclusion(1.0, true, -1.0, true, "A", "B").is_err());
    }

    #[test]
    fn simulation_rejects_bad_input() {
        assert!(simulation("both", 100, 1).is_err());
        assert!(simulation("correct", 10_000, 1).is_err());
        assert!(simulation("correct", 10, 1).is_err());
    }

    #[test]
    fn simulation_table_lists_estimators() {
        let t = simulation("outcome-wrong", 100, 3).unwrap();
        for label in ["om", "ipsw", "aipsw"] {
            assert!(t.contains(label));
        }
    }
}
