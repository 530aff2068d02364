//! Browser bindings for the coin scenarios. Each export returns a JSON
//! string; the `*_json` functions behind them are plain Rust so they can be
//! tested natively.

use casim_core::report::report_json;
use casim_core::scenario::{builtin, builtin_names, coin_observer, coin_simulator, CoinTau};
use casim_core::token::induced_step_distribution;
use casim_core::verify::{check_approx, mc_check};
use casim_core::{DistanceKind, McConfig, Sampler};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn sampler(kind: &str, param: f64) -> Result<Sampler, String> {
    let s = match kind {
        "greedy" => Sampler::Greedy,
        "top-k" => {
            if param < 1.0 || param.fract() != 0.0 {
                return Err(format!("k must be a positive integer, got {param}"));
            }
            Sampler::TopK(param as usize)
        }
        "top-p" => Sampler::TopP(param),
        other => return Err(format!("unknown sampler {other:?}")),
    };
    s.validate().map_err(|e| e.to_string())?;
    Ok(s)
}

fn coin(p_heads: f64, kind: &str, param: f64) -> Result<casim_core::TokenSimulator, String> {
    if !(0.0..=1.0).contains(&p_heads) {
        return Err(format!("P(Heads) must lie in [0, 1], got {p_heads}"));
    }
    coin_simulator(&[("Heads", p_heads), ("Tails", 1.0 - p_heads)], sampler(kind, param)?).map_err(|e| e.to_string())
}

/// The per-token law the sampler actually draws from for a coin row.
pub fn step_distribution_json(p_heads: f64, kind: &str, param: f64) -> Result<String, String> {
    let sim = coin(p_heads, kind, param)?;
    let (_, row) = sim.table().rows().next().ok_or("empty table")?;
    let d = induced_step_distribution(row, sim.sampler(), sim.vocab()).map_err(|e| e.to_string())?;
    let table: serde_json::Map<String, serde_json::Value> = d.iter().map(|(t, p)| (t.clone(), json!(p))).collect();
    Ok(json!({ "sampler": sim.sampler().to_string(), "row": row.as_map(), "induced": table }).to_string())
}

/// Exact check of a coin simulator against the fair-coin observer.
pub fn check_coin_json(p_heads: f64, kind: &str, param: f64, epsilon: f64) -> Result<String, String> {
    let sim = coin(p_heads, kind, param)?;
    let obs = coin_observer(CoinTau::Words);
    let report = check_approx(&obs, &sim, epsilon, DistanceKind::TotalVariation).map_err(|e| e.to_string())?;
    Ok(report_json("custom coin", &report))
}

/// Seeded Monte Carlo check of a coin simulator.
pub fn monte_carlo_coin_json(
    p_heads: f64,
    kind: &str,
    param: f64,
    epsilon: f64,
    samples: u32,
    runs: u32,
    seed: u32,
) -> Result<String, String> {
    let sim = coin(p_heads, kind, param)?;
    let obs = coin_observer(CoinTau::Words);
    let config = McConfig {
        samples: samples.into(),
        runs: runs.into(),
        seed: seed.into(),
    };
    let report = mc_check(&obs, &sim, epsilon, DistanceKind::TotalVariation, config).map_err(|e| e.to_string())?;
    Ok(report_json("custom coin", &report))
}

/// Exact check of a built-in scenario at the given threshold.
pub fn check_builtin_json(name: &str, epsilon: f64) -> Result<String, String> {
    let doc = builtin(name).map_err(|e| e.to_string())?;
    let report = check_approx(&doc.observer, &doc.simulator, epsilon, DistanceKind::TotalVariation)
        .map_err(|e| e.to_string())?;
    Ok(report_json(name, &report))
}

#[wasm_bindgen(js_name = builtinNames)]
pub fn builtin_names_js() -> Vec<String> {
    builtin_names().iter().map(|s| s.to_string()).collect()
}

#[wasm_bindgen(js_name = stepDistribution)]
pub fn step_distribution(p_heads: f64, kind: &str, param: f64) -> Result<String, JsError> {
    step_distribution_json(p_heads, kind, param).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = checkCoin)]
pub fn check_coin(p_heads: f64, kind: &str, param: f64, epsilon: f64) -> Result<String, JsError> {
    check_coin_json(p_heads, kind, param, epsilon).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = monteCarloCoin)]
pub fn monte_carlo_coin(
    p_heads: f64,
    kind: &str,
    param: f64,
    epsilon: f64,
    samples: u32,
    runs: u32,
    seed: u32,
) -> Result<String, JsError> {
    monte_carlo_coin_json(p_heads, kind, param, epsilon, samples, runs, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = checkBuiltin)]
pub fn check_builtin(name: &str, epsilon: f64) -> Result<String, JsError> {
    check_builtin_json(name, epsilon).map_err(|e| JsError::new(&e))
}
