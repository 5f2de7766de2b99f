//! wasm-bindgen bindings for the static page in `www/`. Every export
//! returns a JSON string; errors come back as `{"error": "..."}` so the page
//! never has to catch exceptions.

use std::sync::Arc;

use chart_reward::asymmetry::classify_script;
use chart_reward::embedding::StubEncoder;
use chart_reward::fixtures::{three_arm_policy, toy_bundle, two_arm_policy};
use chart_reward::inspector::{Inspector, InspectorConfig, MockBackend};
use chart_reward::reward::{compute_advantages, compute_total_reward, RewardConfig, RewardEngine};
use chart_reward::sandbox::ToyRenderer;
use chart_reward::toy_rl::{run_toy_rl_loop, ToyRlConfig};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn respond(r: Result<Value, String>) -> String {
    r.unwrap_or_else(|e| json!({ "error": e })).to_string()
}

/// Totals `r_qa + lambda * r_vis` and group-standardized advantages.
pub fn group_rewards_value(r_qa: &[f64], r_vis: &[f64], lambda: f64) -> Result<Value, String> {
    if r_qa.len() != r_vis.len() {
        return Err(format!(
            "{} r_qa values but {} r_vis values",
            r_qa.len(),
            r_vis.len()
        ));
    }
    if let Some(bad) = r_qa.iter().chain(r_vis).find(|v| !v.is_finite()) {
        return Err(format!("non-finite reward component {bad}"));
    }
    let config = RewardConfig {
        lambda,
        ..RewardConfig::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let totals: Vec<f64> = r_qa
        .iter()
        .zip(r_vis)
        .map(|(&q, &v)| compute_total_reward(q, v, &config))
        .collect();
    let advantages = compute_advantages(&totals).map_err(|e| e.to_string())?;
    Ok(json!({ "totals": totals, "advantages": advantages }))
}

#[wasm_bindgen]
pub fn group_rewards(r_qa: &[f64], r_vis: &[f64], lambda: f64) -> String {
    respond(group_rewards_value(r_qa, r_vis, lambda))
}

pub fn classify_value(src: &str) -> Result<Value, String> {
    let tokens = classify_script(src)?;
    Ok(Value::Array(
        tokens
            .into_iter()
            .map(|(text, cat)| json!({ "text": text, "category": cat.as_str() }))
            .collect(),
    ))
}

/// Token-by-token category labels for one plotting script.
#[wasm_bindgen]
pub fn classify(src: &str) -> String {
    respond(classify_value(src))
}

pub fn rl_demo_value(
    epochs: usize,
    arms: usize,
    seed: u64,
    learning_rate: f64,
) -> Result<Value, String> {
    let policy = match arms {
        2 => two_arm_policy(seed),
        3 => three_arm_policy(seed),
        n => return Err(format!("arms must be 2 or 3, got {n}")),
    };
    let bundle = toy_bundle();
    let inspector = Inspector::new(
        Arc::new(MockBackend::new(bundle.mock_rules)),
        InspectorConfig::default(),
    )
    .map_err(|e| e.to_string())?;
    // No threads in the browser: score rollouts inline.
    let engine = RewardEngine::new(
        &ToyRenderer,
        &inspector,
        &StubEncoder,
        RewardConfig::default(),
    )
    .with_parallelism(1);
    let cfg = ToyRlConfig {
        learning_rate,
        ..ToyRlConfig::default()
    };
    let trace = run_toy_rl_loop(&bundle.samples, &policy, &engine, &cfg, epochs)
        .map_err(|e| e.to_string())?;
    Ok(json!({
        "templates": policy.templates,
        "initial": trace.initial,
        "epochs": trace.epochs,
    }))
}

/// Runs the toy RL loop on the bundled charts and returns per-epoch metrics.
#[wasm_bindgen]
pub fn rl_demo(epochs: usize, arms: usize, seed: u64, learning_rate: f64) -> String {
    respond(rl_demo_value(epochs, arms, seed, learning_rate))
}
