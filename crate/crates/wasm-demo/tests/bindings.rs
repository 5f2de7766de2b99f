use chart_reward_wasm::{classify, group_rewards, rl_demo};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn group_rewards_totals_and_zero_mean_advantages() {
    let v = parse(group_rewards(&[1.0, 0.5, 0.0], &[0.8, 0.2, 0.0], 0.5));
    let totals: Vec<f64> = serde_json::from_value(v["totals"].clone()).unwrap();
    assert_eq!(totals, vec![1.4, 0.6, 0.0]);
    let adv: Vec<f64> = serde_json::from_value(v["advantages"].clone()).unwrap();
    assert!(adv.iter().sum::<f64>().abs() < 1e-12);
    assert!(adv[0] > adv[1] && adv[1] > adv[2]);
}

#[test]
fn errors_are_reported_as_json() {
    assert!(parse(group_rewards(&[1.0], &[], 1.0))["error"].is_string());
    assert!(parse(group_rewards(&[1.0], &[1.0], -1.0))["error"].is_string());
    assert!(parse(group_rewards(&[1.0, f64::NAN], &[1.0, 0.0], 1.0))["error"].is_string());
    assert!(parse(classify("plt.plot([1, 2"))["error"].is_string());
    assert!(parse(rl_demo(1, 5, 0, 0.05))["error"].is_string());
}

#[test]
fn classify_labels_style_kwargs() {
    let v = parse(classify("plt.plot(x, color='red')"));
    let tokens = v.as_array().unwrap();
    let red = tokens.iter().find(|t| t["text"] == "'red'").unwrap();
    assert_eq!(red["category"], "visual_config");
    assert_eq!(tokens[0]["category"], "plotting_calls");
}

#[test]
fn rl_demo_moves_mass_to_faithful_arm() {
    let v = parse(rl_demo(3, 2, 7, 0.05));
    let epochs = v["epochs"].as_array().unwrap();
    assert_eq!(epochs.len(), 3);
    let p0 = |e: &Value| e["probabilities"][0].as_f64().unwrap();
    assert!(p0(epochs.last().unwrap()) > p0(&v["initial"]));
}
