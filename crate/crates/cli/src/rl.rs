use std::fmt::Write as _;
use std::sync::Arc;

use chart_reward::embedding::StubEncoder;
use chart_reward::eval::{reward_hacking_curves, HackingPoint, TracePoint};
use chart_reward::fixtures::{three_arm_policy, toy_bundle, two_arm_policy};
use chart_reward::inspector::{Inspector, InspectorConfig, MockBackend};
use chart_reward::reward::RewardEngine;
use chart_reward::sandbox::ToyRenderer;
use chart_reward::toy_rl::{run_toy_rl_loop, ToyRlConfig};
use clap::Args;
use serde_json::json;

use crate::error::{CliError, CliResult};
use crate::output::na;
use crate::Context;

/// The demo always runs on the bundled toy charts with the in-process
/// renderer, the bundled mock Inspector and the stub encoder; only the
/// reward settings come from the config.
#[derive(Debug, Args)]
pub struct RlDemoArgs {
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    /// 2: faithful vs broken template; 3: adds a re-colouring template.
    #[arg(long, default_value_t = 2)]
    arms: usize,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    steps_per_epoch: Option<usize>,
}

pub const RATIO_CSV_HEADER: &str = "epoch,consistency_per_pass,visual_per_pass";

pub fn ratio_csv(points: &[HackingPoint]) -> String {
    let mut out = String::from(RATIO_CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{}",
            p.epoch,
            na(p.consistency_per_pass),
            na(p.visual_per_pass)
        );
    }
    out
}

pub fn run(ctx: &Context, args: RlDemoArgs) -> CliResult<()> {
    let policy = match args.arms {
        2 => two_arm_policy(ctx.seed),
        3 => three_arm_policy(ctx.seed),
        n => return Err(CliError::Config(format!("--arms must be 2 or 3, got {n}"))),
    };
    let defaults = ToyRlConfig::default();
    let cfg = ToyRlConfig {
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        steps_per_epoch: args.steps_per_epoch.unwrap_or(defaults.steps_per_epoch),
    };
    let bundle = toy_bundle();
    let inspector = Inspector::new(
        Arc::new(MockBackend::new(bundle.mock_rules)),
        InspectorConfig::default(),
    )?;
    let engine = RewardEngine::new(&ToyRenderer, &inspector, &StubEncoder, ctx.config.reward)
        .with_parallelism(ctx.config.parallelism);
    let trace = run_toy_rl_loop(&bundle.samples, &policy, &engine, &cfg, args.epochs)?;

    let points: Vec<TracePoint> = trace.epochs.iter().map(TracePoint::from).collect();
    let trace_path = ctx.out.write("trace.csv", trace.to_csv())?;
    let ratio_path = ctx
        .out
        .write("ratios.csv", ratio_csv(&reward_hacking_curves(&points)))?;
    let steps_path = ctx.out.write_json("steps.json", &trace.steps)?;
    ctx.out.write_run_manifest(
        "rl-demo",
        ctx.seed,
        json!({
            "epochs": args.epochs,
            "arms": args.arms,
            "templates": policy.templates,
            "initial_logits": policy.logits,
            "final_logits": trace.final_policy.logits,
            "rl": cfg,
            "reward": ctx.config.reward,
        }),
        &[&trace_path, &ratio_path, &steps_path],
    )?;
    let last = trace.epochs.last().unwrap_or(&trace.initial);
    println!(
        "rl-demo: {} epochs, mean reward {:.4} -> {:.4}, pass rate {:.4} -> {:.4}, p(arm 0) {:.4} -> {:.4}",
        args.epochs,
        trace.initial.mean_reward,
        last.mean_reward,
        trace.initial.pass_rate,
        last.pass_rate,
        trace.initial.probabilities[0],
        last.probabilities[0]
    );
    println!("trace: {}", trace_path.display());
    println!("ratios: {}", ratio_path.display());
    Ok(())
}
