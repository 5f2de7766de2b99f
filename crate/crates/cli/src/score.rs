use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chart_reward::reward::RewardEngine;
use chart_reward::shard::load_shard;
use clap::Args;
use serde_json::json;

use crate::curate::input_path;
use crate::error::{CliError, CliResult};
use crate::Context;

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Shard holding the reference sample; defaults to `data.input`.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Sample to score against; defaults to the shard's first sample.
    #[arg(long)]
    sample_id: Option<String>,
    /// Candidate model outputs: a JSON array of strings, or one JSON string per line.
    #[arg(long)]
    codes: Option<PathBuf>,
    /// Overrides the visual reward weight.
    #[arg(long)]
    lambda: Option<f64>,
}

pub const SCORE_CSV_HEADER: &str = "rollout,executed,status,r_qa,r_vis,r_vis_raw,r_total,advantage";

pub fn load_codes(path: &Path) -> CliResult<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |e: serde_json::Error| CliError::Data(format!("{}: {e}", path.display()));
    let codes: Vec<String> = if text.trim_start().starts_with('[') {
        serde_json::from_str(&text).map_err(bad)?
    } else {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<String>(l).map_err(bad))
            .collect::<Result<_, _>>()?
    };
    if codes.is_empty() {
        return Err(CliError::Data(format!(
            "{} contains no candidate programs",
            path.display()
        )));
    }
    Ok(codes)
}

pub fn run(ctx: &Context, args: ScoreArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let shard = input_path(&args.input, &cfg.data.input, "input shard")?;
    let codes_path = input_path(&args.codes, &cfg.data.codes, "codes file")?;
    let samples = load_shard(&shard)?;
    let sample = match &args.sample_id {
        Some(id) => samples
            .iter()
            .find(|s| &s.id == id)
            .ok_or_else(|| CliError::Data(format!("sample {id} not in {}", shard.display())))?,
        None => samples
            .first()
            .ok_or_else(|| CliError::Data(format!("{} is empty", shard.display())))?,
    };
    let codes = load_codes(&codes_path)?;

    let mut reward = cfg.reward;
    if let Some(l) = args.lambda {
        reward.lambda = l;
        reward.validate()?;
    }
    let renderer = cfg.renderer()?;
    let inspector = cfg.inspector()?;
    let encoder = cfg.primary_encoder()?;
    let engine = RewardEngine::new(renderer.as_ref(), &inspector, encoder.as_ref(), reward)
        .with_limits(cfg.sandbox.limits)
        .with_parallelism(cfg.parallelism);
    let group = engine.score_codes(sample, &codes)?;

    let mut csv = String::from(SCORE_CSV_HEADER);
    csv.push('\n');
    for (i, (r, adv)) in group.rollouts.iter().zip(&group.advantages).enumerate() {
        let b = &r.reward;
        let _ = writeln!(
            csv,
            "{i},{},{},{:.12},{:.12},{:.12},{:.12},{:.12}",
            b.executed, r.outcome.status, b.r_qa, b.r_vis, b.r_vis_raw, b.r_total, adv
        );
    }
    print!("{csv}");
    let csv_path = ctx.out.write("scores.csv", &csv)?;
    let run = ctx.out.write_run_manifest(
        "score",
        ctx.seed,
        json!({"sample_id": sample.id, "rollouts": codes.len(), "reward": reward}),
        &[&csv_path],
    )?;
    eprintln!("wrote {} and {}", csv_path.display(), run.display());
    Ok(())
}
