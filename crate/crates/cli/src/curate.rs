use std::io::BufRead;
use std::path::{Path, PathBuf};

use chart_reward::curation::{
    build_rl_dataset, consistency_prefilter, filter_by_render_similarity, filter_caption_length,
    render_and_pair, CodeRecord, CurationManifest, RenderContext, RlBuildConfig, StageReport,
    StageResult, WhitespaceTokenCounter, DEFAULT_MAX_CAPTION_TOKENS, DEFAULT_MIN_ACCURACY,
    DEFAULT_SIMILARITY_THRESHOLD,
};
use chart_reward::shard::{load_shard, write_shard};
use clap::{Args, Subcommand};

use crate::error::{CliError, CliResult};
use crate::output::{input_shard, timestamp, write_stage};
use crate::Context;

#[derive(Debug, Args)]
pub struct InputArg {
    /// Input shard (JSON lines); defaults to `data.input` from the config.
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CurateCommand {
    /// Drop samples whose caption exceeds the token budget.
    Length {
        #[command(flatten)]
        input: InputArg,
        #[arg(long, default_value_t = DEFAULT_MAX_CAPTION_TOKENS)]
        max_tokens: usize,
    },
    /// Keep samples whose code re-renders to an image similar to the source.
    Similarity {
        #[command(flatten)]
        input: InputArg,
        #[arg(long, default_value_t = DEFAULT_SIMILARITY_THRESHOLD)]
        threshold: f64,
    },
    /// Render code records (JSON lines of {id, code, caption}) and pair them with their images.
    Pair {
        #[command(flatten)]
        input: InputArg,
    },
    /// Keep samples the Inspector answers correctly on their own image.
    Prefilter {
        #[command(flatten)]
        input: InputArg,
        #[arg(long, default_value_t = DEFAULT_MIN_ACCURACY)]
        min_acc: f64,
    },
    /// Representative K-Means selection followed by the consistency prefilter.
    BuildRl {
        #[command(flatten)]
        input: InputArg,
        #[arg(long)]
        target_k: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_ACCURACY)]
        min_acc: f64,
    },
}

pub fn input_path(
    flag: &Option<PathBuf>,
    fallback: &Option<PathBuf>,
    what: &str,
) -> CliResult<PathBuf> {
    let path = flag
        .clone()
        .or_else(|| fallback.clone())
        .ok_or_else(|| CliError::Config(format!("no {what} given (flag or config)")))?;
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{what} {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

fn load_code_records(path: &Path) -> CliResult<Vec<CodeRecord>> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CodeRecord = serde_json::from_str(&line).map_err(|e| {
            CliError::Data(format!(
                "{}:{}: malformed code record: {e}",
                path.display(),
                i + 1
            ))
        })?;
        out.push(rec);
    }
    Ok(out)
}

fn print_report(report: &StageReport) {
    println!(
        "{}: input {} kept {} dropped {} (quarantined {})",
        report.stage, report.input, report.kept, report.dropped, report.quarantined
    );
    for (reason, n) in &report.reasons {
        println!("  {reason}: {n}");
    }
}

fn finish(ctx: &Context, input: &Path, result: StageResult) -> CliResult<()> {
    let mut manifest = CurationManifest::new(ctx.seed, timestamp());
    manifest.input_shards.push(input_shard(input)?);
    print_report(&result.report);
    manifest.stages.push(result.report.clone());
    let path = write_stage(&ctx.out, &result, &manifest)?;
    println!("manifest: {}", path.display());
    Ok(())
}

pub fn run(ctx: &Context, cmd: CurateCommand) -> CliResult<()> {
    let cfg = &ctx.config;
    let render_ctx = |renderer| RenderContext {
        renderer,
        limits: cfg.sandbox.limits,
        parallelism: cfg.parallelism,
    };
    match cmd {
        CurateCommand::Length { input, max_tokens } => {
            let path = input_path(&input.input, &cfg.data.input, "input shard")?;
            let samples = load_shard(&path)?;
            finish(
                ctx,
                &path,
                filter_caption_length(samples, max_tokens, &WhitespaceTokenCounter),
            )
        }
        CurateCommand::Similarity { input, threshold } => {
            let path = input_path(&input.input, &cfg.data.input, "input shard")?;
            let samples = load_shard(&path)?;
            let renderer = cfg.renderer()?;
            let encoder = cfg.primary_encoder()?;
            let result = filter_by_render_similarity(
                samples,
                threshold,
                &render_ctx(renderer.as_ref()),
                encoder.as_ref(),
            )?;
            finish(ctx, &path, result)
        }
        CurateCommand::Pair { input } => {
            let path = input_path(&input.input, &cfg.data.codes, "code records")?;
            let records = load_code_records(&path)?;
            let renderer = cfg.renderer()?;
            finish(
                ctx,
                &path,
                render_and_pair(records, &render_ctx(renderer.as_ref()))?,
            )
        }
        CurateCommand::Prefilter { input, min_acc } => {
            let path = input_path(&input.input, &cfg.data.input, "input shard")?;
            let samples = load_shard(&path)?;
            let inspector = cfg.inspector()?;
            finish(
                ctx,
                &path,
                consistency_prefilter(samples, &inspector, min_acc, cfg.parallelism)?,
            )
        }
        CurateCommand::BuildRl {
            input,
            target_k,
            min_acc,
        } => {
            let path = input_path(&input.input, &cfg.data.input, "input shard")?;
            let pool = load_shard(&path)?;
            let inspector = cfg.inspector()?;
            let encoder = cfg.primary_encoder()?;
            let mut manifest = CurationManifest::new(ctx.seed, timestamp());
            manifest.input_shards.push(input_shard(&path)?);
            let build = RlBuildConfig {
                target_k,
                min_acc,
                seed: ctx.seed,
                parallelism: cfg.parallelism,
            };
            let dataset = build_rl_dataset(pool, &build, encoder.as_ref(), &inspector, manifest)?;
            for stage in &dataset.manifest.stages {
                print_report(stage);
            }
            write_shard(&ctx.out.path("curated.jsonl"), &dataset.samples)?;
            let path = ctx.out.write_json("manifest.json", &dataset.manifest)?;
            println!("manifest: {}", path.display());
            Ok(())
        }
    }
}
