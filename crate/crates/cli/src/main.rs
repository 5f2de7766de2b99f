mod analytics;
mod config;
mod curate;
mod demo;
mod error;
mod output;
mod rl;
mod score;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;
use crate::output::OutputDir;

/// Verifiable rewards, data curation and evaluation analytics for
/// chart-to-code reinforcement learning.
///
/// Exit codes: 0 ok, 2 configuration error, 3 input data error,
/// 4 runtime dependency failure (sandbox, Inspector, encoder, filesystem).
#[derive(Debug, Parser)]
#[command(name = "chart-reward", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for every file a command writes.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Data-curation stages.
    #[command(subcommand)]
    Curate(curate::CurateCommand),
    /// Score candidate programs for one sample and print rewards and advantages.
    Score(score::ScoreArgs),
    /// Run the toy RL loop and write the training trace and ratio curves.
    RlDemo(rl::RlDemoArgs),
    /// Evaluation analytics.
    #[command(subcommand)]
    Eval(analytics::EvalCommand),
    /// Nearest-neighbor contamination check between a test and a train shard.
    Contamination(analytics::ContaminationArgs),
    /// Token composition report over plotting scripts.
    Asymmetry(analytics::AsymmetryArgs),
    /// Write a self-contained demo workspace (shard, mock rules, codes, config).
    InitDemo,
}

/// Loaded configuration plus the resolved global flags.
pub struct Context {
    pub config: RunConfig,
    pub seed: u64,
    pub out: OutputDir,
}

fn run(cli: Cli) -> CliResult<()> {
    if let Command::InitDemo = cli.command {
        let out = OutputDir::create(&cli.global.output_dir)?;
        return demo::init_demo(&out, cli.global.seed.unwrap_or(7));
    }
    let config = RunConfig::load(cli.global.config.as_deref())?;
    let seed = cli.global.seed.unwrap_or(config.seed);
    let out = OutputDir::create(&cli.global.output_dir)?;
    let ctx = Context { config, seed, out };
    match cli.command {
        Command::Curate(c) => curate::run(&ctx, c),
        Command::Score(a) => score::run(&ctx, a),
        Command::RlDemo(a) => rl::run(&ctx, a),
        Command::Eval(c) => analytics::run_eval(&ctx, c),
        Command::Contamination(a) => analytics::run_contamination(&ctx, a),
        Command::Asymmetry(a) => analytics::run_asymmetry(&ctx, a),
        Command::InitDemo => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() {
                error::EXIT_CONFIG
            } else {
                error::EXIT_OK
            };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
