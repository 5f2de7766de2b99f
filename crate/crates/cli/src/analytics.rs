use std::path::{Path, PathBuf};

use chart_reward::asymmetry::token_asymmetry_report;
use chart_reward::contamination::{contamination_report, LabeledImage};
use chart_reward::eval::{
    executed_mean, execution_rate, normalized_mean, paired_t_test_records, reward_hacking_curves,
    EvalError, EvalRecord, TracePoint,
};
use chart_reward::shard::load_shard;
use clap::{Args, Subcommand};
use serde_json::{json, Value};

use crate::curate::input_path;
use crate::error::{CliError, CliResult};
use crate::rl::ratio_csv;
use crate::Context;

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Fraction of records whose code executed.
    Rate {
        /// CSV with columns sample_id,executed,score[,judge_id].
        #[arg(long)]
        records: PathBuf,
    },
    /// Mean over all records with failures scored 0, alongside the executed-only mean.
    Normalize {
        #[arg(long)]
        records: PathBuf,
    },
    /// Paired t-test between two record sets, paired by sample id.
    Ttest {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Consistency/pass and visual/pass ratio curves from a training trace CSV.
    Hacking {
        #[arg(long)]
        trace: PathBuf,
    },
}

fn existing(path: &Path, what: &str) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

pub fn load_records(path: &Path) -> CliResult<Vec<EvalRecord>> {
    existing(path, "records file")?;
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for row in reader.deserialize::<EvalRecord>() {
        let rec = row.map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

fn load_trace(path: &Path) -> CliResult<Vec<TracePoint>> {
    existing(path, "trace file")?;
    let bad = |e: &dyn std::fmt::Display| CliError::Data(format!("{}: {e}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(&e))?;
    let headers = reader.headers().map_err(|e| bad(&e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Data(format!("{}: missing column {name}", path.display())))
    };
    let (epoch, pass, qa, vis) = (
        col("epoch")?,
        col("pass_rate")?,
        col("mean_r_qa")?,
        col("mean_r_vis")?,
    );
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| bad(&e))?;
        let num = |i: usize| -> CliResult<f64> { row[i].trim().parse().map_err(|e| bad(&e)) };
        out.push(TracePoint {
            epoch: row[epoch].trim().parse().map_err(|e| bad(&e))?,
            pass_rate: num(pass)?,
            mean_r_qa: num(qa)?,
            mean_r_vis: num(vis)?,
        });
    }
    Ok(out)
}

fn emit(ctx: &Context, name: &str, value: &Value) -> CliResult<()> {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("json values serialize")
    );
    let path = ctx.out.write_json(&format!("{name}.json"), value)?;
    ctx.out
        .write_run_manifest(name, ctx.seed, json!({}), &[&path])?;
    Ok(())
}

pub fn run_eval(ctx: &Context, cmd: EvalCommand) -> CliResult<()> {
    match cmd {
        EvalCommand::Rate { records } => {
            let recs = load_records(&records)?;
            let executed = recs.iter().filter(|r| r.executed).count();
            emit(
                ctx,
                "eval_rate",
                &json!({"records": recs.len(), "executed": executed, "execution_rate": execution_rate(&recs)?}),
            )
        }
        EvalCommand::Normalize { records } => {
            let recs = load_records(&records)?;
            emit(
                ctx,
                "eval_normalize",
                &json!({
                    "records": recs.len(),
                    "execution_rate": execution_rate(&recs)?,
                    "normalized_mean": normalized_mean(&recs)?,
                    "executed_mean": executed_mean(&recs)?,
                }),
            )
        }
        EvalCommand::Ttest { a, b } => {
            let (ra, rb) = (load_records(&a)?, load_records(&b)?);
            let value = match paired_t_test_records(&ra, &rb) {
                Ok(t) => json!({
                    "degenerate": false,
                    "n": t.n,
                    "df": t.df,
                    "delta_mean": t.delta_mean,
                    "t_statistic": t.t_statistic,
                    "p_value": t.p_value,
                }),
                Err(EvalError::ZeroVariance { delta_mean }) => json!({
                    "degenerate": true,
                    "n": ra.len(),
                    "delta_mean": delta_mean,
                    "reason": "all paired differences are equal",
                }),
                Err(e) => return Err(e.into()),
            };
            emit(ctx, "eval_ttest", &value)
        }
        EvalCommand::Hacking { trace } => {
            let points = load_trace(&trace)?;
            let csv = ratio_csv(&reward_hacking_curves(&points));
            print!("{csv}");
            let path = ctx.out.write("ratios.csv", csv)?;
            ctx.out.write_run_manifest(
                "eval_hacking",
                ctx.seed,
                json!({"epochs": points.len()}),
                &[&path],
            )?;
            Ok(())
        }
    }
}

#[derive(Debug, Args)]
pub struct ContaminationArgs {
    /// Test shard; defaults to `data.test`.
    #[arg(long)]
    test: Option<PathBuf>,
    /// Training shard; defaults to `data.train`.
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    top_k: usize,
    /// Best-match score at or above which a test item is flagged in the summary.
    #[arg(long, default_value_t = 0.95)]
    threshold: f64,
    /// Also write a static side-by-side HTML gallery.
    #[arg(long)]
    gallery: bool,
    #[arg(long, default_value_t = 50)]
    gallery_limit: usize,
}

fn labeled(path: &Path) -> CliResult<Vec<LabeledImage>> {
    Ok(load_shard(path)?
        .into_iter()
        .map(|s| LabeledImage::new(s.id, s.image))
        .collect())
}

pub fn run_contamination(ctx: &Context, args: ContaminationArgs) -> CliResult<()> {
    let cfg = &ctx.config;
    let test = labeled(&input_path(&args.test, &cfg.data.test, "test shard")?)?;
    let train = labeled(&input_path(&args.train, &cfg.data.train, "train shard")?)?;
    let encoders = cfg.encoders()?;
    let refs: Vec<&dyn chart_reward::embedding::Encoder> =
        encoders.iter().map(|e| e.as_ref()).collect();
    let report = contamination_report(&test, &train, &refs, args.top_k, cfg.parallelism)?;
    let summary = report.summary(args.threshold);
    print!("{summary}");
    let mut outputs = vec![
        ctx.out.write("contamination.csv", report.to_csv())?,
        ctx.out.write("contamination_summary.txt", &summary)?,
        ctx.out.write_json("contamination.json", &report)?,
    ];
    if args.gallery {
        outputs.push(ctx.out.write(
            "gallery.html",
            report.gallery_html(&test, &train, args.gallery_limit),
        )?);
    }
    let refs: Vec<&Path> = outputs.iter().map(PathBuf::as_path).collect();
    ctx.out.write_run_manifest(
        "contamination",
        ctx.seed,
        json!({"top_k": args.top_k, "encoders": report.encoder_ids, "threshold": args.threshold}),
        &refs,
    )?;
    Ok(())
}

#[derive(Debug, Args)]
pub struct AsymmetryArgs {
    /// Python scripts or directories (searched recursively for *.py).
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

fn collect_scripts(paths: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in paths {
        existing(p, "path")?;
        if p.is_dir() {
            for entry in walkdir::WalkDir::new(p).sort_by_file_name() {
                let entry = entry.map_err(|e| CliError::Runtime(e.to_string()))?;
                if entry.file_type().is_file()
                    && entry.path().extension().is_some_and(|x| x == "py")
                {
                    files.push(entry.into_path());
                }
            }
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn run_asymmetry(ctx: &Context, args: AsymmetryArgs) -> CliResult<()> {
    let files = collect_scripts(&args.paths)?;
    let scripts: Vec<String> = files
        .iter()
        .map(|f| std::fs::read_to_string(f).map_err(|e| CliError::io(f, e)))
        .collect::<Result<_, _>>()?;
    let report = token_asymmetry_report(&scripts).map_err(|e| CliError::Data(e.to_string()))?;
    println!(
        "asymmetry ({}): {} scripts analyzed, {} skipped, {} tokens",
        report.rule_table_version,
        report.scripts_analyzed,
        report.skipped.len(),
        report.total_tokens
    );
    for (cat, share) in &report.shares {
        println!("  {cat}: {:.4} ({} tokens)", share, report.counts[cat]);
    }
    println!("  attribute values: {:.4}", report.attribute_value_share);
    for (attr, cov) in &report.top3_coverage {
        println!("  top-3 coverage {attr}: {cov:.4}");
    }
    for s in &report.skipped {
        eprintln!("skipped {}: {}", files[s.index].display(), s.reason);
    }
    let mut value = serde_json::to_value(&report).expect("report serializes");
    value["files"] = json!(files
        .iter()
        .map(|f| f.display().to_string())
        .collect::<Vec<_>>());
    let path = ctx.out.write_json("asymmetry.json", &value)?;
    ctx.out
        .write_run_manifest("asymmetry", ctx.seed, json!({}), &[&path])?;
    Ok(())
}
