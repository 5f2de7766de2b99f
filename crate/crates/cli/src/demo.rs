use std::fmt::Write as _;

use chart_reward::fixtures::{toy_bundle, BROKEN_TEMPLATE, FAITHFUL_TEMPLATE, SLOPPY_TEMPLATE};
use chart_reward::shard::write_shard;
use chart_reward::toy_rl::CODE_PLACEHOLDER;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};
use crate::output::OutputDir;

const PLOT_SCRIPT: &str = "\
# monthly sales
import matplotlib.pyplot as plt
x = [1, 2, 3, 4]
y = [3, 1, 4, 1]
plt.figure(figsize=(6, 4))
plt.plot(x, y, color='red', linewidth=2, marker='o')
plt.title('Sales')
plt.savefig('out.png')
";

/// Everything the other subcommands need to run offline: the bundled toy
/// shard, its mock Inspector rules, candidate programs, record CSVs for the
/// `eval` commands, a plotting script and a config tying them together.
pub fn init_demo(out: &OutputDir, seed: u64) -> CliResult<()> {
    let bundle = toy_bundle();
    write_shard(&out.path("shard.jsonl"), &bundle.samples)?;
    write_shard(&out.path("test.jsonl"), &bundle.samples[..2])?;
    write_shard(&out.path("train.jsonl"), &bundle.samples[1..])?;
    out.write_json("mock_rules.json", &bundle.mock_rules)?;

    let code = bundle.samples[0]
        .code
        .as_deref()
        .ok_or_else(|| CliError::Runtime("bundled sample lacks code".into()))?;
    let mut codes = String::new();
    for template in [FAITHFUL_TEMPLATE, BROKEN_TEMPLATE, SLOPPY_TEMPLATE] {
        let candidate = template.replace(CODE_PLACEHOLDER, code);
        let _ = writeln!(
            codes,
            "{}",
            serde_json::to_string(&candidate).expect("strings serialize")
        );
    }
    out.write("codes.jsonl", codes)?;

    // Two systems over the same samples; b is better on average, with noise.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut a, mut b) = (
        String::from("sample_id,executed,score\n"),
        String::from("sample_id,executed,score\n"),
    );
    for i in 0..40 {
        let base: f64 = rng.gen_range(0.2..0.8);
        let a_exec = rng.gen_bool(0.8);
        let b_exec = rng.gen_bool(0.9);
        let a_score = if a_exec { base } else { 0.0 };
        let b_score = if b_exec {
            (base + rng.gen_range(0.0..0.2)).min(1.0)
        } else {
            0.0
        };
        let _ = writeln!(a, "s{i:03},{a_exec},{a_score:.4}");
        let _ = writeln!(b, "s{i:03},{b_exec},{b_score:.4}");
    }
    out.write("records_a.csv", a)?;
    out.write("records_b.csv", b)?;
    let scripts = out.path("scripts");
    std::fs::create_dir_all(&scripts).map_err(|e| CliError::io(&scripts, e))?;
    out.write("scripts/plot.py", PLOT_SCRIPT)?;

    let config = format!(
        "seed = {seed}\n\n[inspector]\nbackend = \"mock\"\nmock_rules = \"mock_rules.json\"\n\n\
         [data]\ninput = \"shard.jsonl\"\ncodes = \"codes.jsonl\"\ntest = \"test.jsonl\"\ntrain = \"train.jsonl\"\n"
    );
    let path = out.write("config.toml", config)?;
    println!(
        "demo workspace: {}",
        path.parent().unwrap_or(&path).display()
    );
    println!("try: chart-reward --config {} score", path.display());
    Ok(())
}
