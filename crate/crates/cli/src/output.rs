use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use chart_reward::curation::{CurationManifest, InputShard, StageResult};
use chart_reward::image_io::sha256_hex;
use chart_reward::shard::write_shard;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

/// Honors `SOURCE_DATE_EPOCH` so manifests can be reproduced exactly.
pub fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0)
        })
}

pub struct OutputDir(PathBuf);

impl OutputDir {
    pub fn create(path: &Path) -> CliResult<Self> {
        std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))?;
        Ok(OutputDir(path.to_path_buf()))
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, contents).map_err(|e| CliError::io(&p, e))?;
        Ok(p)
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> CliResult<PathBuf> {
        let mut text =
            serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        text.push('\n');
        self.write(name, text)
    }

    /// Command-level manifest recording the seed and the files produced.
    pub fn write_run_manifest(
        &self,
        command: &str,
        seed: u64,
        details: Value,
        outputs: &[&Path],
    ) -> CliResult<PathBuf> {
        let outputs: Vec<String> = outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect();
        self.write_json(
            "run.json",
            &json!({
                "tool": "chart-reward",
                "tool_version": env!("CARGO_PKG_VERSION"),
                "command": command,
                "seed": seed,
                "timestamp_unix": timestamp(),
                "details": details,
                "outputs": outputs,
            }),
        )
    }
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

pub fn input_shard(path: &Path) -> CliResult<InputShard> {
    Ok(InputShard {
        path: path.display().to_string(),
        sha256: file_sha256(path)?,
    })
}

/// Writes kept samples, rejections and the curation manifest. Returns the
/// manifest path.
pub fn write_stage(
    out: &OutputDir,
    result: &StageResult,
    manifest: &CurationManifest,
) -> CliResult<PathBuf> {
    write_shard(&out.path("curated.jsonl"), &result.kept)?;
    let mut rejected = String::new();
    let tagged = result
        .dropped
        .iter()
        .map(|r| (r, false))
        .chain(result.quarantined.iter().map(|r| (r, true)));
    for (r, quarantined) in tagged {
        let line = json!({"id": r.id, "quarantined": quarantined, "reason": r.reason});
        rejected.push_str(&line.to_string());
        rejected.push('\n');
    }
    out.write("rejected.jsonl", rejected)?;
    out.write_json("manifest.json", manifest)
}

/// Field for CSV output; `None` prints as `NA`.
pub fn na(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.12}")).unwrap_or_else(|| "NA".into())
}
