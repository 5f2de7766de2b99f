//! Declarative run configuration (TOML).
//!
//! ```toml
//! seed = 7
//! parallelism = 4
//!
//! [inspector]
//! backend = "mock"            # or "http"
//! mock_rules = "mock_rules.json"
//! endpoint = "http://127.0.0.1:8000/v1"
//! model_id = "Qwen/Qwen3-VL-30B-A3B-Instruct"
//!
//! [[encoders]]
//! kind = "deterministic-stub"
//!
//! [reward]
//! lambda = 1.0
//! kl_beta = 0.02
//!
//! [sandbox]
//! renderer = "toy"            # or "worker"
//! worker = { program = "python3", args = ["-m", "chart_worker"] }
//! wall_clock_secs = 30
//!
//! [data]
//! input = "shard.jsonl"
//! ```
//!
//! Relative paths resolve against the config file's directory. The
//! environment overrides `CHART_REWARD_INSPECTOR_ENDPOINT` and
//! `CHART_REWARD_INSPECTOR_MODEL`; the Inspector API key is only ever read
//! from `CHART_REWARD_INSPECTOR_API_KEY`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use chart_reward::embedding::{Encoder, EncoderBackend};
use chart_reward::inspector::{Inspector, InspectorBackend, InspectorConfig, MockBackend};
use chart_reward::reward::RewardConfig;
use chart_reward::sandbox::{ExecutionLimits, Renderer, ToyRenderer, WorkerCommand};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const ENV_ENDPOINT: &str = "CHART_REWARD_INSPECTOR_ENDPOINT";
pub const ENV_MODEL: &str = "CHART_REWARD_INSPECTOR_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InspectorBackendKind {
    #[default]
    Http,
    Mock,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectorSection {
    pub backend: InspectorBackendKind,
    pub mock_rules: Option<PathBuf>,
    #[serde(flatten)]
    pub client: InspectorConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RendererKind {
    /// In-process renderer for the toy chart language.
    #[default]
    Toy,
    /// External plotting worker subprocess.
    Worker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxSection {
    pub renderer: RendererKind,
    pub worker: Option<WorkerCommand>,
    pub deny_network: bool,
    #[serde(flatten)]
    pub limits: ExecutionLimits,
}

impl Default for SandboxSection {
    fn default() -> Self {
        SandboxSection {
            renderer: RendererKind::Toy,
            worker: None,
            deny_network: true,
            limits: ExecutionLimits::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub input: Option<PathBuf>,
    pub codes: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub train: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub parallelism: usize,
    pub inspector: InspectorSection,
    pub encoders: Vec<EncoderBackend>,
    pub reward: RewardConfig,
    pub sandbox: SandboxSection,
    pub data: DataSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            parallelism: 4,
            inspector: InspectorSection::default(),
            encoders: vec![EncoderBackend::DeterministicStub],
            reward: RewardConfig::default(),
            sandbox: SandboxSection::default(),
            data: DataSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

fn check_exists(what: &str, p: &Option<PathBuf>) -> CliResult<()> {
    match p {
        Some(path) if !path.exists() => Err(CliError::Config(format!(
            "{what} {} does not exist",
            path.display()
        ))),
        _ => Ok(()),
    }
}

impl RunConfig {
    /// Loads `path` (or defaults when `None`), applies environment overrides
    /// and validates every section.
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let mut cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config {}: {e}", p.display()))
                })?;
                let mut cfg: RunConfig = toml::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new("."));
                cfg.resolve_paths(base);
                cfg
            }
        };
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.inspector.mock_rules);
        for p in [
            &mut self.data.input,
            &mut self.data.codes,
            &mut self.data.test,
            &mut self.data.train,
        ] {
            resolve(base, p);
        }
        if let Some(w) = &mut self.sandbox.worker {
            // Bare program names are looked up on PATH.
            if w.program.components().count() > 1 && w.program.is_relative() {
                w.program = base.join(&w.program);
            }
        }
    }

    fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENV_ENDPOINT) {
            if !v.is_empty() {
                self.inspector.client.endpoint = v;
            }
        }
        if let Ok(v) = std::env::var(ENV_MODEL) {
            if !v.is_empty() {
                self.inspector.client.model_id = v;
            }
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.parallelism < 1 {
            return Err(CliError::Config("parallelism must be >= 1".into()));
        }
        self.reward
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.sandbox
            .limits
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        self.inspector
            .client
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if self.encoders.is_empty() {
            return Err(CliError::Config("at least one encoder is required".into()));
        }
        if self.inspector.backend == InspectorBackendKind::Mock
            && self.inspector.mock_rules.is_none()
        {
            return Err(CliError::Config(
                "inspector.backend = \"mock\" requires inspector.mock_rules".into(),
            ));
        }
        check_exists("inspector.mock_rules", &self.inspector.mock_rules)?;
        check_exists("data.input", &self.data.input)?;
        check_exists("data.codes", &self.data.codes)?;
        check_exists("data.test", &self.data.test)?;
        check_exists("data.train", &self.data.train)?;
        if self.sandbox.renderer == RendererKind::Worker {
            let Some(w) = &self.sandbox.worker else {
                return Err(CliError::Config(
                    "sandbox.renderer = \"worker\" requires sandbox.worker".into(),
                ));
            };
            if w.program.components().count() > 1 && !w.program.exists() {
                return Err(CliError::Config(format!(
                    "sandbox.worker {} does not exist",
                    w.program.display()
                )));
            }
        }
        Ok(())
    }

    pub fn renderer(&self) -> CliResult<Box<dyn Renderer>> {
        match self.sandbox.renderer {
            RendererKind::Toy => Ok(Box::new(ToyRenderer)),
            RendererKind::Worker => {
                let worker = self.sandbox.worker.clone().expect("validated");
                worker_renderer(worker, self.sandbox.deny_network)
            }
        }
    }

    pub fn inspector(&self) -> CliResult<Inspector> {
        let backend: Arc<dyn InspectorBackend> = match self.inspector.backend {
            InspectorBackendKind::Mock => {
                let path = self.inspector.mock_rules.as_deref().expect("validated");
                Arc::new(MockBackend::load(path)?)
            }
            InspectorBackendKind::Http => Arc::new(chart_reward::inspector::HttpBackend::new(
                &self.inspector.client,
            )),
        };
        Ok(Inspector::new(backend, self.inspector.client.clone())?)
    }

    pub fn encoders(&self) -> CliResult<Vec<Box<dyn Encoder>>> {
        self.encoders.iter().map(|b| Ok(b.build()?)).collect()
    }

    /// The encoder used by single-encoder stages (similarity, rewards).
    pub fn primary_encoder(&self) -> CliResult<Box<dyn Encoder>> {
        Ok(self.encoders[0].build()?)
    }
}

#[cfg(unix)]
fn worker_renderer(worker: WorkerCommand, deny_network: bool) -> CliResult<Box<dyn Renderer>> {
    Ok(Box::new(
        chart_reward::sandbox::SubprocessSandbox::new(worker).deny_network(deny_network),
    ))
}

#[cfg(not(unix))]
fn worker_renderer(_: WorkerCommand, _: bool) -> CliResult<Box<dyn Renderer>> {
    Err(CliError::Config(
        "the worker renderer needs a unix host".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_a_full_config() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("rules.json"), "{}").unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(
            &cfg_path,
            r#"
seed = 11
parallelism = 2
[inspector]
backend = "mock"
mock_rules = "rules.json"
max_concurrency = 3
[[encoders]]
kind = "deterministic-stub"
[reward]
lambda = 0.5
[sandbox]
wall_clock_secs = 5
"#,
        )
        .unwrap();
        let cfg = RunConfig::load(Some(&cfg_path)).unwrap();
        assert_eq!(cfg.seed, 11);
        assert_eq!(cfg.inspector.client.max_concurrency, 3);
        assert_eq!(
            cfg.inspector.mock_rules.as_deref(),
            Some(dir.path().join("rules.json").as_path())
        );
        assert_eq!(cfg.reward.lambda, 0.5);
        assert_eq!(cfg.reward.kl_beta, 0.02);
        assert_eq!(cfg.sandbox.limits.wall_clock_secs, 5.0);
        assert!(cfg.inspector().is_ok());
    }

    #[test]
    fn missing_paths_are_config_errors() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("run.toml");
        std::fs::write(&cfg_path, "[data]\ninput = \"nope.jsonl\"\n").unwrap();
        let err = RunConfig::load(Some(&cfg_path)).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        std::fs::write(&cfg_path, "[inspector]\nbackend = \"mock\"\n").unwrap();
        assert_eq!(RunConfig::load(Some(&cfg_path)).unwrap_err().exit_code(), 2);
        std::fs::write(&cfg_path, "[reward]\nlambda = -1.0\n").unwrap();
        assert_eq!(RunConfig::load(Some(&cfg_path)).unwrap_err().exit_code(), 2);
    }
}
