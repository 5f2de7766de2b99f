use chart_reward::contamination::ContaminationError;
use chart_reward::curation::CurationError;
use chart_reward::embedding::EmbeddingError;
use chart_reward::eval::EvalError;
use chart_reward::inspector::InspectorError;
use chart_reward::reward::RewardError;
use chart_reward::sandbox::SandboxError;
use chart_reward::shard::ShardError;
use chart_reward::toy_rl::ToyRlError;
use serde_json::json;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Every failure maps to exactly one exit code:
/// 2 configuration, 3 input data, 4 runtime dependency (sandbox, Inspector,
/// encoder service, filesystem).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Data(_) => "data",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// One-line JSON for stderr.
    pub fn to_json(&self) -> String {
        json!({"error": {"kind": self.kind(), "exit_code": self.exit_code(), "message": self.to_string()}}).to_string()
    }

    pub fn io(path: &std::path::Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

pub type CliResult<T> = Result<T, CliError>;

impl From<ShardError> for CliError {
    fn from(e: ShardError) -> Self {
        match e {
            ShardError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SandboxError> for CliError {
    fn from(e: SandboxError) -> Self {
        match e {
            SandboxError::Unavailable(_) => CliError::Runtime(e.to_string()),
            SandboxError::InvalidLimits(_) | SandboxError::InvalidParallelism => {
                CliError::Config(e.to_string())
            }
        }
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        match e {
            EmbeddingError::Unavailable(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<InspectorError> for CliError {
    fn from(e: InspectorError) -> Self {
        match e {
            InspectorError::InvalidConfig(_) => CliError::Config(e.to_string()),
            InspectorError::Unavailable { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<RewardError> for CliError {
    fn from(e: RewardError) -> Self {
        match e {
            RewardError::Sandbox(e) => e.into(),
            RewardError::Inspector(e) => e.into(),
            RewardError::Embedding(e) => e.into(),
            RewardError::InvalidConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CurationError> for CliError {
    fn from(e: CurationError) -> Self {
        match e {
            CurationError::Sandbox(e) => e.into(),
            CurationError::Embedding(e) => e.into(),
            CurationError::InvalidArgument(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<ContaminationError> for CliError {
    fn from(e: ContaminationError) -> Self {
        match e {
            ContaminationError::Embedding(e) => e.into(),
            ContaminationError::InvalidArgument(_) => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ToyRlError> for CliError {
    fn from(e: ToyRlError) -> Self {
        match e {
            ToyRlError::Reward(e) => e.into(),
            ToyRlError::InvalidConfig(_) | ToyRlError::InvalidPolicy(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}
