//! Rendering of candidate plotting scripts.
//!
//! [`Renderer`] is the seam between reward computation and script execution.
//! [`SubprocessSandbox`] supervises an external worker process per script;
//! [`ToyRenderer`] is an in-process stand-in that renders a tiny chart
//! language and is used wherever the plotting runtime is unavailable.

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::limiter::bounded_map;

#[cfg(all(feature = "process", unix))]
mod subprocess;
mod toy;

#[cfg(all(feature = "process", unix))]
pub use subprocess::{SubprocessSandbox, WorkerCommand};
pub use toy::{ToyRenderer, TOY_CANVAS};

/// Worker exit codes of the supervisor protocol.
pub mod exit_code {
    pub const SUCCESS: i32 = 0;
    pub const SYNTAX_ERROR: i32 = 10;
    pub const RUNTIME_ERROR: i32 = 11;
    pub const NO_FIGURE: i32 = 12;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    pub wall_clock_secs: f64,
    pub memory_bytes: u64,
    pub output_image_max_bytes: u64,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits {
            wall_clock_secs: 30.0,
            memory_bytes: 2 << 30,
            output_image_max_bytes: 16 << 20,
        }
    }
}

impl ExecutionLimits {
    pub fn validate(&self) -> Result<(), SandboxError> {
        if !(self.wall_clock_secs.is_finite() && self.wall_clock_secs > 0.0) {
            return Err(SandboxError::InvalidLimits("wall_clock must be > 0".into()));
        }
        if self.memory_bytes == 0 || self.output_image_max_bytes == 0 {
            return Err(SandboxError::InvalidLimits("byte caps must be > 0".into()));
        }
        Ok(())
    }

    pub fn wall_clock(&self) -> Duration {
        Duration::from_secs_f64(self.wall_clock_secs)
    }

    pub fn with_wall_clock(mut self, secs: f64) -> Self {
        self.wall_clock_secs = secs;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStatus {
    Success,
    CompileError,
    RuntimeError,
    Timeout,
    ResourceKill,
    NoImage,
}

impl fmt::Display for RenderStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderStatus::Success => "success",
            RenderStatus::CompileError => "compile_error",
            RenderStatus::RuntimeError => "runtime_error",
            RenderStatus::Timeout => "timeout",
            RenderStatus::ResourceKill => "resource_kill",
            RenderStatus::NoImage => "no_image",
        })
    }
}

/// Result of executing one script. `image` is present iff `status` is
/// `Success`, and then decodes as PNG.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutcome {
    pub status: RenderStatus,
    pub image: Option<Vec<u8>>,
    pub diagnostic: String,
    pub duration: Duration,
}

impl RenderOutcome {
    pub fn success(image: Vec<u8>, duration: Duration) -> Self {
        RenderOutcome {
            status: RenderStatus::Success,
            image: Some(image),
            diagnostic: String::new(),
            duration,
        }
    }

    /// A failed outcome; an empty diagnostic is replaced by the status name.
    pub fn failure(
        status: RenderStatus,
        diagnostic: impl Into<String>,
        duration: Duration,
    ) -> Self {
        debug_assert_ne!(status, RenderStatus::Success);
        let mut diagnostic = diagnostic.into();
        if diagnostic.trim().is_empty() {
            diagnostic = format!("script failed with status {status}");
        }
        RenderOutcome {
            status,
            image: None,
            diagnostic,
            duration,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == RenderStatus::Success
    }
}

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("sandbox worker unavailable: {0}")]
    Unavailable(String),
    #[error("invalid execution limits: {0}")]
    InvalidLimits(String),
    #[error("parallelism must be >= 1")]
    InvalidParallelism,
}

pub trait Renderer: Send + Sync {
    /// Executes one script. Script failures are reported in the outcome;
    /// errors are reserved for environment faults.
    fn execute(&self, code: &str, limits: &ExecutionLimits) -> Result<RenderOutcome, SandboxError>;
}

impl<T: Renderer + ?Sized> Renderer for std::sync::Arc<T> {
    fn execute(&self, code: &str, limits: &ExecutionLimits) -> Result<RenderOutcome, SandboxError> {
        (**self).execute(code, limits)
    }
}

pub fn execute_script(
    renderer: &dyn Renderer,
    code: &str,
    limits: &ExecutionLimits,
) -> Result<RenderOutcome, SandboxError> {
    limits.validate()?;
    renderer.execute(code, limits)
}

/// Executes every script with at most `parallelism` running at once.
/// Outcome `i` belongs to `codes[i]`.
pub fn batch_execute<S: AsRef<str> + Sync>(
    renderer: &dyn Renderer,
    codes: &[S],
    limits: &ExecutionLimits,
    parallelism: usize,
) -> Result<Vec<RenderOutcome>, SandboxError> {
    if parallelism < 1 {
        return Err(SandboxError::InvalidParallelism);
    }
    limits.validate()?;
    bounded_map(codes, parallelism, |_, code| {
        renderer.execute(code.as_ref(), limits)
    })
    .into_iter()
    .collect()
}

/// Returns the body of the first fenced code block, or the whole text
/// trimmed when there is none.
pub fn extract_code_block(model_output: &str) -> String {
    let mut lines = model_output.lines();
    while let Some(line) = lines.next() {
        if line.trim_start().starts_with("```") {
            let body: Vec<&str> = lines
                .by_ref()
                .take_while(|l| !l.trim_start().starts_with("```"))
                .collect();
            return body.join("\n").trim().to_string();
        }
    }
    model_output.trim().to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fence_stripping() {
        assert_eq!(extract_code_block("```\nplot(x)\n```"), "plot(x)");
        assert_eq!(
            extract_code_block("Here:\n```python\nimport a\nplot(x)\n```\nDone"),
            "import a\nplot(x)"
        );
    }

    #[test]
    fn first_block_only() {
        let text = "```\nfirst()\n```\nand\n```\nsecond()\n```";
        assert_eq!(extract_code_block(text), "first()");
    }

    #[test]
    fn bare_script_is_returned_trimmed() {
        assert_eq!(
            extract_code_block("\n  plot(x)\nshow()  \n"),
            "plot(x)\nshow()"
        );
    }

    #[test]
    fn unterminated_fence_takes_the_rest() {
        assert_eq!(extract_code_block("```py\nplot(x)\n"), "plot(x)");
    }

    #[test]
    fn limits_validation() {
        assert!(ExecutionLimits::default().validate().is_ok());
        assert!(ExecutionLimits::default()
            .with_wall_clock(0.0)
            .validate()
            .is_err());
        let zero_mem = ExecutionLimits {
            memory_bytes: 0,
            ..Default::default()
        };
        assert!(zero_mem.validate().is_err());
    }

    #[test]
    fn failure_diagnostic_never_empty() {
        let o = RenderOutcome::failure(RenderStatus::NoImage, "", Duration::ZERO);
        assert!(!o.diagnostic.is_empty());
        assert!(o.image.is_none());
    }
}
