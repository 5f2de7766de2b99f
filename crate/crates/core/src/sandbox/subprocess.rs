//! Subprocess supervisor for the external plotting worker.
//!
//! The worker is invoked as
//! `<program> [args..] <script> <out.png> --dpi D --width W --height H
//! --memory-bytes M --timeout-secs T` and reports through its exit code
//! (see [`super::exit_code`]); stderr becomes the diagnostic.

use std::io::Read;
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{exit_code, ExecutionLimits, RenderOutcome, RenderStatus, Renderer, SandboxError};
use crate::image_io;

const MAX_DIAGNOSTIC_BYTES: usize = 64 * 1024;
const POLL_INTERVAL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
}

impl WorkerCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        WorkerCommand {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn arg(mut self, arg: impl Into<String>) -> Self {
        self.args.push(arg.into());
        self
    }
}

#[derive(Debug)]
pub struct SubprocessSandbox {
    worker: WorkerCommand,
    dpi: u32,
    canvas_inches: (f64, f64),
    deny_network: bool,
    extra_env: Vec<(String, String)>,
    live: AtomicUsize,
    peak: AtomicUsize,
}

impl SubprocessSandbox {
    /// Canonical render: 6.4 x 4.8 inches at 100 DPI, network denied.
    pub fn new(worker: WorkerCommand) -> Self {
        SubprocessSandbox {
            worker,
            dpi: 100,
            canvas_inches: (6.4, 4.8),
            deny_network: true,
            extra_env: Vec::new(),
            live: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        }
    }

    pub fn with_canvas(mut self, dpi: u32, width_in: f64, height_in: f64) -> Self {
        self.dpi = dpi;
        self.canvas_inches = (width_in, height_in);
        self
    }

    /// When enabled (the default) each worker is started in fresh user and
    /// network namespaces; if the kernel refuses, execution fails with
    /// [`SandboxError::Unavailable`] rather than running with network access.
    pub fn deny_network(mut self, deny: bool) -> Self {
        self.deny_network = deny;
        self
    }

    pub fn env(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.extra_env.push((key.into(), value.into()));
        self
    }

    /// Highest number of worker processes alive at once.
    pub fn peak_live(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    pub fn live(&self) -> usize {
        self.live.load(Ordering::SeqCst)
    }

    fn command(
        &self,
        script: &std::path::Path,
        output: &std::path::Path,
        home: &std::path::Path,
        limits: &ExecutionLimits,
    ) -> Command {
        let mut cmd = Command::new(&self.worker.program);
        cmd.args(&self.worker.args)
            .arg(script)
            .arg(output)
            .arg("--dpi")
            .arg(self.dpi.to_string())
            .arg("--width")
            .arg(self.canvas_inches.0.to_string())
            .arg("--height")
            .arg(self.canvas_inches.1.to_string())
            .arg("--memory-bytes")
            .arg(limits.memory_bytes.to_string())
            .arg("--timeout-secs")
            .arg(limits.wall_clock_secs.to_string())
            .env_clear()
            .env(
                "PATH",
                std::env::var("PATH").unwrap_or_else(|_| "/usr/local/bin:/usr/bin:/bin".into()),
            )
            .env("HOME", home)
            .env("LANG", "C.UTF-8")
            .env("MPLBACKEND", "Agg")
            .env("PYTHONHASHSEED", "0")
            .env("PYTHONDONTWRITEBYTECODE", "1")
            .envs(self.extra_env.iter().map(|(k, v)| (k.as_str(), v.as_str())))
            .current_dir(home)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::piped())
            .process_group(0);

        let memory = limits.memory_bytes;
        let deny_network = self.deny_network;
        // SAFETY: only async-signal-safe libc calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: memory as libc::rlim_t,
                    rlim_max: memory as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                if deny_network && libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) != 0 {
                    return Err(std::io::Error::last_os_error());
                }
                Ok(())
            });
        }
        cmd
    }
}

fn kill_group(pgid: u32) {
    // SAFETY: plain syscall; ESRCH when the group is already gone is fine.
    unsafe {
        libc::kill(-(pgid as libc::pid_t), libc::SIGKILL);
    }
}

struct LiveGuard<'a>(&'a AtomicUsize);

impl Drop for LiveGuard<'_> {
    fn drop(&mut self) {
        self.0.fetch_sub(1, Ordering::SeqCst);
    }
}

impl Renderer for SubprocessSandbox {
    fn execute(&self, code: &str, limits: &ExecutionLimits) -> Result<RenderOutcome, SandboxError> {
        let dir = tempfile::Builder::new()
            .prefix("chart-render-")
            .tempdir()
            .map_err(|e| SandboxError::Unavailable(format!("cannot create work dir: {e}")))?;
        let script = dir.path().join("script.py");
        let output = dir.path().join("figure.png");
        std::fs::write(&script, code)
            .map_err(|e| SandboxError::Unavailable(format!("cannot write script: {e}")))?;

        let start = Instant::now();
        let mut child = match self.command(&script, &output, dir.path(), limits).spawn() {
            Ok(c) => c,
            Err(e) => {
                return Err(SandboxError::Unavailable(format!(
                    "cannot start worker {}: {e}",
                    self.worker.program.display()
                )))
            }
        };
        let now = self.live.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let _live = LiveGuard(&self.live);
        let pgid = child.id();

        let mut stderr = child.stderr.take().expect("stderr piped");
        let reader = std::thread::spawn(move || {
            let mut buf = Vec::new();
            let _ = stderr
                .by_ref()
                .take(MAX_DIAGNOSTIC_BYTES as u64)
                .read_to_end(&mut buf);
            // Drain the rest so the worker never blocks on a full pipe.
            let _ = std::io::copy(&mut stderr, &mut std::io::sink());
            buf
        });

        let deadline = start + limits.wall_clock();
        let mut timed_out = false;
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break Some(status),
                Ok(None) if Instant::now() >= deadline => {
                    timed_out = true;
                    kill_group(pgid);
                    break child.wait().ok();
                }
                Ok(None) => std::thread::sleep(POLL_INTERVAL),
                Err(_) => {
                    kill_group(pgid);
                    break child.wait().ok();
                }
            }
        };
        // Reap anything the script left behind in its process group.
        kill_group(pgid);
        let duration = start.elapsed();
        let diagnostic = String::from_utf8_lossy(&reader.join().unwrap_or_default()).into_owned();

        if timed_out {
            return Ok(RenderOutcome::failure(
                RenderStatus::Timeout,
                format!(
                    "killed after exceeding wall-clock limit of {:.1}s\n{diagnostic}",
                    limits.wall_clock_secs
                ),
                duration,
            ));
        }
        let Some(status) = status else {
            return Ok(RenderOutcome::failure(
                RenderStatus::RuntimeError,
                "worker vanished",
                duration,
            ));
        };
        let outcome = match status.code() {
            Some(exit_code::SUCCESS) => match std::fs::read(&output) {
                Ok(bytes) if bytes.len() as u64 > limits.output_image_max_bytes => {
                    RenderOutcome::failure(
                        RenderStatus::ResourceKill,
                        format!(
                            "output image of {} bytes exceeds cap of {}",
                            bytes.len(),
                            limits.output_image_max_bytes
                        ),
                        duration,
                    )
                }
                Ok(bytes) => match image_io::canonical_png(&bytes) {
                    Ok(png) => RenderOutcome::success(png, duration),
                    Err(e) => RenderOutcome::failure(
                        RenderStatus::NoImage,
                        format!("output is not an image: {e}"),
                        duration,
                    ),
                },
                Err(_) => RenderOutcome::failure(
                    RenderStatus::NoImage,
                    format!("worker exited 0 without writing a figure\n{diagnostic}"),
                    duration,
                ),
            },
            Some(exit_code::SYNTAX_ERROR) => {
                RenderOutcome::failure(RenderStatus::CompileError, diagnostic, duration)
            }
            Some(exit_code::RUNTIME_ERROR) => {
                RenderOutcome::failure(RenderStatus::RuntimeError, diagnostic, duration)
            }
            Some(exit_code::NO_FIGURE) => {
                RenderOutcome::failure(RenderStatus::NoImage, diagnostic, duration)
            }
            Some(other) => RenderOutcome::failure(
                RenderStatus::RuntimeError,
                format!("worker exited with unexpected code {other}\n{diagnostic}"),
                duration,
            ),
            None => RenderOutcome::failure(
                RenderStatus::ResourceKill,
                format!(
                    "worker killed by signal {}\n{diagnostic}",
                    status.signal().unwrap_or(0)
                ),
                duration,
            ),
        };
        Ok(outcome)
    }
}
