//! Worker protocol tests against a fake worker written in POSIX sh.
#![cfg(all(unix, feature = "process"))]

use std::os::unix::fs::PermissionsExt;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use chart_reward::image_io::{decode, solid_png};
use chart_reward::sandbox::{
    batch_execute, execute_script, ExecutionLimits, RenderStatus, SandboxError, SubprocessSandbox,
    WorkerCommand,
};

const FAKE_WORKER: &str = r#"#!/bin/sh
script="$1"
out="$2"
if [ -n "$ARGS_FILE" ]; then printf '%s\n' "$@" > "$ARGS_FILE"; fi
mode=$(head -n 1 "$script")
case "$mode" in
  ok) cp "$FIXTURE_PNG" "$out"; exit 0 ;;
  syntax) echo "SyntaxError: invalid syntax" >&2; exit 10 ;;
  runtime) echo "ZeroDivisionError: division by zero" >&2; exit 11 ;;
  nofig) echo "script produced no figure" >&2; exit 12 ;;
  garbage) echo "definitely not a png" > "$out"; exit 0 ;;
  silent) exit 0 ;;
  hang) sleep 30; exit 0 ;;
  orphan) sleep 60 & echo $! > "$PID_FILE"; cp "$FIXTURE_PNG" "$out"; exit 0 ;;
  signal) kill -9 $$ ;;
  env) env > "$out.env"; cp "$out.env" "$ENV_FILE"; cp "$FIXTURE_PNG" "$out"; exit 0 ;;
  netcheck) cat /proc/net/dev > "$NET_FILE"; cp "$FIXTURE_PNG" "$out"; exit 0 ;;
  sleepok) sleep 0.3; cp "$FIXTURE_PNG" "$out"; exit 0 ;;
  *) exit 99 ;;
esac
"#;

struct Fixture {
    dir: tempfile::TempDir,
    png: Vec<u8>,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let worker = dir.path().join("worker.sh");
        std::fs::write(&worker, FAKE_WORKER).unwrap();
        std::fs::set_permissions(&worker, std::fs::Permissions::from_mode(0o755)).unwrap();
        let png = solid_png(20, 10, [200, 30, 30]);
        std::fs::write(dir.path().join("fixture.png"), &png).unwrap();
        Fixture { dir, png }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn sandbox(&self) -> SubprocessSandbox {
        SubprocessSandbox::new(WorkerCommand::new(self.path("worker.sh")))
            .deny_network(false)
            .env("FIXTURE_PNG", self.path("fixture.png").to_string_lossy())
    }
}

fn limits() -> ExecutionLimits {
    ExecutionLimits::default().with_wall_clock(10.0)
}

fn process_state(pid: u32) -> Option<char> {
    let stat = std::fs::read_to_string(format!("/proc/{pid}/stat")).ok()?;
    // Field 3, after the parenthesised command name.
    stat.rsplit_once(')')?.1.trim_start().chars().next()
}

fn wait_gone(pid: u32, within: Duration) -> bool {
    let deadline = Instant::now() + within;
    loop {
        match process_state(pid) {
            None | Some('Z') | Some('X') => return true,
            _ if Instant::now() > deadline => return false,
            _ => std::thread::sleep(Duration::from_millis(10)),
        }
    }
}

#[test]
fn success_copies_and_canonicalizes_the_png() {
    let fx = Fixture::new();
    let out = execute_script(&fx.sandbox(), "ok\n", &limits()).unwrap();
    assert_eq!(out.status, RenderStatus::Success);
    let img = decode(out.image.as_ref().unwrap()).unwrap();
    assert_eq!((img.width(), img.height()), (20, 10));
    let original = decode(&fx.png).unwrap();
    assert_eq!(img.to_rgba8(), original.to_rgba8());
}

#[test]
fn exit_codes_map_to_statuses() {
    let fx = Fixture::new();
    let sb = fx.sandbox();
    let cases = [
        ("syntax", RenderStatus::CompileError, "SyntaxError"),
        ("runtime", RenderStatus::RuntimeError, "ZeroDivisionError"),
        ("nofig", RenderStatus::NoImage, "no figure"),
        ("garbage", RenderStatus::NoImage, "not an image"),
        ("silent", RenderStatus::NoImage, "without writing a figure"),
        ("signal", RenderStatus::ResourceKill, "signal 9"),
        (
            "unknown-mode",
            RenderStatus::RuntimeError,
            "unexpected code 99",
        ),
    ];
    for (mode, status, needle) in cases {
        let out = execute_script(&sb, mode, &limits()).unwrap();
        assert_eq!(out.status, status, "mode {mode}");
        assert!(out.image.is_none(), "mode {mode}");
        assert!(
            out.diagnostic.contains(needle),
            "mode {mode}: {:?}",
            out.diagnostic
        );
    }
}

#[test]
fn worker_receives_the_canonical_argument_list() {
    let fx = Fixture::new();
    let args_file = fx.path("args.txt");
    let sb = SubprocessSandbox::new(WorkerCommand::new(fx.path("worker.sh")))
        .deny_network(false)
        .env("FIXTURE_PNG", fx.path("fixture.png").to_string_lossy())
        .env("ARGS_FILE", args_file.to_string_lossy());
    let lim = ExecutionLimits {
        wall_clock_secs: 7.5,
        memory_bytes: 1 << 30,
        output_image_max_bytes: 1 << 20,
    };
    assert!(execute_script(&sb, "ok", &lim).unwrap().is_success());
    let args: Vec<String> = std::fs::read_to_string(&args_file)
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    assert_eq!(args.len(), 12);
    assert!(args[0].ends_with("script.py"));
    assert!(args[1].ends_with("figure.png"));
    assert_eq!(
        &args[2..],
        [
            "--dpi",
            "100",
            "--width",
            "6.4",
            "--height",
            "4.8",
            "--memory-bytes",
            "1073741824",
            "--timeout-secs",
            "7.5"
        ]
    );
}

#[test]
fn environment_is_scrubbed() {
    let fx = Fixture::new();
    let env_file = fx.path("env.txt");
    std::env::set_var("CHART_REWARD_LEAK_CHECK", "secret");
    let sb = fx.sandbox().env("ENV_FILE", env_file.to_string_lossy());
    assert!(execute_script(&sb, "env", &limits()).unwrap().is_success());
    let env = std::fs::read_to_string(&env_file).unwrap();
    assert!(!env.contains("CHART_REWARD_LEAK_CHECK"));
    assert!(env.contains("MPLBACKEND=Agg"));
}

#[test]
fn timeout_kills_the_worker_promptly() {
    let fx = Fixture::new();
    let start = Instant::now();
    let out = execute_script(
        &fx.sandbox(),
        "hang",
        &ExecutionLimits::default().with_wall_clock(0.5),
    )
    .unwrap();
    assert_eq!(out.status, RenderStatus::Timeout);
    assert!(out.diagnostic.contains("wall-clock"));
    assert!(
        start.elapsed() < Duration::from_secs(5),
        "took {:?}",
        start.elapsed()
    );
}

#[test]
fn no_orphans_survive_a_finished_render() {
    let fx = Fixture::new();
    let pid_file = fx.path("orphan.pid");
    let sb = fx.sandbox().env("PID_FILE", pid_file.to_string_lossy());
    let out = execute_script(&sb, "orphan", &limits()).unwrap();
    assert!(out.is_success());
    let pid: u32 = std::fs::read_to_string(&pid_file)
        .unwrap()
        .trim()
        .parse()
        .unwrap();
    assert!(
        wait_gone(pid, Duration::from_secs(2)),
        "background child {pid} still running"
    );
}

#[test]
fn oversized_output_is_rejected() {
    let fx = Fixture::new();
    let lim = ExecutionLimits {
        output_image_max_bytes: 10,
        ..limits()
    };
    let out = execute_script(&fx.sandbox(), "ok", &lim).unwrap();
    assert_eq!(out.status, RenderStatus::ResourceKill);
}

#[test]
fn missing_worker_is_an_environment_error() {
    let sb = SubprocessSandbox::new(WorkerCommand::new("/nonexistent/worker")).deny_network(false);
    assert!(matches!(
        execute_script(&sb, "ok", &limits()),
        Err(SandboxError::Unavailable(_))
    ));
}

#[test]
fn batch_respects_the_concurrency_bound() {
    let fx = Fixture::new();
    let sb = fx.sandbox();
    let codes = vec!["sleepok"; 6];
    let outs = batch_execute(&sb, &codes, &limits(), 2).unwrap();
    assert!(outs.iter().all(|o| o.is_success()));
    assert!(
        sb.peak_live() <= 2 && sb.peak_live() >= 1,
        "peak {}",
        sb.peak_live()
    );
    assert_eq!(sb.live(), 0);
}

fn interfaces(dev: &Path) -> Vec<String> {
    std::fs::read_to_string(dev)
        .unwrap()
        .lines()
        .skip(2)
        .filter_map(|l| l.split(':').next().map(|s| s.trim().to_string()))
        .collect()
}

#[test]
fn network_denial_isolates_or_refuses() {
    let fx = Fixture::new();
    let net_file = fx.path("net.txt");
    let sb = SubprocessSandbox::new(WorkerCommand::new(fx.path("worker.sh")))
        .env("FIXTURE_PNG", fx.path("fixture.png").to_string_lossy())
        .env("NET_FILE", net_file.to_string_lossy());
    match execute_script(&sb, "netcheck", &limits()) {
        // Namespaces available: only loopback is visible.
        Ok(out) => {
            assert!(out.is_success(), "{}", out.diagnostic);
            assert_eq!(interfaces(&net_file), ["lo"]);
        }
        // Kernel refused the namespace: the script never ran.
        Err(SandboxError::Unavailable(_)) => assert!(!net_file.exists()),
        Err(e) => panic!("unexpected error {e}"),
    }
}
