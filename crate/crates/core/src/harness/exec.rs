//! Runner process execution with phase-aware timeouts.

use std::io::{BufRead, BufReader, Read};
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Command, ExitStatus, Stdio};
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use super::{BackendConfig, HarnessError};

pub const SENTINEL: &str = "__COMPILE_OK__";

const POLL: Duration = Duration::from_millis(5);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eager,
    Compiled,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Eager => "eager",
            Mode::Compiled => "compiled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Exit {
    Code(i32),
    Signal(i32),
    /// Killed after exceeding the limit of the phase it was in.
    TimedOut,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit: Exit,
    pub saw_sentinel: bool,
    pub stdout: String,
    pub stderr: String,
    pub elapsed: Duration,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.exit == Exit::Code(0)
    }

    pub fn describe(&self) -> String {
        match self.exit {
            Exit::Code(c) => format!("exit {c}"),
            Exit::Signal(s) => format!("signal {s}"),
            Exit::TimedOut => format!("timed out after {:.1}s", self.elapsed.as_secs_f64()),
        }
    }
}

/// Whether `pid` has exited, leaving it waitable.
fn exited_unreaped(pid: libc::pid_t) -> std::io::Result<bool> {
    // SAFETY: `info` is a plain C struct that waitid fills in.
    unsafe {
        let mut info: libc::siginfo_t = std::mem::zeroed();
        if libc::waitid(libc::P_PID, pid as libc::id_t, &mut info, libc::WEXITED | libc::WNOHANG | libc::WNOWAIT) != 0 {
            return Err(std::io::Error::last_os_error());
        }
        Ok(info.si_pid() != 0)
    }
}

fn status_exit(s: ExitStatus) -> Exit {
    use std::os::unix::process::ExitStatusExt;
    match (s.code(), s.signal()) {
        (Some(c), _) => Exit::Code(c),
        (None, Some(sig)) => Exit::Signal(sig),
        (None, None) => Exit::Code(-1),
    }
}

/// Run `<runner> --case <dir> --mode <mode> --out <out>` in its own process
/// group. Before the sentinel the compile limit applies, after it the run
/// limit; eager runs have no compile phase and get the run limit. On timeout
/// the whole group is killed.
pub fn run_runner(cfg: &BackendConfig, case_dir: &Path, mode: Mode, out: &Path) -> Result<RunOutcome, HarnessError> {
    let argv = cfg.runner_argv();
    let (prog, rest) = argv.split_first().ok_or_else(|| HarnessError::Config("empty runner command".into()))?;
    let mut cmd = Command::new(prog);
    cmd.args(rest)
        .arg("--case")
        .arg(case_dir)
        .arg("--mode")
        .arg(mode.as_str())
        .arg("--out")
        .arg(out)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    if let Some(wd) = &cfg.working_dir {
        cmd.current_dir(wd);
    }
    if let Some(allow) = &cfg.env_allowlist {
        cmd.env_clear();
        for k in allow {
            if let Ok(v) = std::env::var(k) {
                cmd.env(k, v);
            }
        }
    }
    let start = Instant::now();
    let mut child = cmd.spawn().map_err(|e| HarnessError::BackendUnavailable(format!("{prog}: {e}")))?;
    let pid = child.id() as libc::pid_t;

    let (tx, rx) = mpsc::channel::<Instant>();
    let stdout = child.stdout.take().expect("piped");
    let out_reader = thread::spawn(move || {
        let mut text = String::new();
        for line in BufReader::new(stdout).lines() {
            let Ok(line) = line else { break };
            if line.trim_end() == SENTINEL {
                let _ = tx.send(Instant::now());
            }
            text.push_str(&line);
            text.push('\n');
        }
        text
    });
    let mut stderr = child.stderr.take().expect("piped");
    let err_reader = thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = stderr.read_to_end(&mut buf);
        String::from_utf8_lossy(&buf).into_owned()
    });

    let compile_limit = Duration::from_secs_f64(cfg.compile_timeout_s);
    let run_limit = Duration::from_secs_f64(cfg.run_timeout_s);
    let mut sentinel_at: Option<Instant> = None;
    let mut timed_out = false;
    while !exited_unreaped(pid)? {
        if sentinel_at.is_none() {
            sentinel_at = rx.try_recv().ok();
        }
        let now = Instant::now();
        timed_out = match (mode, sentinel_at) {
            (Mode::Eager, _) => now - start > run_limit,
            (Mode::Compiled, None) => now - start > compile_limit,
            (Mode::Compiled, Some(t)) => now - t > run_limit,
        };
        if timed_out {
            break;
        }
        thread::sleep(POLL);
    }
    // The leader is not reaped yet, so its group id cannot have been reused.
    // Killing the group also frees pipes held open by stray descendants.
    // SAFETY: plain syscall on our own child's process group.
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let status = child.wait()?;
    let exit = if timed_out { Exit::TimedOut } else { status_exit(status) };
    let stdout = out_reader.join().unwrap_or_default();
    let stderr = err_reader.join().unwrap_or_default();
    let saw_sentinel = sentinel_at.is_some() || stdout.lines().any(|l| l.trim_end() == SENTINEL);
    Ok(RunOutcome { exit, saw_sentinel, stdout, stderr, elapsed: start.elapsed() })
}
