//! Child processes with a wall-clock limit, an address-space limit and
//! capped output capture. Isolation is process-level only: the child runs in
//! its own session so the whole group can be killed, and can optionally be
//! moved into an empty network namespace.

use std::io::{self, Read};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use super::VerifyError;

#[derive(Debug, Clone, PartialEq)]
pub struct Limits {
    pub wall: Duration,
    pub memory_bytes: Option<u64>,
    /// Bytes kept per stream.
    pub output_bytes: usize,
    pub network: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Captured {
    pub text: String,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessOutput {
    pub exit_code: Option<i32>,
    pub signal: Option<i32>,
    pub stdout: Captured,
    pub stderr: Captured,
    pub timed_out: bool,
    /// The child was killed for writing more than the output cap.
    pub output_overflow: bool,
}

fn capture<R: Read + Send + 'static>(
    mut stream: R,
    cap: usize,
    overflow: Arc<AtomicBool>,
) -> thread::JoinHandle<Captured> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match stream.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        truncated = true;
                        overflow.store(true, Ordering::SeqCst);
                    }
                }
            }
        }
        Captured {
            text: String::from_utf8_lossy(&kept).into_owned(),
            truncated,
        }
    })
}

fn kill_group(pid: u32) {
    // SAFETY: plain syscall; a stale group id only yields ESRCH.
    unsafe {
        libc::kill(-(pid as libc::pid_t), libc::SIGKILL);
    }
}

pub fn run_limited(
    argv: &[String],
    cwd: &Path,
    limits: &Limits,
) -> Result<ProcessOutput, VerifyError> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| VerifyError::BadCommand("empty command".into()))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONIOENCODING", "utf-8");
    let memory = limits.memory_bytes;
    let network = limits.network;
    // SAFETY: the closure runs between fork and exec and only makes
    // async-signal-safe syscalls.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setsid() == -1 {
                return Err(io::Error::last_os_error());
            }
            if let Some(bytes) = memory {
                let lim = libc::rlimit {
                    rlim_cur: bytes as libc::rlim_t,
                    rlim_max: bytes as libc::rlim_t,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
            }
            let no_core = libc::rlimit {
                rlim_cur: 0,
                rlim_max: 0,
            };
            libc::setrlimit(libc::RLIMIT_CORE, &no_core);
            if !network && libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) != 0 {
                return Err(io::Error::last_os_error());
            }
            Ok(())
        });
    }
    let mut child = cmd.spawn().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => VerifyError::ToolNotFound(program.clone()),
        io::ErrorKind::PermissionDenied if network => VerifyError::ToolNotFound(program.clone()),
        _ => VerifyError::SandboxSetup(format!("{program}: {e}")),
    })?;
    let pid = child.id();
    let overflow = Arc::new(AtomicBool::new(false));
    let out = capture(
        child.stdout.take().expect("piped"),
        limits.output_bytes,
        overflow.clone(),
    );
    let err = capture(
        child.stderr.take().expect("piped"),
        limits.output_bytes,
        overflow.clone(),
    );

    let start = Instant::now();
    let mut timed_out = false;
    let mut output_overflow = false;
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break status;
        }
        if overflow.load(Ordering::SeqCst) {
            output_overflow = true;
            kill_group(pid);
            break child.wait()?;
        }
        let elapsed = start.elapsed();
        if elapsed >= limits.wall {
            timed_out = true;
            kill_group(pid);
            break child.wait()?;
        }
        thread::sleep((limits.wall - elapsed).min(Duration::from_millis(5)));
    };
    // Descendants that outlived the child would keep the pipes open.
    kill_group(pid);
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    Ok(ProcessOutput {
        exit_code: status.code(),
        signal: status.signal(),
        output_overflow: output_overflow || stdout.truncated || stderr.truncated,
        stdout,
        stderr,
        timed_out,
    })
}
