//! Persistent sandboxed runner process speaking the line-delimited wire format.
//!
//! The child runs in a private temporary directory with a scrubbed environment,
//! resource limits and (where the kernel allows it) fresh user and network
//! namespaces. Each call has a wall-clock limit; on expiry the whole process
//! group is killed and the next call starts a fresh runner.

use std::collections::BTreeMap;
use std::ffi::CString;
use std::io::{BufRead, BufReader, Read, Write};
use std::os::unix::fs::PermissionsExt;
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use super::wire::{parse_response, Prediction, RunnerRequest, Scenario};
use super::{LawEvaluator, LawPackage, RunnerError};

#[derive(Debug, Clone, PartialEq)]
pub struct RunnerLimits {
    pub call_timeout: Duration,
    pub cpu_seconds: u64,
    pub max_file_bytes: u64,
    pub max_reply_bytes: usize,
    pub isolate_network: bool,
}

impl Default for RunnerLimits {
    fn default() -> Self {
        Self {
            call_timeout: Duration::from_secs(30),
            cpu_seconds: 600,
            max_file_bytes: 64 << 20,
            max_reply_bytes: 64 << 20,
            isolate_network: true,
        }
    }
}

struct Live {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    stderr_tail: Arc<Mutex<Vec<u8>>>,
}

pub struct ProcessRunner {
    package: LawPackage,
    limits: RunnerLimits,
    dir: tempfile::TempDir,
    live: Option<Live>,
    spawn_count: usize,
}

const STDERR_TAIL: usize = 4096;

/// Values the forked child needs, prepared before `fork` so the pre-exec hook
/// performs no allocation.
struct SandboxPlan {
    cpu_seconds: u64,
    max_file_bytes: u64,
    isolate_network: bool,
    /// Root keeps its file-access override only outside a new user namespace.
    privileged: bool,
    uid_map: CString,
    gid_map: CString,
}

fn write_proc_file(path: &[u8], contents: &[u8]) {
    // SAFETY: `path` is NUL-terminated and `contents` is a valid buffer.
    unsafe {
        let fd = libc::open(path.as_ptr().cast(), libc::O_WRONLY);
        if fd >= 0 {
            libc::write(fd, contents.as_ptr().cast(), contents.len());
            libc::close(fd);
        }
    }
}

fn apply_sandbox(plan: &SandboxPlan) {
    let limit = |resource, value: u64| {
        let lim = libc::rlimit {
            rlim_cur: value as libc::rlim_t,
            rlim_max: value as libc::rlim_t,
        };
        // SAFETY: plain syscall with a stack value.
        unsafe { libc::setrlimit(resource, &lim) };
    };
    limit(libc::RLIMIT_CPU, plan.cpu_seconds);
    limit(libc::RLIMIT_FSIZE, plan.max_file_bytes);
    limit(libc::RLIMIT_CORE, 0);
    // SAFETY: puts the child in its own process group so timeouts kill descendants too.
    unsafe { libc::setpgid(0, 0) };
    if plan.isolate_network && plan.privileged {
        // SAFETY: unshare only affects the calling (forked, single-threaded) child.
        unsafe { libc::unshare(libc::CLONE_NEWNET) };
    } else if plan.isolate_network {
        // SAFETY: as above.
        let joined = unsafe { libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNET) } == 0;
        if joined {
            write_proc_file(b"/proc/self/setgroups\0", b"deny");
            write_proc_file(b"/proc/self/uid_map\0", plan.uid_map.as_bytes());
            write_proc_file(b"/proc/self/gid_map\0", plan.gid_map.as_bytes());
        } else {
            // Privileged fallback; failure leaves the network untouched.
            unsafe { libc::unshare(libc::CLONE_NEWNET) };
        }
    }
}

impl ProcessRunner {
    pub fn new(package: LawPackage, limits: RunnerLimits) -> Result<Self, RunnerError> {
        let dir = tempfile::Builder::new()
            .prefix("lawforge-runner-")
            .tempdir()
            .map_err(|e| RunnerError::Spawn(format!("cannot create sandbox directory: {e}")))?;
        // Readable by an unmapped namespace user in case the id maps cannot be written.
        std::fs::set_permissions(dir.path(), std::fs::Permissions::from_mode(0o755))
            .map_err(|e| RunnerError::Spawn(e.to_string()))?;
        for (name, contents) in &package.files {
            let path = dir.path().join(name);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| RunnerError::Spawn(e.to_string()))?;
            }
            std::fs::write(&path, contents).map_err(|e| RunnerError::Spawn(e.to_string()))?;
            std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755))
                .map_err(|e| RunnerError::Spawn(e.to_string()))?;
        }
        if package.command.is_empty() {
            return Err(RunnerError::Spawn("empty command".into()));
        }
        Ok(Self {
            package,
            limits,
            dir,
            live: None,
            spawn_count: 0,
        })
    }

    /// Number of runner processes started so far (restarts after crashes or timeouts count).
    pub fn spawn_count(&self) -> usize {
        self.spawn_count
    }

    fn program(&self) -> PathBuf {
        let first = &self.package.command[0];
        let local = self.dir.path().join(first);
        if self.package.files.contains_key(first) || (first.contains('/') && !first.starts_with('/')) {
            local
        } else {
            PathBuf::from(first)
        }
    }

    fn spawn(&mut self) -> Result<(), RunnerError> {
        // SAFETY: getuid/getgid cannot fail.
        let (uid, gid) = unsafe { (libc::getuid(), libc::getgid()) };
        let plan = SandboxPlan {
            cpu_seconds: self.limits.cpu_seconds,
            max_file_bytes: self.limits.max_file_bytes,
            isolate_network: self.limits.isolate_network,
            privileged: uid == 0,
            uid_map: CString::new(format!("{uid} {uid} 1\n")).expect("no NUL"),
            gid_map: CString::new(format!("{gid} {gid} 1\n")).expect("no NUL"),
        };
        let mut cmd = Command::new(self.program());
        cmd.args(&self.package.command[1..])
            .current_dir(self.dir.path())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()))
            .env("HOME", self.dir.path())
            .env("TMPDIR", self.dir.path())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // SAFETY: the hook only issues async-signal-safe syscalls on pre-built data.
        unsafe {
            cmd.pre_exec(move || {
                apply_sandbox(&plan);
                Ok(())
            });
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| RunnerError::Spawn(format!("{}: {e}", self.package.command[0])))?;
        self.spawn_count += 1;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr = child.stderr.take().expect("piped stderr");

        let (tx, rx) = mpsc::channel();
        let max = self.limits.max_reply_bytes as u64;
        thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.by_ref().take(max + 1).read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });
        let tail = Arc::new(Mutex::new(Vec::new()));
        let sink = Arc::clone(&tail);
        thread::spawn(move || {
            let mut stderr = stderr;
            let mut buf = [0u8; 1024];
            while let Ok(n) = stderr.read(&mut buf) {
                if n == 0 {
                    break;
                }
                let mut t = sink.lock().expect("stderr buffer");
                t.extend_from_slice(&buf[..n]);
                let excess = t.len().saturating_sub(STDERR_TAIL);
                t.drain(..excess);
            }
        });
        self.live = Some(Live {
            child,
            stdin,
            lines: rx,
            stderr_tail: tail,
        });
        Ok(())
    }

    fn kill(&mut self) {
        if let Some(mut live) = self.live.take() {
            let pid = live.child.id() as libc::pid_t;
            // SAFETY: signals the runner's own process group.
            unsafe { libc::kill(-pid, libc::SIGKILL) };
            let _ = live.child.kill();
            let _ = live.child.wait();
        }
    }

    fn crash_message(&mut self, context: &str) -> String {
        let mut msg = context.to_string();
        if let Some(mut live) = self.live.take() {
            thread::sleep(Duration::from_millis(20));
            let status = live.child.try_wait().ok().flatten();
            if status.is_none() {
                let _ = live.child.kill();
            }
            let status = status.or_else(|| live.child.wait().ok());
            if let Some(status) = status {
                msg.push_str(&format!(" ({status})"));
            }
            let tail = live.stderr_tail.lock().map(|t| t.clone()).unwrap_or_default();
            let tail = String::from_utf8_lossy(&tail);
            let tail = tail.trim();
            if !tail.is_empty() {
                msg.push_str(&format!("; stderr: {tail}"));
            }
        }
        msg
    }

    /// Sends one raw request line and returns the raw reply line.
    pub fn call_raw(&mut self, line: &str) -> Result<String, RunnerError> {
        if self.live.is_none() {
            self.spawn()?;
        }
        let live = self.live.as_mut().expect("spawned");
        if let Err(e) = live.stdin.write_all(line.as_bytes()).and_then(|_| live.stdin.flush()) {
            let msg = self.crash_message(&format!("cannot write request: {e}"));
            return Err(RunnerError::Crash(msg));
        }
        let live = self.live.as_mut().expect("spawned");
        match live.lines.recv_timeout(self.limits.call_timeout) {
            Ok(Ok(reply)) => {
                if reply.len() as u64 > self.limits.max_reply_bytes as u64 {
                    self.kill();
                    return Err(RunnerError::Malformed("reply exceeds size limit".into()));
                }
                Ok(reply)
            }
            Ok(Err(e)) => {
                let msg = self.crash_message(&format!("read failed: {e}"));
                Err(RunnerError::Crash(msg))
            }
            Err(RecvTimeoutError::Timeout) => {
                self.kill();
                Err(RunnerError::Timeout(self.limits.call_timeout.as_secs_f64()))
            }
            Err(RecvTimeoutError::Disconnected) => {
                let msg = self.crash_message("runner exited before replying");
                Err(RunnerError::Crash(msg))
            }
        }
    }
}

impl LawEvaluator for ProcessRunner {
    fn evaluate(
        &mut self,
        scenario: &Scenario,
        params: &BTreeMap<String, f64>,
    ) -> Result<Prediction, RunnerError> {
        let request = RunnerRequest::new(scenario.clone(), params.clone());
        let reply = self.call_raw(&request.to_line())?;
        parse_response(reply.trim_end(), scenario)
    }
}

impl Drop for ProcessRunner {
    fn drop(&mut self) {
        self.kill();
    }
}
