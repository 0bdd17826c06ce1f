//! Runs external backend commands with `{placeholder}` substitution and a
//! wall-clock timeout.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// A shell command template such as `storm --in {input} --out {speech_out}`.
///
/// Clones share one lock, so calls through the same spec run one at a time.
#[derive(Debug, Clone)]
pub struct ExternalCommand {
    pub template: String,
    pub working_dir: Option<std::path::PathBuf>,
    pub timeout: Duration,
    lock: Arc<Mutex<()>>,
}

impl PartialEq for ExternalCommand {
    fn eq(&self, other: &Self) -> bool {
        self.template == other.template && self.working_dir == other.working_dir && self.timeout == other.timeout
    }
}

/// Quotes a value for POSIX `sh`.
pub fn shell_quote(value: &str) -> String {
    format!("'{}'", value.replace('\'', r"'\''"))
}

impl ExternalCommand {
    pub fn new(template: impl Into<String>, working_dir: Option<std::path::PathBuf>, timeout: Duration) -> Self {
        Self { template: template.into(), working_dir, timeout, lock: Arc::new(Mutex::new(())) }
    }

    /// Substitutes `{key}` with the shell-quoted value for every entry.
    pub fn render(&self, values: &BTreeMap<&str, String>) -> String {
        values
            .iter()
            .fold(self.template.clone(), |cmd, (k, v)| cmd.replace(&format!("{{{k}}}"), &shell_quote(v)))
    }

    /// Runs the rendered command through `sh -c`. Returns a description of the
    /// failure on nonzero exit, spawn error or timeout.
    pub fn run(&self, values: &BTreeMap<&str, String>) -> Result<(), String> {
        let _guard = self.lock.lock().unwrap_or_else(|p| p.into_inner());
        let cmd = self.render(values);
        let mut command = Command::new("sh");
        command.arg("-c").arg(&cmd).stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::piped());
        if let Some(dir) = &self.working_dir {
            command.current_dir(dir);
        }
        let mut child = command.spawn().map_err(|e| format!("failed to spawn `{cmd}`: {e}"))?;
        let start = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) if status.success() => return Ok(()),
                Ok(Some(status)) => {
                    let mut stderr = String::new();
                    if let Some(mut err) = child.stderr.take() {
                        use std::io::Read;
                        let _ = err.read_to_string(&mut stderr);
                    }
                    return Err(format!("`{cmd}` exited with {status}: {}", stderr.trim()));
                }
                Ok(None) if start.elapsed() >= self.timeout => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(format!("`{cmd}` timed out after {:?}", self.timeout));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(format!("waiting on `{cmd}` failed: {e}")),
            }
        }
    }
}

pub(crate) fn path_string(p: &Path) -> String {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf()).display().to_string()
}
