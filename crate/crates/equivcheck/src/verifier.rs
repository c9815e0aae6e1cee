//! Dafny verifier orchestration: subprocess invocation, output
//! normalization, content-addressed result caching, and batch fan-out.
//!
//! Output parsing keys on two patterns of the pinned toolchain:
//!
//! * diagnostics: `file(line,col): Severity: message`
//! * summary: `Dafny program verifier finished with N verified, M errors`
//!
//! Absence of the summary line means verification never ran; the counts of
//! `... parse errors detected` / `... resolution/type errors detected`
//! classify those runs. Anything unrecognized maps to `ToolError`, never to
//! `Verified`.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::parallel;

/// Extra wall-clock slack we grant the tool beyond its own time limit
/// before killing the process.
const KILL_GRACE: Duration = Duration::from_secs(15);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyStatus {
    Verified,
    VerificationFailed,
    ParseError,
    ResolveError,
    Timeout,
    ToolError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
    Info,
    Related,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Diagnostic {
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub severity: Severity,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VerifierReport {
    pub status: VerifyStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub wall_time: f64,
    pub tool_version: String,
    pub content_hash: String,
}

impl VerifierReport {
    pub fn is_verified(&self) -> bool {
        self.status == VerifyStatus::Verified
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct VerifyLimits {
    /// Per-file verification time limit in seconds.
    pub time_limit: u64,
    pub memory_limit_mb: Option<u64>,
    pub cores_per_job: u32,
}

impl Default for VerifyLimits {
    fn default() -> Self {
        VerifyLimits {
            time_limit: 60,
            memory_limit_mb: None,
            cores_per_job: 1,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum VerifierSetupError {
    #[error(
        "dafny executable not found; install Dafny and set EQUIVCHECK_DAFNY \
         or put `dafny` on PATH"
    )]
    ExecutableMissing,
    #[error("`{exe}` did not respond to --version: {reason}")]
    VersionProbeFailed { exe: String, reason: String },
}

/// Environment variable overriding the Dafny executable path.
pub const DAFNY_ENV: &str = "EQUIVCHECK_DAFNY";

/// Handle to a probed Dafny installation.
pub struct DafnyRunner {
    exe: PathBuf,
    /// Argument template; `{file}` and `{limit}` are substituted per run.
    arg_template: Vec<String>,
    tool_version: String,
    spawn_count: AtomicU64,
}

impl std::fmt::Debug for DafnyRunner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DafnyRunner")
            .field("exe", &self.exe)
            .field("tool_version", &self.tool_version)
            .finish()
    }
}

pub fn default_arg_template() -> Vec<String> {
    vec![
        "verify".to_string(),
        "{file}".to_string(),
        "--verification-time-limit".to_string(),
        "{limit}".to_string(),
    ]
}

impl DafnyRunner {
    /// Probe `exe --version` and build a runner. `exe` defaults to the
    /// `EQUIVCHECK_DAFNY` env var, then `dafny` on PATH.
    pub fn discover(exe: Option<&Path>) -> Result<Self, VerifierSetupError> {
        let exe: PathBuf = match exe {
            Some(p) => p.to_path_buf(),
            None => match std::env::var_os(DAFNY_ENV) {
                Some(v) => PathBuf::from(v),
                None => PathBuf::from("dafny"),
            },
        };
        let output = Command::new(&exe)
            .arg("--version")
            .stdin(Stdio::null())
            .output()
            .map_err(|_| VerifierSetupError::ExecutableMissing)?;
        if !output.status.success() && output.stdout.is_empty() {
            return Err(VerifierSetupError::VersionProbeFailed {
                exe: exe.display().to_string(),
                reason: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let tool_version = String::from_utf8_lossy(&output.stdout)
            .lines()
            .next()
            .unwrap_or("unknown")
            .trim()
            .to_string();
        Ok(DafnyRunner {
            exe,
            arg_template: default_arg_template(),
            tool_version,
        spawn_count: AtomicU64::new(0),
        })
    }

    pub fn with_arg_template(mut self, template: Vec<String>) -> Self {
        self.arg_template = template;
        self
    }

    pub fn tool_version(&self) -> &str {
        &self.tool_version
    }

    /// Number of verifier subprocesses spawned through this handle.
    pub fn spawn_count(&self) -> u64 {
        self.spawn_count.load(Ordering::SeqCst)
    }

    /// Verify one source text. Infrastructure failures surface as
    /// `ToolError` reports rather than panics or Err.
    pub fn verify(&self, source: &str, limits: &VerifyLimits) -> VerifierReport {
        let content_hash = hex_sha256(source.as_bytes());
        let start = Instant::now();
        let result = self.run_once(source, limits);
        let wall_time = start.elapsed().as_secs_f64();
        match result {
            Ok(RunOutcome::Finished { stdout, stderr }) => {
                let mut report = parse_output(&stdout, &stderr);
                report.wall_time = wall_time;
                report.tool_version = self.tool_version.clone();
                report.content_hash = content_hash;
                report
            }
            Ok(RunOutcome::KilledOnDeadline) => VerifierReport {
                status: VerifyStatus::Timeout,
                diagnostics: vec![Diagnostic {
                    file: String::new(),
                    line: 0,
                    column: 0,
                    severity: Severity::Error,
                    message: format!(
                        "verifier exceeded the {}s limit and was killed",
                        limits.time_limit
                    ),
                }],
                wall_time,
                tool_version: self.tool_version.clone(),
                content_hash,
            },
            Err(msg) => VerifierReport {
                status: VerifyStatus::ToolError,
                diagnostics: vec![Diagnostic {
                    file: String::new(),
                    line: 0,
                    column: 0,
                    severity: Severity::Error,
                    message: msg,
                }],
                wall_time,
                tool_version: self.tool_version.clone(),
                content_hash,
            },
        }
    }

    fn run_once(&self, source: &str, limits: &VerifyLimits) -> Result<RunOutcome, String> {
        let dir = tempfile::tempdir().map_err(|e| format!("temp dir: {e}"))?;
        let file = dir.path().join("input.dfy");
        std::fs::write(&file, source).map_err(|e| format!("write temp file: {e}"))?;

        let args: Vec<String> = self
            .arg_template
            .iter()
            .map(|a| {
                a.replace("{file}", &file.display().to_string())
                    .replace("{limit}", &limits.time_limit.to_string())
            })
            .collect();

        self.spawn_count.fetch_add(1, Ordering::SeqCst);
        let mut cmd = Command::new(&self.exe);
        cmd.args(&args)
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        // Own process group so a deadline kill also reaps grandchildren
        // (otherwise they keep the output pipes open and we block).
        #[cfg(unix)]
        {
            use std::os::unix::process::CommandExt;
            cmd.process_group(0);
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| format!("spawn {}: {e}", self.exe.display()))?;

        // Drain pipes on threads so a chatty tool cannot deadlock us.
        let mut stdout_pipe = child.stdout.take().expect("piped");
        let mut stderr_pipe = child.stderr.take().expect("piped");
        let out_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stdout_pipe.read_to_string(&mut buf);
            buf
        });
        let err_thread = std::thread::spawn(move || {
            let mut buf = String::new();
            let _ = stderr_pipe.read_to_string(&mut buf);
            buf
        });

        let deadline = Instant::now() + Duration::from_secs(limits.time_limit) + KILL_GRACE;
        let killed = loop {
            match child.try_wait() {
                Ok(Some(_)) => break false,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        kill_tree(&mut child);
                        let _ = child.wait();
                        break true;
                    }
                    std::thread::sleep(Duration::from_millis(25));
                }
                Err(e) => return Err(format!("wait: {e}")),
            }
        };
        let stdout = out_thread.join().unwrap_or_default();
        let stderr = err_thread.join().unwrap_or_default();
        if killed {
            Ok(RunOutcome::KilledOnDeadline)
        } else {
            Ok(RunOutcome::Finished { stdout, stderr })
        }
    }

    /// Verify a batch of jobs on a bounded worker pool. Results are keyed by
    /// job id and independent of scheduling order.
    pub fn batch_verify(
        &self,
        jobs: Vec<(String, String)>,
        limits: &VerifyLimits,
        workers: usize,
    ) -> BTreeMap<String, VerifierReport> {
        assert!(workers >= 1, "workers must be >= 1");
        parallel::par_map_workers(jobs, workers, |(id, source)| {
            (id, self.verify(&source, limits))
        })
        .into_iter()
        .collect()
    }

    /// Cache key: tool version + limits + source. Cross-version entries are
    /// never reused because the version participates in the hash.
    pub fn cache_key(&self, source: &str, limits: &VerifyLimits) -> String {
        let limits_json = serde_json::to_string(limits).expect("limits serialize");
        let mut hasher = Sha256::new();
        hasher.update(self.tool_version.as_bytes());
        hasher.update([0]);
        hasher.update(limits_json.as_bytes());
        hasher.update([0]);
        hasher.update(source.as_bytes());
        hex::encode_lower(&hasher.finalize())
    }

    /// Verify through a content-addressed cache directory. Corrupt or
    /// unreadable entries are treated as misses and rewritten.
    pub fn cached_verify(
        &self,
        source: &str,
        limits: &VerifyLimits,
        cache_dir: &Path,
    ) -> VerifierReport {
        let key = self.cache_key(source, limits);
        let entry = cache_dir.join(format!("{key}.report.json"));
        if let Ok(bytes) = std::fs::read(&entry) {
            if let Ok(report) = serde_json::from_slice::<VerifierReport>(&bytes) {
                return report;
            }
        }
        let report = self.verify(source, limits);
        // Atomic publish: write to a temp file in the same dir, then rename.
        if std::fs::create_dir_all(cache_dir).is_ok() {
            if let Ok(mut tmp) = tempfile::NamedTempFile::new_in(cache_dir) {
                if serde_json::to_writer(&mut tmp, &report).is_ok() {
                    let _ = tmp.persist(&entry);
                }
            }
        }
        report
    }
}

fn kill_tree(child: &mut std::process::Child) {
    #[cfg(unix)]
    {
        // Negative pid addresses the process group created at spawn.
        unsafe {
            libc::kill(-(child.id() as i32), libc::SIGKILL);
        }
    }
    let _ = child.kill();
}

enum RunOutcome {
    Finished { stdout: String, stderr: String },
    KilledOnDeadline,
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode_lower(&hasher.finalize())
}

mod hex {
    pub fn encode_lower(bytes: &[u8]) -> String {
        bytes.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Normalize raw tool output into a report (wall time, version and hash are
/// filled by the caller).
pub fn parse_output(stdout: &str, stderr: &str) -> VerifierReport {
    let diag_re = regex::Regex::new(
        r"^(?P<file>[^\s(][^(]*)\((?P<line>\d+),(?P<col>\d+)\): (?P<sev>Error|Warning|Info|Related location):? ?(?P<msg>.*)$",
    )
    .expect("diagnostic regex");
    let summary_re = regex::Regex::new(
        r"Dafny program verifier finished with (?P<ok>\d+) verified, (?P<err>\d+) error",
    )
    .expect("summary regex");
    let parse_count_re = regex::Regex::new(r"(\d+) parse errors? detected").expect("regex");
    let resolve_count_re =
        regex::Regex::new(r"(\d+) resolution/type errors? detected").expect("regex");

    let mut diagnostics = Vec::new();
    let mut summary: Option<(u64, u64)> = None;
    let mut parse_errors = false;
    let mut resolve_errors = false;

    for line in stdout.lines().chain(stderr.lines()) {
        if let Some(c) = diag_re.captures(line) {
            let severity = match &c["sev"] {
                "Error" => Severity::Error,
                "Warning" => Severity::Warning,
                "Related location" => Severity::Related,
                _ => Severity::Info,
            };
            diagnostics.push(Diagnostic {
                file: c["file"].to_string(),
                line: c["line"].parse().unwrap_or(0),
                column: c["col"].parse().unwrap_or(0),
                severity,
                message: c["msg"].to_string(),
            });
        } else if let Some(c) = summary_re.captures(line) {
            summary = Some((
                c["ok"].parse().unwrap_or(0),
                c["err"].parse().unwrap_or(0),
            ));
        } else if parse_count_re.is_match(line) {
            parse_errors = true;
        } else if resolve_count_re.is_match(line) {
            resolve_errors = true;
        }
    }

    let has_error_diag = diagnostics.iter().any(|d| d.severity == Severity::Error);
    let timed_out = diagnostics
        .iter()
        .any(|d| d.message.contains("timed out") || d.message.contains("out of resource"));

    let status = match summary {
        Some((_, 0)) if !has_error_diag => VerifyStatus::Verified,
        // A clean summary alongside error diagnostics is inconsistent
        // output; refuse to call it verified.
        Some((_, 0)) => VerifyStatus::ToolError,
        Some((_, _)) if timed_out => VerifyStatus::Timeout,
        Some((_, _)) => VerifyStatus::VerificationFailed,
        None if parse_errors => VerifyStatus::ParseError,
        None if resolve_errors => VerifyStatus::ResolveError,
        None if timed_out => VerifyStatus::Timeout,
        // Heuristic fallback for toolchains that omit the count line.
        None if has_error_diag => {
            if diagnostics.iter().any(|d| {
                d.severity == Severity::Error
                    && (d.message.contains("unresolved")
                        || d.message.contains("does not exist")
                        || d.message.contains("type"))
            }) {
                VerifyStatus::ResolveError
            } else {
                VerifyStatus::ParseError
            }
        }
        None => VerifyStatus::ToolError,
    };

    VerifierReport {
        status,
        diagnostics,
        wall_time: 0.0,
        tool_version: String::new(),
        content_hash: String::new(),
    }
}
