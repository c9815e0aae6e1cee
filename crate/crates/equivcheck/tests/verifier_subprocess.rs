//! Subprocess-level verifier tests driven by stand-in `dafny` scripts, so
//! they run without a real toolchain installed.

#![cfg(unix)]

use std::os::unix::fs::PermissionsExt;
use std::path::PathBuf;

use equivcheck::verifier::{DafnyRunner, VerifyLimits, VerifyStatus};
use tempfile::TempDir;

/// Write an executable shell script and return its path.
fn fake_tool(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let path = dir.path().join(name);
    let script = format!("#!/bin/sh\n{body}\n");
    std::fs::write(&path, script).unwrap();
    let mut perms = std::fs::metadata(&path).unwrap().permissions();
    perms.set_mode(0o755);
    std::fs::set_permissions(&path, perms).unwrap();
    path
}

const VERSION_CASE: &str = r#"if [ "$1" = "--version" ]; then echo "4.9.0+fake"; exit 0; fi"#;

fn runner_with(body: &str) -> (TempDir, DafnyRunner) {
    let dir = TempDir::new().unwrap();
    let path = fake_tool(&dir, "dafny", &format!("{VERSION_CASE}\n{body}"));
    let runner = DafnyRunner::discover(Some(&path)).unwrap();
    (dir, runner)
}

#[test]
fn version_probe_fails_for_missing_exe() {
    let err = DafnyRunner::discover(Some(std::path::Path::new("/nonexistent/dafny")));
    assert!(err.is_err());
}

#[test]
fn version_is_captured() {
    let (_dir, runner) = runner_with("exit 0");
    assert_eq!(runner.tool_version(), "4.9.0+fake");
}

#[test]
fn passing_run_is_verified() {
    let (_dir, runner) = runner_with(
        r#"echo ""
echo "Dafny program verifier finished with 3 verified, 0 errors"
exit 0"#,
    );
    let report = runner.verify("method M() {\n}\n", &VerifyLimits::default());
    assert_eq!(report.status, VerifyStatus::Verified);
    assert_eq!(runner.spawn_count(), 1);
    assert_eq!(report.tool_version, "4.9.0+fake");
    assert_eq!(report.content_hash.len(), 64);
}

#[test]
fn failing_run_reports_diagnostics() {
    let (_dir, runner) = runner_with(
        r#"echo "input.dfy(7,4): Error: a postcondition could not be proved"
echo "Dafny program verifier finished with 0 verified, 1 error"
exit 4"#,
    );
    let report = runner.verify("method M() {\n}\n", &VerifyLimits::default());
    assert_eq!(report.status, VerifyStatus::VerificationFailed);
    assert_eq!(report.diagnostics.len(), 1);
    assert_eq!(report.diagnostics[0].line, 7);
    assert!(report.diagnostics[0].message.contains("postcondition"));
}

#[test]
fn receives_file_and_time_limit_args() {
    // The fake tool verifies the argv shape itself: wrong shape -> garbage
    // output -> ToolError.
    let (_dir, runner) = runner_with(
        r#"if [ "$1" = "verify" ] && [ -f "$2" ] && [ "$3" = "--verification-time-limit" ] && [ "$4" = "17" ]; then
  echo "Dafny program verifier finished with 1 verified, 0 errors"
else
  echo "bad invocation: $@"
fi"#,
    );
    let limits = VerifyLimits {
        time_limit: 17,
        ..VerifyLimits::default()
    };
    let report = runner.verify("method M() {\n}\n", &limits);
    assert_eq!(report.status, VerifyStatus::Verified, "{:?}", report.diagnostics);
}

#[test]
fn hung_tool_is_killed_and_reported_as_timeout() {
    let (_dir, runner) = runner_with("sleep 300");
    // 0s limit + fixed grace keeps this test bounded well under the sleep.
    let limits = VerifyLimits {
        time_limit: 0,
        ..VerifyLimits::default()
    };
    let start = std::time::Instant::now();
    let report = runner.verify("method M() {\n}\n", &limits);
    assert_eq!(report.status, VerifyStatus::Timeout);
    assert!(start.elapsed().as_secs() < 60);
}

#[test]
fn cache_hit_skips_subprocess() {
    let (_dir, runner) = runner_with(
        r#"echo "Dafny program verifier finished with 1 verified, 0 errors""#,
    );
    let cache = TempDir::new().unwrap();
    let limits = VerifyLimits::default();
    let src = "method M() {\n}\n";

    let first = runner.cached_verify(src, &limits, cache.path());
    assert_eq!(first.status, VerifyStatus::Verified);
    assert_eq!(runner.spawn_count(), 1);

    let second = runner.cached_verify(src, &limits, cache.path());
    assert_eq!(second.status, VerifyStatus::Verified);
    assert_eq!(runner.spawn_count(), 1, "second call must hit the cache");

    // Different limits are a different key.
    let tighter = VerifyLimits {
        time_limit: 5,
        ..VerifyLimits::default()
    };
    runner.cached_verify(src, &tighter, cache.path());
    assert_eq!(runner.spawn_count(), 2);

    // Different source is a different key.
    runner.cached_verify("method N() {\n}\n", &limits, cache.path());
    assert_eq!(runner.spawn_count(), 3);
}

#[test]
fn corrupt_cache_entry_is_a_miss() {
    let (_dir, runner) = runner_with(
        r#"echo "Dafny program verifier finished with 1 verified, 0 errors""#,
    );
    let cache = TempDir::new().unwrap();
    let limits = VerifyLimits::default();
    let src = "method M() {\n}\n";
    runner.cached_verify(src, &limits, cache.path());
    assert_eq!(runner.spawn_count(), 1);

    // Truncate every entry, then verify again: must re-run and repair.
    for entry in std::fs::read_dir(cache.path()).unwrap() {
        std::fs::write(entry.unwrap().path(), b"{not json").unwrap();
    }
    let report = runner.cached_verify(src, &limits, cache.path());
    assert_eq!(report.status, VerifyStatus::Verified);
    assert_eq!(runner.spawn_count(), 2);
    // And the repaired entry is usable again.
    runner.cached_verify(src, &limits, cache.path());
    assert_eq!(runner.spawn_count(), 2);
}

#[test]
fn batch_results_are_deterministic_across_worker_counts() {
    // Status depends on the file content, so the map must route each job's
    // output to the right id regardless of scheduling.
    let (_dir, runner) = runner_with(
        r#"if grep -q FAILME "$2"; then
  echo "input.dfy(1,1): Error: assertion might not hold"
  echo "Dafny program verifier finished with 0 verified, 1 error"
else
  echo "Dafny program verifier finished with 1 verified, 0 errors"
fi"#,
    );
    let jobs: Vec<(String, String)> = (0..8)
        .map(|i| {
            let body = if i % 3 == 0 {
                "method M() { assert FAILME; }\n".to_string()
            } else {
                format!("method M{i}() {{\n}}\n")
            };
            (format!("job-{i}"), body)
        })
        .collect();

    let limits = VerifyLimits::default();
    let serial = runner.batch_verify(jobs.clone(), &limits, 1);
    let parallel = runner.batch_verify(jobs, &limits, 4);
    assert_eq!(serial.len(), 8);
    for (id, report) in &serial {
        assert_eq!(report.status, parallel[id].status, "mismatch for {id}");
        let expect_fail = id
            .strip_prefix("job-")
            .unwrap()
            .parse::<u32>()
            .unwrap()
            % 3
            == 0;
        let expected = if expect_fail {
            VerifyStatus::VerificationFailed
        } else {
            VerifyStatus::Verified
        };
        assert_eq!(report.status, expected, "wrong routing for {id}");
    }
}

#[test]
fn tool_crash_is_tool_error() {
    let (_dir, runner) = runner_with(r#"echo "Unhandled exception: boom" >&2; exit 1"#);
    let report = runner.verify("method M() {\n}\n", &VerifyLimits::default());
    assert_eq!(report.status, VerifyStatus::ToolError);
}
