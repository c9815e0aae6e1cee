//! End-to-end CLI tests driving the built binary. Everything here runs
//! offline: verifier-backed commands use a scripted stand-in toolchain and
//! pipelines run in replay mode.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use equivcheck::synthesis::{autoformalize_request, write_transcript, ChatClient};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_equivcheck"));
    // Keep the environment hermetic: no ambient toolchain or credentials.
    cmd.env_remove("EQUIVCHECK_DAFNY")
        .env_remove("EQUIVCHECK_LLM_API_KEY")
        .env_remove("EQUIVCHECK_LLM_ENDPOINT");
    cmd
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets/fixtures").join(name)
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn no_arguments_is_a_usage_error() {
    let out = run(&mut bin());
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(bin().args(["parse", "--definitely-not-a-flag"]));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn help_exits_zero_and_lists_commands() {
    let out = run(bin().arg("--help"));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    for cmd in ["parse", "stats", "verify", "check-equiv", "score", "synth", "pipeline", "report"] {
        assert!(text.contains(cmd), "help is missing `{cmd}`");
    }
}

#[test]
fn parse_reports_declarations() {
    let out = run(bin().arg("parse").arg(fixture("fig2_max.dfy")));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("Max"));
}

#[test]
fn parse_without_files_is_usage() {
    let out = run(bin().arg("parse"));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn stats_prints_table_one_style_means() {
    let out = run(bin()
        .args(["stats", "--corpus"])
        .arg(fixture("appendix_corpus.jsonl")));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("invariants"));
    assert!(text.contains("mean"));
}

#[test]
fn check_equiv_without_inputs_is_usage() {
    let out = run(bin().arg("check-equiv"));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn check_equiv_without_a_toolchain_is_a_tool_error() {
    let out = run(bin()
        .env("PATH", "/nonexistent-path-entry")
        .arg("check-equiv")
        .arg(fixture("fig2_max.dfy")));
    assert_eq!(out.status.code(), Some(2));
}

/// Scripted toolchain: answers the version probe, then emits a canned
/// verifier summary for every file.
fn fake_dafny(dir: &Path, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join("dafny");
    let script = format!("#!/bin/sh\nif [ \"$1\" = \"--version\" ]; then echo 4.4.0; exit 0; fi\n{body}\n");
    std::fs::write(&path, script).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[test]
fn verify_exit_codes_follow_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let ok_tool = fake_dafny(
        dir.path(),
        "echo 'Dafny program verifier finished with 1 verified, 0 errors'",
    );
    let out = run(bin()
        .env("EQUIVCHECK_DAFNY", &ok_tool)
        .arg("verify")
        .arg(fixture("fig2_max.dfy")));
    assert_eq!(out.status.code(), Some(0), "stdout: {}", stdout(&out));
    assert!(stdout(&out).contains("Verified"));

    let fail_dir = tempfile::tempdir().unwrap();
    let fail_tool = fake_dafny(
        fail_dir.path(),
        "echo 'f.dfy(3,5): Error: a postcondition could not be proved'\n\
         echo 'Dafny program verifier finished with 0 verified, 1 errors'",
    );
    let out = run(bin()
        .env("EQUIVCHECK_DAFNY", &fail_tool)
        .arg("verify")
        .arg(fixture("fig2_max.dfy")));
    assert_eq!(out.status.code(), Some(1));
    assert!(stdout(&out).contains("postcondition"));
}

#[test]
fn pass_at_k_matches_the_closed_form() {
    let out = run(bin().args([
        "score", "--metric", "pass-at-k", "--n", "10", "--c", "3", "--k", "4",
    ]));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("0.8333"), "stdout: {}", stdout(&out));
}

#[test]
fn pass_at_k_with_bad_arguments_is_usage() {
    let out = run(bin().args([
        "score", "--metric", "pass-at-k", "--n", "4", "--c", "1", "--k", "9",
    ]));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn cc_scores_python_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("sample.py");
    std::fs::write(&file, "def f(x):\n    if x and x > 1:\n        return 1\n    return 0\n")
        .unwrap();
    let out = run(bin().args(["score", "--metric", "cc", "--files"]).arg(&file));
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains('f'));
    assert!(text.contains('3'), "expected complexity 3 in: {text}");
}

#[test]
fn synth_tags_is_deterministic_per_seed() {
    let a = run(bin().args(["synth", "tags", "--seed", "7"]));
    let b = run(bin().args(["synth", "tags", "--seed", "7"]));
    let c = run(bin().args(["synth", "tags", "--seed", "8"]));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(stdout(&a), stdout(&b));
    assert_ne!(stdout(&a), stdout(&c));
    let text = stdout(&a);
    for section in ["domain:", "algorithm:", "data_structure:"] {
        let line = text.lines().find(|l| l.starts_with(section)).expect(section);
        assert_eq!(line.matches(',').count(), 11, "12 tags in {section}");
    }
}

#[test]
fn pipeline_replay_without_transcripts_is_usage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, corpus_line()).unwrap();
    let out = run(bin()
        .args(["pipeline", "run", "--stage", "autoformalize", "--corpus"])
        .arg(&corpus)
        .args(["--run-dir"])
        .arg(dir.path().join("run")));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn live_mode_without_credentials_is_usage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, corpus_line()).unwrap();
    let out = run(bin()
        .args(["pipeline", "run", "--stage", "autoformalize", "--mode", "live", "--corpus"])
        .arg(&corpus)
        .args(["--run-dir"])
        .arg(dir.path()));
    assert_eq!(out.status.code(), Some(64));
}

fn corpus_line() -> &'static str {
    "{\"id\":\"abs-1\",\"query\":\"Return the absolute value of x.\",\
     \"reference_solution\":null,\"dafny_strong\":null,\
     \"dafny_weak\":\"method Stub() ensures true {}\",\
     \"difficulty\":\"easy\",\"provenance\":\"external\"}\n"
}

const SPEC_REPLY: &str = "```dafny\nmethod Abs(x: int) returns (y: int)\n  ensures y >= 0\n  ensures y == x || y == -x\n```";

/// Build a replayable autoformalization run dir with the same request the
/// CLI's default client will issue.
fn seed_autoformalize_fixture(run_dir: &Path) {
    let transcripts = run_dir.join("transcripts");
    std::fs::create_dir_all(&transcripts).unwrap();
    let client = ChatClient::replay(&transcripts);
    let request = autoformalize_request(&client, "Return the absolute value of x.");
    write_transcript(&transcripts, &request, SPEC_REPLY).unwrap();
}

#[test]
fn pipeline_replay_produces_deterministic_resumable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, corpus_line()).unwrap();

    let mut artifacts = Vec::new();
    for run in ["run_a", "run_b"] {
        let run_dir = dir.path().join(run);
        seed_autoformalize_fixture(&run_dir);
        let out = run_cli_pipeline(&corpus, &run_dir);
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
        let artifact = run_dir.join("artifacts/abs-1/autoformalize.json");
        artifacts.push(std::fs::read(&artifact).unwrap());
    }
    // Replay determinism: two independent replays, byte-identical artifacts.
    assert_eq!(artifacts[0], artifacts[1]);
    let text = String::from_utf8(artifacts[0].clone()).unwrap();
    assert!(text.contains("ensures y >= 0"));

    // Resumption: a second invocation over the same run dir skips the item.
    let run_dir = dir.path().join("run_a");
    let before = std::fs::read(run_dir.join("artifacts/abs-1/autoformalize.json")).unwrap();
    let out = run_cli_pipeline(&corpus, &run_dir);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("skip"));
    let after = std::fs::read(run_dir.join("artifacts/abs-1/autoformalize.json")).unwrap();
    assert_eq!(before, after);
}

fn run_cli_pipeline(corpus: &Path, run_dir: &Path) -> Output {
    run(bin()
        .args(["pipeline", "run", "--stage", "autoformalize", "--mode", "replay", "--corpus"])
        .arg(corpus)
        .args(["--run-dir"])
        .arg(run_dir))
}

#[test]
fn reports_are_dual_emitted_and_summarized() {
    let dir = tempfile::tempdir().unwrap();
    let report_dir = dir.path().join("reports");
    let out = run(bin()
        .args(["--report-dir"])
        .arg(&report_dir)
        .args(["synth", "tags", "--seed", "3"]));
    assert_eq!(out.status.code(), Some(0));
    assert!(report_dir.join("synth.jsonl").is_file());

    let out = run(bin().args(["report", "--dir"]).arg(&report_dir));
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("synth"));
}

#[test]
fn invalid_config_file_fails_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    std::fs::write(&config, "{\"no_such_field\": true}").unwrap();
    let out = run(bin()
        .args(["--config"])
        .arg(&config)
        .args(["synth", "tags", "--seed", "1"]));
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn config_file_settings_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let report_a = dir.path().join("a");
    let report_b = dir.path().join("b");
    let config = dir.path().join("config.json");
    std::fs::write(
        &config,
        format!("{{\"report_dir\": {:?}}}", report_a.display().to_string()),
    )
    .unwrap();

    // File setting applies on its own…
    let out = run(bin().args(["--config"]).arg(&config).args(["synth", "tags", "--seed", "1"]));
    assert_eq!(out.status.code(), Some(0));
    assert!(report_a.join("synth.jsonl").is_file());

    // …and the flag wins when both are present.
    let out = run(bin()
        .args(["--config"])
        .arg(&config)
        .args(["--report-dir"])
        .arg(&report_b)
        .args(["synth", "tags", "--seed", "1"]));
    assert_eq!(out.status.code(), Some(0));
    assert!(report_b.join("synth.jsonl").is_file());
}
