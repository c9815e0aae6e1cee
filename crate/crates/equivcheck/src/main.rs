//! Command-line entry point. Exit codes are a stable contract:
//! 0 success, 1 metric failure, 2 tool error, 64 usage/config error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use equivcheck::corpus::{self, BenchmarkItem, TagOntology, Variant};
use equivcheck::dafny;
use equivcheck::scoring::{
    self, check_equiv_source, cyclomatic_complexity, equiv_targets, equivalence_score, pass_at_k,
    spec_superior, CcRules, EquivReason, EquivalenceVerdict,
};
use equivcheck::synthesis::{
    self, draw_tags, filter_by_tests, generate_problem, pipeline_autoformalize, pipeline_codegen,
    pipeline_nl_equiv, select_tags, ChatClient, SynthError, DEFAULT_TEST_TIMEOUT,
};
use equivcheck::verifier::{DafnyRunner, VerifyLimits, VerifyStatus};

const EXIT_OK: i32 = 0;
const EXIT_METRIC: i32 = 1;
const EXIT_TOOL: i32 = 2;
const EXIT_USAGE: i32 = 64;

#[derive(Parser)]
#[command(
    name = "equivcheck",
    version,
    about = "Mechanical equivalence scoring for Dafny code and specifications"
)]
struct Cli {
    /// JSON config file; flags override env vars, which override the file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Dafny executable (also: EQUIVCHECK_DAFNY).
    #[arg(long, global = true)]
    dafny: Option<PathBuf>,
    /// Per-file verification time limit in seconds.
    #[arg(long, global = true)]
    time_limit: Option<u64>,
    /// Directory for cached verifier reports.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Directory for machine-readable JSONL reports.
    #[arg(long, global = true)]
    report_dir: Option<PathBuf>,
    /// Verifier worker-pool size.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Tag ontology JSON (defaults to the bundled ontology).
    #[arg(long, global = true)]
    ontology: Option<PathBuf>,
    /// Candidate test runner; `{code_file}` and `{test_file}` placeholders.
    #[arg(long, global = true)]
    runner_cmd: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse Dafny files and print their declaration inventory.
    Parse { files: Vec<PathBuf> },
    /// Annotation statistics over a corpus (counts and means).
    Stats {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "weak")]
        variant: VariantArg,
    },
    /// Run the Dafny verifier over files.
    Verify { files: Vec<PathBuf> },
    /// Two-direction equivalence check over files or a corpus.
    CheckEquiv {
        files: Vec<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "weak")]
        variant: VariantArg,
        /// Always exit 0 on metric failures (tool errors still exit 2).
        #[arg(long)]
        no_fail: bool,
    },
    /// Corpus-level metrics.
    Score {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_enum)]
        metric: Metric,
        #[arg(long, value_enum, default_value = "weak")]
        variant: VariantArg,
        /// pass@k parameters.
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        c: Option<u64>,
        #[arg(long)]
        k: Option<u64>,
        /// Python files for --metric cc.
        #[arg(long, num_args = 1..)]
        files: Vec<PathBuf>,
        /// JSONL of equivalence verdicts for --metric exact-match.
        #[arg(long)]
        verdicts: Option<PathBuf>,
        /// JSONL of `{"item_id": ..., "judged": bool}` for --metric exact-match.
        #[arg(long)]
        judgments: Option<PathBuf>,
    },
    /// Tag-composition synthesis utilities.
    Synth {
        #[command(subcommand)]
        command: SynthCommand,
    },
    /// LLM pipelines (autoformalize / nl-equiv / codegen / tagcomp).
    Pipeline {
        #[command(subcommand)]
        command: PipelineCommand,
    },
    /// Summarize machine reports written by earlier commands.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum SynthCommand {
    /// Draw 12 candidate tags per category.
    Tags {
        #[arg(long, default_value = "0")]
        seed: u64,
    },
    /// Draw tags, have the model select 3-8, and generate a problem.
    Problem {
        #[arg(long, default_value = "0")]
        seed: u64,
        #[command(flatten)]
        llm: LlmArgs,
    },
}

#[derive(Subcommand)]
enum PipelineCommand {
    /// Run one pipeline stage over every corpus item.
    Run {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum)]
        stage: Stage,
        #[command(flatten)]
        llm: LlmArgs,
    },
}

#[derive(Args)]
struct LlmArgs {
    #[arg(long, value_enum, default_value = "replay")]
    mode: ModeArg,
    /// Run directory; transcripts live under `<run_dir>/transcripts/`.
    #[arg(long)]
    run_dir: PathBuf,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Live,
    Record,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Autoformalize,
    NlEquiv,
    Codegen,
    Tagcomp,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Weak,
    Strong,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Variant {
        match v {
            VariantArg::Weak => Variant::Weak,
            VariantArg::Strong => Variant::Strong,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Metric {
    Equiv,
    Superior,
    PassAtK,
    Cc,
    ExactMatch,
}

/// Resolved runtime configuration: flags > env > config file > defaults.
struct Config {
    dafny: Option<PathBuf>,
    limits: VerifyLimits,
    cache_dir: Option<PathBuf>,
    report_dir: Option<PathBuf>,
    workers: usize,
    ontology: TagOntology,
    runner_cmd: String,
    seed: u64,
    model: Option<String>,
    temperature: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    dafny: Option<PathBuf>,
    time_limit: Option<u64>,
    cache_dir: Option<PathBuf>,
    report_dir: Option<PathBuf>,
    workers: Option<usize>,
    ontology: Option<PathBuf>,
    runner_cmd: Option<String>,
    seed: Option<u64>,
    model: Option<String>,
    temperature: Option<f64>,
}

fn load_config(cli: &Cli) -> Result<Config, String> {
    let file: ConfigFile = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => ConfigFile::default(),
    };

    let dafny = cli
        .dafny
        .clone()
        .or_else(|| std::env::var_os("EQUIVCHECK_DAFNY").map(PathBuf::from))
        .or(file.dafny);
    let mut limits = VerifyLimits::default();
    if let Some(t) = cli.time_limit.or(file.time_limit) {
        limits.time_limit = t;
    }
    let cache_dir = cli.cache_dir.clone().or(file.cache_dir);
    let report_dir = cli.report_dir.clone().or(file.report_dir);
    if let Some(dir) = &report_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("cannot create report dir {}: {e}", dir.display()))?;
    }
    if let Some(dir) = &cache_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| format!("cannot create cache dir {}: {e}", dir.display()))?;
    }
    let ontology = match cli.ontology.clone().or(file.ontology) {
        Some(path) => TagOntology::load(&path).map_err(|e| e.to_string())?,
        None => TagOntology::bundled(),
    };
    Ok(Config {
        dafny,
        limits,
        cache_dir,
        report_dir,
        workers: cli.workers.or(file.workers).unwrap_or(4).max(1),
        ontology,
        runner_cmd: cli
            .runner_cmd
            .clone()
            .or(file.runner_cmd)
            .unwrap_or_else(|| "python3 {code_file} {test_file}".to_string()),
        seed: file.seed.unwrap_or(0),
        model: file.model,
        temperature: file.temperature,
    })
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("config error: {msg}");
            std::process::exit(EXIT_USAGE);
        }
    };
    let code = match run(&cli, &config) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            classify_error(&e)
        }
    };
    std::process::exit(code);
}

fn classify_error(e: &anyhow::Error) -> i32 {
    if let Some(synth) = e.downcast_ref::<SynthError>() {
        return match synth {
            SynthError::StageFailed { .. } => EXIT_METRIC,
            SynthError::ToolError(_) | SynthError::Chat(_) => EXIT_TOOL,
            _ => EXIT_USAGE,
        };
    }
    EXIT_TOOL
}

fn run(cli: &Cli, config: &Config) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Parse { files } => cmd_parse(config, files),
        Command::Stats { corpus, variant } => cmd_stats(config, corpus, (*variant).into()),
        Command::Verify { files } => cmd_verify(config, files),
        Command::CheckEquiv { files, corpus, variant, no_fail } => {
            cmd_check_equiv(config, files, corpus.as_deref(), (*variant).into(), *no_fail)
        }
        Command::Score { corpus, metric, variant, n, c, k, files, verdicts, judgments } => {
            cmd_score(
                config,
                corpus.as_deref(),
                *metric,
                (*variant).into(),
                (*n, *c, *k),
                files,
                verdicts.as_deref(),
                judgments.as_deref(),
            )
        }
        Command::Synth { command } => cmd_synth(config, command),
        Command::Pipeline { command } => cmd_pipeline(config, command),
        Command::Report { dir } => cmd_report(config, dir.as_deref()),
    }
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn usage(msg: &str) -> anyhow::Result<i32> {
    eprintln!("usage error: {msg}");
    Ok(EXIT_USAGE)
}

fn runner(config: &Config) -> anyhow::Result<DafnyRunner> {
    DafnyRunner::discover(config.dafny.as_deref()).map_err(|e| anyhow::anyhow!("{e}"))
}

/// Append one JSON line per record to `<report_dir>/<name>.jsonl`.
fn emit_report(config: &Config, name: &str, records: &[serde_json::Value]) -> anyhow::Result<()> {
    let Some(dir) = &config.report_dir else { return Ok(()) };
    use std::io::Write;
    let path = dir.join(format!("{name}.jsonl"));
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(&path)?;
    for record in records {
        writeln!(f, "{record}")?;
    }
    Ok(())
}

fn load_items(path: &Path) -> anyhow::Result<Vec<BenchmarkItem>> {
    let (items, diagnostics) = corpus::load_corpus(path)?;
    for d in &diagnostics {
        eprintln!("warning: {}: line {}: {}", path.display(), d.line, d.message);
    }
    Ok(items)
}

/// Syntax gate for pipelines: the real toolchain when available, otherwise
/// the built-in parser (parse-level checks only; resolution needs Dafny).
fn syntax_gate_fn(config: &Config) -> Box<dyn FnMut(&str) -> Result<(), String>> {
    match DafnyRunner::discover(config.dafny.as_deref()) {
        Ok(runner) => {
            let limits = config.limits.clone();
            Box::new(move |source: &str| {
                let report = runner.verify(source, &limits);
                synthesis::syntax_gate(&report)
            })
        }
        Err(_) => {
            eprintln!("note: no Dafny toolchain found; using the built-in parser as syntax gate");
            Box::new(|source: &str| match dafny::parse_unit(source) {
                Ok(_) => Ok(()),
                Err(e) => Err(e.to_string()),
            })
        }
    }
}

fn chat_client(config: &Config, llm: &LlmArgs) -> Result<ChatClient, String> {
    let transcripts = llm.run_dir.join("transcripts");
    let client = match llm.mode {
        ModeArg::Replay => {
            if !transcripts.is_dir() {
                return Err(format!(
                    "replay mode requires a transcript dir at {}",
                    transcripts.display()
                ));
            }
            ChatClient::replay(transcripts)
        }
        ModeArg::Record => {
            require_credentials()?;
            ChatClient::record(transcripts)
        }
        ModeArg::Live => {
            require_credentials()?;
            ChatClient::live()
        }
    };
    let mut client = client;
    if let Some(model) = llm.model.clone().or_else(|| config.model.clone()) {
        client = client.with_model(model);
    }
    if let Some(t) = llm.temperature.or(config.temperature) {
        client = client.with_temperature(t);
    }
    Ok(client)
}

fn require_credentials() -> Result<(), String> {
    for var in [synthesis::ENV_LLM_ENDPOINT, synthesis::ENV_LLM_API_KEY] {
        if std::env::var_os(var).is_none() {
            return Err(format!("live/record mode requires {var} to be set"));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_parse(config: &Config, files: &[PathBuf]) -> anyhow::Result<i32> {
    if files.is_empty() {
        return usage("parse requires at least one file");
    }
    let mut records = Vec::new();
    let mut failed = false;
    println!("{:<28} {:>6} {:>9} {:>8} {:>8}", "file", "decls", "functions", "methods", "ensures");
    for file in files {
        let source = std::fs::read_to_string(file)?;
        match dafny::parse_unit(&source) {
            Ok(unit) => {
                let decls = unit.decls();
                let functions = decls
                    .iter()
                    .filter(|d| {
                        matches!(d.kind, dafny::DeclKind::Function | dafny::DeclKind::Predicate)
                    })
                    .count();
                let methods =
                    decls.iter().filter(|d| d.kind == dafny::DeclKind::Method).count();
                let ensures: usize = decls.iter().map(|d| d.clauses.ensures.len()).sum();
                println!(
                    "{:<28} {:>6} {:>9} {:>8} {:>8}",
                    display_name(file),
                    decls.len(),
                    functions,
                    methods,
                    ensures
                );
                for d in decls {
                    println!("  {} {}", d.kind, d.name);
                }
                records.push(serde_json::json!({
                    "file": file.display().to_string(),
                    "decls": decls.len(),
                    "functions": functions,
                    "methods": methods,
                    "ensures": ensures,
                }));
            }
            Err(e) => {
                failed = true;
                println!("{:<28} parse error: {e}", display_name(file));
                records.push(serde_json::json!({
                    "file": file.display().to_string(),
                    "error": e.to_string(),
                }));
            }
        }
    }
    emit_report(config, "parse", &records)?;
    Ok(if failed { EXIT_METRIC } else { EXIT_OK })
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_stats(config: &Config, corpus_path: &Path, variant: Variant) -> anyhow::Result<i32> {
    let items = load_items(corpus_path)?;
    let stats = corpus::compute_stats(&items, variant);
    println!(
        "{:<24} {:>9} {:>7} {:>10} {:>7} {:>9}",
        "item", "functions", "methods", "invariants", "ensures", "decreases"
    );
    for s in &stats.per_item {
        println!(
            "{:<24} {:>9} {:>7} {:>10} {:>7} {:>9}",
            s.id, s.counts.functions, s.counts.methods, s.counts.invariants,
            s.counts.ensures, s.counts.decreases
        );
    }
    println!(
        "{:<24} {:>9.2} {:>7.2} {:>10.2} {:>7.2} {:>9.2}",
        "mean",
        stats.mean.functions,
        stats.mean.methods,
        stats.mean.invariants,
        stats.mean.ensures,
        stats.mean.decreases
    );
    for d in &stats.diagnostics {
        eprintln!("warning: {}", d.message);
    }
    emit_report(config, "stats", &[serde_json::to_value(&stats)?])?;
    Ok(EXIT_OK)
}

fn cmd_verify(config: &Config, files: &[PathBuf]) -> anyhow::Result<i32> {
    if files.is_empty() {
        return usage("verify requires at least one file");
    }
    let runner = runner(config)?;
    let inputs: Vec<(String, String)> = files
        .iter()
        .map(|f| Ok((f.display().to_string(), std::fs::read_to_string(f)?)))
        .collect::<anyhow::Result<_>>()?;
    let reports = runner.batch_verify(inputs, &config.limits, config.workers);
    let mut all_ok = true;
    let mut tool_error = false;
    let mut records = Vec::new();
    println!("{:<28} {:<20} {:>8}", "file", "status", "time(s)");
    for (file, report) in &reports {
        println!(
            "{:<28} {:<20} {:>8.2}",
            display_name(Path::new(file)),
            format!("{:?}", report.status),
            report.wall_time
        );
        for d in &report.diagnostics {
            println!("  ({},{}) {:?}: {}", d.line, d.column, d.severity, d.message);
        }
        all_ok &= report.is_verified();
        tool_error |= report.status == VerifyStatus::ToolError;
        records.push(serde_json::json!({ "file": file, "report": report }));
    }
    emit_report(config, "verify", &records)?;
    Ok(if tool_error {
        EXIT_TOOL
    } else if all_ok {
        EXIT_OK
    } else {
        EXIT_METRIC
    })
}

fn verdict_row(v: &EquivalenceVerdict) -> String {
    format!(
        "{:<24} {:<14} {:<12} {}",
        v.item_id,
        if v.equivalent { "equivalent" } else { "not-equivalent" },
        format!("{:?}", v.reason),
        v.detail.as_deref().unwrap_or_default()
    )
}

fn cmd_check_equiv(
    config: &Config,
    files: &[PathBuf],
    corpus_path: Option<&Path>,
    variant: Variant,
    no_fail: bool,
) -> anyhow::Result<i32> {
    if files.is_empty() && corpus_path.is_none() {
        return usage("check-equiv requires input files or --corpus");
    }
    let runner = runner(config)?;
    let cache = config.cache_dir.as_deref();

    let mut verdicts: Vec<EquivalenceVerdict> = Vec::new();
    println!("{:<24} {:<14} {:<12} detail", "item", "verdict", "reason");
    for file in files {
        let source = std::fs::read_to_string(file)?;
        let v = check_equiv_source(&runner, &display_name(file), &source, &config.limits, cache);
        println!("{}", verdict_row(&v));
        verdicts.push(v);
    }
    if let Some(path) = corpus_path {
        let items = load_items(path)?;
        if items.is_empty() {
            return usage("corpus is empty");
        }
        let score =
            equivalence_score(&runner, &items, variant, &config.limits, config.workers, cache);
        for v in &score.verdicts {
            println!("{}", verdict_row(v));
        }
        println!("equivalence score: {:.2}%", 100.0 * score.score);
        verdicts.extend(score.verdicts);
    }

    let records: Vec<serde_json::Value> =
        verdicts.iter().map(|v| serde_json::to_value(v).unwrap()).collect();
    emit_report(config, "check-equiv", &records)?;

    let tool_error = verdicts.iter().any(|v| {
        [&v.direction1, &v.direction2]
            .into_iter()
            .flatten()
            .any(|r| r.status == VerifyStatus::ToolError)
    });
    if tool_error {
        return Ok(EXIT_TOOL);
    }
    if verdicts.iter().all(|v| v.equivalent) || no_fail {
        Ok(EXIT_OK)
    } else {
        Ok(EXIT_METRIC)
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_score(
    config: &Config,
    corpus_path: Option<&Path>,
    metric: Metric,
    variant: Variant,
    (n, c, k): (Option<u64>, Option<u64>, Option<u64>),
    files: &[PathBuf],
    verdicts_path: Option<&Path>,
    judgments_path: Option<&Path>,
) -> anyhow::Result<i32> {
    match metric {
        Metric::PassAtK => {
            let (Some(n), Some(c), Some(k)) = (n, c, k) else {
                return usage("--metric pass-at-k requires --n, --c and --k");
            };
            match pass_at_k(n, c, k) {
                Ok(value) => {
                    println!("pass@{k} (n={n}, c={c}) = {value:.6}");
                    emit_report(
                        config,
                        "score",
                        &[serde_json::json!({"metric": "pass_at_k", "n": n, "c": c, "k": k, "value": value})],
                    )?;
                    Ok(EXIT_OK)
                }
                Err(e) => usage(&e.to_string()),
            }
        }
        Metric::Cc => {
            let mut sources: Vec<(String, String)> = Vec::new();
            for file in files {
                sources.push((display_name(file), std::fs::read_to_string(file)?));
            }
            if let Some(path) = corpus_path {
                for item in load_items(path)? {
                    if let Some(r) = &item.reference_solution {
                        if r.language.eq_ignore_ascii_case("python") {
                            sources.push((item.id.clone(), r.source.clone()));
                        }
                    }
                }
            }
            if sources.is_empty() {
                return usage("--metric cc requires --files or a corpus with Python solutions");
            }
            let mut records = Vec::new();
            let mut total = 0.0;
            let mut count = 0usize;
            println!("{:<28} {:<24} {:>10}", "source", "function", "complexity");
            for (name, source) in &sources {
                let report = cyclomatic_complexity(source, CcRules::RadonPython)?;
                for f in &report.per_function {
                    println!("{:<28} {:<24} {:>10}", name, f.name, f.complexity);
                    total += f.complexity as f64;
                    count += 1;
                }
                records.push(serde_json::json!({"source": name, "report": report}));
            }
            if count > 0 {
                println!("mean complexity: {:.2}", total / count as f64);
            }
            emit_report(config, "score", &records)?;
            Ok(EXIT_OK)
        }
        Metric::ExactMatch => {
            let (Some(vp), Some(jp)) = (verdicts_path, judgments_path) else {
                return usage("--metric exact-match requires --verdicts and --judgments");
            };
            let verdicts: Vec<EquivalenceVerdict> = read_jsonl(vp)?;
            #[derive(Deserialize)]
            struct Judgment {
                item_id: String,
                judged: bool,
            }
            let judgments: Vec<Judgment> = read_jsonl(jp)?;
            let pairs: Vec<(String, bool)> =
                judgments.into_iter().map(|j| (j.item_id, j.judged)).collect();
            match scoring::exact_match_aggregate(&verdicts, &pairs) {
                Ok(value) => {
                    println!("exact-match: {:.2}%", 100.0 * value);
                    emit_report(
                        config,
                        "score",
                        &[serde_json::json!({"metric": "exact_match", "value": value})],
                    )?;
                    Ok(EXIT_OK)
                }
                Err(e) => usage(&e.to_string()),
            }
        }
        Metric::Equiv => {
            let Some(path) = corpus_path else {
                return usage("--metric equiv requires --corpus");
            };
            let items = load_items(path)?;
            if items.is_empty() {
                return usage("corpus is empty");
            }
            let runner = runner(config)?;
            let score = equivalence_score(
                &runner,
                &items,
                variant,
                &config.limits,
                config.workers,
                config.cache_dir.as_deref(),
            );
            let timeouts =
                score.verdicts.iter().filter(|v| v.reason == EquivReason::Timeout).count();
            let unsupported =
                score.verdicts.iter().filter(|v| v.reason == EquivReason::Unsupported).count();
            let equivalent = score.verdicts.iter().filter(|v| v.equivalent).count();
            println!(
                "equivalence ({variant}): {}/{} = {:.2}% (timeouts: {timeouts}, unsupported: {unsupported})",
                equivalent,
                score.verdicts.len(),
                100.0 * score.score
            );
            emit_report(config, "score", &[serde_json::to_value(&score)?])?;
            Ok(EXIT_OK)
        }
        Metric::Superior => {
            let Some(path) = corpus_path else {
                return usage("--metric superior requires --corpus");
            };
            let items = load_items(path)?;
            let runner = runner(config)?;
            let mut records = Vec::new();
            println!("{:<24} {:<10} detail", "item", "superior");
            for item in &items {
                let (Some(strong), Some(weak)) = (&item.dafny_strong, &item.dafny_weak) else {
                    continue;
                };
                let unit = dafny::parse_unit(strong)?;
                let Some(target) = equiv_targets(&unit).into_iter().next() else {
                    continue;
                };
                let weak_unit = dafny::parse_unit(weak)?;
                let spec_a = unit.locate_decl(&target).ok().map(|d| d.clauses.clone());
                let spec_b = weak_unit.locate_decl(&target).ok().map(|d| d.clauses.clone());
                let (Some(spec_a), Some(spec_b)) = (spec_a, spec_b) else { continue };
                let verdict = spec_superior(
                    &runner,
                    strong,
                    &target,
                    &spec_a,
                    &spec_b,
                    &config.limits,
                    config.cache_dir.as_deref(),
                );
                println!(
                    "{:<24} {:<10} a=>b={} b=>a={} verifies={}",
                    item.id,
                    verdict.superior,
                    verdict.a_implies_b,
                    verdict.b_implies_a,
                    verdict.code_verifies_under_a
                );
                records.push(serde_json::json!({"item_id": item.id, "verdict": verdict}));
            }
            emit_report(config, "score", &records)?;
            Ok(EXIT_OK)
        }
    }
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<Vec<T>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| anyhow::anyhow!("{}: {e}", path.display())))
        .collect()
}

fn cmd_synth(config: &Config, command: &SynthCommand) -> anyhow::Result<i32> {
    match command {
        SynthCommand::Tags { seed } => {
            let draw = draw_tags(&config.ontology, *seed)?;
            println!("seed: {seed}");
            println!("domain:         {}", draw.domain.join(", "));
            println!("algorithm:      {}", draw.algorithm.join(", "));
            println!("data_structure: {}", draw.data_structure.join(", "));
            emit_report(config, "synth", &[serde_json::to_value(&draw)?])?;
            Ok(EXIT_OK)
        }
        SynthCommand::Problem { seed, llm } => {
            let client = match chat_client(config, llm) {
                Ok(c) => c,
                Err(msg) => return usage(&msg),
            };
            let draw = draw_tags(&config.ontology, *seed)?;
            let (draw, select_run) = select_tags(draw, &client)?;
            println!("selected tags: {}", draw.selected.join(", "));
            let (problem, generate_run) = generate_problem(&draw.selected, &client)?;
            let problem =
                filter_by_tests(problem, &config.runner_cmd, DEFAULT_TEST_TIMEOUT)?;
            println!(
                "{}: pass_rate={:.2?} retained={}",
                problem.title, problem.pass_rate, problem.retained
            );
            let artifact_dir = llm.run_dir.join("artifacts");
            std::fs::create_dir_all(&artifact_dir)?;
            std::fs::write(
                artifact_dir.join(format!("problem-{seed}.json")),
                serde_json::to_string_pretty(&problem)?,
            )?;
            emit_report(
                config,
                "synth",
                &[serde_json::json!({
                    "problem": problem,
                    "runs": [select_run, generate_run],
                })],
            )?;
            Ok(if problem.retained { EXIT_OK } else { EXIT_METRIC })
        }
    }
}

fn cmd_pipeline(config: &Config, command: &PipelineCommand) -> anyhow::Result<i32> {
    let PipelineCommand::Run { corpus: corpus_path, stage, llm } = command;
    let items = load_items(corpus_path)?;
    let client = match chat_client(config, llm) {
        Ok(c) => c,
        Err(msg) => return usage(&msg),
    };
    let artifact_root = llm.run_dir.join("artifacts");
    std::fs::create_dir_all(&artifact_root)?;
    let mut syntax_check = syntax_gate_fn(config);

    let stage_name = match stage {
        Stage::Autoformalize => "autoformalize",
        Stage::NlEquiv => "nl-equiv",
        Stage::Codegen => "codegen",
        Stage::Tagcomp => "tagcomp",
    };
    let mut failures = 0usize;
    let mut records = Vec::new();
    for item in &items {
        let item_dir = artifact_root.join(&item.id);
        let artifact_path = item_dir.join(format!("{stage_name}.json"));
        if artifact_path.exists() {
            println!("{:<24} skip (artifact exists)", item.id);
            continue;
        }
        std::fs::create_dir_all(&item_dir)?;
        let outcome: Result<serde_json::Value, SynthError> = match stage {
            Stage::Autoformalize => pipeline_autoformalize(item, &client, &mut *syntax_check)
                .map(|(spec, run)| serde_json::json!({"spec": spec, "run": run})),
            Stage::NlEquiv => {
                let spec = item
                    .dafny_strong
                    .as_deref()
                    .or(item.dafny_weak.as_deref())
                    .unwrap_or_default()
                    .to_string();
                pipeline_nl_equiv(item, &spec, &client, &config.runner_cmd, DEFAULT_TEST_TIMEOUT)
                    .map(|(report, run)| serde_json::json!({"report": report, "run": run}))
            }
            Stage::Codegen => {
                let spec = item
                    .dafny_strong
                    .as_deref()
                    .or(item.dafny_weak.as_deref())
                    .unwrap_or_default()
                    .to_string();
                pipeline_codegen(item, &spec, &client, &client, &mut *syntax_check)
                    .map(|(code, run)| serde_json::json!({"code": code, "run": run}))
            }
            Stage::Tagcomp => {
                let draw = draw_tags(&config.ontology, config.seed)?;
                select_tags(draw, &client).and_then(|(draw, select_run)| {
                    generate_problem(&draw.selected, &client).and_then(|(problem, gen_run)| {
                        filter_by_tests(problem, &config.runner_cmd, DEFAULT_TEST_TIMEOUT).map(
                            |problem| {
                                serde_json::json!({
                                    "problem": problem,
                                    "runs": [select_run, gen_run],
                                })
                            },
                        )
                    })
                })
            }
        };
        match outcome {
            Ok(artifact) => {
                std::fs::write(&artifact_path, serde_json::to_string_pretty(&artifact)?)?;
                println!("{:<24} ok -> {}", item.id, artifact_path.display());
                records.push(serde_json::json!({"item_id": item.id, "artifact": artifact}));
            }
            Err(SynthError::StageFailed { stage, attempts, reason, run }) => {
                failures += 1;
                println!(
                    "{:<24} stage-failed ({stage}, {attempts} attempts): {reason}",
                    item.id
                );
                for t in &run.transcripts {
                    println!("  transcript: {}/transcripts/{t}.json", llm.run_dir.display());
                }
                records.push(serde_json::json!({
                    "item_id": item.id, "failed": true, "run": run,
                }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    emit_report(config, "pipeline", &records)?;
    Ok(if failures == 0 { EXIT_OK } else { EXIT_METRIC })
}

fn cmd_report(config: &Config, dir: Option<&Path>) -> anyhow::Result<i32> {
    let Some(dir) = dir.or(config.report_dir.as_deref()) else {
        return usage("report requires --dir or --report-dir");
    };
    let mut summary: BTreeMap<String, usize> = BTreeMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
            continue;
        }
        let name = path.file_stem().unwrap().to_string_lossy().into_owned();
        let lines = std::fs::read_to_string(&path)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .count();
        summary.insert(name, lines);
    }
    if summary.is_empty() {
        println!("no reports under {}", dir.display());
    } else {
        println!("{:<16} {:>8}", "report", "records");
        for (name, count) in &summary {
            println!("{:<16} {:>8}", name, count);
        }
    }
    Ok(EXIT_OK)
}
