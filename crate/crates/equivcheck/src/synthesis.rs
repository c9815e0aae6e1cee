//! LLM-orchestrated pipelines: tag-composition problem synthesis,
//! autoformalization of natural-language queries into Dafny contracts,
//! natural-language equivalence checking, and verified code generation.
//!
//! All model traffic goes through [`ChatClient`], which supports three modes:
//! `live` (network), `record` (network + transcript persistence), and
//! `replay` (transcripts only, never touches the network). Replay keys
//! requests by a content hash of the full request, so recorded runs are
//! bit-for-bit reproducible and CI never needs credentials.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{BenchmarkItem, Difficulty, TagCategory, TagOntology, UnitTest};
use crate::verifier::{DafnyRunner, VerifierReport, VerifyLimits, VerifyStatus};

/// Environment variable holding the API key for live/record mode.
pub const ENV_LLM_API_KEY: &str = "EQUIVCHECK_LLM_API_KEY";
/// Environment variable holding the chat-completions endpoint URL.
pub const ENV_LLM_ENDPOINT: &str = "EQUIVCHECK_LLM_ENDPOINT";

/// Candidate tags drawn per category before model selection.
pub const TAGS_PER_CATEGORY: usize = 12;
/// Inclusive bounds on the number of tags the model may select.
pub const MIN_SELECTED_TAGS: usize = 3;
pub const MAX_SELECTED_TAGS: usize = 8;
/// Hard ceiling on autoformalization revise-and-resubmit rounds.
pub const AUTOFORMALIZE_BUDGET: u32 = 10;
/// Hard ceiling on light-model polish rounds during code generation.
pub const POLISH_BUDGET: u32 = 6;
/// Synthesized problems are retained iff pass_rate >= this threshold.
pub const RETENTION_THRESHOLD: f64 = 0.85;
/// Default per-test timeout for the external candidate runner.
pub const DEFAULT_TEST_TIMEOUT: Duration = Duration::from_secs(10);

// ---------------------------------------------------------------------------
// Prompt templates (versioned text assets; ids are embedded in transcripts).
// ---------------------------------------------------------------------------

pub const SELECT_TAGS_TEMPLATE: &str = include_str!("../assets/prompts/select_tags.txt");
pub const GENERATE_PROBLEM_TEMPLATE: &str = include_str!("../assets/prompts/generate_problem.txt");
pub const AUTOFORMALIZE_TEMPLATE: &str = include_str!("../assets/prompts/autoformalize.txt");
pub const AUTOFORMALIZE_RETRY_TEMPLATE: &str =
    include_str!("../assets/prompts/autoformalize_retry.txt");
pub const NL_REWRITE_TEMPLATE: &str = include_str!("../assets/prompts/nl_rewrite.txt");
pub const NL_JUDGE_TEMPLATE: &str = include_str!("../assets/prompts/nl_judge.txt");
pub const SPEC_TO_PYTHON_TEMPLATE: &str = include_str!("../assets/prompts/spec_to_python.txt");
pub const CODEGEN_STRONG_TEMPLATE: &str = include_str!("../assets/prompts/codegen_strong.txt");
pub const CODEGEN_POLISH_TEMPLATE: &str = include_str!("../assets/prompts/codegen_polish.txt");

/// Fill `{{ name }}` placeholders in a template. Unknown placeholders are
/// left intact so drift between templates and call sites is visible.
pub fn render_template(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{{ {name} }}}}"), value);
    }
    out
}

// ---------------------------------------------------------------------------
// Chat client
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage { role: "user".into(), content: content.into() }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage { role: "assistant".into(), content: content.into() }
    }
}

/// A complete, self-describing model request. The content hash of this
/// structure names its transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    pub template_id: String,
    pub messages: Vec<ChatMessage>,
}

/// One persisted request/response pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Transcript {
    pub request: ChatRequest,
    pub response: String,
}

/// Hex SHA-256 over the canonical JSON serialization of the request.
pub fn request_hash(request: &ChatRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("request serializes");
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn transcript_file(dir: &Path, hash: &str, index: u32) -> PathBuf {
    dir.join(format!("{hash}-{index}.json"))
}

/// Persist a transcript under `dir` at the next free index for its hash.
/// Returns the transcript id (`<hash>-<index>`). Used by record mode and by
/// tests building replay fixtures.
pub fn write_transcript(
    dir: &Path,
    request: &ChatRequest,
    response: &str,
) -> std::io::Result<String> {
    std::fs::create_dir_all(dir)?;
    let hash = request_hash(request);
    let mut index = 0u32;
    while transcript_file(dir, &hash, index).exists() {
        index += 1;
    }
    let transcript = Transcript { request: request.clone(), response: response.to_string() };
    let text = serde_json::to_string_pretty(&transcript).expect("transcript serializes");
    let mut f = std::fs::File::create(transcript_file(dir, &hash, index))?;
    f.write_all(text.as_bytes())?;
    Ok(format!("{hash}-{index}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChatMode {
    Live,
    Record,
    Replay,
}

#[derive(Debug, thiserror::Error)]
pub enum ChatError {
    #[error("no transcript for request {hash} (occurrence {index}) in {dir}")]
    MissingTranscript { hash: String, index: u32, dir: String },
    #[error("corrupt transcript {path}: {reason}")]
    CorruptTranscript { path: String, reason: String },
    #[error("missing credential: set {0}")]
    MissingCredential(&'static str),
    #[error("llm endpoint error: {0}")]
    Network(String),
    #[error("transcript io: {0}")]
    Io(#[from] std::io::Error),
}

/// Provider-agnostic chat client: messages in, text out.
pub struct ChatClient {
    pub model: String,
    pub temperature: f64,
    /// Re-prompt budget for structured-output stages (tag selection,
    /// problem generation, judge parsing).
    pub max_attempts: u32,
    mode: ChatMode,
    transcripts_dir: PathBuf,
    endpoint: Option<String>,
    api_key: Option<String>,
    /// Per-hash occurrence counters, so repeated identical requests replay
    /// (and record) distinct transcript files in order.
    counters: Mutex<BTreeMap<String, u32>>,
    /// Global rate limit for live traffic.
    min_interval: Duration,
    last_request: Mutex<Option<Instant>>,
}

impl ChatClient {
    fn new(mode: ChatMode, transcripts_dir: PathBuf) -> Self {
        ChatClient {
            model: "claude-4-sonnet".into(),
            temperature: 0.0,
            max_attempts: 3,
            mode,
            transcripts_dir,
            endpoint: std::env::var(ENV_LLM_ENDPOINT).ok(),
            api_key: std::env::var(ENV_LLM_API_KEY).ok(),
            counters: Mutex::new(BTreeMap::new()),
            min_interval: Duration::from_millis(500),
            last_request: Mutex::new(None),
        }
    }

    /// Replay-only client: answers every request from `transcripts_dir`,
    /// never touching the network.
    pub fn replay(transcripts_dir: impl Into<PathBuf>) -> Self {
        Self::new(ChatMode::Replay, transcripts_dir.into())
    }

    /// Live client that persists every request/response pair.
    pub fn record(transcripts_dir: impl Into<PathBuf>) -> Self {
        Self::new(ChatMode::Record, transcripts_dir.into())
    }

    /// Live client without persistence.
    pub fn live() -> Self {
        Self::new(ChatMode::Live, PathBuf::new())
    }

    pub fn mode(&self) -> ChatMode {
        self.mode
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn with_max_attempts(mut self, max_attempts: u32) -> Self {
        self.max_attempts = max_attempts.max(1);
        self
    }

    pub fn with_min_interval(mut self, min_interval: Duration) -> Self {
        self.min_interval = min_interval;
        self
    }

    /// Build a fresh single-turn request carrying this client's model and
    /// temperature.
    pub fn request(&self, template_id: &str, user_content: String) -> ChatRequest {
        ChatRequest {
            model: self.model.clone(),
            temperature: self.temperature,
            template_id: template_id.to_string(),
            messages: vec![ChatMessage::user(user_content)],
        }
    }

    fn next_index(&self, hash: &str) -> u32 {
        let mut counters = self.counters.lock().expect("counter lock");
        let slot = counters.entry(hash.to_string()).or_insert(0);
        let index = *slot;
        *slot += 1;
        index
    }

    /// Issue one request, returning the response text and the transcript id
    /// (`<hash>-<occurrence>`) identifying it.
    pub fn chat(&self, request: &ChatRequest) -> Result<ChatTurn, ChatError> {
        let hash = request_hash(request);
        let index = self.next_index(&hash);
        match self.mode {
            ChatMode::Replay => {
                let path = transcript_file(&self.transcripts_dir, &hash, index);
                let text = std::fs::read_to_string(&path).map_err(|_| {
                    ChatError::MissingTranscript {
                        hash: hash.clone(),
                        index,
                        dir: self.transcripts_dir.display().to_string(),
                    }
                })?;
                let transcript: Transcript =
                    serde_json::from_str(&text).map_err(|e| ChatError::CorruptTranscript {
                        path: path.display().to_string(),
                        reason: e.to_string(),
                    })?;
                Ok(ChatTurn {
                    response: transcript.response,
                    transcript_id: format!("{hash}-{index}"),
                })
            }
            ChatMode::Live | ChatMode::Record => {
                let response = self.live_post(request)?;
                let id = if self.mode == ChatMode::Record {
                    write_transcript(&self.transcripts_dir, request, &response)?
                } else {
                    format!("{hash}-{index}")
                };
                Ok(ChatTurn { response, transcript_id: id })
            }
        }
    }

    fn live_post(&self, request: &ChatRequest) -> Result<String, ChatError> {
        let endpoint = self
            .endpoint
            .clone()
            .ok_or(ChatError::MissingCredential(ENV_LLM_ENDPOINT))?;
        let api_key = self
            .api_key
            .clone()
            .ok_or(ChatError::MissingCredential(ENV_LLM_API_KEY))?;

        // Global rate limit: at most one request per min_interval.
        {
            let mut last = self.last_request.lock().expect("rate lock");
            if let Some(prev) = *last {
                let elapsed = prev.elapsed();
                if elapsed < self.min_interval {
                    std::thread::sleep(self.min_interval - elapsed);
                }
            }
            *last = Some(Instant::now());
        }

        let body = serde_json::json!({
            "model": request.model,
            "temperature": request.temperature,
            "messages": request.messages,
        });
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(300))
            .build()
            .map_err(|e| ChatError::Network(e.to_string()))?;
        let resp = client
            .post(&endpoint)
            .bearer_auth(api_key)
            .json(&body)
            .send()
            .map_err(|e| ChatError::Network(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ChatError::Network(e.to_string()))?;
        if !status.is_success() {
            return Err(ChatError::Network(format!("HTTP {status}: {text}")));
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ChatError::Network(e.to_string()))?;
        // Tolerate the two common response shapes: OpenAI-style
        // choices[0].message.content and Anthropic-style content[0].text.
        let content = value
            .pointer("/choices/0/message/content")
            .or_else(|| value.pointer("/content/0/text"))
            .and_then(|v| v.as_str())
            .map(str::to_string);
        content.ok_or_else(|| ChatError::Network(format!("unrecognized response shape: {text}")))
    }
}

#[derive(Debug, Clone)]
pub struct ChatTurn {
    pub response: String,
    pub transcript_id: String,
}

/// Extend a prior request with the model's reply and a follow-up user turn.
/// Re-prompt loops use this so each round is a distinct, replayable request.
pub fn followup_request(prev: &ChatRequest, assistant: &str, user: &str) -> ChatRequest {
    let mut next = prev.clone();
    next.messages.push(ChatMessage::assistant(assistant));
    next.messages.push(ChatMessage::user(user));
    next
}

// ---------------------------------------------------------------------------
// Pipeline bookkeeping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Completed,
    Failed,
}

/// Record of one pipeline stage: which transcripts it consumed, how many
/// attempts each phase took, and what it produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineRun {
    pub stage: String,
    pub attempts: BTreeMap<String, u32>,
    pub transcripts: Vec<String>,
    pub artifact: Option<String>,
    pub status: StageStatus,
}

impl PipelineRun {
    fn finish(mut self, status: StageStatus, artifact: Option<String>) -> Self {
        self.status = status;
        self.artifact = artifact;
        self.assert_budgets();
        self
    }

    /// Budget ceilings are hard invariants: no run may record an
    /// autoformalization attempt beyond 10 or a polish round beyond 6.
    pub fn assert_budgets(&self) {
        if let Some(n) = self.attempts.get("autoformalize") {
            assert!(*n <= AUTOFORMALIZE_BUDGET, "autoformalize budget exceeded: {n}");
        }
        if let Some(n) = self.attempts.get("polish") {
            assert!(*n <= POLISH_BUDGET, "polish budget exceeded: {n}");
        }
    }

    fn started(stage: &str) -> Self {
        PipelineRun {
            stage: stage.to_string(),
            attempts: BTreeMap::new(),
            transcripts: Vec::new(),
            artifact: None,
            status: StageStatus::Failed,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("tag pool `{category:?}` has {len} tags; need at least {TAGS_PER_CATEGORY}")]
    PoolTooSmall { category: TagCategory, len: usize },
    #[error("expected {MIN_SELECTED_TAGS}-{MAX_SELECTED_TAGS} tags, got {0}")]
    BadTagCount(usize),
    #[error("item `{0}` has no query text")]
    MissingQuery(String),
    #[error("item `{0}` has no reference solution")]
    MissingReference(String),
    #[error("stage `{stage}` failed after {attempts} attempt(s): {reason}")]
    StageFailed { stage: String, attempts: u32, reason: String, run: Box<PipelineRun> },
    #[error("candidate runner failed: {0}")]
    ToolError(String),
    #[error(transparent)]
    Chat(#[from] ChatError),
}

fn stage_failed(run: PipelineRun, reason: String) -> SynthError {
    let attempts = run.attempts.values().sum();
    let run = run.finish(StageStatus::Failed, None);
    SynthError::StageFailed { stage: run.stage.clone(), attempts, reason, run: Box::new(run) }
}

// ---------------------------------------------------------------------------
// Tag composition
// ---------------------------------------------------------------------------

/// A candidate draw of 12 tags per category, plus the model's 3–8 selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TagDraw {
    pub seed: u64,
    pub domain: Vec<String>,
    pub algorithm: Vec<String>,
    pub data_structure: Vec<String>,
    pub selected: Vec<String>,
    pub difficulty: Option<Difficulty>,
}

impl TagDraw {
    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.domain
            .iter()
            .chain(&self.algorithm)
            .chain(&self.data_structure)
            .map(String::as_str)
    }
}

/// Draw 12 distinct tags from each ontology pool, deterministically in the
/// seed. A pool of exactly 12 is used verbatim.
pub fn draw_tags(ontology: &TagOntology, seed: u64) -> Result<TagDraw, SynthError> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut draw_pool = |category: TagCategory| -> Result<Vec<String>, SynthError> {
        let pool = ontology.pool(category);
        if pool.len() < TAGS_PER_CATEGORY {
            return Err(SynthError::PoolTooSmall { category, len: pool.len() });
        }
        if pool.len() == TAGS_PER_CATEGORY {
            return Ok(pool.to_vec());
        }
        let picks = rand::seq::index::sample(&mut rng, pool.len(), TAGS_PER_CATEGORY);
        Ok(picks.iter().map(|i| pool[i].clone()).collect())
    };
    Ok(TagDraw {
        seed,
        domain: draw_pool(TagCategory::Domain)?,
        algorithm: draw_pool(TagCategory::Algorithm)?,
        data_structure: draw_pool(TagCategory::DataStructure)?,
        selected: Vec::new(),
        difficulty: None,
    })
}

pub fn select_tags_request(client: &ChatClient, draw: &TagDraw) -> ChatRequest {
    let content = render_template(
        SELECT_TAGS_TEMPLATE,
        &[
            ("domain_tags", &draw.domain.join(", ")),
            ("algo_tags", &draw.algorithm.join(", ")),
            ("data_tags", &draw.data_structure.join(", ")),
        ],
    );
    client.request("select_tags@v1", content)
}

/// Fixed corrective follow-up used when a selection response is rejected.
/// Constant on purpose: replay fixtures can reconstruct the retry request.
pub const SELECT_TAGS_RETRY_MESSAGE: &str = "Your previous selection was invalid. Respond again \
     in the required output format, selecting between 3 and 8 tags drawn only from the provided \
     candidate tags.";

/// Strip trailing commas before `}` / `]` so that model output following the
/// prompt's example format (which itself contains one) still parses.
fn normalize_json(text: &str) -> String {
    let re = regex::Regex::new(r",\s*([}\]])").expect("static regex");
    re.replace_all(text, "$1").into_owned()
}

/// Extract the first balanced `{ ... }` object from free-form text.
fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escape = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            if escape {
                escape = false;
            } else if c == '\\' {
                escape = true;
            } else if c == '"' {
                in_string = false;
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + c.len_utf8()]);
                }
            }
            _ => {}
        }
    }
    None
}

/// Text between the `<|Problem Begin|>` / `<|Problem End|>` markers, or the
/// whole input when the markers are absent.
pub fn extract_marked(text: &str) -> &str {
    const BEGIN: &str = "<|Problem Begin|>";
    const END: &str = "<|Problem End|>";
    let Some(b) = text.find(BEGIN) else { return text };
    let inner = &text[b + BEGIN.len()..];
    match inner.find(END) {
        Some(e) => &inner[..e],
        None => inner,
    }
}

/// The body of the first ```lang fenced block; falls back to any fenced
/// block, then to the whole text.
pub fn extract_code_fence<'a>(text: &'a str, lang: &str) -> &'a str {
    let tagged = format!("```{lang}");
    let start = text
        .find(&tagged)
        .map(|i| i + tagged.len())
        .or_else(|| text.find("```").map(|i| i + 3));
    let Some(start) = start else { return text };
    let rest = &text[start..];
    let rest = rest.strip_prefix('\n').unwrap_or(rest);
    match rest.find("```") {
        Some(end) => &rest[..end],
        None => rest,
    }
}

fn parse_selection(response: &str, draw: &TagDraw) -> Result<(Vec<String>, Option<Difficulty>), String> {
    let json = extract_json_object(extract_marked(response))
        .ok_or_else(|| "no JSON object in response".to_string())?;
    let value: serde_json::Value =
        serde_json::from_str(&normalize_json(json)).map_err(|e| format!("invalid JSON: {e}"))?;
    let all_tags = value
        .get("all_tags")
        .and_then(|v| v.as_str())
        .ok_or_else(|| "missing `all_tags`".to_string())?;
    let tags: Vec<String> = all_tags
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect();
    if tags.len() < MIN_SELECTED_TAGS || tags.len() > MAX_SELECTED_TAGS {
        return Err(format!(
            "selected {} tags; must be {MIN_SELECTED_TAGS}-{MAX_SELECTED_TAGS}",
            tags.len()
        ));
    }
    let candidates: std::collections::BTreeSet<&str> = draw.candidates().collect();
    for tag in &tags {
        if !candidates.contains(tag.as_str()) {
            return Err(format!("tag `{tag}` is not among the drawn candidates"));
        }
    }
    let mut seen = std::collections::BTreeSet::new();
    for tag in &tags {
        if !seen.insert(tag.as_str()) {
            return Err(format!("tag `{tag}` selected twice"));
        }
    }
    let difficulty = value
        .get("Difficulty Level")
        .and_then(|v| v.as_str())
        .and_then(parse_difficulty);
    Ok((tags, difficulty))
}

fn parse_difficulty(s: &str) -> Option<Difficulty> {
    match s.trim().to_lowercase().as_str() {
        "easy" => Some(Difficulty::Easy),
        "medium" => Some(Difficulty::Medium),
        "hard" => Some(Difficulty::Hard),
        _ => None,
    }
}

/// Ask the model to pick 3–8 compatible tags from the draw, re-prompting on
/// invalid responses up to the client's attempt budget.
pub fn select_tags(
    mut draw: TagDraw,
    client: &ChatClient,
) -> Result<(TagDraw, PipelineRun), SynthError> {
    let mut run = PipelineRun::started("select_tags");
    let mut request = select_tags_request(client, &draw);
    let mut last_error = String::new();
    for attempt in 1..=client.max_attempts {
        run.attempts.insert("select_tags".into(), attempt);
        let turn = client.chat(&request)?;
        run.transcripts.push(turn.transcript_id.clone());
        match parse_selection(&turn.response, &draw) {
            Ok((tags, difficulty)) => {
                draw.selected = tags;
                draw.difficulty = difficulty;
                let run =
                    run.finish(StageStatus::Completed, Some(draw.selected.join(", ")));
                return Ok((draw, run));
            }
            Err(reason) => {
                last_error = reason;
                request = followup_request(&request, &turn.response, SELECT_TAGS_RETRY_MESSAGE);
            }
        }
    }
    Err(stage_failed(run, last_error))
}

// ---------------------------------------------------------------------------
// Problem generation and test filtering
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemExample {
    pub input: String,
    pub output: String,
    #[serde(default)]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedProblem {
    pub title: String,
    pub difficulty: Difficulty,
    pub description: String,
    #[serde(default)]
    pub input_format: Option<String>,
    #[serde(default)]
    pub output_format: Option<String>,
    #[serde(default)]
    pub constraints: Vec<String>,
    #[serde(default)]
    pub examples: Vec<ProblemExample>,
    #[serde(default)]
    pub unit_tests: Vec<UnitTest>,
    #[serde(default)]
    pub candidate_solution: Option<String>,
    #[serde(default)]
    pub tags_used: Vec<String>,
    /// Filled by [`filter_by_tests`].
    #[serde(default)]
    pub pass_rate: Option<f64>,
    #[serde(default)]
    pub retained: bool,
    #[serde(default)]
    pub filter_diagnostic: Option<String>,
}

pub fn generate_problem_request(client: &ChatClient, tags: &[String]) -> ChatRequest {
    let content = render_template(GENERATE_PROBLEM_TEMPLATE, &[("tags", &tags.join(", "))]);
    client.request("generate_problem@v1", content)
}

/// Fixed corrective follow-up for malformed problem generations.
pub const GENERATE_PROBLEM_RETRY_MESSAGE: &str = "Your previous response did not match the \
     required output format. Respond again with the complete problem JSON between the \
     <|Problem Begin|> and <|Problem End|> markers, including a `difficulty` of easy, medium, \
     or hard.";

fn parse_problem(response: &str) -> Result<SynthesizedProblem, String> {
    let json = extract_json_object(extract_marked(response))
        .ok_or_else(|| "no JSON object in response".to_string())?;
    let value: serde_json::Value =
        serde_json::from_str(&normalize_json(json)).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or_else(|| "response is not an object".to_string())?;
    let text = |key: &str| obj.get(key).and_then(|v| v.as_str()).map(str::to_string);
    let difficulty = text("difficulty")
        .ok_or_else(|| "missing `difficulty`".to_string())
        .and_then(|d| {
            parse_difficulty(&d).ok_or_else(|| format!("difficulty `{d}` is not easy/medium/hard"))
        })?;
    let string_list = |key: &str| -> Vec<String> {
        obj.get(key)
            .and_then(|v| v.as_array())
            .map(|a| a.iter().filter_map(|v| v.as_str().map(str::to_string)).collect())
            .unwrap_or_default()
    };
    let examples: Vec<ProblemExample> = obj
        .get("examples")
        .cloned()
        .map(|v| serde_json::from_value(v).map_err(|e| format!("bad `examples`: {e}")))
        .transpose()?
        .unwrap_or_default();
    let unit_tests: Vec<UnitTest> = obj
        .get("unit_tests")
        .cloned()
        .map(|v| serde_json::from_value(v).map_err(|e| format!("bad `unit_tests`: {e}")))
        .transpose()?
        .unwrap_or_else(|| {
            // Fall back to the worked examples when no dedicated test set
            // was produced.
            examples
                .iter()
                .map(|e| UnitTest { input: e.input.clone(), expected: e.output.clone() })
                .collect()
        });
    Ok(SynthesizedProblem {
        title: text("title").ok_or_else(|| "missing `title`".to_string())?,
        difficulty,
        description: text("description").ok_or_else(|| "missing `description`".to_string())?,
        input_format: text("input_format"),
        output_format: text("output_format"),
        constraints: string_list("constraints"),
        examples,
        unit_tests,
        candidate_solution: text("candidate_solution").or_else(|| text("solution")),
        tags_used: string_list("tags_used"),
        pass_rate: None,
        retained: false,
        filter_diagnostic: None,
    })
}

/// Generate a full problem from 3–8 selected tags, re-prompting on schema
/// violations up to the client's attempt budget.
pub fn generate_problem(
    tags: &[String],
    client: &ChatClient,
) -> Result<(SynthesizedProblem, PipelineRun), SynthError> {
    if tags.len() < MIN_SELECTED_TAGS || tags.len() > MAX_SELECTED_TAGS {
        return Err(SynthError::BadTagCount(tags.len()));
    }
    let mut run = PipelineRun::started("generate_problem");
    let mut request = generate_problem_request(client, tags);
    let mut last_error = String::new();
    for attempt in 1..=client.max_attempts {
        run.attempts.insert("generate_problem".into(), attempt);
        let turn = client.chat(&request)?;
        run.transcripts.push(turn.transcript_id.clone());
        match parse_problem(&turn.response) {
            Ok(problem) => {
                let run = run.finish(StageStatus::Completed, Some(problem.title.clone()));
                return Ok((problem, run));
            }
            Err(reason) => {
                last_error = reason;
                request =
                    followup_request(&request, &turn.response, GENERATE_PROBLEM_RETRY_MESSAGE);
            }
        }
    }
    Err(stage_failed(run, last_error))
}

// ---------------------------------------------------------------------------
// External candidate runner
// ---------------------------------------------------------------------------

/// Run one shell command with a wall-clock deadline, killing the whole
/// process group on expiry. Returns `Ok(success)` or a tool error when the
/// command cannot be spawned / is missing.
fn run_with_deadline(command: &str, timeout: Duration) -> Result<bool, SynthError> {
    let mut cmd = Command::new("sh");
    cmd.arg("-c").arg(command);
    cmd.stdin(Stdio::null()).stdout(Stdio::null()).stderr(Stdio::null());
    #[cfg(unix)]
    {
        use std::os::unix::process::CommandExt;
        cmd.process_group(0);
    }
    let mut child = cmd.spawn().map_err(|e| SynthError::ToolError(e.to_string()))?;
    let deadline = Instant::now() + timeout;
    loop {
        match child.try_wait() {
            Ok(Some(status)) => {
                if status.code() == Some(127) {
                    return Err(SynthError::ToolError(format!("runner not found: {command}")));
                }
                return Ok(status.success());
            }
            Ok(None) => {
                if Instant::now() >= deadline {
                    #[cfg(unix)]
                    unsafe {
                        libc::kill(-(child.id() as i32), libc::SIGKILL);
                    }
                    let _ = child.kill();
                    let _ = child.wait();
                    return Ok(false);
                }
                std::thread::sleep(Duration::from_millis(10));
            }
            Err(e) => return Err(SynthError::ToolError(e.to_string())),
        }
    }
}

/// Execute `code` against each test with the configured runner command
/// (`{code_file}` / `{test_file}` placeholders). Returns (passed, total).
/// Crashes and timeouts count as failures; a missing runner is a tool error.
pub fn run_candidate_tests(
    code: &str,
    tests: &[UnitTest],
    runner_cmd: &str,
    timeout: Duration,
) -> Result<(usize, usize), SynthError> {
    let dir = tempfile::tempdir().map_err(|e| SynthError::ToolError(e.to_string()))?;
    let code_file = dir.path().join("candidate.py");
    std::fs::write(&code_file, code).map_err(|e| SynthError::ToolError(e.to_string()))?;
    let mut passed = 0usize;
    for (i, test) in tests.iter().enumerate() {
        let test_file = dir.path().join(format!("test_{i}.json"));
        let payload = serde_json::to_string(test).expect("test serializes");
        std::fs::write(&test_file, payload).map_err(|e| SynthError::ToolError(e.to_string()))?;
        let command = runner_cmd
            .replace("{code_file}", &code_file.display().to_string())
            .replace("{test_file}", &test_file.display().to_string());
        if run_with_deadline(&command, timeout)? {
            passed += 1;
        }
    }
    Ok((passed, tests.len()))
}

/// Fill `pass_rate` and the retention flag by executing the candidate
/// solution against the problem's unit tests.
pub fn filter_by_tests(
    mut problem: SynthesizedProblem,
    runner_cmd: &str,
    timeout: Duration,
) -> Result<SynthesizedProblem, SynthError> {
    if problem.unit_tests.is_empty() {
        problem.pass_rate = Some(0.0);
        problem.retained = false;
        problem.filter_diagnostic = Some("no tests".into());
        return Ok(problem);
    }
    let Some(code) = problem.candidate_solution.clone() else {
        problem.pass_rate = Some(0.0);
        problem.retained = false;
        problem.filter_diagnostic = Some("no candidate solution".into());
        return Ok(problem);
    };
    let (passed, total) = run_candidate_tests(&code, &problem.unit_tests, runner_cmd, timeout)?;
    let pass_rate = passed as f64 / total as f64;
    problem.pass_rate = Some(pass_rate);
    problem.retained = pass_rate >= RETENTION_THRESHOLD;
    problem.filter_diagnostic = None;
    Ok(problem)
}

// ---------------------------------------------------------------------------
// Pipeline 1: autoformalization
// ---------------------------------------------------------------------------

pub fn autoformalize_request(client: &ChatClient, query: &str) -> ChatRequest {
    let content = render_template(AUTOFORMALIZE_TEMPLATE, &[("query", query)]);
    client.request("autoformalize@v1", content)
}

pub fn autoformalize_retry_message(diagnostics: &str) -> String {
    render_template(AUTOFORMALIZE_RETRY_TEMPLATE, &[("diagnostics", diagnostics)])
}

/// A syntax gate for generated Dafny text: `Ok(())` when the file has no
/// parse or resolution errors, `Err(diagnostics)` otherwise. Injectable so
/// pipelines are testable without a Dafny installation.
pub type SyntaxCheck<'a> = dyn FnMut(&str) -> Result<(), String> + 'a;

/// Syntax gate backed by a real Dafny runner. Verification failures are
/// acceptable here — only parse/resolution errors trigger a retry.
pub fn dafny_syntax_check<'a>(
    runner: &'a DafnyRunner,
    limits: &'a VerifyLimits,
) -> impl FnMut(&str) -> Result<(), String> + 'a {
    move |source: &str| {
        let report = runner.verify(source, limits);
        syntax_gate(&report)
    }
}

/// Shared classification for syntax gates built on verifier reports.
pub fn syntax_gate(report: &VerifierReport) -> Result<(), String> {
    match report.status {
        VerifyStatus::ParseError | VerifyStatus::ResolveError | VerifyStatus::ToolError => {
            let mut lines: Vec<String> = report
                .diagnostics
                .iter()
                .map(|d| format!("({},{}): {}", d.line, d.column, d.message))
                .collect();
            if lines.is_empty() {
                lines.push(format!("{:?}", report.status));
            }
            Err(lines.join("\n"))
        }
        _ => Ok(()),
    }
}

/// Translate a natural-language query into a Dafny specification, revising
/// on parse/resolution errors up to 10 rounds.
pub fn pipeline_autoformalize(
    item: &BenchmarkItem,
    client: &ChatClient,
    syntax_check: &mut SyntaxCheck<'_>,
) -> Result<(String, PipelineRun), SynthError> {
    let query = item
        .query
        .as_deref()
        .ok_or_else(|| SynthError::MissingQuery(item.id.clone()))?;
    let mut run = PipelineRun::started("autoformalize");
    let mut request = autoformalize_request(client, query);
    let mut last_error = String::new();
    for attempt in 1..=AUTOFORMALIZE_BUDGET {
        run.attempts.insert("autoformalize".into(), attempt);
        let turn = client.chat(&request)?;
        run.transcripts.push(turn.transcript_id.clone());
        let spec = extract_code_fence(&turn.response, "dafny").trim().to_string();
        match syntax_check(&spec) {
            Ok(()) => {
                let run = run.finish(StageStatus::Completed, Some(spec.clone()));
                return Ok((spec, run));
            }
            Err(diagnostics) => {
                last_error = diagnostics.clone();
                request = followup_request(
                    &request,
                    &turn.response,
                    &autoformalize_retry_message(&diagnostics),
                );
            }
        }
    }
    Err(stage_failed(run, last_error))
}

// ---------------------------------------------------------------------------
// Pipeline 2: NL equivalence
// ---------------------------------------------------------------------------

pub fn nl_rewrite_request(client: &ChatClient, spec: &str) -> ChatRequest {
    client.request("nl_rewrite@v1", render_template(NL_REWRITE_TEMPLATE, &[("spec", spec)]))
}

pub fn nl_judge_request(client: &ChatClient, original: &str, rewritten: &str) -> ChatRequest {
    client.request(
        "nl_judge@v1",
        render_template(NL_JUDGE_TEMPLATE, &[("original", original), ("rewritten", rewritten)]),
    )
}

pub fn spec_to_python_request(client: &ChatClient, spec: &str) -> ChatRequest {
    client.request(
        "spec_to_python@v1",
        render_template(SPEC_TO_PYTHON_TEMPLATE, &[("spec", spec)]),
    )
}

/// Fixed corrective follow-up when a judge reply is neither yes nor no.
pub const NL_JUDGE_RETRY_MESSAGE: &str = "Answer with a single word: yes or no.";

fn parse_yes_no(response: &str) -> Option<bool> {
    let first = response
        .trim()
        .split(|c: char| !c.is_alphabetic())
        .find(|w| !w.is_empty())?
        .to_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlEquivReport {
    pub judge_verdict: bool,
    pub test_pass_rate: f64,
}

/// Two-step spec-vs-intent check: (1) rewrite the spec as prose and judge it
/// against the original query; (2) translate the spec alone to Python and
/// run it against the item's ground-truth unit tests.
pub fn pipeline_nl_equiv(
    item: &BenchmarkItem,
    spec: &str,
    client: &ChatClient,
    runner_cmd: &str,
    timeout: Duration,
) -> Result<(NlEquivReport, PipelineRun), SynthError> {
    let query = item
        .query
        .as_deref()
        .ok_or_else(|| SynthError::MissingQuery(item.id.clone()))?;
    let mut run = PipelineRun::started("nl_equiv");

    // Step 1a: rewrite the spec as a natural-language description.
    let rewrite = client.chat(&nl_rewrite_request(client, spec))?;
    run.transcripts.push(rewrite.transcript_id.clone());
    run.attempts.insert("rewrite".into(), 1);

    // Step 1b: binarized equivalence judgment.
    let mut request = nl_judge_request(client, query, rewrite.response.trim());
    let mut verdict = None;
    for attempt in 1..=client.max_attempts {
        run.attempts.insert("judge".into(), attempt);
        let turn = client.chat(&request)?;
        run.transcripts.push(turn.transcript_id.clone());
        match parse_yes_no(&turn.response) {
            Some(v) => {
                verdict = Some(v);
                break;
            }
            None => request = followup_request(&request, &turn.response, NL_JUDGE_RETRY_MESSAGE),
        }
    }
    let Some(judge_verdict) = verdict else {
        return Err(stage_failed(run, "judge never answered yes or no".into()));
    };

    // Step 2: spec → Python, executed against the ground-truth tests.
    let translation = client.chat(&spec_to_python_request(client, spec))?;
    run.transcripts.push(translation.transcript_id.clone());
    run.attempts.insert("spec_to_python".into(), 1);
    let python = extract_code_fence(&translation.response, "python").trim().to_string();
    let test_pass_rate = if item.unit_tests.is_empty() {
        0.0
    } else {
        let (passed, total) =
            run_candidate_tests(&python, &item.unit_tests, runner_cmd, timeout)?;
        passed as f64 / total as f64
    };

    let report = NlEquivReport { judge_verdict, test_pass_rate };
    let run = run.finish(
        StageStatus::Completed,
        Some(serde_json::to_string(&report).expect("report serializes")),
    );
    Ok((report, run))
}

// ---------------------------------------------------------------------------
// Pipeline 3: verified code generation
// ---------------------------------------------------------------------------

pub fn codegen_strong_request(
    client: &ChatClient,
    query: &str,
    spec: &str,
    reference: &str,
) -> ChatRequest {
    client.request(
        "codegen_strong@v1",
        render_template(
            CODEGEN_STRONG_TEMPLATE,
            &[("query", query), ("spec", spec), ("reference", reference)],
        ),
    )
}

pub fn codegen_polish_request(client: &ChatClient, code: &str, diagnostics: &str) -> ChatRequest {
    client.request(
        "codegen_polish@v1",
        render_template(CODEGEN_POLISH_TEMPLATE, &[("code", code), ("diagnostics", diagnostics)]),
    )
}

/// One strong-model draft, then up to six light-model polish rounds driven
/// by verifier diagnostics. `verify_check` returns `Ok(())` when the program
/// verifies and `Err(diagnostics)` otherwise.
pub fn pipeline_codegen(
    item: &BenchmarkItem,
    spec: &str,
    strong_client: &ChatClient,
    light_client: &ChatClient,
    verify_check: &mut SyntaxCheck<'_>,
) -> Result<(String, PipelineRun), SynthError> {
    let query = item.query.as_deref().unwrap_or_default();
    let reference = item
        .reference_solution
        .as_ref()
        .ok_or_else(|| SynthError::MissingReference(item.id.clone()))?;
    let mut run = PipelineRun::started("codegen");

    let draft_turn = strong_client.chat(&codegen_strong_request(
        strong_client,
        query,
        spec,
        &reference.source,
    ))?;
    run.transcripts.push(draft_turn.transcript_id.clone());
    run.attempts.insert("strong".into(), 1);
    run.attempts.insert("polish".into(), 0);
    let mut code = extract_code_fence(&draft_turn.response, "dafny").trim().to_string();

    let mut diagnostics = match verify_check(&code) {
        Ok(()) => {
            let run = run.finish(StageStatus::Completed, Some(code.clone()));
            return Ok((code, run));
        }
        Err(d) => d,
    };

    for round in 1..=POLISH_BUDGET {
        run.attempts.insert("polish".into(), round);
        let turn = light_client.chat(&codegen_polish_request(light_client, &code, &diagnostics))?;
        run.transcripts.push(turn.transcript_id.clone());
        code = extract_code_fence(&turn.response, "dafny").trim().to_string();
        match verify_check(&code) {
            Ok(()) => {
                let run = run.finish(StageStatus::Completed, Some(code.clone()));
                return Ok((code, run));
            }
            Err(d) => diagnostics = d,
        }
    }
    Err(stage_failed(run, diagnostics))
}
