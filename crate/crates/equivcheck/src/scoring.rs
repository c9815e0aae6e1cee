//! Metrics: the two-direction equivalence verdict and corpus score,
//! spec-superior comparison, pass@k, exact-match aggregation, and
//! Radon-compatible cyclomatic complexity for Python sources.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{BenchmarkItem, Variant};
use crate::dafny::{self, ClauseSet, DeclKind, SourceUnit};
use crate::harness::{self, HarnessError, ImplicationDirection};
use crate::parallel;
use crate::verifier::{DafnyRunner, VerifierReport, VerifyLimits, VerifyStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquivReason {
    Ok,
    D1Failed,
    D2Failed,
    VacuousSpec,
    Unsupported,
    Timeout,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceVerdict {
    pub item_id: String,
    /// Code ⇒ spec: the annotated program verifies as-is.
    pub direction1: Option<VerifierReport>,
    /// Spec ⇒ code: the unit augmented with check methods verifies.
    pub direction2: Option<VerifierReport>,
    pub equivalent: bool,
    pub reason: EquivReason,
    pub detail: Option<String>,
}

impl EquivalenceVerdict {
    fn failed(item_id: &str, reason: EquivReason, detail: impl Into<String>) -> Self {
        EquivalenceVerdict {
            item_id: item_id.to_string(),
            direction1: None,
            direction2: None,
            equivalent: false,
            reason,
            detail: Some(detail.into()),
        }
    }
}

/// Direction-2 targets: body-bearing methods carrying at least one ensures
/// clause. Generated check methods (no ensures) never self-select.
pub fn equiv_targets(unit: &SourceUnit) -> Vec<String> {
    unit.decls()
        .iter()
        .filter(|d| {
            d.kind == DeclKind::Method
                && d.body_span.is_some()
                && !d.clauses.ensures.is_empty()
        })
        .map(|d| d.name.clone())
        .collect()
}

/// Run the full two-direction equivalence check on one Dafny source.
pub fn check_equiv_source(
    runner: &DafnyRunner,
    item_id: &str,
    source: &str,
    limits: &VerifyLimits,
    cache_dir: Option<&Path>,
) -> EquivalenceVerdict {
    let unit = match dafny::parse_unit(source) {
        Ok(unit) => unit,
        Err(e) => {
            return EquivalenceVerdict::failed(
                item_id,
                EquivReason::Unsupported,
                format!("source does not parse: {e}"),
            )
        }
    };
    let targets = equiv_targets(&unit);
    if targets.is_empty() {
        return EquivalenceVerdict::failed(
            item_id,
            EquivReason::VacuousSpec,
            "no body-bearing method carries an ensures clause",
        );
    }

    let verify = |src: &str| match cache_dir {
        Some(dir) => runner.cached_verify(src, limits, dir),
        None => runner.verify(src, limits),
    };

    let d1 = verify(source);
    if d1.status != VerifyStatus::Verified {
        let reason = if d1.status == VerifyStatus::Timeout {
            EquivReason::Timeout
        } else {
            EquivReason::D1Failed
        };
        return EquivalenceVerdict {
            item_id: item_id.to_string(),
            direction1: Some(d1),
            direction2: None,
            equivalent: false,
            reason,
            detail: None,
        };
    }

    // Augment the unit with one check method per target, cumulatively so
    // generated names cannot collide.
    let mut augmented = unit;
    for target in &targets {
        augmented = match harness::generate_equiv_harness(&augmented, target) {
            Ok(u) => u,
            Err(HarnessError::VacuousSpec(t)) => {
                return EquivalenceVerdict {
                    item_id: item_id.to_string(),
                    direction1: Some(d1),
                    direction2: None,
                    equivalent: false,
                    reason: EquivReason::VacuousSpec,
                    detail: Some(format!("target `{t}` has no ensures")),
                }
            }
            Err(e) => {
                return EquivalenceVerdict {
                    item_id: item_id.to_string(),
                    direction1: Some(d1),
                    direction2: None,
                    equivalent: false,
                    reason: EquivReason::Unsupported,
                    detail: Some(e.to_string()),
                }
            }
        };
    }

    let d2 = verify(dafny::render_unit(&augmented));
    let (equivalent, reason) = match d2.status {
        VerifyStatus::Verified => (true, EquivReason::Ok),
        VerifyStatus::Timeout => (false, EquivReason::Timeout),
        _ => (false, EquivReason::D2Failed),
    };
    EquivalenceVerdict {
        item_id: item_id.to_string(),
        direction1: Some(d1),
        direction2: Some(d2),
        equivalent,
        reason,
        detail: None,
    }
}

/// Verdict for one corpus item's chosen variant.
pub fn equivalence_verdict(
    runner: &DafnyRunner,
    item: &BenchmarkItem,
    variant: Variant,
    limits: &VerifyLimits,
    cache_dir: Option<&Path>,
) -> EquivalenceVerdict {
    match item.variant(variant) {
        Some(source) => check_equiv_source(runner, &item.id, source, limits, cache_dir),
        None => EquivalenceVerdict::failed(
            &item.id,
            EquivReason::Unsupported,
            format!("item lacks the {variant} variant"),
        ),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EquivalenceScore {
    /// #equivalent / #items; unsupported and timed-out items stay in the
    /// denominator.
    pub score: f64,
    pub verdicts: Vec<EquivalenceVerdict>,
}

/// Corpus-level equivalence score. Deterministic given cached reports;
/// verdicts come back in corpus order regardless of worker count.
pub fn equivalence_score(
    runner: &DafnyRunner,
    items: &[BenchmarkItem],
    variant: Variant,
    limits: &VerifyLimits,
    workers: usize,
    cache_dir: Option<&Path>,
) -> EquivalenceScore {
    assert!(!items.is_empty(), "corpus must be nonempty");
    let cache: Option<PathBuf> = cache_dir.map(Path::to_path_buf);
    let verdicts = parallel::par_map_workers(items.to_vec(), workers, |item| {
        equivalence_verdict(runner, &item, variant, limits, cache.as_deref())
    });
    let equivalent = verdicts.iter().filter(|v| v.equivalent).count();
    EquivalenceScore {
        score: equivalent as f64 / verdicts.len() as f64,
        verdicts,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecSuperiorVerdict {
    pub code_verifies_under_a: bool,
    pub a_implies_b: bool,
    pub b_implies_a: bool,
    pub superior: bool,
    pub diagnostics: Vec<String>,
}

/// Is spec A strictly stronger than baseline B for this code? True iff the
/// code verifies under A, A implies B, and B does not imply A.
pub fn spec_superior(
    runner: &DafnyRunner,
    unit_source: &str,
    target: &str,
    spec_a: &ClauseSet,
    spec_b: &ClauseSet,
    limits: &VerifyLimits,
    cache_dir: Option<&Path>,
) -> SpecSuperiorVerdict {
    let mut out = SpecSuperiorVerdict {
        code_verifies_under_a: false,
        a_implies_b: false,
        b_implies_a: false,
        superior: false,
        diagnostics: Vec::new(),
    };
    let unit = match dafny::parse_unit(unit_source) {
        Ok(u) => u,
        Err(e) => {
            out.diagnostics.push(format!("source does not parse: {e}"));
            return out;
        }
    };
    let verify = |src: &str| match cache_dir {
        Some(dir) => runner.cached_verify(src, limits, dir),
        None => runner.verify(src, limits),
    };

    match with_spec(&unit, target, spec_a) {
        Ok(rebuilt) => {
            let report = verify(&rebuilt);
            out.code_verifies_under_a = report.status == VerifyStatus::Verified;
            if !out.code_verifies_under_a {
                out.diagnostics
                    .push(format!("code under spec A: {:?}", report.status));
            }
        }
        Err(e) => {
            out.diagnostics.push(format!("cannot apply spec A: {e}"));
            return out;
        }
    }

    for (direction, slot) in [
        (ImplicationDirection::AImpliesB, 0usize),
        (ImplicationDirection::BImpliesA, 1),
    ] {
        match harness::generate_implication_program(&unit, target, spec_a, spec_b, direction) {
            Ok(program) => {
                let verified = verify(&program.source).status == VerifyStatus::Verified;
                if slot == 0 {
                    out.a_implies_b = verified;
                } else {
                    out.b_implies_a = verified;
                }
            }
            Err(e) => {
                out.diagnostics
                    .push(format!("implication program ({direction:?}): {e}"));
                return out;
            }
        }
    }

    out.superior = out.code_verifies_under_a && out.a_implies_b && !out.b_implies_a;
    out
}

/// Rebuild the unit with `target`'s contract replaced by `spec`, keeping
/// the body verbatim.
pub fn with_spec(
    unit: &SourceUnit,
    target: &str,
    spec: &ClauseSet,
) -> Result<String, HarnessError> {
    let decl = unit.locate_decl(target)?;
    if decl.kind != DeclKind::Method {
        return Err(HarnessError::UnsupportedKind {
            name: target.to_string(),
            kind: decl.kind.to_string(),
        });
    }
    let body = match &decl.body_span {
        Some(span) => &unit.raw()[span.clone()],
        None => return Err(HarnessError::NoBody(target.to_string())),
    };

    let mut text = String::new();
    if decl.is_ghost {
        text.push_str("ghost ");
    }
    text.push_str("method ");
    if !decl.attributes.is_empty() {
        text.push_str(&decl.attributes);
        text.push(' ');
    }
    text.push_str(target);
    text.push('(');
    let params: Vec<String> = decl
        .signature
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.type_text))
        .collect();
    text.push_str(&params.join(", "));
    text.push(')');
    if !decl.signature.returns.is_empty() {
        let rets: Vec<String> = decl
            .signature
            .returns
            .iter()
            .map(|r| format!("{}: {}", r.name, r.type_text))
            .collect();
        text.push_str(&format!(" returns ({})", rets.join(", ")));
    }
    text.push('\n');
    for (kw, clauses) in [
        ("requires", &spec.requires),
        ("reads", &spec.reads),
        ("modifies", &spec.modifies),
        ("ensures", &spec.ensures),
        ("decreases", &spec.decreases),
    ] {
        for clause in clauses {
            text.push_str(&format!("  {kw} {clause}\n"));
        }
    }
    text.push_str(body);

    // Splice over the original decl's span.
    let raw = unit.raw();
    let mut rebuilt = String::with_capacity(raw.len());
    rebuilt.push_str(&raw[..decl.span.start]);
    rebuilt.push_str(&text);
    rebuilt.push_str(&raw[decl.span.end..]);
    Ok(rebuilt)
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricError {
    #[error("pass@k requires 0 <= c <= n and 1 <= k <= n, got n={n}, c={c}, k={k}")]
    PassAtKArgs { n: u64, c: u64, k: u64 },
    #[error("verdicts and judgments misaligned at index {index}: `{left}` vs `{right}`")]
    Misaligned {
        index: usize,
        left: String,
        right: String,
    },
}

/// Unbiased pass@k estimator: 1 − C(n−c, k)/C(n, k), computed in product
/// form so no binomial coefficient is ever materialized.
pub fn pass_at_k(n: u64, c: u64, k: u64) -> Result<f64, MetricError> {
    if c > n || k < 1 || k > n {
        return Err(MetricError::PassAtKArgs { n, c, k });
    }
    if n - c < k {
        // Fewer failures than draws: at least one success is guaranteed.
        return Ok(1.0);
    }
    // C(n-c, k)/C(n, k) = prod_{i=1..k} (n-c-k+i)/(n-k+i)
    let mut ratio = 1.0;
    for i in 1..=k {
        ratio *= (n - c - k + i) as f64 / ((n - k + i) as f64);
    }
    Ok(1.0 - ratio)
}

/// Fraction of items that are both formally equivalent and judged faithful
/// to the natural-language intent. Inputs must be aligned by item id.
pub fn exact_match_aggregate(
    verdicts: &[EquivalenceVerdict],
    nl_judgments: &[(String, bool)],
) -> Result<f64, MetricError> {
    if verdicts.len() != nl_judgments.len() {
        return Err(MetricError::Misaligned {
            index: verdicts.len().min(nl_judgments.len()),
            left: format!("{} verdicts", verdicts.len()),
            right: format!("{} judgments", nl_judgments.len()),
        });
    }
    let mut hits = 0usize;
    for (i, (v, (id, judged))) in verdicts.iter().zip(nl_judgments).enumerate() {
        if v.item_id != *id {
            return Err(MetricError::Misaligned {
                index: i,
                left: v.item_id.clone(),
                right: id.clone(),
            });
        }
        if v.equivalent && *judged {
            hits += 1;
        }
    }
    if verdicts.is_empty() {
        return Ok(0.0);
    }
    Ok(hits as f64 / verdicts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcRules {
    /// 1 per function, plus 1 for each of: `if`, `elif`, `for`, `while`,
    /// `and`, `or`, `except`, `with` — counted as Python keyword tokens,
    /// so ternary `if` and comprehension `if`/`for` count while `else`,
    /// strings, and comments do not. Matches the Radon package's rules for
    /// sources avoiding `assert` and pattern matching.
    RadonPython,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcScore {
    pub name: String,
    pub complexity: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcReport {
    pub per_function: Vec<CcScore>,
    pub mean: f64,
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CcError {
    #[error("unterminated string literal starting at byte {0}")]
    UnterminatedString(usize),
}

const CC_KEYWORDS: [&str; 8] = ["if", "elif", "for", "while", "and", "or", "except", "with"];

/// Cyclomatic complexity of every `def` in a Python source.
pub fn cyclomatic_complexity(source: &str, rules: CcRules) -> Result<CcReport, CcError> {
    let CcRules::RadonPython = rules;
    let mut functions: Vec<CcScore> = Vec::new();
    // Stack of (indent column, index into functions) for enclosing defs.
    let mut stack: Vec<(usize, usize)> = Vec::new();

    let mut lexer = PyLexer::new(source);
    while let Some(tok) = lexer.next_token()? {
        match tok {
            PyToken::Word {
                text,
                indent,
                line_start,
            } => {
                if line_start && !lexer.in_continuation() {
                    while let Some(&(top_indent, _)) = stack.last() {
                        if indent <= top_indent {
                            stack.pop();
                        } else {
                            break;
                        }
                    }
                }
                if text == "def" {
                    let name = lexer.peek_word().unwrap_or_else(|| "<lambda>".to_string());
                    functions.push(CcScore {
                        name,
                        complexity: 1,
                    });
                    stack.push((indent, functions.len() - 1));
                } else if CC_KEYWORDS.contains(&text.as_str()) {
                    if let Some(&(_, idx)) = stack.last() {
                        functions[idx].complexity += 1;
                    }
                }
            }
        }
    }

    let mean = if functions.is_empty() {
        0.0
    } else {
        functions.iter().map(|f| f.complexity as f64).sum::<f64>() / functions.len() as f64
    };
    Ok(CcReport {
        per_function: functions,
        mean,
    })
}

enum PyToken {
    Word {
        text: String,
        /// Indentation column of the physical line this word is on.
        indent: usize,
        /// True if this is the first token on its physical line.
        line_start: bool,
    },
}

/// Just enough Python lexing for keyword counting: skips comments and all
/// string forms (including triple-quoted and prefixed), tracks bracket
/// depth for line-continuation awareness.
struct PyLexer<'a> {
    src: &'a [u8],
    pos: usize,
    indent: usize,
    at_line_start: bool,
    line_had_token: bool,
    bracket_depth: usize,
    backslash_continues: bool,
}

impl<'a> PyLexer<'a> {
    fn new(src: &'a str) -> Self {
        PyLexer {
            src: src.as_bytes(),
            pos: 0,
            indent: 0,
            at_line_start: true,
            line_had_token: false,
            bracket_depth: 0,
            backslash_continues: false,
        }
    }

    fn in_continuation(&self) -> bool {
        self.bracket_depth > 0
    }

    /// The next word token without consuming it (used for def names).
    fn peek_word(&mut self) -> Option<String> {
        let save = (
            self.pos,
            self.indent,
            self.at_line_start,
            self.line_had_token,
            self.bracket_depth,
            self.backslash_continues,
        );
        let word = match self.next_token() {
            Ok(Some(PyToken::Word { text, .. })) => Some(text),
            _ => None,
        };
        (
            self.pos,
            self.indent,
            self.at_line_start,
            self.line_had_token,
            self.bracket_depth,
            self.backslash_continues,
        ) = save;
        word
    }

    fn next_token(&mut self) -> Result<Option<PyToken>, CcError> {
        loop {
            if self.at_line_start {
                // Measure indentation of the new physical line.
                let mut col = 0;
                while let Some(&b) = self.src.get(self.pos) {
                    match b {
                        b' ' => col += 1,
                        b'\t' => col = (col / 8 + 1) * 8,
                        _ => break,
                    }
                    self.pos += 1;
                }
                self.indent = col;
                self.at_line_start = false;
                self.line_had_token = false;
            }
            let Some(&b) = self.src.get(self.pos) else {
                return Ok(None);
            };
            match b {
                b'\n' => {
                    self.pos += 1;
                    self.at_line_start = true;
                    self.backslash_continues = false;
                }
                b' ' | b'\t' | b'\r' => self.pos += 1,
                b'#' => {
                    while self.src.get(self.pos).is_some_and(|&c| c != b'\n') {
                        self.pos += 1;
                    }
                }
                b'\\' if self.src.get(self.pos + 1) == Some(&b'\n') => {
                    self.pos += 2;
                    // Backslash continuation: next physical line is not a
                    // fresh logical line, but indentation still advances.
                    self.backslash_continues = true;
                    self.at_line_start = true;
                }
                b'(' | b'[' | b'{' => {
                    self.bracket_depth += 1;
                    self.pos += 1;
                    self.line_had_token = true;
                }
                b')' | b']' | b'}' => {
                    self.bracket_depth = self.bracket_depth.saturating_sub(1);
                    self.pos += 1;
                    self.line_had_token = true;
                }
                b'\'' | b'"' => {
                    self.skip_string()?;
                    self.line_had_token = true;
                }
                c if c.is_ascii_alphabetic() || c == b'_' => {
                    let start = self.pos;
                    while self
                        .src
                        .get(self.pos)
                        .is_some_and(|&c| c.is_ascii_alphanumeric() || c == b'_')
                    {
                        self.pos += 1;
                    }
                    let text = std::str::from_utf8(&self.src[start..self.pos])
                        .expect("ascii slice")
                        .to_string();
                    // A string prefix like r"", f'', rb"" is part of the
                    // literal, not a word.
                    if text.len() <= 2
                        && text.chars().all(|c| "rbufRBUF".contains(c))
                        && matches!(self.src.get(self.pos), Some(&b'\'') | Some(&b'"'))
                    {
                        self.skip_string()?;
                        self.line_had_token = true;
                        continue;
                    }
                    let line_start = !self.line_had_token && !self.backslash_continues;
                    self.line_had_token = true;
                    return Ok(Some(PyToken::Word {
                        text,
                        indent: self.indent,
                        line_start,
                    }));
                }
                _ => {
                    self.pos += 1;
                    self.line_had_token = true;
                }
            }
        }
    }

    fn skip_string(&mut self) -> Result<(), CcError> {
        let start = self.pos;
        let quote = self.src[self.pos];
        let triple = self.src.get(self.pos + 1) == Some(&quote)
            && self.src.get(self.pos + 2) == Some(&quote);
        if triple {
            self.pos += 3;
            loop {
                match self.src.get(self.pos) {
                    None => return Err(CcError::UnterminatedString(start)),
                    Some(&b'\\') => self.pos += 2,
                    Some(&c) if c == quote => {
                        if self.src.get(self.pos + 1) == Some(&quote)
                            && self.src.get(self.pos + 2) == Some(&quote)
                        {
                            self.pos += 3;
                            return Ok(());
                        }
                        self.pos += 1;
                    }
                    Some(_) => self.pos += 1,
                }
            }
        } else {
            self.pos += 1;
            loop {
                match self.src.get(self.pos) {
                    None | Some(&b'\n') => return Err(CcError::UnterminatedString(start)),
                    Some(&b'\\') => self.pos += 2,
                    Some(&c) if c == quote => {
                        self.pos += 1;
                        return Ok(());
                    }
                    Some(_) => self.pos += 1,
                }
            }
        }
    }
}
