//! Synthesis of specification-implies-code check methods.
//!
//! Direction 2 of the equivalence check asks whether an arbitrary value
//! satisfying the contract must equal the implementation's output. The check
//! method havocs a value per return, assumes every `ensures` clause, calls
//! the target, and asserts the havoced values equal the call results. For
//! mutating methods the havoced value is an arbitrary array constrained by
//! the substituted postconditions. Spec-implication programs reuse the same
//! havoc/assume machinery to establish that one clause set entails another.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dafny::{self, ClauseSet, Decl, DeclKind, SourceUnit, Token, TokenKind};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Lookup(#[from] dafny::LookupError),
    #[error("target `{0}` has no ensures clauses; an empty spec cannot pin the output")]
    VacuousSpec(String),
    #[error("target `{name}` is a {kind}; only methods are supported")]
    UnsupportedKind { name: String, kind: String },
    #[error("target `{0}` has no body")]
    NoBody(String),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("clause rewrite failed: {0}")]
    Rewrite(#[from] OldRewriteError),
    #[error("generated harness failed to re-parse: {0}")]
    Reparse(#[from] dafny::ParseError),
}

#[derive(Debug, thiserror::Error)]
pub enum OldRewriteError {
    #[error("`old(` at byte {0} has no matching closing parenthesis")]
    UnmatchedParen(usize),
    #[error("no snapshot covers old-expression `{0}`")]
    MissingSnapshot(String),
}

/// The textual ingredients of one check method, exposed for inspection.
#[derive(Debug, Clone)]
pub struct HarnessPlan {
    pub target: String,
    pub check_name: String,
    pub snapshot_decls: Vec<String>,
    pub havoc_stmts: Vec<String>,
    pub assume_stmts: Vec<String>,
    pub call_stmt: String,
    pub assert_stmts: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImplicationDirection {
    AImpliesB,
    BImpliesA,
}

#[derive(Debug, Clone)]
pub struct ImplicationProgram {
    pub direction: ImplicationDirection,
    pub source: String,
    pub check_name: String,
}

/// Pick a check-method name that collides with nothing in the unit.
fn fresh_check_name(unit: &SourceUnit, base: &str, suffix: &str) -> String {
    let mut candidate = format!("{base}{suffix}");
    let mut n = 2;
    while unit.decls().iter().any(|d| d.name == candidate) {
        candidate = format!("{base}{suffix}{n}");
        n += 1;
    }
    candidate
}

fn is_array_type(type_text: &str) -> bool {
    let t = type_text.trim();
    t == "array" || t.starts_with("array<") || t.starts_with("array?")
}

fn equality_assert(lhs: &str, rhs: &str, type_text: &str) -> String {
    if is_array_type(type_text) {
        format!("assert {lhs}[..] == {rhs}[..];")
    } else {
        format!("assert {lhs} == {rhs};")
    }
}

/// Build the direction-2 check for a value-returning method.
pub fn generate_equiv_harness(
    unit: &SourceUnit,
    target: &str,
) -> Result<SourceUnit, HarnessError> {
    let (plan, decl) = plan_equiv_harness(unit, target)?;
    let text = render_check_method(&plan, decl, &decl.clauses.modifies);
    Ok(unit.append_decl(&text)?)
}

fn plan_equiv_harness<'a>(
    unit: &'a SourceUnit,
    target: &str,
) -> Result<(HarnessPlan, &'a Decl), HarnessError> {
    let decl = unit.locate_decl(target)?;
    if decl.kind != DeclKind::Method {
        return Err(HarnessError::UnsupportedKind {
            name: target.to_string(),
            kind: decl.kind.to_string(),
        });
    }
    if decl.clauses.ensures.is_empty() {
        return Err(HarnessError::VacuousSpec(target.to_string()));
    }
    if decl.body_span.is_none() {
        return Err(HarnessError::NoBody(target.to_string()));
    }
    if !decl.clauses.modifies.is_empty() {
        return generate_mutation_plan(unit, decl);
    }

    let check_name = fresh_check_name(unit, target, "_EquivCheck");
    let mut havoc_stmts = Vec::new();
    for ret in &decl.signature.returns {
        havoc_stmts.push(format!("var {}: {} := *;", ret.name, ret.type_text));
    }

    // Without a modifies clause nothing changes across the call, so every
    // old(E) is just E.
    let mut assume_stmts = Vec::new();
    for ens in &decl.clauses.ensures {
        let rewritten = strip_old(ens)?;
        assume_stmts.push(format!("assume {rewritten};"));
    }

    let vals: Vec<String> = (0..decl.signature.returns.len())
        .map(|i| format!("val_{i}"))
        .collect();
    let args: Vec<&str> = decl
        .signature
        .params
        .iter()
        .map(|p| p.name.as_str())
        .collect();
    let call_stmt = if vals.is_empty() {
        format!("{}({});", target, args.join(", "))
    } else {
        format!("var {} := {}({});", vals.join(", "), target, args.join(", "))
    };

    let assert_stmts = decl
        .signature
        .returns
        .iter()
        .zip(&vals)
        .map(|(ret, val)| equality_assert(&ret.name, val, &ret.type_text))
        .collect();

    Ok((
        HarnessPlan {
            target: target.to_string(),
            check_name,
            snapshot_decls: Vec::new(),
            havoc_stmts,
            assume_stmts,
            call_stmt,
            assert_stmts,
        },
        decl,
    ))
}

/// Build the direction-2 check for a method that mutates array parameters.
pub fn generate_mutation_harness(
    unit: &SourceUnit,
    target: &str,
) -> Result<SourceUnit, HarnessError> {
    let decl = unit.locate_decl(target)?;
    if decl.kind != DeclKind::Method {
        return Err(HarnessError::UnsupportedKind {
            name: target.to_string(),
            kind: decl.kind.to_string(),
        });
    }
    if decl.clauses.ensures.is_empty() {
        return Err(HarnessError::VacuousSpec(target.to_string()));
    }
    let (plan, decl) = generate_mutation_plan(unit, decl)?;
    let text = render_check_method(&plan, decl, &decl.clauses.modifies);
    Ok(unit.append_decl(&text)?)
}

fn generate_mutation_plan<'a>(
    unit: &'a SourceUnit,
    decl: &'a Decl,
) -> Result<(HarnessPlan, &'a Decl), HarnessError> {
    if !decl.signature.returns.is_empty() {
        return Err(HarnessError::Unsupported(format!(
            "method `{}` both modifies and returns values",
            decl.name
        )));
    }
    // Every modifies target must be an array-typed parameter.
    let mut modified = Vec::new();
    for m in &decl.clauses.modifies {
        for target_expr in m.split(',').map(str::trim) {
            let param = decl
                .signature
                .params
                .iter()
                .find(|p| p.name == target_expr);
            match param {
                Some(p) if is_array_type(&p.type_text) => modified.push(p),
                Some(p) => {
                    return Err(HarnessError::Unsupported(format!(
                        "modifies target `{}` has non-array type `{}`",
                        target_expr, p.type_text
                    )))
                }
                None => {
                    return Err(HarnessError::Unsupported(format!(
                        "modifies target `{target_expr}` is not a parameter"
                    )))
                }
            }
        }
    }

    let check_name = fresh_check_name(unit, &decl.name, "_EquivCheck");
    let mut snapshot_decls = Vec::new();
    let mut havoc_stmts = Vec::new();
    let mut snapshots = BTreeMap::new();
    let mut receiver_renames = BTreeMap::new();
    for p in &modified {
        let old_name = format!("{}_old", p.name);
        let spec_name = format!("{}_spec", p.name);
        snapshot_decls.push(format!("ghost var {} := {}[..];", old_name, p.name));
        // An arbitrary array of arbitrary length: only the assumed
        // postconditions constrain it.
        havoc_stmts.push(format!("var {}: {} := *;", spec_name, p.type_text));
        snapshots.insert(format!("{}[..]", p.name), old_name);
        receiver_renames.insert(p.name.clone(), spec_name);
    }

    let mut assume_stmts = Vec::new();
    for ens in &decl.clauses.ensures {
        let rewritten = substitute_old(ens, &snapshots)?;
        let rewritten = rename_identifiers(&rewritten, &receiver_renames);
        assume_stmts.push(format!("assume {rewritten};"));
    }

    let args: Vec<&str> = decl
        .signature
        .params
        .iter()
        .map(|p| p.name.as_str())
        .collect();
    let call_stmt = format!("{}({});", decl.name, args.join(", "));

    let mut assert_stmts = Vec::new();
    for p in &modified {
        assert_stmts.push(format!("assert {0}_spec.Length == {0}.Length;", p.name));
        assert_stmts.push(format!("assert {0}_spec[..] == {0}[..];", p.name));
    }

    Ok((
        HarnessPlan {
            target: decl.name.clone(),
            check_name,
            snapshot_decls,
            havoc_stmts,
            assume_stmts,
            call_stmt,
            assert_stmts,
        },
        decl,
    ))
}

fn render_check_method(plan: &HarnessPlan, decl: &Decl, modifies: &[String]) -> String {
    let params: Vec<String> = decl
        .signature
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.type_text))
        .collect();
    let mut out = String::new();
    let _ = writeln!(out, "method {}({})", plan.check_name, params.join(", "));
    for req in &decl.clauses.requires {
        let _ = writeln!(out, "  requires {req}");
    }
    for rd in &decl.clauses.reads {
        let _ = writeln!(out, "  reads {rd}");
    }
    for m in modifies {
        let _ = writeln!(out, "  modifies {m}");
    }
    out.push_str("{\n");
    for s in &plan.snapshot_decls {
        let _ = writeln!(out, "  {s}");
    }
    for s in &plan.havoc_stmts {
        let _ = writeln!(out, "  {s}");
    }
    for s in &plan.assume_stmts {
        let _ = writeln!(out, "  {s}");
    }
    let _ = writeln!(out, "  {}", plan.call_stmt);
    for s in &plan.assert_stmts {
        let _ = writeln!(out, "  {s}");
    }
    out.push('}');
    out
}

/// Emit a program whose verification establishes `specA ==> specB` over the
/// target's signature. The target's own declaration is removed so its spec
/// cannot interfere; helper predicates in the unit are kept.
pub fn generate_implication_program(
    sig_unit: &SourceUnit,
    target: &str,
    spec_a: &ClauseSet,
    spec_b: &ClauseSet,
    direction: ImplicationDirection,
) -> Result<ImplicationProgram, HarnessError> {
    let decl = sig_unit.locate_decl(target)?;
    if decl.kind != DeclKind::Method {
        return Err(HarnessError::UnsupportedKind {
            name: target.to_string(),
            kind: decl.kind.to_string(),
        });
    }
    if !spec_a.modifies.is_empty() || !spec_b.modifies.is_empty() {
        return Err(HarnessError::Unsupported(
            "implication programs over modifies clauses".to_string(),
        ));
    }

    // The premise spec is assumed, the conclusion spec asserted.
    let (premise, conclusion) = match direction {
        ImplicationDirection::AImpliesB => (spec_a, spec_b),
        ImplicationDirection::BImpliesA => (spec_b, spec_a),
    };

    let check_name = fresh_check_name(sig_unit, target, "_SpecImplCheck");
    let params: Vec<String> = decl
        .signature
        .params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.type_text))
        .collect();

    let mut method = String::new();
    let _ = writeln!(method, "method {}({})", check_name, params.join(", "));
    for req in premise.requires.iter().chain(&conclusion.requires) {
        let _ = writeln!(method, "  requires {req}");
    }
    method.push_str("{\n");
    for ret in &decl.signature.returns {
        let _ = writeln!(method, "  var {}: {} := *;", ret.name, ret.type_text);
    }
    for ens in &premise.ensures {
        let _ = writeln!(method, "  assume {};", strip_old(ens)?);
    }
    for ens in &conclusion.ensures {
        let _ = writeln!(method, "  assert {};", strip_old(ens)?);
    }
    method.push('}');

    // Original text minus the target declaration, plus the check method.
    let raw = sig_unit.raw();
    let mut source = String::new();
    source.push_str(&raw[..decl.span.start]);
    source.push_str(&raw[decl.span.end..]);
    let source = source.trim_end().to_string();
    let mut full = source;
    if !full.is_empty() {
        full.push_str("\n\n");
    }
    full.push_str(&method);
    full.push('\n');

    // The emitted program must itself be structurally sound.
    let reparsed = dafny::parse_unit(&full)?;
    debug_assert!(reparsed
        .decls()
        .iter()
        .any(|d| d.name == check_name && d.body_span.is_some()));

    Ok(ImplicationProgram {
        direction,
        source: full,
        check_name,
    })
}

/// Replace every `old(E)` occurrence in `clause` using `snapshots`, a map
/// from snapshotted expression text (e.g. `a[..]`) to its ghost name.
///
/// `old(a[..])` maps directly; `old(a[i])` rewrites pointwise to `a_old[i]`;
/// `old(a.Length)` becomes `|a_old|`. Inner occurrences of `r.Length` inside
/// an index expression under `old(...)` are rewritten the same way.
pub fn substitute_old(
    clause: &str,
    snapshots: &BTreeMap<String, String>,
) -> Result<String, OldRewriteError> {
    let tokens = lex_clause(clause);
    let mut out = String::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.kind == TokenKind::Ident && t.text(clause) == "old" {
            if let Some(next) = next_significant(&tokens, i + 1) {
                if tokens[next].text(clause) == "(" {
                    let (arg, after) = match old_argument(clause, &tokens, next) {
                        Ok(v) => v,
                        Err(e) => return Err(e),
                    };
                    out.push_str(&rewrite_old_argument(arg.trim(), snapshots)?);
                    i = after;
                    continue;
                }
            }
        }
        out.push_str(t.text(clause));
        i += 1;
    }
    Ok(out)
}

/// Rewrite `old(E)` to `E` for contexts where the heap cannot change before
/// the call (methods without a modifies clause).
pub fn strip_old(clause: &str) -> Result<String, OldRewriteError> {
    let tokens = lex_clause(clause);
    let mut out = String::new();
    let mut i = 0;
    while i < tokens.len() {
        let t = &tokens[i];
        if t.kind == TokenKind::Ident && t.text(clause) == "old" {
            if let Some(next) = next_significant(&tokens, i + 1) {
                if tokens[next].text(clause) == "(" {
                    let (arg, after) = old_argument(clause, &tokens, next)?;
                    out.push('(');
                    out.push_str(arg.trim());
                    out.push(')');
                    i = after;
                    continue;
                }
            }
        }
        out.push_str(t.text(clause));
        i += 1;
    }
    Ok(out)
}

fn lex_clause(clause: &str) -> Vec<Token> {
    // Clause strings come from the parser and are balanced; a raw fallback
    // keeps the rewriters total on hand-built inputs.
    dafny::lex(clause).unwrap_or_default()
}

fn next_significant(tokens: &[Token], from: usize) -> Option<usize> {
    (from..tokens.len()).find(|&j| !tokens[j].is_trivia())
}

/// Extract the argument of `old(`: returns (argument text, token index past
/// the closing parenthesis). `open` indexes the `(` token.
fn old_argument<'a>(
    clause: &'a str,
    tokens: &[Token],
    open: usize,
) -> Result<(&'a str, usize), OldRewriteError> {
    let mut depth = 0i32;
    for (j, t) in tokens.iter().enumerate().skip(open) {
        match t.text(clause) {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth == 0 {
                    let start = tokens[open].span.end;
                    let end = t.span.start;
                    return Ok((&clause[start..end], j + 1));
                }
            }
            _ => {}
        }
    }
    Err(OldRewriteError::UnmatchedParen(tokens[open].span.start))
}

/// Rewrite one old-expression against the snapshot map.
fn rewrite_old_argument(
    arg: &str,
    snapshots: &BTreeMap<String, String>,
) -> Result<String, OldRewriteError> {
    // Longest snapshot keys first so `a[..]` wins over a bare `a` key.
    let mut keys: Vec<&String> = snapshots.keys().collect();
    keys.sort_by_key(|k| std::cmp::Reverse(k.len()));

    if let Some(name) = snapshots.get(arg) {
        return Ok(name.clone());
    }
    for key in keys {
        let receiver = key.strip_suffix("[..]").unwrap_or(key);
        let ghost = &snapshots[key];
        if arg == receiver {
            return Ok(ghost.clone());
        }
        if let Some(rest) = arg.strip_prefix(receiver) {
            if rest == ".Length" {
                return Ok(format!("|{ghost}|"));
            }
            if let Some(idx) = rest.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                // The index is itself pre-state: rewrite `recv.Length`
                // occurrences inside it too.
                let mut renames = BTreeMap::new();
                renames.insert(format!("{receiver}.Length"), format!("|{ghost}|"));
                let idx = rename_phrases(idx, &renames);
                return Ok(format!("{ghost}[{idx}]"));
            }
        }
    }
    Err(OldRewriteError::MissingSnapshot(arg.to_string()))
}

/// Token-aware identifier rename; `a` never matches inside `arr` or `a_old`.
pub fn rename_identifiers(text: &str, renames: &BTreeMap<String, String>) -> String {
    let tokens = lex_clause(text);
    let mut out = String::new();
    for t in &tokens {
        let s = t.text(text);
        if t.kind == TokenKind::Ident {
            if let Some(replacement) = renames.get(s) {
                out.push_str(replacement);
                continue;
            }
        }
        out.push_str(s);
    }
    out
}

/// Replace multi-token phrases like `a.Length`, identifier-boundary aware.
fn rename_phrases(text: &str, renames: &BTreeMap<String, String>) -> String {
    let mut out = text.to_string();
    for (from, to) in renames {
        let mut result = String::new();
        let mut rest = out.as_str();
        while let Some(pos) = rest.find(from.as_str()) {
            let before_ok = pos == 0
                || !rest[..pos]
                    .chars()
                    .next_back()
                    .is_some_and(|c| c.is_alphanumeric() || c == '_');
            let after = &rest[pos + from.len()..];
            let after_ok = !after
                .chars()
                .next()
                .is_some_and(|c| c.is_alphanumeric() || c == '_');
            result.push_str(&rest[..pos]);
            if before_ok && after_ok {
                result.push_str(to);
            } else {
                result.push_str(from);
            }
            rest = after;
        }
        result.push_str(rest);
        out = result;
    }
    out
}
