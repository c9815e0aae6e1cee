//! Lenient structural view of Dafny source.
//!
//! The parser extracts top-level declarations, signatures and contract
//! clauses, and keeps everything else (bodies, comments, exotic syntax) as
//! verbatim text. It is deliberately not a Dafny front end: no type checking,
//! no name resolution, no expression grammar. The only hard errors are
//! unbalanced brackets and unterminated literals; anything else lands in
//! `other` declarations or trivia.

mod lexer;
mod parser;

pub use lexer::{lex, Bracket, LexError, Token, TokenKind};

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeclKind {
    Method,
    Function,
    Predicate,
    Lemma,
    Other,
}

impl fmt::Display for DeclKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DeclKind::Method => "method",
            DeclKind::Function => "function",
            DeclKind::Predicate => "predicate",
            DeclKind::Lemma => "lemma",
            DeclKind::Other => "other",
        };
        f.write_str(s)
    }
}

/// One named parameter or return value, type kept as verbatim text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub type_text: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Signature {
    pub params: Vec<Param>,
    pub returns: Vec<Param>,
}

/// Contract clauses as verbatim expression strings, comments stripped.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClauseSet {
    pub requires: Vec<String>,
    pub ensures: Vec<String>,
    pub modifies: Vec<String>,
    pub reads: Vec<String>,
    pub decreases: Vec<String>,
}

impl ClauseSet {
    pub fn is_empty(&self) -> bool {
        self.requires.is_empty()
            && self.ensures.is_empty()
            && self.modifies.is_empty()
            && self.reads.is_empty()
            && self.decreases.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Decl {
    pub kind: DeclKind,
    /// Qualified with `Module.` / `Class.` prefixes for nested declarations.
    pub name: String,
    pub signature: Signature,
    pub clauses: ClauseSet,
    /// Byte range of the whole declaration in the source.
    pub span: Range<usize>,
    /// Byte range of the `{ ... }` body; absent for spec-only declarations.
    pub body_span: Option<Range<usize>>,
    /// Verbatim `{:...}` attribute text, empty when none.
    pub attributes: String,
    pub is_ghost: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationCounts {
    pub functions: usize,
    pub methods: usize,
    pub invariants: usize,
    pub ensures: usize,
    pub decreases: usize,
}

#[derive(Debug, Clone)]
pub struct SourceUnit {
    raw: String,
    decls: Vec<Decl>,
    trivia: Vec<Range<usize>>,
}

#[derive(Debug, thiserror::Error)]
pub enum ParseError {
    #[error(transparent)]
    Lex(#[from] LexError),
    #[error("unbalanced `{bracket}` at byte {offset}")]
    Unbalanced { bracket: char, offset: usize },
}

#[derive(Debug, thiserror::Error)]
pub enum LookupError {
    #[error("no declaration named `{0}`")]
    NotFound(String),
    #[error("declaration name `{name}` is ambiguous; candidates at byte spans {spans:?}")]
    Ambiguous {
        name: String,
        spans: Vec<Range<usize>>,
    },
}

/// Parse Dafny source into its structural surface view.
pub fn parse_unit(source: &str) -> Result<SourceUnit, ParseError> {
    let tokens = lex(source)?;
    let decls = parser::parse_decls(source, &tokens)?;
    let trivia = complement(&decls, source.len());
    Ok(SourceUnit {
        raw: source.to_string(),
        decls,
        trivia,
    })
}

/// Render a unit back to text; byte-identical to the parsed input.
pub fn render_unit(unit: &SourceUnit) -> &str {
    &unit.raw
}

fn complement(decls: &[Decl], len: usize) -> Vec<Range<usize>> {
    let mut trivia = Vec::new();
    let mut pos = 0;
    for d in decls {
        if d.span.start > pos {
            trivia.push(pos..d.span.start);
        }
        pos = d.span.end;
    }
    if pos < len {
        trivia.push(pos..len);
    }
    trivia
}

impl SourceUnit {
    pub fn raw(&self) -> &str {
        &self.raw
    }

    pub fn decls(&self) -> &[Decl] {
        &self.decls
    }

    pub fn trivia(&self) -> &[Range<usize>] {
        &self.trivia
    }

    /// Find the unique declaration with `name`.
    pub fn locate_decl(&self, name: &str) -> Result<&Decl, LookupError> {
        let matches: Vec<&Decl> = self.decls.iter().filter(|d| d.name == name).collect();
        match matches.len() {
            0 => Err(LookupError::NotFound(name.to_string())),
            1 => Ok(matches[0]),
            _ => Err(LookupError::Ambiguous {
                name: name.to_string(),
                spans: matches.iter().map(|d| d.span.clone()).collect(),
            }),
        }
    }

    /// Append a new declaration after the existing text and re-parse.
    pub fn append_decl(&self, text: &str) -> Result<SourceUnit, ParseError> {
        let mut raw = self.raw.clone();
        if !raw.is_empty() && !raw.ends_with('\n') {
            raw.push('\n');
        }
        if !raw.is_empty() {
            raw.push('\n');
        }
        raw.push_str(text);
        if !raw.ends_with('\n') {
            raw.push('\n');
        }
        parse_unit(&raw)
    }

    /// Count the Table-style annotation metrics.
    ///
    /// `function` counts `function` plus `predicate` declarations, `method`
    /// counts method declarations only (lemmas excluded from both).
    /// `invariant` / `ensures` / `decreases` count keyword occurrences across
    /// contracts and loop specifications, skipping comments and strings.
    pub fn count_annotations(&self) -> AnnotationCounts {
        let mut counts = AnnotationCounts::default();
        for d in &self.decls {
            match d.kind {
                DeclKind::Function | DeclKind::Predicate => counts.functions += 1,
                DeclKind::Method => counts.methods += 1,
                _ => {}
            }
        }
        // Re-lex is cheap and keeps the unit free of token storage.
        if let Ok(tokens) = lex(&self.raw) {
            for t in &tokens {
                if t.kind == TokenKind::Ident {
                    match t.text(&self.raw) {
                        "invariant" => counts.invariants += 1,
                        "ensures" => counts.ensures += 1,
                        "decreases" => counts.decreases += 1,
                        _ => {}
                    }
                }
            }
        }
        counts
    }
}
