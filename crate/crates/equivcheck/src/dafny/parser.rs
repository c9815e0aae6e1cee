//! Declaration scanner: walks the token stream, recognizes contract-bearing
//! declarations, and recurses into `module` / `class` / `trait` blocks with
//! qualified names. Everything unrecognized is left for trivia.

use super::lexer::{Bracket, Token, TokenKind};
use super::{ClauseSet, Decl, DeclKind, Param, ParseError, Signature};

const CLAUSE_KEYWORDS: [&str; 5] = ["requires", "ensures", "modifies", "reads", "decreases"];
const MODIFIERS: [&str; 6] = ["ghost", "static", "abstract", "opaque", "twostate", "opened"];
const EXTREME: [&str; 2] = ["least", "greatest"];

struct Scanner<'a> {
    src: &'a str,
    tokens: &'a [Token],
    pos: usize,
}

impl<'a> Scanner<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens[self.pos..].iter().find(|t| !t.is_trivia())
    }

    fn peek_text(&self) -> Option<&'a str> {
        self.peek().map(|t| t.text(self.src))
    }

    /// Advance past trivia and return the next significant token.
    fn next(&mut self) -> Option<&'a Token> {
        while self.pos < self.tokens.len() {
            let t = &self.tokens[self.pos];
            self.pos += 1;
            if !t.is_trivia() {
                return Some(t);
            }
        }
        None
    }

    /// Skip to the matching close bracket; `open` has already been consumed.
    fn skip_to_matching(&mut self, open: Bracket, open_offset: usize) -> Result<usize, ParseError> {
        let mut depth = 1usize;
        while let Some(t) = self.next() {
            match t.kind {
                TokenKind::Open(b) if b == open => depth += 1,
                TokenKind::Close(b) if b == open => {
                    depth -= 1;
                    if depth == 0 {
                        return Ok(t.span.end);
                    }
                }
                _ => {}
            }
        }
        Err(unbalanced(open, open_offset))
    }
}

fn unbalanced(bracket: Bracket, offset: usize) -> ParseError {
    let c = match bracket {
        Bracket::Brace => '{',
        Bracket::Paren => '(',
        Bracket::Square => '[',
    };
    ParseError::Unbalanced { bracket: c, offset }
}

pub fn parse_decls(src: &str, tokens: &[Token]) -> Result<Vec<Decl>, ParseError> {
    let mut scanner = Scanner {
        src,
        tokens,
        pos: 0,
    };
    let mut decls = Vec::new();
    parse_block(&mut scanner, "", &mut decls, false)?;
    Ok(decls)
}

/// Parse declarations until EOF (top level) or the enclosing close brace.
fn parse_block(
    sc: &mut Scanner<'_>,
    prefix: &str,
    decls: &mut Vec<Decl>,
    inside_braces: bool,
) -> Result<(), ParseError> {
    loop {
        let Some(tok) = sc.peek() else {
            return Ok(());
        };
        match tok.kind {
            TokenKind::Close(Bracket::Brace) => {
                if inside_braces {
                    return Ok(());
                }
                return Err(unbalanced(Bracket::Brace, tok.span.start));
            }
            TokenKind::Close(b) => return Err(unbalanced(b, tok.span.start)),
            TokenKind::Open(b) => {
                let start = tok.span.start;
                sc.next();
                sc.skip_to_matching(b, start)?;
            }
            TokenKind::Ident => {
                let text = tok.text(sc.src);
                if is_decl_start(text) {
                    parse_decl(sc, prefix, decls)?;
                } else {
                    sc.next();
                }
            }
            _ => {
                sc.next();
            }
        }
    }
}

fn is_decl_start(word: &str) -> bool {
    matches!(
        word,
        "method"
            | "function"
            | "predicate"
            | "lemma"
            | "colemma"
            | "module"
            | "class"
            | "trait"
            | "datatype"
            | "codatatype"
            | "newtype"
            | "type"
            | "const"
            | "iterator"
    ) || MODIFIERS.contains(&word)
        || EXTREME.contains(&word)
}

fn parse_decl(
    sc: &mut Scanner<'_>,
    prefix: &str,
    decls: &mut Vec<Decl>,
) -> Result<(), ParseError> {
    let start = sc.peek().expect("caller checked").span.start;
    let mut is_ghost = false;

    // Modifier run, then the introducing keyword.
    let keyword = loop {
        let Some(text) = sc.peek_text() else {
            return Ok(());
        };
        if MODIFIERS.contains(&text) || EXTREME.contains(&text) {
            if text == "ghost" {
                is_ghost = true;
            }
            sc.next();
        } else {
            break text;
        }
    };

    let kind = match keyword {
        "method" => DeclKind::Method,
        "function" => DeclKind::Function,
        "predicate" => DeclKind::Predicate,
        "lemma" | "colemma" => DeclKind::Lemma,
        "module" | "class" | "trait" => {
            return parse_container(sc, prefix, decls);
        }
        "datatype" | "codatatype" | "newtype" | "type" | "const" | "iterator" => {
            return parse_other(sc, prefix, decls, start);
        }
        _ => {
            // A stray modifier with no declaration behind it; leave as trivia.
            return Ok(());
        }
    };
    sc.next();

    // Dafny 3 `function method F` / `predicate method P`.
    if matches!(kind, DeclKind::Function | DeclKind::Predicate)
        && sc.peek_text() == Some("method")
    {
        sc.next();
    }

    let mut attributes = String::new();
    while let Some(t) = sc.peek() {
        if t.kind == TokenKind::Open(Bracket::Brace) && sc.src[t.span.end..].starts_with(':') {
            let open = t.span.start;
            sc.next();
            let end = sc.skip_to_matching(Bracket::Brace, open)?;
            if !attributes.is_empty() {
                attributes.push(' ');
            }
            attributes.push_str(&sc.src[open..end]);
        } else {
            break;
        }
    }

    let Some(name_tok) = sc.peek() else {
        return Ok(());
    };
    if name_tok.kind != TokenKind::Ident {
        return Ok(());
    }
    let name = format!("{prefix}{}", name_tok.text(sc.src));
    sc.next();

    // Optional type parameters.
    if sc.peek_text() == Some("<") {
        sc.next();
        let mut depth = 1usize;
        while depth > 0 {
            match sc.next().map(|t| t.text(sc.src)) {
                Some("<") => depth += 1,
                Some(">") => depth -= 1,
                Some(_) => {}
                None => return Ok(()),
            }
        }
    }

    let mut signature = Signature::default();
    let mut end = name_tok.span.end;

    if let Some(t) = sc.peek() {
        if t.kind == TokenKind::Open(Bracket::Paren) {
            let open = t.span.start;
            sc.next();
            let close = sc.skip_to_matching(Bracket::Paren, open)?;
            signature.params = parse_params(&sc.src[open + 1..close - 1]);
            end = close;
        }
    }

    // Function result `: T` or method `returns (...)`.
    if sc.peek_text() == Some(":") {
        sc.next();
        // Named function result `: (r: T)`.
        if let Some(t) = sc.peek() {
            if t.kind == TokenKind::Open(Bracket::Paren) {
                let open = t.span.start;
                sc.next();
                let close = sc.skip_to_matching(Bracket::Paren, open)?;
                signature.returns = parse_params(&sc.src[open + 1..close - 1]);
                end = close;
            } else {
                end = skip_type(sc, end)?;
            }
        }
    } else if sc.peek_text() == Some("returns") {
        sc.next();
        if let Some(t) = sc.peek() {
            if t.kind == TokenKind::Open(Bracket::Paren) {
                let open = t.span.start;
                sc.next();
                let close = sc.skip_to_matching(Bracket::Paren, open)?;
                signature.returns = parse_params(&sc.src[open + 1..close - 1]);
                end = close;
            }
        }
    }

    let (clauses, clause_end) = parse_clauses(sc, end)?;
    end = clause_end;

    let mut body_span = None;
    if let Some(t) = sc.peek() {
        if t.kind == TokenKind::Open(Bracket::Brace) {
            let open = t.span.start;
            sc.next();
            let close = sc.skip_to_matching(Bracket::Brace, open)?;
            body_span = Some(open..close);
            end = close;
        }
    }

    decls.push(Decl {
        kind,
        name,
        signature,
        clauses,
        span: start..end,
        body_span,
        attributes,
        is_ghost,
    });
    Ok(())
}

/// `module` / `class` / `trait`: recurse with a qualified prefix; the header
/// and braces themselves become trivia.
fn parse_container(
    sc: &mut Scanner<'_>,
    prefix: &str,
    decls: &mut Vec<Decl>,
) -> Result<(), ParseError> {
    sc.next(); // keyword
    let mut inner_prefix = prefix.to_string();
    if let Some(t) = sc.peek() {
        if t.kind == TokenKind::Ident {
            inner_prefix = format!("{prefix}{}.", t.text(sc.src));
            sc.next();
        }
    }
    // Skip `extends T, U` / refinement syntax up to the opening brace.
    loop {
        match sc.peek() {
            Some(t) if t.kind == TokenKind::Open(Bracket::Brace) => {
                sc.next();
                break;
            }
            Some(_) => {
                sc.next();
            }
            None => return Ok(()),
        }
    }
    parse_block(sc, &inner_prefix, decls, true)?;
    sc.next(); // closing brace, or EOF on unbalanced input
    Ok(())
}

/// Datatypes, consts, type synonyms: recorded as `other` declarations.
/// The span runs until the next declaration keyword at this nesting level.
fn parse_other(
    sc: &mut Scanner<'_>,
    prefix: &str,
    decls: &mut Vec<Decl>,
    start: usize,
) -> Result<(), ParseError> {
    sc.next(); // keyword
    let mut name = String::new();
    if let Some(t) = sc.peek() {
        if t.kind == TokenKind::Ident {
            name = format!("{prefix}{}", t.text(sc.src));
            sc.next();
        }
    }
    let mut end = start;
    loop {
        let Some(t) = sc.peek() else { break };
        match t.kind {
            TokenKind::Ident if is_decl_start(t.text(sc.src)) => break,
            TokenKind::Close(_) => break,
            TokenKind::Open(b) => {
                let open = t.span.start;
                sc.next();
                end = sc.skip_to_matching(b, open)?;
            }
            _ => {
                end = t.span.end;
                sc.next();
            }
        }
    }
    decls.push(Decl {
        kind: DeclKind::Other,
        name,
        signature: Signature::default(),
        clauses: ClauseSet::default(),
        span: start..end,
        body_span: None,
        attributes: String::new(),
        is_ghost: false,
    });
    Ok(())
}

/// Skip a type expression after `:` for a function result.
fn skip_type(sc: &mut Scanner<'_>, mut end: usize) -> Result<usize, ParseError> {
    let mut angle = 0usize;
    loop {
        let Some(t) = sc.peek() else { return Ok(end) };
        let text = t.text(sc.src);
        match t.kind {
            TokenKind::Ident => {
                if angle == 0 && (CLAUSE_KEYWORDS.contains(&text) || is_decl_start(text)) {
                    return Ok(end);
                }
                end = t.span.end;
                sc.next();
            }
            TokenKind::Punct if text == "<" => {
                angle += 1;
                end = t.span.end;
                sc.next();
            }
            TokenKind::Punct if text == ">" && angle > 0 => {
                angle -= 1;
                end = t.span.end;
                sc.next();
            }
            TokenKind::Punct if text == "." || text == "," || text == "->" => {
                end = t.span.end;
                sc.next();
            }
            TokenKind::Open(b) if angle > 0 => {
                let open = t.span.start;
                sc.next();
                end = sc.skip_to_matching(b, open)?;
            }
            _ => return Ok(end),
        }
    }
}

/// Parse the contract clause block following a signature.
fn parse_clauses(sc: &mut Scanner<'_>, sig_end: usize) -> Result<(ClauseSet, usize), ParseError> {
    let mut clauses = ClauseSet::default();
    let mut end = sig_end;
    loop {
        let Some(t) = sc.peek() else { break };
        let text = t.text(sc.src);
        if t.kind != TokenKind::Ident || !CLAUSE_KEYWORDS.contains(&text) {
            break;
        }
        let keyword = text;
        sc.next();
        let (clause_text, clause_end) = read_clause_expr(sc, end)?;
        end = clause_end;
        let bucket = match keyword {
            "requires" => &mut clauses.requires,
            "ensures" => &mut clauses.ensures,
            "modifies" => &mut clauses.modifies,
            "reads" => &mut clauses.reads,
            _ => &mut clauses.decreases,
        };
        bucket.push(clause_text);
    }
    Ok((clauses, end))
}

/// Read one clause expression: verbatim text up to the next clause keyword,
/// the body brace, or the next declaration. Comments are dropped and
/// whitespace runs collapse to a single space.
fn read_clause_expr(sc: &mut Scanner<'_>, mut end: usize) -> Result<(String, usize), ParseError> {
    let mut start: Option<usize> = None;
    let mut prev_significant: Option<TokenKind> = None;
    loop {
        let Some(t) = sc.peek() else { break };
        let text = t.text(sc.src);
        match t.kind {
            TokenKind::Ident if CLAUSE_KEYWORDS.contains(&text) || is_decl_start(text) => break,
            TokenKind::Open(Bracket::Brace) => {
                // `{` after an operator is a set/map display inside the
                // expression; otherwise it opens the body.
                let expr_context = matches!(
                    prev_significant,
                    Some(TokenKind::Punct) | Some(TokenKind::Open(_)) | None
                );
                if !expr_context {
                    break;
                }
                let open = t.span.start;
                sc.next();
                let close = sc.skip_to_matching(Bracket::Brace, open)?;
                start.get_or_insert(open);
                prev_significant = Some(TokenKind::Close(Bracket::Brace));
                end = close;
            }
            TokenKind::Close(_) => break,
            TokenKind::Open(b) => {
                let open = t.span.start;
                sc.next();
                let close = sc.skip_to_matching(b, open)?;
                start.get_or_insert(open);
                prev_significant = Some(TokenKind::Close(b));
                end = close;
            }
            _ => {
                sc.next();
                start.get_or_insert(t.span.start);
                prev_significant = Some(t.kind);
                end = t.span.end;
            }
        }
    }
    let text = match start {
        Some(s) if s < end => collapse(&sc.src[s..end]),
        _ => String::new(),
    };
    Ok((text.trim().to_string(), end))
}

/// Collapse whitespace runs to single spaces and drop comments inside a
/// bracketed slice that was consumed wholesale.
fn collapse(slice: &str) -> String {
    match super::lexer::lex(slice) {
        Ok(tokens) => {
            let mut out = String::new();
            let mut pending_space = false;
            for t in &tokens {
                match t.kind {
                    TokenKind::Comment => {}
                    TokenKind::Whitespace => pending_space = true,
                    _ => {
                        if pending_space && !out.is_empty() {
                            out.push(' ');
                        }
                        pending_space = false;
                        out.push_str(t.text(slice));
                    }
                }
            }
            out
        }
        Err(_) => slice.to_string(),
    }
}

fn parse_params(text: &str) -> Vec<Param> {
    let mut params = Vec::new();
    for part in split_top_level(text) {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let Some((name_part, type_part)) = split_once_top_level(part) else {
            continue;
        };
        let name = name_part
            .split_whitespace()
            .last()
            .unwrap_or_default()
            .to_string();
        if name.is_empty() {
            continue;
        }
        params.push(Param {
            name,
            type_text: type_part.trim().to_string(),
        });
    }
    params
}

/// Split on commas outside brackets and angle brackets.
fn split_top_level(text: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0i32;
    let mut angle = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '<' => angle += 1,
            '>' => angle = (angle - 1).max(0),
            ',' if depth == 0 && angle == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    parts
}

/// Split `name: type` on the first top-level colon.
fn split_once_top_level(text: &str) -> Option<(&str, &str)> {
    let mut depth = 0i32;
    let mut angle = 0i32;
    for (i, c) in text.char_indices() {
        match c {
            '(' | '[' | '{' => depth += 1,
            ')' | ']' | '}' => depth -= 1,
            '<' => angle += 1,
            '>' => angle = (angle - 1).max(0),
            ':' if depth == 0 && angle == 0 => {
                return Some((&text[..i], &text[i + 1..]));
            }
            _ => {}
        }
    }
    None
}
