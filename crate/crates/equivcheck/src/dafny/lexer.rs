//! Token scanner shared by the surface parser and the clause rewriters.
//!
//! Dafny source is scanned into a flat token stream; comments and whitespace
//! become trivia tokens so the parser can account for every byte of input.

use std::ops::Range;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenKind {
    /// Identifier or keyword.
    Ident,
    /// Integer / real / char / string literal.
    Literal,
    /// Single punctuation or multi-char operator (`==>`, `::`, ...).
    Punct,
    /// `{` `}` `(` `)` `[` `]`
    Open(Bracket),
    Close(Bracket),
    /// Line or block comment, including delimiters.
    Comment,
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bracket {
    Brace,
    Paren,
    Square,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub kind: TokenKind,
    pub span: Range<usize>,
}

impl Token {
    pub fn text<'a>(&self, src: &'a str) -> &'a str {
        &src[self.span.clone()]
    }

    /// True for comment / whitespace tokens.
    pub fn is_trivia(&self) -> bool {
        matches!(self.kind, TokenKind::Comment | TokenKind::Whitespace)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unterminated {what} starting at byte {offset}")]
pub struct LexError {
    pub what: &'static str,
    pub offset: usize,
}

/// Scan `src` into tokens covering every byte. Strings and comments are kept
/// opaque; nested block comments are honored as in Dafny.
pub fn lex(src: &str) -> Result<Vec<Token>, LexError> {
    let bytes = src.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let start = i;
        let b = bytes[i];
        let kind = if b.is_ascii_whitespace() {
            while i < bytes.len() && bytes[i].is_ascii_whitespace() {
                i += 1;
            }
            TokenKind::Whitespace
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'/') {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            TokenKind::Comment
        } else if b == b'/' && bytes.get(i + 1) == Some(&b'*') {
            i += 2;
            let mut depth = 1usize;
            while i < bytes.len() && depth > 0 {
                if bytes[i] == b'/' && bytes.get(i + 1) == Some(&b'*') {
                    depth += 1;
                    i += 2;
                } else if bytes[i] == b'*' && bytes.get(i + 1) == Some(&b'/') {
                    depth -= 1;
                    i += 2;
                } else {
                    i += 1;
                }
            }
            if depth > 0 {
                return Err(LexError {
                    what: "block comment",
                    offset: start,
                });
            }
            TokenKind::Comment
        } else if b == b'"' {
            i += 1;
            while i < bytes.len() && bytes[i] != b'"' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            if i >= bytes.len() {
                return Err(LexError {
                    what: "string literal",
                    offset: start,
                });
            }
            i += 1;
            TokenKind::Literal
        } else if b == b'\'' && is_char_literal(bytes, i) {
            i += 1;
            while i < bytes.len() && bytes[i] != b'\'' {
                if bytes[i] == b'\\' {
                    i += 1;
                }
                i += 1;
            }
            if i >= bytes.len() {
                return Err(LexError {
                    what: "char literal",
                    offset: start,
                });
            }
            i += 1;
            TokenKind::Literal
        } else if b.is_ascii_alphabetic() || b == b'_' || b == b'\'' || b >= 0x80 {
            while i < bytes.len() && is_ident_continue(bytes[i]) {
                i += 1;
            }
            TokenKind::Ident
        } else if b.is_ascii_digit() {
            while i < bytes.len()
                && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_' || bytes[i] == b'.')
            {
                // `0..n` range punctuation must not be swallowed by the number.
                if bytes[i] == b'.' && bytes.get(i + 1) == Some(&b'.') {
                    break;
                }
                if bytes[i] == b'.' && !bytes.get(i + 1).is_some_and(u8::is_ascii_digit) {
                    break;
                }
                i += 1;
            }
            TokenKind::Literal
        } else {
            match b {
                b'{' => {
                    i += 1;
                    TokenKind::Open(Bracket::Brace)
                }
                b'}' => {
                    i += 1;
                    TokenKind::Close(Bracket::Brace)
                }
                b'(' => {
                    i += 1;
                    TokenKind::Open(Bracket::Paren)
                }
                b')' => {
                    i += 1;
                    TokenKind::Close(Bracket::Paren)
                }
                b'[' => {
                    i += 1;
                    TokenKind::Open(Bracket::Square)
                }
                b']' => {
                    i += 1;
                    TokenKind::Close(Bracket::Square)
                }
                _ => {
                    i += punct_len(&bytes[i..]);
                    TokenKind::Punct
                }
            }
        };
        tokens.push(Token {
            kind,
            span: start..i,
        });
    }
    Ok(tokens)
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'\'' || b == b'?' || b >= 0x80
}

/// A leading `'` starts a char literal only when it closes within a couple of
/// bytes; otherwise it is an identifier character (Dafny allows `x'`).
fn is_char_literal(bytes: &[u8], i: usize) -> bool {
    if bytes.get(i + 1) == Some(&b'\\') {
        return true;
    }
    bytes.get(i + 2) == Some(&b'\'')
}

fn punct_len(rest: &[u8]) -> usize {
    const MULTI: &[&[u8]] = &[
        b"<==>", b"==>", b"<==", b"!in", b"==", b"!=", b"<=", b">=", b"&&", b"||", b"::", b":=",
        b"..", b"=>", b"->",
    ];
    for m in MULTI {
        if rest.starts_with(m) {
            return m.len();
        }
    }
    1
}
