use crate::model::SourceSpan;

use super::LangError;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    Number(f64),
    /// Raw contents between `[` and `]`.
    Units(String),
    LParen,
    RParen,
    Comma,
    Plus,
    Minus,
    Star,
    Slash,
    Eq,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(n) => format!("number {n}"),
            Tok::Units(u) => format!("units [{u}]"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Star => "`*`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Eq => "`=`".into(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: SourceSpan,
}

/// Tokenizes one line (comment already stripped). `line_no` is 1-based.
pub(crate) fn tokenize(text: &str, line_no: usize) -> Result<Vec<Token>, LangError> {
    let bytes = text.as_bytes();
    let mut tokens = Vec::new();
    let mut i = 0;
    // Columns count characters, not bytes.
    let col = |byte: usize| text[..byte].chars().count() + 1;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let simple = match c {
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            b',' => Some(Tok::Comma),
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'=' => Some(Tok::Eq),
            _ => None,
        };
        if let Some(tok) = simple {
            i += 1;
            tokens.push(Token { tok, span: SourceSpan::new(line_no, col(start), 1) });
            continue;
        }
        if c == b'[' {
            let Some(close) = text[i..].find(']') else {
                return Err(LangError::BadUnits {
                    span: SourceSpan::new(line_no, col(start), text.len() - start),
                    message: "unterminated `[`".into(),
                });
            };
            let inner = &text[i + 1..i + close];
            i += close + 1;
            tokens.push(Token {
                tok: Tok::Units(inner.to_owned()),
                span: SourceSpan::new(line_no, col(start), i - start),
            });
            continue;
        }
        if c.is_ascii_digit() || c == b'.' {
            i = scan_number(bytes, i);
            let lexeme = &text[start..i];
            let span = SourceSpan::new(line_no, col(start), i - start);
            let value: f64 = lexeme.parse().map_err(|_| LangError::Syntax {
                span,
                expected: "number".into(),
                found: format!("`{lexeme}`"),
            })?;
            tokens.push(Token { tok: Tok::Number(value), span });
            continue;
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            tokens.push(Token {
                tok: Tok::Ident(text[start..i].to_owned()),
                span: SourceSpan::new(line_no, col(start), i - start),
            });
            continue;
        }
        let ch = text[i..].chars().next().unwrap_or('?');
        return Err(LangError::Syntax {
            span: SourceSpan::new(line_no, col(start), 1),
            expected: "token".into(),
            found: format!("`{ch}`"),
        });
    }
    Ok(tokens)
}

fn scan_number(bytes: &[u8], mut i: usize) -> usize {
    while i < bytes.len() && bytes[i].is_ascii_digit() {
        i += 1;
    }
    if i < bytes.len() && bytes[i] == b'.' {
        i += 1;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
    }
    if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
        let mut j = i + 1;
        if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
            j += 1;
        }
        if j < bytes.len() && bytes[j].is_ascii_digit() {
            while j < bytes.len() && bytes[j].is_ascii_digit() {
                j += 1;
            }
            i = j;
        }
    }
    i
}
