use super::validate::{Diagnostic, DiagnosticKind};

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Tok {
    Ident(String),
    /// Unsigned numeric literal.
    Number(f64),
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    Colon,
    Assign,
    EqEq,
    Le,
    Ge,
    Ne,
    Plus,
    Minus,
    Star,
    Slash,
    DotDot,
    Pipe,
}

impl Tok {
    pub(crate) fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(v) => format!("number {v}"),
            other => format!("`{}`", other.text()),
        }
    }

    fn text(&self) -> &'static str {
        match self {
            Tok::LBrace => "{",
            Tok::RBrace => "}",
            Tok::LBracket => "[",
            Tok::RBracket => "]",
            Tok::LParen => "(",
            Tok::RParen => ")",
            Tok::Comma => ",",
            Tok::Colon => ":",
            Tok::Assign => "=",
            Tok::EqEq => "==",
            Tok::Le => "<=",
            Tok::Ge => ">=",
            Tok::Ne => "!=",
            Tok::Plus => "+",
            Tok::Minus => "-",
            Tok::Star => "*",
            Tok::Slash => "/",
            Tok::DotDot => "..",
            Tok::Pipe => "|",
            Tok::Ident(_) | Tok::Number(_) => "",
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct Spanned {
    pub tok: Tok,
    pub line: usize,
    pub column: usize,
}

/// Tokens of one logical entry plus its trailing `#` description.
#[derive(Debug, Clone)]
pub(crate) struct LexedEntry {
    pub tokens: Vec<Spanned>,
    pub description: String,
    pub line: usize,
    /// Position just past the last token, for end-of-input errors.
    pub end: (usize, usize),
}

pub(crate) fn lex_entry(text: &str, first_line: usize) -> Result<LexedEntry, Diagnostic> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut comments: Vec<String> = Vec::new();
    let (mut line, mut col) = (first_line, 1usize);
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        let advance = |n: usize, i: &mut usize, col: &mut usize| {
            *i += n;
            *col += n;
        };
        if c == '\n' {
            line += 1;
            col = 1;
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            advance(1, &mut i, &mut col);
            continue;
        }
        if c == '#' {
            let start = i + 1;
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            let comment: String = chars[start..i].iter().collect();
            let comment = comment.trim();
            if !comment.is_empty() {
                comments.push(comment.to_string());
            }
            continue;
        }
        let two: String = chars[i..(i + 2).min(chars.len())].iter().collect();
        let tok2 = match two.as_str() {
            "==" => Some(Tok::EqEq),
            "<=" => Some(Tok::Le),
            ">=" => Some(Tok::Ge),
            "!=" => Some(Tok::Ne),
            ".." => Some(Tok::DotDot),
            _ => None,
        };
        if let Some(tok) = tok2 {
            tokens.push(Spanned { tok, line: tl, column: tc });
            advance(2, &mut i, &mut col);
            continue;
        }
        let tok1 = match c {
            '{' => Some(Tok::LBrace),
            '}' => Some(Tok::RBrace),
            '[' => Some(Tok::LBracket),
            ']' => Some(Tok::RBracket),
            '(' => Some(Tok::LParen),
            ')' => Some(Tok::RParen),
            ',' => Some(Tok::Comma),
            ':' => Some(Tok::Colon),
            '=' => Some(Tok::Assign),
            '+' => Some(Tok::Plus),
            '-' | '\u{2212}' => Some(Tok::Minus),
            '*' | '\u{00b7}' | '\u{00d7}' => Some(Tok::Star),
            '/' => Some(Tok::Slash),
            '|' => Some(Tok::Pipe),
            '\u{2264}' => Some(Tok::Le),
            '\u{2265}' => Some(Tok::Ge),
            '\u{2260}' => Some(Tok::Ne),
            '<' => Some(Tok::Le),
            '>' => Some(Tok::Ge),
            _ => None,
        };
        if let Some(tok) = tok1 {
            tokens.push(Spanned { tok, line: tl, column: tc });
            advance(1, &mut i, &mut col);
            continue;
        }
        if c.is_ascii_digit() || (c == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit())) {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' && chars.get(i + 1).is_some_and(|d| d.is_ascii_digit()) {
                i += 1;
                while i < chars.len() && chars[i].is_ascii_digit() {
                    i += 1;
                }
            }
            let lit: String = chars[start..i].iter().collect();
            col += i - start;
            let value: f64 = lit.parse().map_err(|_| syntax(tl, tc, format!("invalid number `{lit}`")))?;
            tokens.push(Spanned { tok: Tok::Number(value), line: tl, column: tc });
            continue;
        }
        if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            let ident: String = chars[start..i].iter().collect();
            col += i - start;
            tokens.push(Spanned { tok: Tok::Ident(ident), line: tl, column: tc });
            continue;
        }
        return Err(syntax(tl, tc, format!("unexpected character `{c}`")));
    }
    Ok(LexedEntry { tokens, description: comments.join(" "), line: first_line, end: (line, col) })
}

pub(crate) fn syntax(line: usize, column: usize, message: impl Into<String>) -> Diagnostic {
    Diagnostic::at(DiagnosticKind::SyntaxError, message, line, column)
}
