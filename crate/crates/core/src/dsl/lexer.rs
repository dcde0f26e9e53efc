use std::fmt;

use super::{DslError, Span};

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Tok {
    Ident(String),
    Int(i64),
    LParen,
    RParen,
    Comma,
    Eof,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "`{s}`"),
            Tok::Int(n) => write!(f, "`{n}`"),
            Tok::LParen => f.write_str("`(`"),
            Tok::RParen => f.write_str("`)`"),
            Tok::Comma => f.write_str("`,`"),
            Tok::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Token {
    pub tok: Tok,
    pub span: Span,
}

pub(crate) fn tokenize(src: &str) -> Result<Vec<Token>, DslError> {
    let mut out = Vec::new();
    let mut chars = src.chars().peekable();
    let (mut line, mut column) = (1usize, 1usize);

    while let Some(&c) = chars.peek() {
        let span = Span { line, column };
        match c {
            '\n' => {
                chars.next();
                line += 1;
                column = 1;
            }
            c if c.is_whitespace() => {
                chars.next();
                column += 1;
            }
            '#' => {
                while chars.peek().is_some_and(|&c| c != '\n') {
                    chars.next();
                    column += 1;
                }
            }
            '(' | ')' | ',' => {
                chars.next();
                column += 1;
                let tok = match c {
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => Tok::Comma,
                };
                out.push(Token { tok, span });
            }
            c if c == '-' || c == '+' || c.is_ascii_digit() => {
                let mut text = String::new();
                text.push(c);
                chars.next();
                column += 1;
                while let Some(&d) = chars.peek().filter(|d| d.is_ascii_digit()) {
                    text.push(d);
                    chars.next();
                    column += 1;
                }
                let value = text.parse::<i64>().map_err(|_| DslError::Syntax {
                    span,
                    expected: "an integer".into(),
                    found: format!("`{text}`"),
                })?;
                out.push(Token {
                    tok: Tok::Int(value),
                    span,
                });
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut text = String::new();
                while let Some(&d) = chars
                    .peek()
                    .filter(|d| d.is_ascii_alphanumeric() || **d == '_')
                {
                    text.push(d);
                    chars.next();
                    column += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(text),
                    span,
                });
            }
            other => {
                return Err(DslError::Syntax {
                    span,
                    expected: "a statement".into(),
                    found: format!("`{other}`"),
                })
            }
        }
    }
    out.push(Token {
        tok: Tok::Eof,
        span: Span { line, column },
    });
    Ok(out)
}
