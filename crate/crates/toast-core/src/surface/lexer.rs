//! Tokenizer for the textual DSL. Tokens carry byte spans for diagnostics.

use std::fmt;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Nat(u64),
    Str(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Lt,
    Gt,
    Le,
    Ge,
    Eq,
    Bang,
    Question,
    Dot,
    Comma,
    Colon,
    Semi,
    Pipe,
    AndAnd,
    Minus,
    At,
    Slash,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Nat(n) => write!(f, "{n}"),
            Tok::Str(s) => write!(f, "{s:?}"),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Lt => write!(f, "<"),
            Tok::Gt => write!(f, ">"),
            Tok::Le => write!(f, "<="),
            Tok::Ge => write!(f, ">="),
            Tok::Eq => write!(f, "="),
            Tok::Bang => write!(f, "!"),
            Tok::Question => write!(f, "?"),
            Tok::Dot => write!(f, "."),
            Tok::Comma => write!(f, ","),
            Tok::Colon => write!(f, ":"),
            Tok::Semi => write!(f, ";"),
            Tok::Pipe => write!(f, "|"),
            Tok::AndAnd => write!(f, "&&"),
            Tok::Minus => write!(f, "-"),
            Tok::At => write!(f, "@"),
            Tok::Slash => write!(f, "/"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub span: Span,
}

#[derive(Debug, Clone)]
pub struct LexError {
    pub span: Span,
    pub message: String,
}

pub fn lex(input: &str) -> Result<Vec<Token>, LexError> {
    let bytes = input.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        // comments
        if c == '/' && i + 1 < bytes.len() {
            if bytes[i + 1] == b'/' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
                continue;
            }
            if bytes[i + 1] == b'*' {
                let open = i;
                i += 2;
                loop {
                    if i + 1 >= bytes.len() {
                        return Err(LexError {
                            span: Span { start: open, end: bytes.len() },
                            message: "unterminated block comment".into(),
                        });
                    }
                    if bytes[i] == b'*' && bytes[i + 1] == b'/' {
                        i += 2;
                        break;
                    }
                    i += 1;
                }
                continue;
            }
        }
        let start = i;
        let push = |out: &mut Vec<Token>, tok: Tok, start: usize, end: usize| {
            out.push(Token { tok, span: Span { start, end } });
        };
        match c {
            '{' => {
                push(&mut out, Tok::LBrace, start, i + 1);
                i += 1;
            }
            '}' => {
                push(&mut out, Tok::RBrace, start, i + 1);
                i += 1;
            }
            '(' => {
                push(&mut out, Tok::LParen, start, i + 1);
                i += 1;
            }
            ')' => {
                push(&mut out, Tok::RParen, start, i + 1);
                i += 1;
            }
            '[' => {
                push(&mut out, Tok::LBracket, start, i + 1);
                i += 1;
            }
            ']' => {
                push(&mut out, Tok::RBracket, start, i + 1);
                i += 1;
            }
            '<' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    push(&mut out, Tok::Le, start, i + 2);
                    i += 2;
                } else {
                    push(&mut out, Tok::Lt, start, i + 1);
                    i += 1;
                }
            }
            '>' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'=' {
                    push(&mut out, Tok::Ge, start, i + 2);
                    i += 2;
                } else {
                    push(&mut out, Tok::Gt, start, i + 1);
                    i += 1;
                }
            }
            '=' => {
                push(&mut out, Tok::Eq, start, i + 1);
                i += 1;
            }
            '!' => {
                push(&mut out, Tok::Bang, start, i + 1);
                i += 1;
            }
            '?' => {
                push(&mut out, Tok::Question, start, i + 1);
                i += 1;
            }
            '.' => {
                push(&mut out, Tok::Dot, start, i + 1);
                i += 1;
            }
            ',' => {
                push(&mut out, Tok::Comma, start, i + 1);
                i += 1;
            }
            ':' => {
                push(&mut out, Tok::Colon, start, i + 1);
                i += 1;
            }
            ';' => {
                push(&mut out, Tok::Semi, start, i + 1);
                i += 1;
            }
            '|' => {
                push(&mut out, Tok::Pipe, start, i + 1);
                i += 1;
            }
            '-' => {
                push(&mut out, Tok::Minus, start, i + 1);
                i += 1;
            }
            '@' => {
                push(&mut out, Tok::At, start, i + 1);
                i += 1;
            }
            '/' => {
                push(&mut out, Tok::Slash, start, i + 1);
                i += 1;
            }
            '&' => {
                if i + 1 < bytes.len() && bytes[i + 1] == b'&' {
                    push(&mut out, Tok::AndAnd, start, i + 2);
                    i += 2;
                } else {
                    return Err(LexError {
                        span: Span { start, end: i + 1 },
                        message: "expected `&&`".into(),
                    });
                }
            }
            '"' => {
                i += 1;
                let mut s = String::new();
                loop {
                    if i >= bytes.len() {
                        return Err(LexError {
                            span: Span { start, end: bytes.len() },
                            message: "unterminated string literal".into(),
                        });
                    }
                    match bytes[i] {
                        b'"' => {
                            i += 1;
                            break;
                        }
                        b'\\' if i + 1 < bytes.len() => {
                            s.push(bytes[i + 1] as char);
                            i += 2;
                        }
                        b => {
                            s.push(b as char);
                            i += 1;
                        }
                    }
                }
                push(&mut out, Tok::Str(s), start, i);
            }
            c if c.is_ascii_digit() => {
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    j += 1;
                }
                let n: u64 = input[i..j].parse().map_err(|_| LexError {
                    span: Span { start, end: j },
                    message: "number literal out of range".into(),
                })?;
                push(&mut out, Tok::Nat(n), start, j);
                i = j;
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                push(&mut out, Tok::Ident(input[i..j].to_string()), start, j);
                i = j;
            }
            other => {
                return Err(LexError {
                    span: Span { start, end: i + 1 },
                    message: format!("unexpected character `{other}`"),
                });
            }
        }
    }
    Ok(out)
}
