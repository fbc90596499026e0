//! Tokenizer for the assembly text format.
//!
//! Comments (`//` to end of line, `/* ... */`) and whitespace are
//! dropped. Hexadecimal (`0x..`) and decimal literals are kept distinct
//! so byte-exact printing can reproduce the source convention.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Dot,
    Comma,
    Semi,
    Colon,
    Eq,
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Ident(String),
    /// Decimal literal (possibly negative).
    Int(i64),
    /// Hexadecimal literal, `0x` prefixed in the source.
    Hex(i64),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Dot => write!(f, "."),
            Tok::Comma => write!(f, ","),
            Tok::Semi => write!(f, ";"),
            Tok::Colon => write!(f, ":"),
            Tok::Eq => write!(f, "="),
            Tok::LBrace => write!(f, "{{"),
            Tok::RBrace => write!(f, "}}"),
            Tok::LParen => write!(f, "("),
            Tok::RParen => write!(f, ")"),
            Tok::LBracket => write!(f, "["),
            Tok::RBracket => write!(f, "]"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Int(n) => write!(f, "{n}"),
            Tok::Hex(n) => write!(f, "{n:#x}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub tok: Tok,
    pub line: u32,
    pub col: u32,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("lex error at {line}:{col}: unrecognized input {fragment:?}")]
pub struct LexError {
    pub line: u32,
    pub col: u32,
    pub fragment: String,
}

struct Cursor<'a> {
    src: &'a [u8],
    pos: usize,
    line: u32,
    col: u32,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn peek_at(&self, ahead: usize) -> Option<u8> {
        self.src.get(self.pos + ahead).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek()?;
        self.pos += 1;
        if b == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(b)
    }

    fn error(&self, len: usize) -> LexError {
        let end = (self.pos + len).min(self.src.len());
        LexError {
            line: self.line,
            col: self.col,
            fragment: String::from_utf8_lossy(&self.src[self.pos..end]).into_owned(),
        }
    }
}

fn is_ident_start(b: u8) -> bool {
    b.is_ascii_alphabetic() || b == b'_' || b == b'$'
}

fn is_ident_continue(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'$'
}

/// Turns the whole input into tokens, or fails on the first character
/// sequence outside the alphabet.
pub fn tokenize(text: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor {
        src: text.as_bytes(),
        pos: 0,
        line: 1,
        col: 1,
    };
    let mut out = Vec::new();
    'outer: while let Some(b) = cur.peek() {
        if b.is_ascii_whitespace() {
            cur.bump();
            continue;
        }
        if b == b'/' {
            match cur.peek_at(1) {
                Some(b'/') => {
                    while let Some(c) = cur.peek() {
                        if c == b'\n' {
                            break;
                        }
                        cur.bump();
                    }
                    continue 'outer;
                }
                Some(b'*') => {
                    let err = cur.error(2);
                    cur.bump();
                    cur.bump();
                    loop {
                        match (cur.peek(), cur.peek_at(1)) {
                            (Some(b'*'), Some(b'/')) => {
                                cur.bump();
                                cur.bump();
                                continue 'outer;
                            }
                            (Some(_), _) => {
                                cur.bump();
                            }
                            (None, _) => return Err(err),
                        }
                    }
                }
                _ => return Err(cur.error(1)),
            }
        }
        let line = cur.line;
        let col = cur.col;
        let tok = match b {
            b'.' => {
                cur.bump();
                Tok::Dot
            }
            b',' => {
                cur.bump();
                Tok::Comma
            }
            b';' => {
                cur.bump();
                Tok::Semi
            }
            b':' => {
                cur.bump();
                Tok::Colon
            }
            b'=' => {
                cur.bump();
                Tok::Eq
            }
            b'{' => {
                cur.bump();
                Tok::LBrace
            }
            b'}' => {
                cur.bump();
                Tok::RBrace
            }
            b'(' => {
                cur.bump();
                Tok::LParen
            }
            b')' => {
                cur.bump();
                Tok::RParen
            }
            b'[' => {
                cur.bump();
                Tok::LBracket
            }
            b']' => {
                cur.bump();
                Tok::RBracket
            }
            b'<' => {
                // Special method names such as <init> and <clinit>.
                let err = cur.error(4);
                cur.bump();
                let mut name = String::from("<");
                while let Some(c) = cur.peek() {
                    if is_ident_continue(c) {
                        name.push(c as char);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                if cur.peek() != Some(b'>') || name.len() == 1 {
                    return Err(err);
                }
                cur.bump();
                name.push('>');
                Tok::Ident(name)
            }
            b'-' => {
                let err = cur.error(2);
                cur.bump();
                match cur.peek() {
                    Some(c) if c.is_ascii_digit() => match lex_number(&mut cur)? {
                        Tok::Int(n) => Tok::Int(-n),
                        Tok::Hex(n) => Tok::Hex(-n),
                        _ => unreachable!(),
                    },
                    _ => return Err(err),
                }
            }
            c if c.is_ascii_digit() => lex_number(&mut cur)?,
            c if is_ident_start(c) => {
                let mut name = String::new();
                while let Some(c) = cur.peek() {
                    if is_ident_continue(c) {
                        name.push(c as char);
                        cur.bump();
                    } else {
                        break;
                    }
                }
                Tok::Ident(name)
            }
            _ => return Err(cur.error(3)),
        };
        out.push(Token { tok, line, col });
    }
    Ok(out)
}

fn lex_number(cur: &mut Cursor<'_>) -> Result<Tok, LexError> {
    let err = cur.error(4);
    if cur.peek() == Some(b'0') && matches!(cur.peek_at(1), Some(b'x') | Some(b'X')) {
        cur.bump();
        cur.bump();
        let mut value: i64 = 0;
        let mut digits = 0;
        while let Some(c) = cur.peek() {
            if let Some(d) = (c as char).to_digit(16) {
                value = value.checked_mul(16).and_then(|v| v.checked_add(d as i64)).ok_or_else(|| err.clone())?;
                digits += 1;
                cur.bump();
            } else if is_ident_continue(c) {
                return Err(cur.error(1));
            } else {
                break;
            }
        }
        if digits == 0 {
            return Err(err);
        }
        Ok(Tok::Hex(value))
    } else {
        let mut value: i64 = 0;
        while let Some(c) = cur.peek() {
            if c.is_ascii_digit() {
                value = value
                    .checked_mul(10)
                    .and_then(|v| v.checked_add((c - b'0') as i64))
                    .ok_or_else(|| err.clone())?;
                cur.bump();
            } else if is_ident_continue(c) {
                return Err(cur.error(1));
            } else {
                break;
            }
        }
        Ok(Tok::Int(value))
    }
}
