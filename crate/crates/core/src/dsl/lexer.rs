use std::fmt;

use super::{Diagnostic, Pos};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keyword {
    Schema,
    Version,
    Dimension,
    NaturalKey,
    Hierarchy,
    Level,
    Fact,
    Grain,
    Measure,
    Group,
    Central,
    Satellite,
    Bridge,
    Outrigger,
}

impl Keyword {
    fn from_word(word: &str) -> Option<Self> {
        Some(match word {
            "schema" => Keyword::Schema,
            "version" => Keyword::Version,
            "dimension" => Keyword::Dimension,
            "naturalkey" => Keyword::NaturalKey,
            "hierarchy" => Keyword::Hierarchy,
            "level" => Keyword::Level,
            "fact" => Keyword::Fact,
            "grain" => Keyword::Grain,
            "measure" => Keyword::Measure,
            "group" => Keyword::Group,
            "central" => Keyword::Central,
            "satellite" => Keyword::Satellite,
            "bridge" => Keyword::Bridge,
            "outrigger" => Keyword::Outrigger,
            _ => return None,
        })
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Keyword::Schema => "schema",
            Keyword::Version => "version",
            Keyword::Dimension => "dimension",
            Keyword::NaturalKey => "naturalkey",
            Keyword::Hierarchy => "hierarchy",
            Keyword::Level => "level",
            Keyword::Fact => "fact",
            Keyword::Grain => "grain",
            Keyword::Measure => "measure",
            Keyword::Group => "group",
            Keyword::Central => "central",
            Keyword::Satellite => "satellite",
            Keyword::Bridge => "bridge",
            Keyword::Outrigger => "outrigger",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Keyword(Keyword),
    Ident(String),
    Integer(u64),
    LBrace,
    RBrace,
    Newline,
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword(k) => write!(f, "keyword `{}`", k.as_str()),
            TokenKind::Ident(s) => write!(f, "identifier `{s}`"),
            TokenKind::Integer(n) => write!(f, "integer `{n}`"),
            TokenKind::LBrace => f.write_str("`{`"),
            TokenKind::RBrace => f.write_str("`}`"),
            TokenKind::Newline => f.write_str("end of line"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Pos,
}

fn is_word_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-'
}

/// Splits source text into tokens. Stops at the first lexical error.
/// Consecutive blank lines and comments collapse into a single newline token.
pub fn tokenize(src: &str) -> Result<Vec<Token>, Diagnostic> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut line = 1usize;
    let mut col = 1usize;
    let mut chars = src.char_indices().peekable();

    let push_newline = |tokens: &mut Vec<Token>, pos: Pos| {
        let collapsible = tokens
            .last()
            .is_none_or(|t| t.kind == TokenKind::Newline);
        if !collapsible {
            tokens.push(Token {
                kind: TokenKind::Newline,
                pos,
            });
        }
    };

    while let Some(&(start, c)) = chars.peek() {
        let pos = Pos { line, column: col };
        match c {
            '\n' => {
                chars.next();
                push_newline(&mut tokens, pos);
                line += 1;
                col = 1;
            }
            ' ' | '\t' | '\r' | '\u{feff}' => {
                chars.next();
                col += 1;
            }
            '#' => {
                while let Some(&(_, c)) = chars.peek() {
                    if c == '\n' {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
            }
            '{' | '}' => {
                chars.next();
                col += 1;
                tokens.push(Token {
                    kind: if c == '{' {
                        TokenKind::LBrace
                    } else {
                        TokenKind::RBrace
                    },
                    pos,
                });
            }
            c if c.is_ascii_digit() => {
                let mut end = start;
                let mut malformed = false;
                while let Some(&(i, c)) = chars.peek() {
                    if c.is_ascii_digit() {
                        end = i + c.len_utf8();
                    } else if is_word_char(c) || c.is_alphabetic() || c == '_' {
                        malformed = true;
                        end = i + c.len_utf8();
                    } else {
                        break;
                    }
                    chars.next();
                    col += 1;
                }
                let text = &src[start..end];
                if malformed {
                    return Err(Diagnostic::error(
                        pos,
                        format!("lexical error: malformed number `{text}`"),
                    ));
                }
                let n = text.parse::<u64>().map_err(|_| {
                    Diagnostic::error(pos, format!("lexical error: integer `{text}` is too large"))
                })?;
                tokens.push(Token {
                    kind: TokenKind::Integer(n),
                    pos,
                });
            }
            c if c.is_ascii_lowercase() => {
                let mut end = start;
                while let Some(&(i, c)) = chars.peek() {
                    if !is_word_char(c) {
                        break;
                    }
                    end = i + c.len_utf8();
                    chars.next();
                    col += 1;
                }
                let word = &src[start..end];
                if word.ends_with('-') || word.contains("--") {
                    return Err(Diagnostic::error(
                        pos,
                        format!("lexical error: malformed identifier `{word}`"),
                    ));
                }
                let kind = match Keyword::from_word(word) {
                    Some(k) => TokenKind::Keyword(k),
                    None => TokenKind::Ident(word.to_string()),
                };
                tokens.push(Token { kind, pos });
            }
            other => {
                let shown: String = other.escape_debug().collect();
                return Err(Diagnostic::error(
                    pos,
                    format!("lexical error: unexpected character `{shown}`"),
                ));
            }
        }
    }
    let pos = Pos { line, column: col };
    push_newline(&mut tokens, pos);
    tokens.push(Token {
        kind: TokenKind::Eof,
        pos,
    });
    Ok(tokens)
}
