//! Textual schema language (`.dws` files).
//!
//! The grammar is line oriented: every statement ends at a newline and blocks
//! open with `{` at the end of a line and close with `}` on a line of its own.
//!
//! ```text
//! schema medical-warehouse version 1
//!
//! dimension patient {
//!   naturalkey code
//!   code text
//!   sport text
//! }
//!
//! fact biometrical {
//!   grain patient patient
//!   measure value decimal additive
//! }
//! ```
//!
//! Comments start with `#` and run to the end of the line.

mod lexer;
mod parser;
mod print;

use std::fmt;
use std::path::Path;

use serde::Serialize;

pub use lexer::{tokenize, Keyword, Token, TokenKind};
pub use parser::{check_schema, parse_schema};
pub use print::serialize_schema;

#[derive(Debug, Clone)]
pub struct SourceText {
    pub text: String,
    /// File name, or `<inline>`.
    pub origin: String,
}

impl SourceText {
    pub fn inline(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            origin: "<inline>".to_string(),
        }
    }

    pub fn read(path: &Path) -> std::io::Result<Self> {
        Ok(Self {
            text: std::fs::read_to_string(path)?,
            origin: path.display().to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub pos: Pos,
    pub message: String,
}

impl Diagnostic {
    pub fn error(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Error,
            pos,
            message: message.into(),
        }
    }

    pub fn warning(pos: Pos, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            pos,
            message: message.into(),
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }

    /// `origin:line:column: severity: message`
    pub fn render(&self, origin: &str) -> String {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        format!(
            "{origin}:{}:{}: {sev}: {}",
            self.pos.line, self.pos.column, self.message
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.pos.line, self.pos.column, self.message)
    }
}
