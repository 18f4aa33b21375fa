use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    Syntax,
    UnknownIdentifier,
    Arity,
    IndexOutOfRange,
    DivisionByZero,
    NonFiniteResult,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Syntax => "syntax",
            ErrorKind::UnknownIdentifier => "unknown-identifier",
            ErrorKind::Arity => "arity",
            ErrorKind::IndexOutOfRange => "index-out-of-range",
            ErrorKind::DivisionByZero => "division-by-zero",
            ErrorKind::NonFiniteResult => "non-finite-result",
        }
    }
}

/// Positioned failure raised while parsing or evaluating a controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DslError {
    pub kind: ErrorKind,
    pub line: u32,
    pub column: u32,
    pub message: String,
}

pub type ParseError = DslError;
pub type EvalError = DslError;

impl DslError {
    pub fn new(kind: ErrorKind, line: u32, column: u32, message: impl Into<String>) -> Self {
        Self {
            kind,
            line,
            column,
            message: message.into(),
        }
    }
}

impl fmt::Display for DslError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} error at {}:{}: {}",
            self.kind.as_str(),
            self.line,
            self.column,
            self.message
        )
    }
}

impl std::error::Error for DslError {}

/// Rejected parameter write-back.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("unknown parameter `{0}`")]
    Unknown(String),
    #[error("value {value} for `{name}` outside [{lo}, {hi}]")]
    OutOfRange {
        name: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
}
