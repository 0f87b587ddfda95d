use serde::{Deserialize, Serialize};
use std::fmt;

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    UndefinedVariable,
    TypeMismatch,
    DivisionByZero,
    IndexOutOfRange,
    UserError,
    ArityError,
    ParseError,
    LexError,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::UndefinedVariable => "UndefinedVariable",
            ErrorKind::TypeMismatch => "TypeMismatch",
            ErrorKind::DivisionByZero => "DivisionByZero",
            ErrorKind::IndexOutOfRange => "IndexOutOfRange",
            ErrorKind::UserError => "UserError",
            ErrorKind::ArityError => "ArityError",
            ErrorKind::ParseError => "ParseError",
            ErrorKind::LexError => "LexError",
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A language error. Only `UserError` carries a message written by the program.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EvalError {
    pub kind: ErrorKind,
    pub message: String,
    pub span: Span,
}

impl EvalError {
    pub fn new(kind: ErrorKind, message: impl Into<String>, span: Span) -> Self {
        EvalError {
            kind,
            message: message.into(),
            span,
        }
    }
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.kind, self.span, self.message)
    }
}

impl std::error::Error for EvalError {}
