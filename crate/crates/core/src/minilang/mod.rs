//! A small deterministic expression language used as the notebook kernel.
//!
//! Cells hold straight-line programs: assignments and expression statements
//! separated by newlines or `;`. Every top-level expression statement renders
//! its value into the cell output. There are no loops, conditionals or user
//! functions; a fixed table of builtins covers aggregation and seeded
//! pseudo-random data.

mod ast;
mod env;
mod error;
mod eval;
mod lexer;
mod parser;
mod value;

pub use ast::{BinaryOp, Expr, ExprKind, Program, Span, Stmt, UnaryOp};
pub use env::Environment;
pub use error::{ErrorKind, EvalError};
pub use eval::{eval_cell, lcg_floats, run_source, CellResult};
pub use parser::parse;
pub use value::{render, Value};
