use std::cmp::Ordering;

use super::ast::{BinaryOp, Expr, ExprKind, Program, Span, Stmt, UnaryOp};
use super::env::Environment;
use super::error::{ErrorKind, EvalError};
use super::parser::parse;
use super::value::{render, Value};

/// Largest list `range` and `rand` will build.
const MAX_GENERATED_LEN: i64 = 1_000_000;

const LCG_MUL: u64 = 6364136223846793005;
const LCG_INC: u64 = 1442695040888963407;

/// Outcome of running one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    /// Environment after the cell. Equal to the input environment when `error` is set.
    pub env: Environment,
    /// Rendered outputs, in emission order. Outputs emitted before an error are kept.
    pub outputs: Vec<String>,
    pub error: Option<EvalError>,
}

/// Runs a parsed program against a fork of `env`.
///
/// Each top-level expression statement appends its rendered value; a
/// top-level `show(..)` call appends once. Execution stops at the first
/// error and the pre-cell environment is returned.
pub fn eval_cell(prog: &Program, env: &Environment) -> CellResult {
    let mut interp = Interp {
        env: env.fork(),
        outputs: Vec::new(),
    };
    for stmt in &prog.stmts {
        if let Err(error) = interp.stmt(stmt) {
            return CellResult {
                env: env.clone(),
                outputs: interp.outputs,
                error: Some(error),
            };
        }
    }
    CellResult {
        env: interp.env,
        outputs: interp.outputs,
        error: None,
    }
}

/// Parses and runs `source`; lex and parse errors land in the error slot.
pub fn run_source(source: &str, env: &Environment) -> CellResult {
    match parse(source) {
        Ok(prog) => eval_cell(&prog, env),
        Err(error) => CellResult {
            env: env.clone(),
            outputs: Vec::new(),
            error: Some(error),
        },
    }
}

/// The fixed 64-bit LCG behind `rand`: the state advances before each draw
/// and the top 53 bits become a float in `[0, 1)`.
pub fn lcg_floats(seed: u64, n: usize) -> Vec<f64> {
    let mut state = seed;
    (0..n)
        .map(|_| {
            state = state.wrapping_mul(LCG_MUL).wrapping_add(LCG_INC);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
        .collect()
}

struct Interp {
    env: Environment,
    outputs: Vec<String>,
}

type EResult<T> = Result<T, EvalError>;

fn mismatch(msg: impl Into<String>, span: Span) -> EvalError {
    EvalError::new(ErrorKind::TypeMismatch, msg, span)
}

fn finite(x: f64, span: Span) -> EResult<Value> {
    if x.is_finite() {
        Ok(Value::Float(x))
    } else {
        Err(mismatch("non-finite float result", span))
    }
}

fn overflow(span: Span) -> EvalError {
    mismatch("integer overflow", span)
}

impl Interp {
    fn stmt(&mut self, stmt: &Stmt) -> EResult<()> {
        match stmt {
            Stmt::Assign { name, value, .. } => {
                let v = self.expr(value)?;
                self.env.set(name.clone(), v);
            }
            Stmt::Expr(e) => {
                let v = self.expr(e)?;
                if !matches!(&e.kind, ExprKind::Call(name, _) if name == "show") {
                    self.outputs.push(render(&v));
                }
            }
        }
        Ok(())
    }

    fn expr(&mut self, e: &Expr) -> EResult<Value> {
        let span = e.span;
        match &e.kind {
            ExprKind::Null => Ok(Value::Null),
            ExprKind::Bool(b) => Ok(Value::Bool(*b)),
            ExprKind::Int(i) => Ok(Value::Int(*i)),
            ExprKind::Float(f) => Ok(Value::Float(*f)),
            ExprKind::Text(s) => Ok(Value::text(s)),
            ExprKind::Ident(name) => self.env.get(name).cloned().ok_or_else(|| {
                EvalError::new(
                    ErrorKind::UndefinedVariable,
                    format!("undefined variable `{name}`"),
                    span,
                )
            }),
            ExprKind::List(items) => {
                let vals = items
                    .iter()
                    .map(|i| self.expr(i))
                    .collect::<EResult<Vec<_>>>()?;
                Ok(Value::list(vals))
            }
            ExprKind::Unary(op, inner) => {
                let v = self.expr(inner)?;
                unary(*op, v, span)
            }
            ExprKind::Binary(BinaryOp::And, l, r) => self.logic(true, l, r),
            ExprKind::Binary(BinaryOp::Or, l, r) => self.logic(false, l, r),
            ExprKind::Binary(op, l, r) => {
                let lv = self.expr(l)?;
                let rv = self.expr(r)?;
                binary(*op, lv, rv, span)
            }
            ExprKind::Index(base, index) => {
                let b = self.expr(base)?;
                let i = self.expr(index)?;
                index_value(b, i, span)
            }
            ExprKind::Call(name, args) => {
                let vals = args
                    .iter()
                    .map(|a| self.expr(a))
                    .collect::<EResult<Vec<_>>>()?;
                if name == "show" {
                    let [v] = take::<1>(name, vals, span)?;
                    self.outputs.push(render(&v));
                    return Ok(v);
                }
                call_builtin(name, vals, span)
            }
        }
    }

    fn logic(&mut self, is_and: bool, l: &Expr, r: &Expr) -> EResult<Value> {
        let word = if is_and { "and" } else { "or" };
        let Value::Bool(lb) = self.expr(l)? else {
            return Err(mismatch(format!("`{word}` expects bool operands"), l.span));
        };
        if lb != is_and {
            return Ok(Value::Bool(lb));
        }
        match self.expr(r)? {
            Value::Bool(rb) => Ok(Value::Bool(rb)),
            _ => Err(mismatch(format!("`{word}` expects bool operands"), r.span)),
        }
    }
}

fn unary(op: UnaryOp, v: Value, span: Span) -> EResult<Value> {
    match (op, v) {
        (UnaryOp::Neg, Value::Int(i)) => i.checked_neg().map(Value::Int).ok_or_else(|| overflow(span)),
        (UnaryOp::Neg, Value::Float(f)) => Ok(Value::Float(-f)),
        (UnaryOp::Not, Value::Bool(b)) => Ok(Value::Bool(!b)),
        (UnaryOp::Neg, v) => Err(mismatch(format!("cannot negate {}", v.type_name()), span)),
        (UnaryOp::Not, v) => Err(mismatch(format!("`not` expects bool, got {}", v.type_name()), span)),
    }
}

fn binary(op: BinaryOp, l: Value, r: Value, span: Span) -> EResult<Value> {
    use BinaryOp::*;
    match op {
        Eq => return Ok(Value::Bool(l == r)),
        Ne => return Ok(Value::Bool(l != r)),
        Lt | Le | Gt | Ge => {
            let ord = compare(&l, &r, span)?;
            let b = match op {
                Lt => ord == Ordering::Less,
                Le => ord != Ordering::Greater,
                Gt => ord == Ordering::Greater,
                _ => ord != Ordering::Less,
            };
            return Ok(Value::Bool(b));
        }
        _ => {}
    }
    match (&l, &r) {
        (Value::Text(a), Value::Text(b)) if op == Add => Ok(Value::text(format!("{a}{b}"))),
        (Value::Int(a), Value::Int(b)) => int_arith(op, *a, *b, span),
        _ => match (l.as_f64(), r.as_f64()) {
            (Some(a), Some(b)) => float_arith(op, a, b, span),
            _ => Err(mismatch(
                format!(
                    "unsupported operands for `{}`: {} and {}",
                    op.symbol(),
                    l.type_name(),
                    r.type_name()
                ),
                span,
            )),
        },
    }
}

fn int_arith(op: BinaryOp, a: i64, b: i64, span: Span) -> EResult<Value> {
    let div_zero = || EvalError::new(ErrorKind::DivisionByZero, "division by zero", span);
    let r = match op {
        BinaryOp::Add => a.checked_add(b),
        BinaryOp::Sub => a.checked_sub(b),
        BinaryOp::Mul => a.checked_mul(b),
        BinaryOp::Div => {
            if b == 0 {
                return Err(div_zero());
            }
            a.checked_div(b)
        }
        BinaryOp::Rem => {
            if b == 0 {
                return Err(div_zero());
            }
            a.checked_rem(b)
        }
        BinaryOp::Pow => {
            if b < 0 {
                return float_arith(op, a as f64, b as f64, span);
            }
            u32::try_from(b).ok().and_then(|e| a.checked_pow(e))
        }
        _ => unreachable!("non-arithmetic operator"),
    };
    r.map(Value::Int).ok_or_else(|| overflow(span))
}

fn float_arith(op: BinaryOp, a: f64, b: f64, span: Span) -> EResult<Value> {
    let div_zero = || EvalError::new(ErrorKind::DivisionByZero, "division by zero", span);
    let x = match op {
        BinaryOp::Add => a + b,
        BinaryOp::Sub => a - b,
        BinaryOp::Mul => a * b,
        BinaryOp::Div if b == 0.0 => return Err(div_zero()),
        BinaryOp::Div => a / b,
        BinaryOp::Rem if b == 0.0 => return Err(div_zero()),
        BinaryOp::Rem => a % b,
        BinaryOp::Pow if a == 0.0 && b < 0.0 => return Err(div_zero()),
        BinaryOp::Pow => a.powf(b),
        _ => unreachable!("non-arithmetic operator"),
    };
    finite(x, span)
}

fn compare(l: &Value, r: &Value, span: Span) -> EResult<Ordering> {
    match (l, r) {
        (Value::Text(a), Value::Text(b)) => Ok(a.cmp(b)),
        _ => match (l.as_f64(), r.as_f64()) {
            (Some(a), Some(b)) => Ok(a.partial_cmp(&b).unwrap_or(Ordering::Equal)),
            _ => Err(mismatch(
                format!("cannot order {} and {}", l.type_name(), r.type_name()),
                span,
            )),
        },
    }
}

fn index_value(base: Value, index: Value, span: Span) -> EResult<Value> {
    let Value::Int(i) = index else {
        return Err(mismatch(
            format!("index must be int, got {}", index.type_name()),
            span,
        ));
    };
    let oob = |len: usize| {
        EvalError::new(
            ErrorKind::IndexOutOfRange,
            format!("index {i} out of range for length {len}"),
            span,
        )
    };
    match base {
        Value::List(items) => usize::try_from(i)
            .ok()
            .and_then(|i| items.get(i).cloned())
            .ok_or_else(|| oob(items.len())),
        Value::Text(s) => usize::try_from(i)
            .ok()
            .and_then(|i| s.chars().nth(i))
            .map(|c| Value::text(c.to_string()))
            .ok_or_else(|| oob(s.chars().count())),
        other => Err(mismatch(format!("cannot index {}", other.type_name()), span)),
    }
}

fn take<const N: usize>(name: &str, args: Vec<Value>, span: Span) -> EResult<[Value; N]> {
    let got = args.len();
    args.try_into().map_err(|_| {
        EvalError::new(
            ErrorKind::ArityError,
            format!("{name} expects {N} argument(s), got {got}"),
            span,
        )
    })
}

fn list_arg(name: &str, v: &Value, span: Span) -> EResult<std::sync::Arc<Vec<Value>>> {
    match v {
        Value::List(items) => Ok(items.clone()),
        other => Err(mismatch(
            format!("{name} expects a list, got {}", other.type_name()),
            span,
        )),
    }
}

fn int_arg(name: &str, v: &Value, span: Span) -> EResult<i64> {
    match v {
        Value::Int(i) => Ok(*i),
        other => Err(mismatch(
            format!("{name} expects an int, got {}", other.type_name()),
            span,
        )),
    }
}

fn numbers(name: &str, items: &[Value], span: Span) -> EResult<Vec<f64>> {
    items
        .iter()
        .map(|v| {
            v.as_f64().ok_or_else(|| {
                mismatch(
                    format!("{name} expects numbers, got {}", v.type_name()),
                    span,
                )
            })
        })
        .collect()
}

fn check_len(name: &str, n: i64, span: Span) -> EResult<usize> {
    if !(0..=MAX_GENERATED_LEN).contains(&n) {
        return Err(mismatch(
            format!("{name}: length {n} outside 0..={MAX_GENERATED_LEN}"),
            span,
        ));
    }
    Ok(n as usize)
}

fn call_builtin(name: &str, args: Vec<Value>, span: Span) -> EResult<Value> {
    match name {
        "len" => {
            let [v] = take::<1>(name, args, span)?;
            match v {
                Value::List(items) => Ok(Value::Int(items.len() as i64)),
                Value::Text(s) => Ok(Value::Int(s.chars().count() as i64)),
                other => Err(mismatch(format!("len of {}", other.type_name()), span)),
            }
        }
        "sum" => {
            let [v] = take::<1>(name, args, span)?;
            let items = list_arg(name, &v, span)?;
            if items.iter().all(|v| matches!(v, Value::Int(_))) {
                let mut acc: i64 = 0;
                for v in items.iter() {
                    if let Value::Int(i) = v {
                        acc = acc.checked_add(*i).ok_or_else(|| overflow(span))?;
                    }
                }
                return Ok(Value::Int(acc));
            }
            let xs = numbers(name, &items, span)?;
            finite(xs.iter().sum(), span)
        }
        "mean" => {
            let [v] = take::<1>(name, args, span)?;
            let items = list_arg(name, &v, span)?;
            if items.is_empty() {
                return Err(mismatch("empty list", span));
            }
            let xs = numbers(name, &items, span)?;
            finite(xs.iter().sum::<f64>() / xs.len() as f64, span)
        }
        "min" | "max" => {
            let [v] = take::<1>(name, args, span)?;
            let items = list_arg(name, &v, span)?;
            if items.is_empty() {
                return Err(mismatch("empty list", span));
            }
            let xs = numbers(name, &items, span)?;
            let mut best = 0;
            for (i, x) in xs.iter().enumerate().skip(1) {
                let better = if name == "min" { *x < xs[best] } else { *x > xs[best] };
                if better {
                    best = i;
                }
            }
            Ok(items[best].clone())
        }
        "abs" => {
            let [v] = take::<1>(name, args, span)?;
            match v {
                Value::Int(i) => i.checked_abs().map(Value::Int).ok_or_else(|| overflow(span)),
                Value::Float(f) => Ok(Value::Float(f.abs())),
                other => Err(mismatch(format!("abs of {}", other.type_name()), span)),
            }
        }
        "round" => {
            let [v] = take::<1>(name, args, span)?;
            match v {
                Value::Int(i) => Ok(Value::Int(i)),
                Value::Float(f) => {
                    // f64::round rounds half away from zero
                    let r = f.round();
                    if r >= -9.223_372_036_854_775_808e18 && r < 9.223_372_036_854_775_808e18 {
                        Ok(Value::Int(r as i64))
                    } else {
                        Err(overflow(span))
                    }
                }
                other => Err(mismatch(format!("round of {}", other.type_name()), span)),
            }
        }
        "range" => {
            let (lo, hi) = match args.len() {
                1 => (0, int_arg(name, &args[0], span)?),
                2 => (int_arg(name, &args[0], span)?, int_arg(name, &args[1], span)?),
                n => {
                    return Err(EvalError::new(
                        ErrorKind::ArityError,
                        format!("range expects 1 or 2 arguments, got {n}"),
                        span,
                    ))
                }
            };
            let n = hi.saturating_sub(lo).max(0);
            check_len(name, n, span)?;
            Ok(Value::list((lo..hi).map(Value::Int).collect()))
        }
        "append" => {
            let [l, v] = take::<2>(name, args, span)?;
            let mut items = (*list_arg(name, &l, span)?).clone();
            items.push(v);
            Ok(Value::list(items))
        }
        "concat" => {
            let [a, b] = take::<2>(name, args, span)?;
            let mut items = (*list_arg(name, &a, span)?).clone();
            items.extend(list_arg(name, &b, span)?.iter().cloned());
            Ok(Value::list(items))
        }
        "sort" => {
            let [l] = take::<1>(name, args, span)?;
            let mut items = (*list_arg(name, &l, span)?).clone();
            if items.iter().all(|v| matches!(v, Value::Text(_))) {
                items.sort_by(|a, b| match (a, b) {
                    (Value::Text(a), Value::Text(b)) => a.cmp(b),
                    _ => Ordering::Equal,
                });
            } else {
                numbers(name, &items, span)?;
                items.sort_by(|a, b| {
                    let (x, y) = (a.as_f64().unwrap_or(0.0), b.as_f64().unwrap_or(0.0));
                    x.partial_cmp(&y).unwrap_or(Ordering::Equal)
                });
            }
            Ok(Value::list(items))
        }
        "str" => {
            let [v] = take::<1>(name, args, span)?;
            Ok(Value::text(render(&v)))
        }
        "error" => {
            let [v] = take::<1>(name, args, span)?;
            Err(EvalError::new(ErrorKind::UserError, render(&v), span))
        }
        "rand" => {
            let [seed, n] = take::<2>(name, args, span)?;
            let seed = int_arg(name, &seed, span)?;
            let n = check_len(name, int_arg(name, &n, span)?, span)?;
            Ok(Value::list(
                lcg_floats(seed as u64, n).into_iter().map(Value::Float).collect(),
            ))
        }
        _ => Err(EvalError::new(
            ErrorKind::UndefinedVariable,
            format!("unknown function `{name}`"),
            span,
        )),
    }
}
