use std::fmt;
use std::sync::Arc;

/// Runtime value. Lists are immutable and shared; "modifying" builtins
/// build new lists.
///
/// Equality is structural and does not cross numeric types: `Int(2)` is not
/// equal to `Float(2.0)`. Floats are always finite (non-finite results are
/// rejected at the operation that would produce them), so `PartialEq` on them
/// behaves like a total equality.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Text(Arc<str>),
    List(Arc<Vec<Value>>),
}

impl Value {
    pub fn text(s: impl AsRef<str>) -> Value {
        Value::Text(Arc::from(s.as_ref()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::new(items))
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Text(_) => "text",
            Value::List(_) => "list",
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self))
    }
}

/// Canonical text form of a value.
///
/// Text is verbatim at top level and quoted inside lists. Floats use the
/// shortest representation that round-trips, with `.0` appended to integral
/// values.
pub fn render(v: &Value) -> String {
    let mut out = String::new();
    render_into(v, true, &mut out);
    out
}

fn render_into(v: &Value, top: bool, out: &mut String) {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Int(i) => out.push_str(&i.to_string()),
        Value::Float(x) => out.push_str(&render_float(*x)),
        Value::Text(s) if top => out.push_str(s),
        Value::Text(s) => {
            out.push('"');
            for ch in s.chars() {
                match ch {
                    '"' => out.push_str("\\\""),
                    '\\' => out.push_str("\\\\"),
                    '\n' => out.push_str("\\n"),
                    c => out.push(c),
                }
            }
            out.push('"');
        }
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_into(item, false, out);
            }
            out.push(']');
        }
    }
}

fn render_float(x: f64) -> String {
    // Display for f64 is the shortest round-tripping decimal, never exponential.
    let s = format!("{x}");
    if x.is_finite() && !s.contains('.') {
        format!("{s}.0")
    } else {
        s
    }
}
