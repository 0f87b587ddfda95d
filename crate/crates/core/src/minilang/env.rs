use std::collections::BTreeMap;
use std::sync::Arc;

use super::value::Value;

/// Variable store for one lineage of execution.
///
/// Forking is a pointer copy; the first write on either side clones the
/// underlying map, so a fork never observes writes made by the other side.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Environment {
    bindings: Arc<BTreeMap<String, Value>>,
}

impl Environment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fork(&self) -> Environment {
        self.clone()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.bindings.get(name)
    }

    pub fn set(&mut self, name: impl Into<String>, value: Value) {
        Arc::make_mut(&mut self.bindings).insert(name.into(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.bindings.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.bindings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bindings.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Value)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fork_isolates_writes() {
        let mut base = Environment::new();
        base.set("a", Value::Int(1));
        let mut copy = base.fork();
        assert_eq!(copy, base);
        copy.set("x", Value::Int(2));
        assert!(!base.contains("x"));
        base.set("a", Value::Int(5));
        assert_eq!(copy.get("a"), Some(&Value::Int(1)));
    }

    #[test]
    fn fork_of_empty_is_empty() {
        let e = Environment::new();
        assert!(e.fork().is_empty());
    }
}
