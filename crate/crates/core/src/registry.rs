//! Name-keyed factories for the interchangeable strategies (objectives,
//! gradient oracles, block policies).
//!
//! A spec is a JSON object whose tag field (`"name"` or `"kind"`) selects the
//! factory; the factory receives the whole object plus a build context.

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::error::{MomentaError, Result};

pub type Factory<C, T> = fn(&Value, &C) -> Result<T>;

pub struct Registry<C, T> {
    kind: &'static str,
    tag: &'static str,
    entries: BTreeMap<&'static str, Factory<C, T>>,
}

impl<C, T> Registry<C, T> {
    pub fn new(kind: &'static str, tag: &'static str) -> Self {
        Self {
            kind,
            tag,
            entries: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, name: &'static str, factory: Factory<C, T>) -> &mut Self {
        self.entries.insert(name, factory);
        self
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, spec: &Value, ctx: &C) -> Result<T> {
        let name = spec.get(self.tag).and_then(Value::as_str).ok_or_else(|| {
            MomentaError::InvalidArgument(format!(
                "{} spec is missing the string field '{}'",
                self.kind, self.tag
            ))
        })?;
        let factory = self
            .entries
            .get(name)
            .ok_or_else(|| MomentaError::UnknownStrategy {
                kind: self.kind,
                name: name.to_string(),
                known: self.names().join(", "),
            })?;
        factory(spec, ctx)
    }
}

/// Deserialize a factory's parameter block, mapping serde errors into the
/// crate error with the strategy kind attached.
pub(crate) fn parse_params<P: DeserializeOwned>(
    spec: &Value,
    wrap: fn(String) -> MomentaError,
) -> Result<P> {
    serde_json::from_value(spec.clone()).map_err(|e| wrap(e.to_string()))
}
