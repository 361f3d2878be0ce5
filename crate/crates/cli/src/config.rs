//! Layered experiment configuration: defaults, then a JSON file, then
//! `key=value` overrides, then dedicated flags.

use std::fs;
use std::path::Path;

use serde_json::{Map, Value};

use crate::UsageError;

/// Builds the JSON object layer by layer and checks every key against the
/// defaults before anything is deserialized.
pub struct Layers {
    base: Map<String, Value>,
}

impl Layers {
    pub fn new(defaults: Value) -> Self {
        match defaults {
            Value::Object(base) => Self { base },
            _ => unreachable!("experiment configs serialize to objects"),
        }
    }

    fn valid_keys(&self) -> String {
        let mut keys: Vec<&str> = self.base.keys().map(String::as_str).collect();
        keys.sort_unstable();
        keys.join(", ")
    }

    fn put(&mut self, key: &str, value: Value) -> Result<(), UsageError> {
        if !self.base.contains_key(key) {
            return Err(UsageError(format!(
                "unknown config key '{key}'; valid keys: {}",
                self.valid_keys()
            )));
        }
        self.base.insert(key.to_string(), value);
        Ok(())
    }

    pub fn file(&mut self, path: Option<&Path>) -> Result<(), UsageError> {
        let Some(path) = path else { return Ok(()) };
        let text = fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read {}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        let Value::Object(obj) = value else {
            return Err(UsageError(format!(
                "{}: expected a JSON object",
                path.display()
            )));
        };
        for (k, v) in obj {
            self.put(&k, v)?;
        }
        Ok(())
    }

    /// `key=value` pairs; the value is read as JSON and falls back to a plain string.
    pub fn overrides(&mut self, pairs: &[String]) -> Result<(), UsageError> {
        for pair in pairs {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| UsageError(format!("override '{pair}' is not key=value")))?;
            let v = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
            self.put(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn flag<T: serde::Serialize>(
        &mut self,
        key: &str,
        value: Option<T>,
    ) -> Result<(), UsageError> {
        match value {
            Some(v) => {
                let v = serde_json::to_value(v).map_err(|e| UsageError(e.to_string()))?;
                self.put(key, v)
            }
            None => Ok(()),
        }
    }

    pub fn finish<T: serde::de::DeserializeOwned>(self) -> Result<T, UsageError> {
        serde_json::from_value(Value::Object(self.base))
            .map_err(|e| UsageError(format!("bad config: {e}")))
    }
}
