//! Command output: `key: value` lines, or one JSON object under `--json`.

use serde::Serialize;
use serde_json::{Map, Value};

#[derive(Default)]
pub struct Report {
    fields: Vec<(String, Value)>,
    /// Extra lines shown only in text mode.
    text: Vec<String>,
}

impl Report {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        let v = serde_json::to_value(value).unwrap_or(Value::Null);
        self.fields.push((key.to_string(), v));
        self
    }

    /// A field carried only in JSON output (large arrays and nested objects).
    pub fn json_only(&mut self, key: &str, value: impl Serialize) -> &mut Self {
        self.field(&format!("\0{key}"), value)
    }

    pub fn line(&mut self, line: impl Into<String>) -> &mut Self {
        self.text.push(line.into());
        self
    }

    pub fn print(&self, json: bool) {
        if json {
            let map: Map<String, Value> = self
                .fields
                .iter()
                .map(|(k, v)| (k.trim_start_matches('\0').to_string(), v.clone()))
                .collect();
            println!("{}", Value::Object(map));
            return;
        }
        for (k, v) in &self.fields {
            if k.starts_with('\0') || v.is_null() {
                continue;
            }
            match v {
                Value::String(s) => println!("{k}: {s}"),
                other => println!("{k}: {other}"),
            }
        }
        for line in &self.text {
            println!("{line}");
        }
    }
}

/// JSON has no infinities or NaN; they are written as null.
pub fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}
