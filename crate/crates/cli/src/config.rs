//! Experiment configuration: a flat key/value map parsed from either
//! `key=value` lines or a single JSON object. Accessors record which keys
//! were consumed and how each value resolved (including defaults), so runs
//! can reject unknown keys and emit a canonical resolved config.

use std::collections::{BTreeMap, BTreeSet};

use crate::CliError;

pub struct Config {
    values: BTreeMap<String, String>,
    consumed: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Config {
    /// Accepts JSON when the first non-whitespace byte is `{`, otherwise
    /// `key=value` lines (blank lines and `#` comments allowed).
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let values = if text.trim_start().starts_with('{') {
            from_json(text)?
        } else {
            from_lines(text)?
        };
        Ok(Config {
            values,
            consumed: BTreeSet::new(),
            resolved: BTreeMap::new(),
        })
    }

    fn take(&mut self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if v.is_some() {
            self.consumed.insert(key.to_string());
        }
        v
    }

    fn record(&mut self, key: &str, rendered: String) {
        self.resolved.insert(key.to_string(), rendered);
    }

    pub fn require_f64(&mut self, key: &str) -> Result<f64, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Schema(format!("missing required key '{key}'")))?;
        let v = parse_f64(key, &raw)?;
        self.record(key, render_f64(v));
        Ok(v)
    }

    pub fn f64_or(&mut self, key: &str, default: f64) -> Result<f64, CliError> {
        let v = match self.take(key) {
            Some(raw) => parse_f64(key, &raw)?,
            None => default,
        };
        self.record(key, render_f64(v));
        Ok(v)
    }

    pub fn require_i64(&mut self, key: &str) -> Result<i64, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Schema(format!("missing required key '{key}'")))?;
        let v = parse_int::<i64>(key, &raw)?;
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn require_usize(&mut self, key: &str) -> Result<usize, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Schema(format!("missing required key '{key}'")))?;
        let v = parse_int::<usize>(key, &raw)?;
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn usize_or(&mut self, key: &str, default: usize) -> Result<usize, CliError> {
        let v = match self.take(key) {
            Some(raw) => parse_int::<usize>(key, &raw)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn u64_or(&mut self, key: &str, default: u64) -> Result<u64, CliError> {
        let v = match self.take(key) {
            Some(raw) => parse_int::<u64>(key, &raw)?,
            None => default,
        };
        self.record(key, v.to_string());
        Ok(v)
    }

    pub fn opt_usize(&mut self, key: &str) -> Result<Option<usize>, CliError> {
        match self.take(key) {
            Some(raw) => {
                let v = parse_int::<usize>(key, &raw)?;
                self.record(key, v.to_string());
                Ok(Some(v))
            }
            None => Ok(None),
        }
    }

    pub fn str_or(&mut self, key: &str, default: &str) -> String {
        let v = self.take(key).unwrap_or_else(|| default.to_string());
        self.record(key, v.clone());
        v
    }

    /// Comma-separated integers (or a JSON array in JSON configs).
    pub fn require_i64_list(&mut self, key: &str) -> Result<Vec<i64>, CliError> {
        let raw = self
            .take(key)
            .ok_or_else(|| CliError::Schema(format!("missing required key '{key}'")))?;
        let mut out = Vec::new();
        for part in raw.split(',') {
            out.push(parse_int::<i64>(key, part.trim())?);
        }
        let rendered: Vec<String> = out.iter().map(|v| v.to_string()).collect();
        self.record(key, rendered.join(","));
        Ok(out)
    }

    /// Rejects any key the experiment did not consume.
    pub fn finish(&self) -> Result<(), CliError> {
        let unknown: Vec<&str> = self
            .values
            .keys()
            .filter(|k| !self.consumed.contains(*k))
            .map(|k| k.as_str())
            .collect();
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(CliError::Schema(format!(
                "unknown config key(s): {}",
                unknown.join(", ")
            )))
        }
    }

    /// Canonical key/value view of everything the run used, defaults
    /// included; this is what the JSON sidecar records.
    pub fn resolved(&self) -> &BTreeMap<String, String> {
        &self.resolved
    }
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, CliError> {
    let lower = raw.trim().to_ascii_lowercase();
    let v = if lower == "inf" || lower == "infinity" || lower == "+inf" {
        f64::INFINITY
    } else {
        lower
            .parse::<f64>()
            .map_err(|_| CliError::Schema(format!("key '{key}': '{raw}' is not a number")))?
    };
    if v.is_nan() {
        return Err(CliError::Schema(format!("key '{key}' must not be NaN")));
    }
    Ok(v)
}

fn parse_int<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.trim()
        .parse::<T>()
        .map_err(|_| CliError::Schema(format!("key '{key}': '{raw}' is not a valid integer")))
}

fn render_f64(v: f64) -> String {
    if v.is_infinite() {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

fn from_lines(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            CliError::Schema(format!("config line {}: expected key=value", idx + 1))
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(CliError::Schema(format!("config line {}: empty key", idx + 1)));
        }
        if out.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(CliError::Schema(format!(
                "config line {}: duplicate key '{key}'",
                idx + 1
            )));
        }
    }
    Ok(out)
}

fn from_json(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| CliError::Schema(format!("config is not valid JSON: {e}")))?;
    let serde_json::Value::Object(map) = value else {
        return Err(CliError::Schema("JSON config must be a single object".into()));
    };
    let mut out = BTreeMap::new();
    for (k, v) in map {
        let rendered = match v {
            serde_json::Value::String(s) => s,
            serde_json::Value::Bool(b) => b.to_string(),
            serde_json::Value::Number(n) => n.to_string(),
            serde_json::Value::Array(items) => {
                let mut parts = Vec::with_capacity(items.len());
                for item in items {
                    match item {
                        serde_json::Value::Number(n) => parts.push(n.to_string()),
                        serde_json::Value::String(s) => parts.push(s),
                        other => {
                            return Err(CliError::Schema(format!(
                                "key '{k}': unsupported array element {other}"
                            )))
                        }
                    }
                }
                parts.join(",")
            }
            other => {
                return Err(CliError::Schema(format!(
                    "key '{k}': unsupported value {other}"
                )))
            }
        };
        out.insert(k, rendered);
    }
    Ok(out)
}
