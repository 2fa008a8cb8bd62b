//! Scenario files: strict JSON, dotted overrides, the seed variable and a
//! canonical form for hashing.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Number, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const SEED_ENV: &str = "CONTRACTION_LAB_SEED";

pub fn read(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::config("", format!("invalid JSON (line {}, column {}): {e}", e.line(), e.column())))?;
    if !value.is_object() {
        return Err(CliError::config("", "the scenario must be a JSON object"));
    }
    Ok(value)
}

/// Splits `--a.b.c=value` into its dotted key and raw value.
pub fn parse_override(arg: &str) -> Option<(&str, &str)> {
    let (key, value) = arg.strip_prefix("--")?.split_once('=')?;
    key.contains('.').then_some((key, value))
}

fn escape(segment: &str) -> String {
    segment.replace('~', "~0").replace('/', "~1")
}

/// Sets `key` (dot separated; numeric segments index arrays) to `raw`,
/// read as JSON when it parses and as a string otherwise.
pub fn apply_override(root: &mut Value, key: &str, raw: &str) -> Result<(), CliError> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let segments: Vec<&str> = key.split('.').collect();
    if segments.iter().any(|s| s.is_empty()) {
        return Err(CliError::config("", format!("override `{key}` has an empty segment")));
    }
    let mut pointer = String::new();
    let mut node = root;
    for (i, seg) in segments.iter().enumerate() {
        pointer.push('/');
        pointer.push_str(&escape(seg));
        let last = i + 1 == segments.len();
        node = match node {
            Value::Object(map) => {
                if last {
                    map.insert(seg.to_string(), value);
                    return Ok(());
                }
                map.entry(seg.to_string()).or_insert_with(|| Value::Object(Map::new()))
            }
            Value::Array(items) => {
                let len = items.len();
                let slot = seg
                    .parse::<usize>()
                    .ok()
                    .and_then(|k| items.get_mut(k))
                    .ok_or_else(|| CliError::config(&pointer, format!("override index out of range (length {len})")))?;
                if last {
                    *slot = value;
                    return Ok(());
                }
                slot
            }
            _ => return Err(CliError::config(&pointer, "override descends into a scalar")),
        };
    }
    unreachable!("loop returns on the last segment")
}

pub fn seed_from_env() -> Result<Option<u64>, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::config("/seed", format!("{SEED_ENV}={s:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Deserializes with unknown keys rejected and errors located by pointer.
pub fn strict<T: DeserializeOwned>(value: Value) -> Result<T, CliError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut pointer = String::new();
        for seg in e.path().iter() {
            match seg {
                serde_path_to_error::Segment::Seq { index } => pointer.push_str(&format!("/{index}")),
                serde_path_to_error::Segment::Map { key } => {
                    pointer.push('/');
                    pointer.push_str(&escape(key));
                }
                _ => {}
            }
        }
        let message = e.inner().to_string();
        // Missing keys are reported at the parent; point at the key itself.
        if let Some(rest) = message.strip_prefix("missing field `") {
            if let Some((field, _)) = rest.split_once('`') {
                pointer.push('/');
                pointer.push_str(&escape(field));
            }
        }
        CliError::config(pointer, message)
    })
}

/// Sorted keys, integral floats written as integers.
pub fn canonical(value: &Value) -> Value {
    match value {
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), canonical(v))).collect()),
        Value::Array(items) => Value::Array(items.iter().map(canonical).collect()),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() && f.fract() == 0.0 && f.abs() < 9.007_199_254_740_992e15 => {
                Value::Number(Number::from(f as i64))
            }
            _ => value.clone(),
        },
        v => v.clone(),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn config_digest(value: &Value) -> String {
    sha256_hex(serde_json::to_string(&canonical(value)).expect("JSON serializes").as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides_create_and_index() {
        let mut v = json!({"model": {"params": {"K": 1}}, "x": [0.0, 1.0]});
        apply_override(&mut v, "model.params.K", "2").unwrap();
        apply_override(&mut v, "x.1", "3.5").unwrap();
        apply_override(&mut v, "fit.n_boot", "10").unwrap();
        apply_override(&mut v, "model.builtin", "ou").unwrap();
        assert_eq!(v, json!({"model": {"params": {"K": 2}, "builtin": "ou"}, "x": [0.0, 3.5], "fit": {"n_boot": 10}}));
        assert!(apply_override(&mut v, "x.7", "1").is_err());
        assert!(apply_override(&mut v, "x.0.a", "1").is_err());
    }

    #[test]
    fn override_syntax() {
        assert_eq!(parse_override("--model.params.K=2"), Some(("model.params.K", "2")));
        assert_eq!(parse_override("--config=a.json"), None);
        assert_eq!(parse_override("model.x=1"), None);
    }

    #[test]
    fn canonical_form_ignores_layout() {
        let a: Value = serde_json::from_str(r#"{"b": 2.0, "a": [1, 0.5]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{ "a": [1.0, 0.5], "b": 2 }"#).unwrap();
        assert_eq!(config_digest(&a), config_digest(&b));
        assert_ne!(config_digest(&a), config_digest(&json!({"a": [1, 0.5], "b": 3})));
    }
}
