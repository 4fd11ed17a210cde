//! Canonical JSON encoding.
//!
//! Object keys are sorted by UTF-8 byte order, there is no insignificant
//! whitespace, integers are written in shortest decimal form and every string
//! (keys included) is NFC-normalized. Floating-point numbers are refused: all
//! quantities the kernel hashes are integers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde_json::Value;
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("floating-point value at {0} cannot be canonically encoded")]
    Float(String),
    #[error("object at {path} has keys colliding after normalization: {key:?}")]
    DuplicateKey { path: String, key: String },
}

/// Encodes `doc` into canonical JSON bytes.
pub fn canonical_encode(doc: &Value) -> Result<Vec<u8>, EncodingError> {
    let mut out = String::new();
    write_value(&mut out, doc, &mut String::from("$"))?;
    Ok(out.into_bytes())
}

/// Returns `doc` with every string and key NFC-normalized.
///
/// The result encodes to the same bytes as `doc` and round-trips through
/// `serde_json` unchanged, which is what gets stored in committed events.
pub fn normalize(doc: &Value) -> Result<Value, EncodingError> {
    let bytes = canonical_encode(doc)?;
    Ok(serde_json::from_slice(&bytes).expect("canonical encoding is valid JSON"))
}

fn write_value(out: &mut String, value: &Value, path: &mut String) -> Result<(), EncodingError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else {
                return Err(EncodingError::Float(path.clone()));
            }
        }
        Value::String(s) => write_string(out, s),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                let len = path.len();
                write!(path, "[{i}]").unwrap();
                write_value(out, item, path)?;
                path.truncate(len);
            }
            out.push(']');
        }
        Value::Object(map) => {
            // Sort on the normalized key: insertion order and normalization form
            // of the input must not matter.
            let mut sorted: BTreeMap<String, &Value> = BTreeMap::new();
            for (k, v) in map {
                let key: String = k.nfc().collect();
                if sorted.insert(key.clone(), v).is_some() {
                    return Err(EncodingError::DuplicateKey {
                        path: path.clone(),
                        key,
                    });
                }
            }
            out.push('{');
            for (i, (k, v)) in sorted.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, k);
                out.push(':');
                let len = path.len();
                write!(path, ".{k}").unwrap();
                write_value(out, v, path)?;
                path.truncate(len);
            }
            out.push('}');
        }
    }
    Ok(())
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.nfc() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => write!(out, "\\u{:04x}", c as u32).unwrap(),
            c => out.push(c),
        }
    }
    out.push('"');
}
