//! Canonical JSON: sorted keys, no whitespace, integers only, NFC strings.

use serde_json::Value;
use unicode_normalization::UnicodeNormalization;

pub fn encode(v: &Value) -> Result<String, String> {
    let mut out = String::new();
    put(&mut out, v)?;
    Ok(out)
}

fn put(out: &mut String, v: &Value) -> Result<(), String> {
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        Value::Number(n) if n.is_u64() || n.is_i64() => out.push_str(&n.to_string()),
        Value::Number(n) => return Err(format!("non-integer number {n}")),
        Value::String(s) => quote(out, s),
        Value::Array(a) => {
            out.push('[');
            for (i, x) in a.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                put(out, x)?;
            }
            out.push(']');
        }
        Value::Object(m) => {
            let mut entries: Vec<(String, &Value)> = m.iter().map(|(k, v)| (k.nfc().collect(), v)).collect();
            entries.sort_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            if entries.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err("duplicate key after normalization".into());
            }
            out.push('{');
            for (i, (k, x)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                quote(out, &k);
                out.push(':');
                put(out, x)?;
            }
            out.push('}');
        }
    }
    Ok(())
}

fn quote(out: &mut String, s: &str) {
    out.push('"');
    for c in s.nfc() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            '\u{08}' => out.push_str("\\b"),
            '\u{0c}' => out.push_str("\\f"),
            c if c < ' ' => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}
