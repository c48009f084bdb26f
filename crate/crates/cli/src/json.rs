//! Canonical JSON: sorted keys, floats rounded to nine significant digits.

use std::path::Path;

use fdbench_core::alignment::ladder::format_sig9;
use fdbench_core::Result;
use serde::Serialize;
use serde_json::Value;

fn canonicalize(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let f = n.as_f64().expect("f64 number");
            let rounded: f64 = format_sig9(f).parse().expect("sig9 output parses");
            *v = serde_json::Number::from_f64(rounded).map_or(Value::Null, Value::Number);
        }
        Value::Array(items) => items.iter_mut().for_each(canonicalize),
        Value::Object(map) => map.values_mut().for_each(canonicalize),
        _ => {}
    }
}

pub fn render<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    canonicalize(&mut v);
    let mut s = serde_json::to_string_pretty(&v)?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or stdout when absent.
pub fn emit(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}
