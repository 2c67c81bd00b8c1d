//! JSON and CSV output with 17 significant digits for every float.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};

use serde::Serialize;
use serde_json::{Map, Value};

use fdivkit_core::calibration::VERDICT_SLACK;
use fdivkit_core::equivalence::{FIT_TOL, MIN_SLOPE, RANK_TOL};
use fdivkit_core::experiment::{ROW_SUM_TOL, SIMPLEX_TOL};
use fdivkit_core::losses::SUM_ZERO_TOL;
use fdivkit_core::quantize::TIE_TOL;

/// `{:.16e}` round-trips every f64.
pub fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = "  ".repeat(indent + 1);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                out.push_str(&float(n.as_f64().unwrap_or(f64::NAN)));
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) if items.iter().all(|x| !x.is_object() && !x.is_array()) => {
            out.push('[');
            for (i, x) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(out, x, indent);
            }
            out.push(']');
        }
        Value::Array(items) => {
            out.push_str("[\n");
            for (i, x) in items.iter().enumerate() {
                out.push_str(&pad);
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            out.push_str("{\n");
            for (i, (key, x)) in map.iter().enumerate() {
                out.push_str(&pad);
                out.push_str(&serde_json::to_string(key).unwrap());
                out.push_str(": ");
                write_value(out, x, indent + 1);
                out.push_str(if i + 1 < map.len() { ",\n" } else { "\n" });
            }
            out.push_str(&"  ".repeat(indent));
            out.push('}');
        }
    }
}

fn meta(seed: u64) -> Value {
    let tol = |x: f64| Value::from(x);
    let mut t = Map::new();
    t.insert("affine_fit".into(), tol(FIT_TOL));
    t.insert("min_slope".into(), tol(MIN_SLOPE));
    t.insert("rank".into(), tol(RANK_TOL));
    t.insert("row_sum".into(), tol(ROW_SUM_TOL));
    t.insert("simplex".into(), tol(SIMPLEX_TOL));
    t.insert("sum_zero".into(), tol(SUM_ZERO_TOL));
    t.insert("tie".into(), tol(TIE_TOL));
    t.insert("verdict_slack".into(), tol(VERDICT_SLACK));
    let mut m = Map::new();
    m.insert("version".into(), Value::from(fdivkit_core::VERSION));
    m.insert("seed".into(), Value::from(seed));
    m.insert("tolerances".into(), Value::Object(t));
    Value::Object(m)
}

/// Render `body` (which must serialize to an object) with a leading meta block.
///
/// serde_json turns non-finite floats into null, so callers that can produce
/// ±∞ report them through explicit string fields.
pub fn json<T: Serialize>(body: &T, seed: u64) -> String {
    let mut map = Map::new();
    map.insert("meta".into(), meta(seed));
    match serde_json::to_value(body).expect("report types serialize") {
        Value::Object(fields) => map.extend(fields),
        other => {
            map.insert("result".into(), other);
        }
    }
    let mut out = String::new();
    write_value(&mut out, &Value::Object(map), 0);
    out.push('\n');
    out
}

/// Write to `path`, or to stdout when no path is given.
pub fn emit(text: &str, path: Option<&str>) -> io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => {
            let mut stdout = io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()
        }
    }
}

/// Simple CSV: header plus rows of already-formatted fields.
pub fn csv(header: &[String], rows: &[Vec<String>]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}
