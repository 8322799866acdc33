//! Report rendering: human-readable text followed by a JSON block.

use epidiff::ExtReal;
use nalgebra::DVector;
use serde_json::{json, Value};

/// Line separating the text part from the JSON block.
pub const JSON_MARKER: &str = "--- json ---";

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub json: Value,
    pub exit_code: i32,
}

impl Report {
    pub fn render(&self) -> String {
        let body = serde_json::to_string_pretty(&self.json).expect("reports serialize");
        format!("{}\n{}\n{}\n", self.text.trim_end(), JSON_MARKER, body)
    }
}

/// Extracts the JSON block from rendered output.
pub fn json_block(output: &str) -> Option<Value> {
    let (_, tail) = output.split_once(JSON_MARKER)?;
    serde_json::from_str(tail.trim()).ok()
}

/// `+∞` becomes the string `"+inf"`.
pub fn ext(x: &ExtReal) -> Value {
    match x.finite() {
        Some(a) => num(a),
        None => json!("+inf"),
    }
}

/// Non-finite floats (which JSON cannot hold) become strings.
pub fn num(a: f64) -> Value {
    if a.is_finite() {
        json!(clean(a))
    } else if a > 0.0 {
        json!("+inf")
    } else if a < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

pub fn vector(v: &DVector<f64>) -> Value {
    Value::Array(v.iter().map(|&a| num(a)).collect())
}

/// Drops the sign of zero so that `-0` and `0` render the same.
fn clean(a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a
    }
}

pub fn fmt_ext(x: &ExtReal) -> String {
    match x.finite() {
        Some(a) => fmt_num(a),
        None => "+inf".into(),
    }
}

pub fn fmt_num(a: f64) -> String {
    if a.is_finite() {
        format!("{:.6}", clean(a))
    } else {
        format!("{}", a)
    }
}

pub fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|&a| format!("{:.4}", clean(a))).collect();
    format!("({})", parts.join(", "))
}
