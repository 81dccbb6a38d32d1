//! Browser bindings for three of the study statistics. Each export takes
//! plain text from a form and returns a JSON string; the `*_json` functions
//! underneath are ordinary Rust and tested natively.

use oversight_core::analysis::{
    aggregate_ais, bootstrap_mean_ci, krippendorff_alpha, mean_pairwise_distance, welch_t_test, Metric, RatingMatrix,
    Symbol,
};
use oversight_core::domain::KeypointSupport;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn parse_cell(token: &str) -> Result<Option<f64>, String> {
    match token {
        "." | "*" | "-" | "" => Ok(None),
        t => t.parse::<f64>().map(Some).map_err(|_| format!("not a number: {t:?}")),
    }
}

/// One row per rater, one column per item; `.` marks a missing value.
pub fn parse_reliability_table(text: &str) -> Result<RatingMatrix, String> {
    let rows: Vec<Vec<Option<f64>>> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).map(parse_cell).collect())
        .collect::<Result<_, _>>()?;
    if rows.is_empty() {
        return Err("enter at least one rater row".into());
    }
    let items = rows.iter().map(Vec::len).max().unwrap_or(0);
    let by_item = (0..items).map(|i| rows.iter().map(|r| r.get(i).copied().flatten()).collect()).collect();
    Ok(RatingMatrix::from_rows(by_item))
}

fn parse_metric(name: &str) -> Result<Metric, String> {
    serde_json::from_value(Value::String(name.trim().to_lowercase())).map_err(|_| format!("unknown metric {name:?}"))
}

pub fn agreement_json(table: &str, metric: &str) -> Result<Value, String> {
    let matrix = parse_reliability_table(table)?;
    let metric = parse_metric(metric)?;
    let result = krippendorff_alpha(&matrix, metric).map_err(|e| e.to_string())?;
    let mpd = mean_pairwise_distance(&matrix).ok();
    Ok(json!({
        "alpha": result.alpha,
        "observed_disagreement": result.observed_disagreement,
        "expected_disagreement": result.expected_disagreement,
        "pairable_values": result.n,
        "mean_pairwise_distance": mpd,
        "items": matrix.items.len(),
        "raters": matrix.raters.len(),
    }))
}

fn parse_sample(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| format!("not a number: {t:?}")))
        .collect()
}

pub fn compare_json(a: &str, b: &str, resamples: usize, seed: u64) -> Result<Value, String> {
    let (a, b) = (parse_sample(a)?, parse_sample(b)?);
    if resamples == 0 {
        return Err("resamples must be at least 1".into());
    }
    let ci_a = bootstrap_mean_ci(&a, resamples, seed).map_err(|e| e.to_string())?;
    let ci_b = bootstrap_mean_ci(&b, resamples, seed).map_err(|e| e.to_string())?;
    let welch = welch_t_test(&a, &b).map_err(|e| e.to_string())?;
    let symbol = Symbol::from_test(welch.p_value, welch.mean_diff);
    Ok(json!({
        "a": ci_a,
        "b": ci_b,
        "t": if welch.t.is_finite() { Some(welch.t) } else { None },
        "df": if welch.df.is_finite() { Some(welch.df) } else { None },
        "p_value": welch.p_value,
        "mean_diff": welch.mean_diff,
        "degenerate": welch.degenerate,
        "symbol": symbol.glyph(),
    }))
}

pub fn attribution_json(labels: &str) -> Result<Value, String> {
    let labels: Vec<KeypointSupport> = labels
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            serde_json::from_value(Value::String(t.to_lowercase().replace(['-', ' '], "_")))
                .map_err(|_| format!("unknown label {t:?}; use fully, partially, not_supported or contradicts"))
        })
        .collect::<Result<_, _>>()?;
    let support = aggregate_ais(&labels).map_err(|e| e.to_string())?;
    Ok(json!({ "keypoints": labels.len(), "answer": support }))
}

fn to_js(result: Result<Value, String>) -> Result<String, JsValue> {
    result.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn agreement(table: &str, metric: &str) -> Result<String, JsValue> {
    to_js(agreement_json(table, metric))
}

#[wasm_bindgen]
pub fn compare(a: &str, b: &str, resamples: usize, seed: u32) -> Result<String, JsValue> {
    to_js(compare_json(a, b, resamples, u64::from(seed)))
}

#[wasm_bindgen]
pub fn attribution(labels: &str) -> Result<String, JsValue> {
    to_js(attribution_json(labels))
}
