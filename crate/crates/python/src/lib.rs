//! Python bindings for the hydrofield extraction harness: chunking, the
//! field schema, JSON recovery, semantic matching, metric arithmetic, the
//! rule-pattern baseline, and prompt rendering.

use std::collections::BTreeMap;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use hydrofield::baseline::{default_patterns, extract_baseline, PatternSet};
use hydrofield::corpus::{chunk_document, ChunkingConfig, SourceDocument};
use hydrofield::eval::{semantic_match, target_achievement, ConfusionCounts, MetricBlock};
use hydrofield::parse::{recover_json_scan, JsonScan};
use hydrofield::prompt::{
    bronze_judge_prompt, categorical_prompts, chain_of_thought_prompt, single_step_prompt,
    two_step_presence_prompt, validation_prompt, Conservatism, Strictness,
};
use hydrofield::schema::builtin_schema;

fn value_error(detail: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(detail.to_string())
}

/// One overlapping word-window of a document.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
struct Chunk {
    chunk_id: String,
    doc_id: String,
    index: usize,
    start_word: usize,
    end_word: usize,
    text: String,
}

#[pymethods]
impl Chunk {
    fn __repr__(&self) -> String {
        format!(
            "Chunk(chunk_id={:?}, start_word={}, end_word={})",
            self.chunk_id, self.start_word, self.end_word
        )
    }
}

/// One extraction target of the schema.
#[pyclass(get_all, skip_from_py_object)]
#[derive(Clone)]
struct FieldSpec {
    name: String,
    category: String,
    description: String,
    value_kind: String,
    unit: Option<String>,
}

#[pymethods]
impl FieldSpec {
    fn __repr__(&self) -> String {
        format!("FieldSpec(name={:?}, category={:?})", self.name, self.category)
    }
}

/// Split text on runs of whitespace.
#[pyfunction]
fn tokenize_words(text: &str) -> Vec<String> {
    hydrofield::corpus::tokenize_words(text).into_iter().map(str::to_string).collect()
}

/// Chunk a document into overlapping word windows (defaults 1000/200).
#[pyfunction]
#[pyo3(signature = (doc_id, text, chunk_size_words=1000, overlap_words=200))]
fn chunk_text(
    doc_id: &str,
    text: &str,
    chunk_size_words: usize,
    overlap_words: usize,
) -> PyResult<Vec<Chunk>> {
    let doc = SourceDocument::new(doc_id, text);
    let config = ChunkingConfig { chunk_size_words, overlap_words };
    let chunks = chunk_document(&doc, &config).map_err(value_error)?;
    Ok(chunks
        .into_iter()
        .map(|c| Chunk {
            chunk_id: c.chunk_id,
            doc_id: c.doc_id,
            index: c.index,
            start_word: c.start_word,
            end_word: c.end_word,
            text: c.text,
        })
        .collect())
}

/// The built-in extraction schema, in canonical order.
#[pyfunction]
fn schema_fields() -> Vec<FieldSpec> {
    builtin_schema()
        .fields
        .into_iter()
        .map(|f| FieldSpec {
            name: f.name,
            category: f.category.short_name().to_string(),
            description: f.description,
            value_kind: match f.value_kind {
                hydrofield::schema::ValueKind::FreeText => "free_text".to_string(),
                hydrofield::schema::ValueKind::NumericQuantity => "numeric_quantity".to_string(),
            },
            unit: f.unit,
        })
        .collect()
}

/// Recover the first (or last) balanced JSON object from model output,
/// returned as a compact JSON string.
#[pyfunction]
#[pyo3(signature = (text, last=false))]
fn recover_json(text: &str, last: bool) -> PyResult<String> {
    let scan = if last { JsonScan::Last } else { JsonScan::First };
    let value = recover_json_scan(text, scan).map_err(value_error)?;
    Ok(value.to_string())
}

/// Semantic equivalence of two values for a field: (is_match, reason).
#[pyfunction]
fn semantic_match_values(field: &str, a: &str, b: &str) -> PyResult<(bool, String)> {
    let schema = builtin_schema();
    let spec = schema.field(field).ok_or_else(|| value_error(format!("unknown field {field}")))?;
    let decision = semantic_match(spec, a, b);
    let reason = serde_json::to_value(decision.reason)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    Ok((decision.is_match, reason))
}

/// Precision/recall/F1 from confusion counts; None where undefined.
#[pyfunction]
#[pyo3(name = "aggregate")]
fn aggregate_counts(tp: u64, fp: u64, fn_: u64, tn: u64) -> (Option<f64>, Option<f64>, Option<f64>) {
    let m = hydrofield::eval::aggregate(&ConfusionCounts { tp, fp, fn_, tn });
    (m.precision, m.recall, m.f1)
}

/// Harmonic F1 from precision and recall rates; None when undefined.
#[pyfunction]
fn f1_from_rates(precision: Option<f64>, recall: Option<f64>) -> Option<f64> {
    MetricBlock::from_rates(precision, recall).f1
}

/// Target-achievement label for three rejection percentages.
#[pyfunction]
#[pyo3(name = "target_achievement")]
fn target_achievement_py(lenient_pct: f64, moderate_pct: f64, stringent_pct: f64) -> String {
    target_achievement(lenient_pct, moderate_pct, stringent_pct)
}

/// Run the rule-pattern baseline over a text, returning field -> value.
#[pyfunction]
fn extract_baseline_fields(text: &str) -> PyResult<BTreeMap<String, Option<String>>> {
    let schema = builtin_schema();
    let patterns = default_patterns(&schema);
    let set = PatternSet::compile(&patterns, &schema).map_err(value_error)?;
    let doc = SourceDocument::new("py", text);
    let chunks = chunk_document(&doc, &ChunkingConfig::default()).map_err(value_error)?;
    let mut merged: BTreeMap<String, Option<String>> =
        schema.field_names().map(|n| (n.to_string(), None)).collect();
    for chunk in &chunks {
        let record = extract_baseline(chunk, &schema, &set);
        for (k, v) in record.values {
            if merged.get(&k).map(|m| m.is_none()).unwrap_or(false) {
                if let Some(v) = v {
                    merged.insert(k, Some(v));
                }
            }
        }
    }
    Ok(merged)
}

/// Render a prompt exactly as the harness would issue it.
#[pyfunction]
#[pyo3(signature = (method, chunk_text, field=None, value=None))]
fn render_prompt(
    method: &str,
    chunk_text: &str,
    field: Option<&str>,
    value: Option<&str>,
) -> PyResult<String> {
    let schema = builtin_schema();
    let doc = SourceDocument::new("py", chunk_text);
    let chunks = chunk_document(&doc, &ChunkingConfig::default()).map_err(value_error)?;
    let chunk = chunks.first().ok_or_else(|| value_error("empty chunk text"))?;
    let lookup = |name: Option<&str>| {
        let name = name.ok_or_else(|| value_error(format!("{method} requires field=")))?;
        schema.field(name).ok_or_else(|| value_error(format!("unknown field {name}")))
    };
    let rendered = match method {
        "single_step" => single_step_prompt(chunk, &schema).render(),
        "two_step_presence" => two_step_presence_prompt(chunk, &schema).render(),
        "chain_of_thought" => chain_of_thought_prompt(chunk, &schema).render(),
        "categorical" => categorical_prompts(chunk, &schema)
            .iter()
            .map(|b| b.render())
            .collect::<Vec<_>>()
            .join("\n"),
        "validate_lenient" | "validate_moderate" | "validate_stringent" => {
            let strictness = match method {
                "validate_lenient" => Strictness::Lenient,
                "validate_moderate" => Strictness::Moderate,
                _ => Strictness::Stringent,
            };
            validation_prompt(chunk, lookup(field)?, value.unwrap_or("<value>"), strictness)
                .render()
        }
        "bronze_judge" => bronze_judge_prompt(chunk, lookup(field)?, Conservatism::Strict).render(),
        other => return Err(value_error(format!("unknown prompt kind {other}"))),
    };
    Ok(rendered)
}

#[pymodule]
fn hydrofield_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Chunk>()?;
    m.add_class::<FieldSpec>()?;
    m.add_function(wrap_pyfunction!(tokenize_words, m)?)?;
    m.add_function(wrap_pyfunction!(chunk_text, m)?)?;
    m.add_function(wrap_pyfunction!(schema_fields, m)?)?;
    m.add_function(wrap_pyfunction!(recover_json, m)?)?;
    m.add_function(wrap_pyfunction!(semantic_match_values, m)?)?;
    m.add_function(wrap_pyfunction!(aggregate_counts, m)?)?;
    m.add_function(wrap_pyfunction!(f1_from_rates, m)?)?;
    m.add_function(wrap_pyfunction!(target_achievement_py, m)?)?;
    m.add_function(wrap_pyfunction!(extract_baseline_fields, m)?)?;
    m.add_function(wrap_pyfunction!(render_prompt, m)?)?;
    m.add("PROMPT_VERSION", hydrofield::PROMPT_VERSION)?;
    Ok(())
}
