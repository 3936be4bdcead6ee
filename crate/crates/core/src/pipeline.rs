//! Orchestration of the extraction methods and the reflective validation
//! pass over document chunks.
//!
//! The three reflective methods are single-step extraction followed by
//! per-candidate validation at a strictness level. They do not re-extract:
//! the single-step request is identical across them, so a shared response
//! cache collapses it to one transport call per chunk per model.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentChunk;
use crate::gateway::{FinishReason, GatewayError, GenerationRequest, ModelClient};
use crate::parse::{
    parse_extraction, parse_presence, parse_verdict, recover_json_scan, Decision,
    ExtractionRecord, JsonScan, ParseOptions, RecordProvenance,
};
use crate::prompt::{
    categorical_prompts, chain_of_thought_prompt, single_step_prompt, two_step_extract_prompt,
    two_step_presence_prompt, validation_prompt, PromptBundle, Strictness,
};
use crate::schema::{FieldCategory, Schema};

pub const RESULTS_FORMAT_VERSION: u32 = 1;

/// The seven experiment methods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    SingleStep,
    TwoStep,
    Categorical,
    ChainOfThought,
    ReflectiveLenient,
    ReflectiveModerate,
    ReflectiveStringent,
}

impl MethodId {
    pub const ALL: [MethodId; 7] = [
        MethodId::SingleStep,
        MethodId::TwoStep,
        MethodId::Categorical,
        MethodId::ChainOfThought,
        MethodId::ReflectiveLenient,
        MethodId::ReflectiveModerate,
        MethodId::ReflectiveStringent,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodId::SingleStep => "single_step",
            MethodId::TwoStep => "two_step",
            MethodId::Categorical => "categorical",
            MethodId::ChainOfThought => "chain_of_thought",
            MethodId::ReflectiveLenient => "reflective_lenient",
            MethodId::ReflectiveModerate => "reflective_moderate",
            MethodId::ReflectiveStringent => "reflective_stringent",
        }
    }

    pub fn from_str_tag(tag: &str) -> Option<MethodId> {
        MethodId::ALL.iter().copied().find(|m| m.as_str() == tag)
    }

    /// Column label used by the report tables.
    pub fn display_name(&self) -> &'static str {
        match self {
            MethodId::SingleStep => "Single-step",
            MethodId::TwoStep => "Two-step",
            MethodId::Categorical => "Categorical",
            MethodId::ChainOfThought => "Chain-of-Thought",
            MethodId::ReflectiveLenient => "Lenient",
            MethodId::ReflectiveModerate => "Moderate",
            MethodId::ReflectiveStringent => "Stringent",
        }
    }

    pub fn strictness(&self) -> Option<Strictness> {
        match self {
            MethodId::ReflectiveLenient => Some(Strictness::Lenient),
            MethodId::ReflectiveModerate => Some(Strictness::Moderate),
            MethodId::ReflectiveStringent => Some(Strictness::Stringent),
            _ => None,
        }
    }

    pub fn from_strictness(strictness: Strictness) -> MethodId {
        match strictness {
            Strictness::Lenient => MethodId::ReflectiveLenient,
            Strictness::Moderate => MethodId::ReflectiveModerate,
            Strictness::Stringent => MethodId::ReflectiveStringent,
        }
    }
}

impl std::fmt::Display for MethodId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-field fate during a validation pass.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FieldValidation {
    Kept { value: String },
    Rejected { value: String },
    Absent,
}

/// Accept/reject verdicts for one chunk under one strictness level. Rejected
/// values are retained here for the rejection-rate and audit reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationOutcome {
    pub chunk_id: String,
    pub strictness: Strictness,
    pub per_field: BTreeMap<String, FieldValidation>,
    pub rejected_count: u32,
    pub candidate_count: u32,
    /// Verdicts that could not be parsed; counted as rejections but tallied
    /// separately so they cannot silently inflate rejection rates.
    pub parse_failures: u32,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("backend call failed for chunk {chunk_id}: {source}")]
    Gateway {
        chunk_id: String,
        #[source]
        source: GatewayError,
    },
    #[error("unparseable model output for chunk {chunk_id} (strict parsing enabled): {detail}")]
    StrictParse { chunk_id: String, detail: String },
}

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub max_tokens_extraction: u32,
    pub max_tokens_validation: u32,
    /// When set, parse failures abort the run instead of degrading to
    /// all-absent records.
    pub strict_parse: bool,
    pub parse: ParseOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            max_tokens_extraction: 2048,
            max_tokens_validation: 512,
            strict_parse: false,
            parse: ParseOptions::default(),
        }
    }
}

fn complete_bundle(
    client: &ModelClient,
    chunk: &DocumentChunk,
    bundle: &PromptBundle,
    max_tokens: u32,
    warnings: &mut Vec<String>,
) -> Result<String, PipelineError> {
    let request = GenerationRequest::from_bundle(&client.model_name, bundle, max_tokens);
    let response = client.complete(&request).map_err(|source| PipelineError::Gateway {
        chunk_id: chunk.chunk_id.clone(),
        source,
    })?;
    if response.finish_reason == FinishReason::Length {
        warnings.push(format!("{}: response may be truncated (length stop)", bundle.kind.tag()));
    }
    Ok(response.text)
}

/// All fields in one request; a parse failure degrades to an all-absent
/// record carrying the failure as a warning.
pub fn run_single_step(
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    opts: &PipelineOptions,
) -> Result<ExtractionRecord, PipelineError> {
    let bundle = single_step_prompt(chunk, schema);
    let mut warnings = Vec::new();
    let text = complete_bundle(client, chunk, &bundle, opts.max_tokens_extraction, &mut warnings)?;
    let provenance = RecordProvenance {
        chunk_id: &chunk.chunk_id,
        model_name: &client.model_name,
        method_tag: MethodId::SingleStep,
    };
    let mut record = match recover_json_scan(&text, JsonScan::First)
        .and_then(|json| parse_extraction(&json, schema, provenance, None, &opts.parse))
    {
        Ok(record) => record,
        Err(failure) => {
            if opts.strict_parse {
                return Err(PipelineError::StrictParse {
                    chunk_id: chunk.chunk_id.clone(),
                    detail: failure.to_string(),
                });
            }
            let mut record = ExtractionRecord::all_absent(
                &chunk.chunk_id,
                &client.model_name,
                MethodId::SingleStep,
                schema,
            );
            record.warnings.push(format!("parse failure: {failure}"));
            record
        }
    };
    record.warnings.splice(0..0, warnings);
    Ok(record)
}

/// Presence gate, then extraction of the YES/MAYBE fields only. An all-NO
/// gate (or an unparseable one) skips the second call entirely; fields gated
/// NO are recorded as absent even if the extraction phase mentions them.
pub fn run_two_step(
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    opts: &PipelineOptions,
) -> Result<ExtractionRecord, PipelineError> {
    let gate_bundle = two_step_presence_prompt(chunk, schema);
    let mut warnings = Vec::new();
    let gate_text =
        complete_bundle(client, chunk, &gate_bundle, opts.max_tokens_extraction, &mut warnings)?;

    let mut record =
        ExtractionRecord::all_absent(&chunk.chunk_id, &client.model_name, MethodId::TwoStep, schema);
    record.warnings = warnings;

    let presence = match parse_presence(&gate_text, schema) {
        Ok(map) => map,
        Err(failure) => {
            if opts.strict_parse {
                return Err(PipelineError::StrictParse {
                    chunk_id: chunk.chunk_id.clone(),
                    detail: failure.to_string(),
                });
            }
            record.warnings.push(format!("presence parse failure: {failure}"));
            return Ok(record);
        }
    };
    record.warnings.extend(presence.warnings.iter().map(|w| format!("presence: {w}")));

    let selected = presence.selected(schema);
    if selected.is_empty() {
        return Ok(record);
    }

    let extract_bundle =
        two_step_extract_prompt(chunk, schema, &selected).expect("selection is non-empty");
    let text =
        complete_bundle(client, chunk, &extract_bundle, opts.max_tokens_extraction, &mut record.warnings)?;
    let provenance = RecordProvenance {
        chunk_id: &chunk.chunk_id,
        model_name: &client.model_name,
        method_tag: MethodId::TwoStep,
    };
    match recover_json_scan(&text, JsonScan::First)
        .and_then(|json| parse_extraction(&json, schema, provenance, Some(&selected), &opts.parse))
    {
        Ok(parsed) => {
            record.values = parsed.values;
            record.warnings.extend(parsed.warnings);
        }
        Err(failure) => {
            if opts.strict_parse {
                return Err(PipelineError::StrictParse {
                    chunk_id: chunk.chunk_id.clone(),
                    detail: failure.to_string(),
                });
            }
            record.warnings.push(format!("extraction parse failure: {failure}"));
        }
    }
    Ok(record)
}

/// Six category requests in fixed order, merged into one record. A category
/// whose response fails to parse blanks only that category.
pub fn run_categorical(
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    opts: &PipelineOptions,
) -> Result<ExtractionRecord, PipelineError> {
    let mut record = ExtractionRecord::all_absent(
        &chunk.chunk_id,
        &client.model_name,
        MethodId::Categorical,
        schema,
    );
    let bundles = categorical_prompts(chunk, schema);
    for (category, bundle) in FieldCategory::ALL.iter().zip(bundles.iter()) {
        let fields: Vec<&str> =
            schema.fields_in_category(*category).iter().map(|f| f.name.as_str()).collect();
        let text =
            complete_bundle(client, chunk, bundle, opts.max_tokens_extraction, &mut record.warnings)?;
        let provenance = RecordProvenance {
            chunk_id: &chunk.chunk_id,
            model_name: &client.model_name,
            method_tag: MethodId::Categorical,
        };
        match recover_json_scan(&text, JsonScan::First)
            .and_then(|json| parse_extraction(&json, schema, provenance, Some(&fields), &opts.parse))
        {
            Ok(parsed) => {
                for name in &fields {
                    if let Some(v) = parsed.values.get(*name) {
                        record.values.insert((*name).to_string(), v.clone());
                    }
                }
                record.warnings.extend(parsed.warnings);
            }
            Err(failure) => {
                if opts.strict_parse {
                    return Err(PipelineError::StrictParse {
                        chunk_id: chunk.chunk_id.clone(),
                        detail: failure.to_string(),
                    });
                }
                record.warnings.push(format!(
                    "{} category parse failure: {failure}",
                    category.short_name()
                ));
            }
        }
    }
    Ok(record)
}

/// Guided reasoning then extraction. Reasoning steps may emit partial JSON,
/// so the last balanced object in the response is the answer.
pub fn run_chain_of_thought(
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    opts: &PipelineOptions,
) -> Result<ExtractionRecord, PipelineError> {
    let bundle = chain_of_thought_prompt(chunk, schema);
    let mut warnings = Vec::new();
    let text = complete_bundle(client, chunk, &bundle, opts.max_tokens_extraction, &mut warnings)?;
    let provenance = RecordProvenance {
        chunk_id: &chunk.chunk_id,
        model_name: &client.model_name,
        method_tag: MethodId::ChainOfThought,
    };
    let mut record = match recover_json_scan(&text, JsonScan::Last)
        .and_then(|json| parse_extraction(&json, schema, provenance, None, &opts.parse))
    {
        Ok(record) => record,
        Err(failure) => {
            if opts.strict_parse {
                return Err(PipelineError::StrictParse {
                    chunk_id: chunk.chunk_id.clone(),
                    detail: failure.to_string(),
                });
            }
            let mut record = ExtractionRecord::all_absent(
                &chunk.chunk_id,
                &client.model_name,
                MethodId::ChainOfThought,
                schema,
            );
            record.warnings.push(format!("parse failure: {failure}"));
            record
        }
    };
    record.warnings.splice(0..0, warnings);
    Ok(record)
}

/// Validate each present field of `record` against the chunk text at one
/// strictness level. Accepted values are kept verbatim; rejected values move
/// to the outcome. Absent fields are untouched.
pub fn run_reflective(
    record: &ExtractionRecord,
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    strictness: Strictness,
    opts: &PipelineOptions,
) -> Result<(ExtractionRecord, ValidationOutcome), PipelineError> {
    let mut validated = record.clone();
    validated.method_tag = MethodId::from_strictness(strictness);

    let mut outcome = ValidationOutcome {
        chunk_id: chunk.chunk_id.clone(),
        strictness,
        per_field: schema
            .field_names()
            .map(|n| (n.to_string(), FieldValidation::Absent))
            .collect(),
        rejected_count: 0,
        candidate_count: 0,
        parse_failures: 0,
    };

    for (name, value) in record.present_fields(schema) {
        outcome.candidate_count += 1;
        let field = schema.field(name).expect("present field is in schema");
        let bundle = validation_prompt(chunk, field, value, strictness);
        let text =
            complete_bundle(client, chunk, &bundle, opts.max_tokens_validation, &mut validated.warnings)?;
        let decision = match parse_verdict(&text, strictness, &opts.parse) {
            Ok(verdict) => {
                if verdict.qualifier_flagged {
                    validated
                        .warnings
                        .push(format!("{name}: stringent qualifier override to REJECT"));
                }
                verdict.decision
            }
            Err(failure) => {
                outcome.parse_failures += 1;
                validated.warnings.push(format!("{name}: verdict parse failure: {failure}"));
                Decision::Reject
            }
        };
        match decision {
            Decision::Accept => {
                outcome
                    .per_field
                    .insert(name.to_string(), FieldValidation::Kept { value: value.to_string() });
            }
            Decision::Reject => {
                outcome.rejected_count += 1;
                outcome
                    .per_field
                    .insert(name.to_string(), FieldValidation::Rejected { value: value.to_string() });
                validated.values.insert(name.to_string(), None);
            }
        }
    }
    Ok((validated, outcome))
}

/// Dispatch a method over one chunk. Reflective methods run single-step
/// extraction first; a shared cache makes that extraction a single transport
/// call across all three strictness levels.
pub fn run_method(
    method: MethodId,
    chunk: &DocumentChunk,
    client: &ModelClient,
    schema: &Schema,
    opts: &PipelineOptions,
) -> Result<(ExtractionRecord, Option<ValidationOutcome>), PipelineError> {
    match method {
        MethodId::SingleStep => Ok((run_single_step(chunk, client, schema, opts)?, None)),
        MethodId::TwoStep => Ok((run_two_step(chunk, client, schema, opts)?, None)),
        MethodId::Categorical => Ok((run_categorical(chunk, client, schema, opts)?, None)),
        MethodId::ChainOfThought => Ok((run_chain_of_thought(chunk, client, schema, opts)?, None)),
        MethodId::ReflectiveLenient | MethodId::ReflectiveModerate | MethodId::ReflectiveStringent => {
            let strictness = method.strictness().expect("reflective method");
            let record = run_single_step(chunk, client, schema, opts)?;
            let (validated, outcome) =
                run_reflective(&record, chunk, client, schema, strictness, opts)?;
            Ok((validated, Some(outcome)))
        }
    }
}

/// One persisted result file: every record (and validation outcome, for
/// reflective methods) for a (model, method) pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResultFile {
    pub format_version: u32,
    pub model: String,
    pub method: MethodId,
    pub records: Vec<ExtractionRecord>,
    #[serde(default)]
    pub outcomes: Vec<ValidationOutcome>,
}

impl ResultFile {
    pub fn new(model: &str, method: MethodId) -> Self {
        ResultFile {
            format_version: RESULTS_FORMAT_VERSION,
            model: model.to_string(),
            method,
            records: Vec::new(),
            outcomes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("result file serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<ResultFile, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_document, ChunkingConfig, SourceDocument};
    use crate::gateway::{
        Backend, RawResponse, RetryPolicy, ScriptDefault, ScriptKey, ScriptRule, ScriptedBackend,
    };
    use crate::schema::builtin_schema;
    use std::sync::Arc;

    struct SharedBackend(Arc<ScriptedBackend>);

    impl Backend for SharedBackend {
        fn describe(&self) -> String {
            self.0.describe()
        }
        fn generate(&self, request: &GenerationRequest) -> Result<RawResponse, GatewayError> {
            self.0.generate(request)
        }
    }

    fn chunk() -> DocumentChunk {
        let doc = SourceDocument::new("doc", "a minimum flow of 250 cfs at Smith Dam");
        chunk_document(&doc, &ChunkingConfig::default()).unwrap().remove(0)
    }

    fn client_with(
        rules: Vec<ScriptRule>,
        default: ScriptDefault,
        cache_dir: Option<std::path::PathBuf>,
    ) -> (ModelClient, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(rules, default));
        let client = ModelClient::new(
            "test-model",
            Box::new(SharedBackend(Arc::clone(&backend))),
            cache_dir,
            RetryPolicy::default(),
            4,
        )
        .unwrap();
        (client, backend)
    }

    fn pattern(p: &str, response: &str) -> ScriptRule {
        ScriptRule { key: ScriptKey::Pattern(p.into()), response: response.into() }
    }

    fn all_yes_json(schema: &Schema) -> String {
        let mut obj = serde_json::Map::new();
        for name in schema.field_names() {
            obj.insert(name.to_string(), serde_json::Value::String("YES".into()));
        }
        serde_json::Value::Object(obj).to_string()
    }

    fn all_no_json(schema: &Schema) -> String {
        let mut obj = serde_json::Map::new();
        for name in schema.field_names() {
            obj.insert(name.to_string(), serde_json::Value::String("NO".into()));
        }
        serde_json::Value::Object(obj).to_string()
    }

    #[test]
    fn single_step_all_null_yields_empty_record() {
        let schema = builtin_schema();
        let (client, _) = client_with(
            Vec::new(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let record =
            run_single_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 0);
        assert_eq!(record.values.len(), 17);
    }

    #[test]
    fn single_step_prose_wrapped_equals_bare_json() {
        let schema = builtin_schema();
        let bare = r#"{"Dam_Name": "Smith Dam", "Minimum_Flow": "250 cfs"}"#;
        let wrapped = format!("Sure, here you go:\n```json\n{bare}\n```\nHope that helps!");
        let opts = PipelineOptions::default();
        let (client_a, _) =
            client_with(vec![pattern("single_step", bare)], ScriptDefault::Error, None);
        let (client_b, _) =
            client_with(vec![pattern("single_step", &wrapped)], ScriptDefault::Error, None);
        let a = run_single_step(&chunk(), &client_a, &schema, &opts).unwrap();
        let b = run_single_step(&chunk(), &client_b, &schema, &opts).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.present_count(), 2);
    }

    #[test]
    fn single_step_parse_failure_degrades_to_all_absent() {
        let schema = builtin_schema();
        let (client, _) =
            client_with(Vec::new(), ScriptDefault::Fixed("word salad".into()), None);
        let record =
            run_single_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 0);
        assert!(record.warnings.iter().any(|w| w.contains("parse failure")));
    }

    #[test]
    fn single_step_strict_parse_errors_out() {
        let schema = builtin_schema();
        let (client, _) =
            client_with(Vec::new(), ScriptDefault::Fixed("word salad".into()), None);
        let opts = PipelineOptions { strict_parse: true, ..Default::default() };
        assert!(matches!(
            run_single_step(&chunk(), &client, &schema, &opts),
            Err(PipelineError::StrictParse { .. })
        ));
    }

    #[test]
    fn two_step_all_no_issues_one_call() {
        let schema = builtin_schema();
        let (client, backend) = client_with(
            vec![pattern("two_step_presence", &all_no_json(&schema))],
            ScriptDefault::Error,
            None,
        );
        let record =
            run_two_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 0);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn two_step_all_yes_issues_two_calls() {
        let schema = builtin_schema();
        let (client, backend) = client_with(
            vec![
                pattern("two_step_presence", &all_yes_json(&schema)),
                pattern("two_step_extract", r#"{"Dam_Name": "Smith Dam"}"#),
            ],
            ScriptDefault::Error,
            None,
        );
        let record =
            run_two_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 1);
        assert_eq!(backend.calls(), 2);
    }

    #[test]
    fn two_step_requests_exactly_the_gated_fields() {
        let schema = builtin_schema();
        let gate = r#"{"Dam_Name": "YES", "County": "MAYBE", "Location": "NO"}"#;
        // All unmentioned fields fail open to MAYBE, so the phase-2 request
        // carries everything except Location. Phase 2 answers for Location
        // anyway; the gate must win.
        let (client, backend) = client_with(
            vec![
                pattern("two_step_presence", gate),
                pattern("two_step_extract", r#"{"Dam_Name": "Smith Dam", "Location": "sneaky"}"#),
            ],
            ScriptDefault::Error,
            None,
        );
        let record =
            run_two_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(backend.calls(), 2);
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("Smith Dam"));
        assert_eq!(record.values["Location"], None, "NO-gated field stays absent");
    }

    #[test]
    fn two_step_gate_parse_failure_skips_phase_two() {
        let schema = builtin_schema();
        let (client, backend) = client_with(
            vec![pattern("two_step_presence", "not parseable at all")],
            ScriptDefault::Error,
            None,
        );
        let record =
            run_two_step(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 0);
        assert_eq!(backend.calls(), 1);
        assert!(record.warnings.iter().any(|w| w.contains("presence parse failure")));
    }

    fn category_rules(schema: &Schema) -> Vec<ScriptRule> {
        FieldCategory::ALL
            .iter()
            .map(|cat| {
                let mut obj = serde_json::Map::new();
                for f in schema.fields_in_category(*cat) {
                    obj.insert(
                        f.name.clone(),
                        serde_json::Value::String(format!("{} value", f.name)),
                    );
                }
                pattern(
                    &format!("Category: {}", cat.label()),
                    &serde_json::Value::Object(obj).to_string(),
                )
            })
            .collect()
    }

    #[test]
    fn categorical_merges_six_responses() {
        let schema = builtin_schema();
        let (client, backend) = client_with(category_rules(&schema), ScriptDefault::Error, None);
        let record =
            run_categorical(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(backend.calls(), 6);
        assert_eq!(record.present_count(), 17);
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("Dam_Name value"));
    }

    #[test]
    fn categorical_parse_failure_blanks_only_that_category() {
        let schema = builtin_schema();
        let mut rules = category_rules(&schema);
        rules[4] = pattern("Category: Storage Information", "garbled");
        let (client, _) = client_with(rules, ScriptDefault::Error, None);
        let record =
            run_categorical(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.present_count(), 16);
        assert_eq!(record.values["Usable_Storage_Volume"], None);
        assert!(record.warnings.iter().any(|w| w.contains("Storage category parse failure")));
    }

    #[test]
    fn chain_of_thought_takes_last_object() {
        let schema = builtin_schema();
        let response = concat!(
            "Step 1: the document describes a dam. {\"Dam_Name\": \"Early Wrong Dam\"}\n",
            "Step 6: done.\n",
            "{\"Dam_Name\": \"Smith Dam\"}"
        );
        let (client, _) =
            client_with(vec![pattern("chain_of_thought", response)], ScriptDefault::Error, None);
        let record =
            run_chain_of_thought(&chunk(), &client, &schema, &PipelineOptions::default()).unwrap();
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("Smith Dam"));
    }

    #[test]
    fn chain_of_thought_pure_json_matches_single_step_parse() {
        let schema = builtin_schema();
        let body = r#"{"Dam_Name": "Smith Dam"}"#;
        let (client, _) = client_with(
            vec![pattern("chain_of_thought", body), pattern("single_step", body)],
            ScriptDefault::Error,
            None,
        );
        let opts = PipelineOptions::default();
        let cot = run_chain_of_thought(&chunk(), &client, &schema, &opts).unwrap();
        let ss = run_single_step(&chunk(), &client, &schema, &opts).unwrap();
        assert_eq!(cot.values, ss.values);
    }

    fn record_with(values: &[(&str, &str)]) -> ExtractionRecord {
        let schema = builtin_schema();
        let mut record =
            ExtractionRecord::all_absent("doc#0000", "test-model", MethodId::SingleStep, &schema);
        for (k, v) in values {
            record.values.insert((*k).to_string(), Some((*v).to_string()));
        }
        record
    }

    #[test]
    fn reflective_all_accept_is_identity() {
        let schema = builtin_schema();
        let record = record_with(&[("Dam_Name", "Smith Dam"), ("Minimum_Flow", "250 cfs")]);
        let (client, _) =
            client_with(vec![pattern("validate_", "ACCEPT")], ScriptDefault::Error, None);
        let (validated, outcome) = run_reflective(
            &record,
            &chunk(),
            &client,
            &schema,
            Strictness::Lenient,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(validated.values, record.values);
        assert_eq!(outcome.candidate_count, 2);
        assert_eq!(outcome.rejected_count, 0);
    }

    #[test]
    fn reflective_all_reject_empties_record() {
        let schema = builtin_schema();
        let record = record_with(&[
            ("Dam_Name", "a"),
            ("County", "b"),
            ("Minimum_Flow", "c"),
            ("Power_Capacity", "d"),
            ("Power_Head", "e"),
        ]);
        let (client, _) =
            client_with(vec![pattern("validate_", "REJECT")], ScriptDefault::Error, None);
        let (validated, outcome) = run_reflective(
            &record,
            &chunk(),
            &client,
            &schema,
            Strictness::Stringent,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(validated.present_count(), 0);
        assert_eq!(outcome.rejected_count, 5);
        assert_eq!(outcome.candidate_count, 5);
    }

    #[test]
    fn reflective_partial_rejection_rate() {
        let schema = builtin_schema();
        // 8 candidates; reject exactly the two flow fields.
        let record = record_with(&[
            ("Dam_Name", "v"),
            ("Location", "v"),
            ("County", "v"),
            ("Primary_Purpose", "v"),
            ("Minimum_Flow", "v"),
            ("Annual_Flow_Peak", "v"),
            ("Power_Capacity", "v"),
            ("Energy_Output", "v"),
        ]);
        let (client, _) = client_with(
            vec![
                pattern("Field: Minimum_Flow", "REJECT"),
                pattern("Field: Annual_Flow_Peak", "REJECT"),
                pattern("validate_", "ACCEPT"),
            ],
            ScriptDefault::Error,
            None,
        );
        let (_, outcome) = run_reflective(
            &record,
            &chunk(),
            &client,
            &schema,
            Strictness::Moderate,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.candidate_count, 8);
        assert_eq!(outcome.rejected_count, 2);
        assert_eq!(
            outcome.rejected_count as f64 / outcome.candidate_count as f64,
            0.25
        );
        assert!(matches!(outcome.per_field["Minimum_Flow"], FieldValidation::Rejected { .. }));
        assert!(matches!(outcome.per_field["Dam_Name"], FieldValidation::Kept { .. }));
        assert!(matches!(outcome.per_field["Stream_Temperature"], FieldValidation::Absent));
    }

    #[test]
    fn reflective_unparseable_verdict_rejects_with_separate_tally() {
        let schema = builtin_schema();
        let record = record_with(&[("Dam_Name", "Smith Dam")]);
        let (client, _) =
            client_with(vec![pattern("validate_", "hmm, no idea")], ScriptDefault::Error, None);
        let (validated, outcome) = run_reflective(
            &record,
            &chunk(),
            &client,
            &schema,
            Strictness::Moderate,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(validated.present_count(), 0);
        assert_eq!(outcome.rejected_count, 1);
        assert_eq!(outcome.parse_failures, 1);
    }

    #[test]
    fn reflective_methods_share_one_extraction_via_cache() {
        let schema = builtin_schema();
        let dir = tempfile::tempdir().unwrap();
        let (client, backend) = client_with(
            vec![
                pattern("single_step", r#"{"Dam_Name": "Smith Dam", "County": "Juneau"}"#),
                pattern("validate_", "ACCEPT"),
            ],
            ScriptDefault::Error,
            Some(dir.path().to_path_buf()),
        );
        let opts = PipelineOptions::default();
        let c = chunk();
        for method in [
            MethodId::ReflectiveLenient,
            MethodId::ReflectiveModerate,
            MethodId::ReflectiveStringent,
        ] {
            let (record, outcome) = run_method(method, &c, &client, &schema, &opts).unwrap();
            assert_eq!(record.method_tag, method);
            assert_eq!(outcome.unwrap().candidate_count, 2);
        }
        // 1 extraction + 3 strictness levels x 2 candidates.
        assert_eq!(backend.calls(), 1 + 3 * 2);
    }

    #[test]
    fn method_set_has_seven_entries() {
        assert_eq!(MethodId::ALL.len(), 7);
        for m in MethodId::ALL {
            assert_eq!(MethodId::from_str_tag(m.as_str()), Some(m));
        }
    }

    #[test]
    fn validation_monotonicity_on_fixed_examples() {
        let schema = builtin_schema();
        let record = record_with(&[("Dam_Name", "Smith Dam"), ("County", "Juneau")]);
        let (client, _) = client_with(
            vec![pattern("Field: County", "REJECT"), pattern("validate_", "ACCEPT")],
            ScriptDefault::Error,
            None,
        );
        let (validated, _) = run_reflective(
            &record,
            &chunk(),
            &client,
            &schema,
            Strictness::Moderate,
            &PipelineOptions::default(),
        )
        .unwrap();
        for (name, v) in &validated.values {
            if let Some(v) = v {
                assert_eq!(record.values[name].as_deref(), Some(v.as_str()), "kept unmodified");
            }
        }
        assert!(validated.present_count() <= record.present_count());
    }

    #[test]
    fn result_file_round_trip() {
        let schema = builtin_schema();
        let mut file = ResultFile::new("m", MethodId::TwoStep);
        file.records.push(ExtractionRecord::all_absent("d#0000", "m", MethodId::TwoStep, &schema));
        let back = ResultFile::from_json(&file.to_json()).unwrap();
        assert_eq!(back, file);
    }
}
