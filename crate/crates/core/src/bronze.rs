//! Reference-standard generation: one conservative judge call per
//! (chunk, field), assembled into an annotation set that evaluation scores
//! against. The judge never sees extraction output, so the reference is
//! independent of every system under test by construction.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::DocumentChunk;
use crate::gateway::GenerationRequest;
use crate::gateway::ModelClient;
use crate::parse::{fold_key, recover_json, ParseOptions};
use crate::pipeline::PipelineError;
use crate::prompt::{bronze_judge_prompt, Conservatism, PROMPT_VERSION};
use crate::schema::{FieldCategory, Schema};

pub const BRONZE_FORMAT_VERSION: u32 = 1;

/// Judge annotations for one chunk: one optional value per schema field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BronzeAnnotation {
    pub chunk_id: String,
    pub values: BTreeMap<String, Option<String>>,
    /// Fields whose judge call failed or returned unusable output; their
    /// values are null but were not judged absent.
    #[serde(default)]
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BronzeStandard {
    pub format_version: u32,
    pub judge_model: String,
    pub prompt_version: String,
    pub annotations: Vec<BronzeAnnotation>,
    /// Non-null value count per field, recomputable from the annotations.
    #[serde(default)]
    pub coverage_stats: BTreeMap<String, u64>,
}

impl BronzeStandard {
    pub fn recompute_coverage(&mut self, schema: &Schema) {
        let mut stats: BTreeMap<String, u64> =
            schema.field_names().map(|n| (n.to_string(), 0)).collect();
        for ann in &self.annotations {
            for (field, value) in &ann.values {
                if value.is_some() {
                    *stats.entry(field.clone()).or_insert(0) += 1;
                }
            }
        }
        self.coverage_stats = stats;
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bronze serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str, schema: &Schema) -> Result<BronzeStandard, serde_json::Error> {
        let mut standard: BronzeStandard = serde_json::from_str(json)?;
        standard.recompute_coverage(schema);
        Ok(standard)
    }

    /// chunk_id -> field -> value view used by scoring. Any reference file
    /// with this shape drops in, including a hand-built gold standard.
    pub fn reference_view(&self) -> BTreeMap<String, BTreeMap<String, Option<String>>> {
        self.annotations
            .iter()
            .map(|a| (a.chunk_id.clone(), a.values.clone()))
            .collect()
    }
}

fn judge_one_field(
    chunk: &DocumentChunk,
    field_name: &str,
    client: &ModelClient,
    schema: &Schema,
    conservatism: Conservatism,
    max_tokens: u32,
    parse_opts: &ParseOptions,
) -> Result<Option<String>, String> {
    let field = schema.field(field_name).expect("field in schema");
    let bundle = bronze_judge_prompt(chunk, field, conservatism);
    let request = GenerationRequest::from_bundle(&client.model_name, &bundle, max_tokens);
    let response = client.complete(&request).map_err(|e| e.to_string())?;
    let json = recover_json(&response.text).map_err(|e| e.to_string())?;
    let object = json.as_object().ok_or_else(|| "judge output is not an object".to_string())?;
    let folded = fold_key(field_name);
    for (key, value) in object {
        if fold_key(key) == folded {
            return Ok(match value {
                serde_json::Value::Null => None,
                serde_json::Value::String(s) => {
                    let trimmed = s.trim();
                    if trimmed.is_empty() || parse_opts.null_tokens.iter().any(|t| t == &trimmed.to_lowercase()) {
                        None
                    } else {
                        Some(trimmed.to_string())
                    }
                }
                serde_json::Value::Number(n) => Some(n.to_string()),
                other => Some(other.to_string()),
            });
        }
    }
    Err(format!("judge output has no {field_name} key"))
}

/// Build the reference standard: one judge call per (chunk, field), in
/// canonical chunk-then-schema order. Failed calls are recorded as null with
/// an error flag, never silently. A warm response cache makes reruns free
/// and byte-stable.
pub fn generate_bronze(
    chunks: &[DocumentChunk],
    schema: &Schema,
    judge: &ModelClient,
    conservatism: Conservatism,
    max_tokens: u32,
    parse_opts: &ParseOptions,
) -> Result<BronzeStandard, PipelineError> {
    let mut annotations = Vec::with_capacity(chunks.len());
    for chunk in chunks {
        let mut annotation = BronzeAnnotation {
            chunk_id: chunk.chunk_id.clone(),
            values: schema.field_names().map(|n| (n.to_string(), None)).collect(),
            errors: Vec::new(),
        };
        for field_name in schema.field_names() {
            match judge_one_field(chunk, field_name, judge, schema, conservatism, max_tokens, parse_opts)
            {
                Ok(value) => {
                    annotation.values.insert(field_name.to_string(), value);
                }
                Err(detail) => {
                    annotation.errors.push(format!("{field_name}: {detail}"));
                }
            }
        }
        annotations.push(annotation);
    }
    let mut standard = BronzeStandard {
        format_version: BRONZE_FORMAT_VERSION,
        judge_model: judge.model_name.clone(),
        prompt_version: format!("{PROMPT_VERSION}-{}", conservatism.as_str()),
        annotations,
        coverage_stats: BTreeMap::new(),
    };
    standard.recompute_coverage(schema);
    Ok(standard)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub chunk_count: u64,
    /// Non-null rate per field, None when the corpus has no chunks.
    pub per_field: BTreeMap<String, Option<f64>>,
    /// Mean of member-field rates per category.
    pub per_category: BTreeMap<String, Option<f64>>,
    /// Fields with zero positives: no comparison is possible for them.
    pub zero_coverage_fields: Vec<String>,
}

/// Coverage rates over a standard, flagging fields that have no positive
/// examples at all.
pub fn bronze_coverage_report(standard: &BronzeStandard, schema: &Schema) -> CoverageReport {
    let chunk_count = standard.annotations.len() as u64;
    let mut per_field = BTreeMap::new();
    let mut zero = Vec::new();
    for name in schema.field_names() {
        let count = standard.coverage_stats.get(name).copied().unwrap_or(0);
        let rate = if chunk_count == 0 { None } else { Some(count as f64 / chunk_count as f64) };
        if count == 0 {
            zero.push(name.to_string());
        }
        per_field.insert(name.to_string(), rate);
    }
    let mut per_category = BTreeMap::new();
    for category in FieldCategory::ALL {
        let rates: Vec<f64> = schema
            .fields_in_category(category)
            .iter()
            .filter_map(|f| per_field.get(&f.name).copied().flatten())
            .collect();
        let mean = if rates.is_empty() {
            None
        } else {
            Some(rates.iter().sum::<f64>() / rates.len() as f64)
        };
        per_category.insert(category.short_name().to_string(), mean);
    }
    CoverageReport { chunk_count, per_field, per_category, zero_coverage_fields: zero }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{chunk_document, ChunkingConfig, SourceDocument};
    use crate::gateway::{
        Backend, GatewayError, RawResponse, RetryPolicy, ScriptDefault, ScriptKey, ScriptRule,
        ScriptedBackend,
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

    fn two_chunks() -> Vec<DocumentChunk> {
        let a = SourceDocument::new("a", "the Petenwell Dam in Juneau County");
        let b = SourceDocument::new("b", "capacity of 15 MW");
        let cfg = ChunkingConfig::default();
        let mut chunks = chunk_document(&a, &cfg).unwrap();
        chunks.extend(chunk_document(&b, &cfg).unwrap());
        chunks
    }

    fn judge_client(
        rules: Vec<ScriptRule>,
        default: ScriptDefault,
        cache_dir: Option<std::path::PathBuf>,
    ) -> (ModelClient, Arc<ScriptedBackend>) {
        let backend = Arc::new(ScriptedBackend::new(rules, default));
        let client = ModelClient::new(
            "judge-model",
            Box::new(SharedBackend(Arc::clone(&backend))),
            cache_dir,
            RetryPolicy::default(),
            4,
        )
        .unwrap();
        (client, backend)
    }

    #[test]
    fn two_chunk_corpus_issues_34_calls() {
        let schema = builtin_schema();
        let (client, backend) = judge_client(
            Vec::new(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let standard = generate_bronze(
            &two_chunks(),
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(backend.calls(), 34);
        assert_eq!(standard.annotations.len(), 2);
        assert_eq!(standard.annotations[0].values.len(), 17);
    }

    #[test]
    fn all_null_judge_gives_zero_coverage() {
        let schema = builtin_schema();
        let (client, _) = judge_client(
            Vec::new(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let standard = generate_bronze(
            &two_chunks(),
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        assert!(standard.coverage_stats.values().all(|c| *c == 0));
        let report = bronze_coverage_report(&standard, &schema);
        assert_eq!(report.zero_coverage_fields.len(), 17);
        assert!(report.per_field.values().all(|r| *r == Some(0.0)));
    }

    #[test]
    fn warm_cache_rerun_is_free_and_identical() {
        let schema = builtin_schema();
        let dir = tempfile::tempdir().unwrap();
        let rules = vec![ScriptRule {
            key: ScriptKey::Pattern("\"Dam_Name\"".into()),
            response: r#"{"Dam_Name": "Petenwell Dam"}"#.into(),
        }];
        let (client, backend) = judge_client(
            rules.clone(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            Some(dir.path().to_path_buf()),
        );
        let run = |client: &ModelClient| {
            generate_bronze(
                &two_chunks(),
                &schema,
                client,
                Conservatism::Strict,
                512,
                &ParseOptions::default(),
            )
            .unwrap()
            .to_json()
        };
        let first = run(&client);
        assert_eq!(backend.calls(), 34);
        let second = run(&client);
        assert_eq!(backend.calls(), 34, "warm rerun makes zero transport calls");
        assert_eq!(first, second);
    }

    #[test]
    fn judge_values_and_coverage_rates() {
        let schema = builtin_schema();
        let rules = vec![
            ScriptRule {
                key: ScriptKey::Pattern("\"Dam_Name\"".into()),
                response: r#"{"Dam_Name": "Petenwell Dam"}"#.into(),
            },
            ScriptRule {
                key: ScriptKey::Pattern("\"Power_Capacity\"".into()),
                response: r#"{"Power_Capacity": "15 MW"}"#.into(),
            },
        ];
        let (client, _) = judge_client(
            rules,
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let standard = generate_bronze(
            &two_chunks(),
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(standard.coverage_stats["Dam_Name"], 2);
        assert_eq!(standard.coverage_stats["County"], 0);
        let report = bronze_coverage_report(&standard, &schema);
        assert_eq!(report.per_field["Dam_Name"], Some(1.0));
        // Basic = mean(1.0, 0, 0, 0) = 0.25
        assert!((report.per_category["Basic"].unwrap() - 0.25).abs() < 1e-12);
        assert!(!report.zero_coverage_fields.contains(&"Dam_Name".to_string()));
        assert!(report.zero_coverage_fields.contains(&"County".to_string()));
    }

    #[test]
    fn judge_failures_are_flagged_not_silent() {
        let schema = builtin_schema();
        // Strict scripting with no rules: every call errors.
        let (client, _) = judge_client(Vec::new(), ScriptDefault::Error, None);
        let standard = generate_bronze(
            &two_chunks()[..1],
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(standard.annotations[0].errors.len(), 17);
        assert!(standard.annotations[0].values.values().all(|v| v.is_none()));
    }

    #[test]
    fn conservatism_changes_prompt_version_and_fingerprints() {
        let schema = builtin_schema();
        let (client, backend) = judge_client(
            Vec::new(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let chunks = two_chunks();
        let strict = generate_bronze(
            &chunks[..1],
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        let calls_after_strict = backend.calls();
        let balanced = generate_bronze(
            &chunks[..1],
            &schema,
            &client,
            Conservatism::Balanced,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(strict.prompt_version, "v1-strict");
        assert_eq!(balanced.prompt_version, "v1-balanced");
        // Different prompts: the balanced pass is not served by strict calls.
        assert_eq!(backend.calls(), calls_after_strict + 17);
    }

    #[test]
    fn bronze_file_round_trip() {
        let schema = builtin_schema();
        let (client, _) = judge_client(
            Vec::new(),
            ScriptDefault::Fixed(ScriptedBackend::all_null_json(&schema)),
            None,
        );
        let standard = generate_bronze(
            &two_chunks(),
            &schema,
            &client,
            Conservatism::Strict,
            512,
            &ParseOptions::default(),
        )
        .unwrap();
        let back = BronzeStandard::from_json(&standard.to_json(), &schema).unwrap();
        assert_eq!(back, standard);
    }
}
