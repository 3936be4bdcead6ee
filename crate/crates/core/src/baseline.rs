//! Rule-pattern baseline: deterministic per-field extraction from chunk text
//! without any model calls. Each field has an ordered list of rules; a rule
//! fires on the first sentence containing one of its context keywords whose
//! text matches the value pattern, leftmost match first.
//!
//! The shipped rules are keyed to the schema's unit vocabulary (cfs, feet,
//! MW, MWh, acre-feet) and common licensing phrasing; a JSON manifest can
//! override them.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentChunk;
use crate::parse::ExtractionRecord;
use crate::pipeline::MethodId;
use crate::schema::Schema;

/// Model name the baseline reports under in result files and tables.
pub const BASELINE_MODEL_NAME: &str = "traditional";

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("pattern manifest is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("pattern rule references unknown field {0}")]
    UnknownField(String),
    #[error("no pattern rules for field {0}")]
    MissingField(String),
    #[error("invalid value pattern for field {field}: {source}")]
    BadRegex {
        field: String,
        #[source]
        source: regex::Error,
    },
}

/// One (keywords, value pattern) rule. A sentence is eligible when it
/// contains any keyword (matched on word boundaries, case-insensitive); the
/// captured value is group 1 of the pattern, or the whole match.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Matcher {
    pub keywords: Vec<String>,
    pub value_pattern: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldPattern {
    pub field_name: String,
    pub matchers: Vec<Matcher>,
    #[serde(default)]
    pub unit_hint: Option<String>,
}

struct CompiledMatcher {
    keywords: Vec<Regex>,
    value: Regex,
}

struct CompiledField {
    field_name: String,
    matchers: Vec<CompiledMatcher>,
}

/// Pattern list compiled and checked against a schema: every schema field
/// must be covered and no rule may reference an unknown field.
pub struct PatternSet {
    fields: Vec<CompiledField>,
}

impl PatternSet {
    pub fn compile(patterns: &[FieldPattern], schema: &Schema) -> Result<PatternSet, BaselineError> {
        for p in patterns {
            if schema.field(&p.field_name).is_none() {
                return Err(BaselineError::UnknownField(p.field_name.clone()));
            }
        }
        for name in schema.field_names() {
            if !patterns.iter().any(|p| p.field_name == name && !p.matchers.is_empty()) {
                return Err(BaselineError::MissingField(name.to_string()));
            }
        }
        let mut fields = Vec::new();
        for name in schema.field_names() {
            let mut matchers = Vec::new();
            for p in patterns.iter().filter(|p| p.field_name == name) {
                for m in &p.matchers {
                    let keywords = m
                        .keywords
                        .iter()
                        .map(|k| {
                            Regex::new(&format!(r"(?i)\b{}\b", regex::escape(k))).map_err(|source| {
                                BaselineError::BadRegex { field: name.to_string(), source }
                            })
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let value = Regex::new(&m.value_pattern)
                        .map_err(|source| BaselineError::BadRegex { field: name.to_string(), source })?;
                    matchers.push(CompiledMatcher { keywords, value });
                }
            }
            fields.push(CompiledField { field_name: name.to_string(), matchers });
        }
        Ok(PatternSet { fields })
    }

    pub fn field_count(&self) -> usize {
        self.fields.len()
    }
}

fn sentence_split(text: &str) -> Vec<&str> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"[.;!?](?:\s+|$)").expect("valid regex"));
    re.split(text).filter(|s| !s.trim().is_empty()).collect()
}

/// Scan one chunk with every field's rules. No match means absent; the
/// record is schema-total like any model output. The baseline participates
/// in the single-step column only, so records carry that tag.
pub fn extract_baseline(chunk: &DocumentChunk, schema: &Schema, patterns: &PatternSet) -> ExtractionRecord {
    let mut record = ExtractionRecord::all_absent(
        &chunk.chunk_id,
        BASELINE_MODEL_NAME,
        MethodId::SingleStep,
        schema,
    );
    let sentences = sentence_split(&chunk.text);
    for field in &patterns.fields {
        'rules: for matcher in &field.matchers {
            for sentence in &sentences {
                if !matcher.keywords.iter().any(|k| k.is_match(sentence)) {
                    continue;
                }
                if let Some(caps) = matcher.value.captures(sentence) {
                    let value = caps
                        .get(1)
                        .or_else(|| caps.get(0))
                        .map(|m| m.as_str().trim().to_string())
                        .filter(|v| !v.is_empty());
                    if let Some(value) = value {
                        record.values.insert(field.field_name.clone(), Some(value));
                        break 'rules;
                    }
                }
            }
        }
    }
    record
}

const NUM: &str = r"\d{1,3}(?:,\d{3})*(?:\.\d+)?|\d+(?:\.\d+)?";

fn cfs_pattern() -> String {
    format!(r"(?i)\b((?:{NUM})\s*(?:cfs|cubic\s+feet\s+per\s+second))\b")
}

fn feet_pattern() -> String {
    format!(r"(?i)\b((?:{NUM})\s*(?:feet|foot|ft))\b")
}

fn rule(field: &str, keywords: &[&str], value_pattern: String, unit_hint: Option<&str>) -> FieldPattern {
    FieldPattern {
        field_name: field.to_string(),
        matchers: vec![Matcher {
            keywords: keywords.iter().map(|k| k.to_string()).collect(),
            value_pattern,
        }],
        unit_hint: unit_hint.map(str::to_string),
    }
}

/// The shipped rule set, covering every schema field.
pub fn default_patterns(schema: &Schema) -> Vec<FieldPattern> {
    let mut patterns = vec![
        FieldPattern {
            field_name: "Dam_Name".into(),
            matchers: vec![
                Matcher {
                    keywords: vec!["dam".into()],
                    value_pattern: r"(?:[Tt]he\s+)?([A-Z][\w'.-]*(?:\s+[A-Z][\w'.-]*)*\s+Dam)\b".into(),
                },
                Matcher {
                    keywords: vec!["project".into()],
                    value_pattern:
                        r"(?:[Tt]he\s+)?([A-Z][\w'.-]*(?:\s+[A-Z][\w'.-]*)*\s+(?:Hydroelectric\s+)?Project)\b"
                            .into(),
                },
            ],
            unit_hint: None,
        },
        rule(
            "Location",
            &["located"],
            r"(?i)located\s+(?:on|in|at|near)\s+([^.;,]{3,80})".into(),
            None,
        ),
        rule(
            "County",
            &["county", "counties"],
            r"([A-Z][a-z]+(?:\s+[A-Z][a-z]+)*)\s+Count(?:y|ies)\b".into(),
            None,
        ),
        rule(
            "Primary_Purpose",
            &["purpose"],
            r"(?i)\b(hydroelectric(?:\s+(?:power\s+)?generation)?|hydropower(?:\s+generation)?|power\s+generation|flood\s+control|irrigation|recreation|water\s+supply)\b"
                .into(),
            None,
        ),
        rule(
            "Minimum_Flow",
            &["minimum flow", "minimum instream flow", "continuous flow", "min flow"],
            cfs_pattern(),
            Some("cfs"),
        ),
        rule(
            "Annual_Flow_Peak",
            &["peak flow", "annual peak", "maximum flow", "flood flow"],
            cfs_pattern(),
            Some("cfs"),
        ),
        rule(
            "Annual_Flow_Mean",
            &["mean annual flow", "average annual flow", "mean flow", "average flow"],
            cfs_pattern(),
            Some("cfs"),
        ),
        rule(
            "Spillway_Maximum_Discharge_Flow",
            &["spillway"],
            cfs_pattern(),
            Some("cfs"),
        ),
        rule(
            "Maximum_Pool_Elevation",
            &["maximum pool elevation", "maximum reservoir elevation", "maximum pool"],
            feet_pattern(),
            Some("ft"),
        ),
        rule(
            "Normal_Maximum_Operating_Pool_Level",
            &["normal maximum operating", "normal pool", "normal operating pool"],
            feet_pattern(),
            Some("ft"),
        ),
        rule(
            "Maximum_Operating_Pool_Level",
            &["maximum operating pool", "maximum operating level"],
            feet_pattern(),
            Some("ft"),
        ),
        rule(
            "Minimum_Pool_Elevation",
            &["minimum pool"],
            feet_pattern(),
            Some("ft"),
        ),
        FieldPattern {
            field_name: "Power_Head".into(),
            matchers: vec![
                Matcher {
                    keywords: vec!["head".into()],
                    value_pattern: format!(
                        r"(?i)head\s+of\s+((?:{NUM})\s*(?:feet|foot|ft))\b"
                    ),
                },
                Matcher {
                    keywords: vec!["gross head".into(), "net head".into(), "rated head".into(), "hydraulic head".into()],
                    value_pattern: feet_pattern(),
                },
            ],
            unit_hint: Some("ft".into()),
        },
        rule(
            "Power_Capacity",
            &["capacity", "installed", "generating"],
            format!(r"(?i)\b((?:{NUM})\s*(?:MW|megawatts?))\b"),
            Some("MW"),
        ),
        rule(
            "Energy_Output",
            &["energy", "generation", "output"],
            format!(r"(?i)\b((?:{NUM})\s*(?:MWh|megawatt[\s-]hours?))\b"),
            Some("MWh"),
        ),
        rule(
            "Usable_Storage_Volume",
            &["storage", "usable storage"],
            format!(r"(?i)\b((?:{NUM})\s*(?:acre[\s-]feet|acre[\s-]ft|af))\b"),
            Some("acre-feet"),
        ),
        rule(
            "Stream_Temperature",
            &["stream temperature", "water temperature", "temperature"],
            format!(r"(?i)\b((?:{NUM})\s*(?:°\s*F|degrees?\s+(?:F|Fahrenheit)))"),
            None,
        ),
    ];
    // Keep rules only for fields the schema actually has, so custom schemas
    // that reuse some built-in names still compile.
    patterns.retain(|p| schema.field(&p.field_name).is_some());
    patterns
}

/// Parse a pattern manifest (JSON array of field pattern objects).
pub fn load_pattern_manifest(json: &str, schema: &Schema) -> Result<Vec<FieldPattern>, BaselineError> {
    let patterns: Vec<FieldPattern> = serde_json::from_str(json)?;
    for p in &patterns {
        if schema.field(&p.field_name).is_none() {
            return Err(BaselineError::UnknownField(p.field_name.clone()));
        }
    }
    Ok(patterns)
}
