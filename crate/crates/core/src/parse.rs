//! Turning raw model text into typed records: balanced-object JSON recovery,
//! null normalization, presence-map parsing, and verdict parsing.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::pipeline::MethodId;
use crate::prompt::Strictness;
use crate::schema::Schema;

const EXCERPT_LIMIT: usize = 500;

fn excerpt(text: &str) -> String {
    if text.chars().count() <= EXCERPT_LIMIT {
        text.to_string()
    } else {
        text.chars().take(EXCERPT_LIMIT).collect()
    }
}

#[derive(Debug, Error)]
pub enum ParseFailure {
    #[error("no balanced JSON object found in model output: {0:?}")]
    NoJsonFound(String),
    #[error("model output is valid JSON but not an object: {0:?}")]
    NotAnObject(String),
    #[error("no ACCEPT or REJECT token in verdict output: {0:?}")]
    NoVerdict(String),
    #[error("presence output is neither JSON nor field lines: {0:?}")]
    NoPresence(String),
}

/// Which balanced object to pick when the output contains several.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JsonScan {
    First,
    Last,
}

/// Strip markdown code fences, then locate balanced top-level `{...}` spans
/// (string- and escape-aware) and parse the first one that is valid JSON.
pub fn recover_json(text: &str) -> Result<Value, ParseFailure> {
    recover_json_scan(text, JsonScan::First)
}

pub fn recover_json_scan(text: &str, scan: JsonScan) -> Result<Value, ParseFailure> {
    let defenced: String = text
        .lines()
        .filter(|line| !line.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n");
    let candidates = balanced_object_spans(&defenced);
    let parse = |span: &(usize, usize)| -> Option<Value> {
        serde_json::from_str::<Value>(&defenced[span.0..span.1]).ok()
    };
    let found = match scan {
        JsonScan::First => candidates.iter().find_map(|s| parse(s)),
        JsonScan::Last => candidates.iter().rev().find_map(|s| parse(s)),
    };
    found.ok_or_else(|| ParseFailure::NoJsonFound(excerpt(text)))
}

/// Byte spans of top-level `{...}` groups, skipping over string literals.
fn balanced_object_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, ch) in text.char_indices() {
        if in_string {
            if escaped {
                escaped = false;
            } else if ch == '\\' {
                escaped = true;
            } else if ch == '"' {
                in_string = false;
            }
            continue;
        }
        match ch {
            '"' if depth > 0 => in_string = true,
            '{' => {
                if depth == 0 {
                    start = i;
                }
                depth += 1;
            }
            '}' => {
                if depth > 0 {
                    depth -= 1;
                    if depth == 0 {
                        spans.push((start, i + ch.len_utf8()));
                    }
                }
            }
            _ => {}
        }
    }
    spans
}

/// Options for value normalization and verdict parsing. Both token tables are
/// extensible through configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseOptions {
    /// Strings (case-insensitive, trimmed) treated as "no value".
    pub null_tokens: Vec<String>,
    /// Hedging terms that flip a stringent ACCEPT to a rejection.
    pub qualifier_terms: Vec<String>,
}

impl Default for ParseOptions {
    fn default() -> Self {
        let null_tokens = ["null", "none", "n/a", "na", "not specified", "not mentioned", "unknown", ""]
            .map(str::to_string)
            .to_vec();
        let qualifier_terms = [
            "possibly",
            "likely",
            "approximately",
            "appears",
            "seems",
            "may",
            "might",
            "probably",
            "unclear",
            "inferred",
        ]
        .map(str::to_string)
        .to_vec();
        ParseOptions { null_tokens, qualifier_terms }
    }
}

impl ParseOptions {
    fn is_null_token(&self, s: &str) -> bool {
        let lowered = s.trim().to_lowercase();
        self.null_tokens.iter().any(|t| *t == lowered)
    }
}

/// Per-chunk extraction output: one entry per schema field, `None` for
/// absent. Empty strings are never stored as values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionRecord {
    pub chunk_id: String,
    pub model_name: String,
    pub method_tag: MethodId,
    pub values: BTreeMap<String, Option<String>>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ExtractionRecord {
    pub fn all_absent(
        chunk_id: impl Into<String>,
        model_name: impl Into<String>,
        method_tag: MethodId,
        schema: &Schema,
    ) -> Self {
        ExtractionRecord {
            chunk_id: chunk_id.into(),
            model_name: model_name.into(),
            method_tag,
            values: schema.field_names().map(|n| (n.to_string(), None)).collect(),
            warnings: Vec::new(),
        }
    }

    pub fn present_count(&self) -> usize {
        self.values.values().filter(|v| v.is_some()).count()
    }

    /// (field, value) pairs with a value, in schema order.
    pub fn present_fields<'a>(&'a self, schema: &'a Schema) -> Vec<(&'a str, &'a str)> {
        schema
            .field_names()
            .filter_map(|name| {
                self.values.get(name).and_then(|v| v.as_deref()).map(|v| (name, v))
            })
            .collect()
    }
}

/// Fold a key for matching: lowercase with runs of spaces, hyphens, and
/// underscores collapsed to single underscores.
pub fn fold_key(key: &str) -> String {
    let mut out = String::with_capacity(key.len());
    let mut last_sep = true;
    for ch in key.trim().chars() {
        if ch == ' ' || ch == '_' || ch == '-' {
            if !last_sep {
                out.push('_');
                last_sep = true;
            }
        } else {
            for lower in ch.to_lowercase() {
                out.push(lower);
            }
            last_sep = false;
        }
    }
    while out.ends_with('_') {
        out.pop();
    }
    out
}

fn value_to_entry(value: &Value, opts: &ParseOptions, warnings: &mut Vec<String>, key: &str) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) => {
            let trimmed = s.trim();
            if trimmed.is_empty() {
                None
            } else if opts.is_null_token(trimmed) {
                warnings.push(format!("{key}: null-token value {trimmed:?} treated as absent"));
                None
            } else {
                Some(trimmed.to_string())
            }
        }
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => {
            warnings.push(format!("{key}: boolean value stored as text"));
            Some(b.to_string())
        }
        other => {
            warnings.push(format!("{key}: non-scalar value stored as JSON text"));
            Some(other.to_string())
        }
    }
}

pub struct RecordProvenance<'a> {
    pub chunk_id: &'a str,
    pub model_name: &'a str,
    pub method_tag: MethodId,
}

/// Map a recovered JSON object onto the schema. Keys are matched after
/// folding; missing and unexpected keys become warnings; every schema field
/// gets exactly one entry. `expected` restricts which fields may take values
/// (used by the gated and per-category strategies); `None` means all.
pub fn parse_extraction(
    json: &Value,
    schema: &Schema,
    provenance: RecordProvenance<'_>,
    expected: Option<&[&str]>,
    opts: &ParseOptions,
) -> Result<ExtractionRecord, ParseFailure> {
    let object = json.as_object().ok_or_else(|| ParseFailure::NotAnObject(excerpt(&json.to_string())))?;

    let mut record = ExtractionRecord::all_absent(
        provenance.chunk_id,
        provenance.model_name,
        provenance.method_tag,
        schema,
    );
    let folded_to_name: BTreeMap<String, &str> =
        schema.field_names().map(|n| (fold_key(n), n)).collect();
    let expected_set: Vec<&str> = match expected {
        Some(sel) => sel.to_vec(),
        None => schema.field_names().collect(),
    };

    let mut seen: Vec<&str> = Vec::new();
    for (key, value) in object {
        match folded_to_name.get(&fold_key(key)) {
            Some(name) if expected_set.contains(name) => {
                if key != *name {
                    record.warnings.push(format!("key {key:?} folded to {name}"));
                }
                let entry = value_to_entry(value, opts, &mut record.warnings, name);
                record.values.insert((*name).to_string(), entry);
                seen.push(name);
            }
            Some(name) => {
                record.warnings.push(format!("ignored value for non-requested field {name}"));
            }
            None => {
                record.warnings.push(format!("unknown field {key:?} in output"));
            }
        }
    }
    for name in &expected_set {
        if !seen.contains(name) {
            record.warnings.push(format!("missing field {name} filled as absent"));
        }
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PresenceVerdict {
    Yes,
    No,
    Maybe,
}

/// Field-presence gate output: exactly the schema's fields, three tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresenceMap {
    pub verdicts: BTreeMap<String, PresenceVerdict>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PresenceMap {
    /// Fields gated through to extraction (YES or MAYBE), in schema order.
    pub fn selected<'a>(&self, schema: &'a Schema) -> Vec<&'a str> {
        schema
            .field_names()
            .filter(|n| {
                matches!(
                    self.verdicts.get(*n),
                    Some(PresenceVerdict::Yes) | Some(PresenceVerdict::Maybe)
                )
            })
            .collect()
    }
}

fn presence_token(raw: &str) -> Option<PresenceVerdict> {
    match raw.trim().to_uppercase().as_str() {
        "YES" => Some(PresenceVerdict::Yes),
        "NO" => Some(PresenceVerdict::No),
        "MAYBE" => Some(PresenceVerdict::Maybe),
        _ => None,
    }
}

/// Parse the presence gate. Accepts a JSON map, or `Field: TOKEN` lines as a
/// fallback. Unknown tokens and missing fields fail open to MAYBE so a noisy
/// gate degrades to extraction rather than silently dropping fields.
pub fn parse_presence(text: &str, schema: &Schema) -> Result<PresenceMap, ParseFailure> {
    let mut map = PresenceMap { verdicts: BTreeMap::new(), warnings: Vec::new() };
    let folded_to_name: BTreeMap<String, &str> =
        schema.field_names().map(|n| (fold_key(n), n)).collect();

    let mut assigned: BTreeMap<&str, PresenceVerdict> = BTreeMap::new();
    match recover_json(text) {
        Ok(value) => {
            let object = value
                .as_object()
                .ok_or_else(|| ParseFailure::NotAnObject(excerpt(text)))?;
            for (key, raw) in object {
                let Some(name) = folded_to_name.get(&fold_key(key)) else {
                    map.warnings.push(format!("unknown field {key:?} in presence map"));
                    continue;
                };
                let token_text = match raw {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                match presence_token(&token_text) {
                    Some(v) => {
                        assigned.insert(name, v);
                    }
                    None => {
                        map.warnings.push(format!(
                            "{name}: unknown presence token {token_text:?}, treating as MAYBE"
                        ));
                        assigned.insert(name, PresenceVerdict::Maybe);
                    }
                }
            }
        }
        Err(_) => {
            // Line-based fallback: "Field_Name: YES"
            let mut matched_any = false;
            for line in text.lines() {
                let Some((key, rest)) = line.split_once([':', '=']) else { continue };
                let Some(name) = folded_to_name.get(&fold_key(key)) else { continue };
                matched_any = true;
                match presence_token(rest) {
                    Some(v) => {
                        assigned.insert(name, v);
                    }
                    None => {
                        map.warnings.push(format!(
                            "{name}: unknown presence token {:?}, treating as MAYBE",
                            rest.trim()
                        ));
                        assigned.insert(name, PresenceVerdict::Maybe);
                    }
                }
            }
            if !matched_any {
                return Err(ParseFailure::NoPresence(excerpt(text)));
            }
        }
    }

    for name in schema.field_names() {
        match assigned.get(name) {
            Some(v) => {
                map.verdicts.insert(name.to_string(), *v);
            }
            None => {
                map.warnings.push(format!("{name}: missing from presence map, treating as MAYBE"));
                map.verdicts.insert(name.to_string(), PresenceVerdict::Maybe);
            }
        }
    }
    Ok(map)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub decision: Decision,
    pub rationale: Option<String>,
    /// Set when a stringent ACCEPT was overridden because the response
    /// contained qualifying language.
    pub qualifier_flagged: bool,
}

fn contains_qualifier(text: &str, opts: &ParseOptions) -> bool {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .any(|word| !word.is_empty() && opts.qualifier_terms.iter().any(|q| q == word))
}

/// The first line containing ACCEPT or REJECT (case-insensitive) decides;
/// whichever token appears first in that line wins. Under stringent
/// strictness an ACCEPT is overridden to Reject if the full response contains
/// a term from the qualifier lexicon.
pub fn parse_verdict(
    text: &str,
    strictness: Strictness,
    opts: &ParseOptions,
) -> Result<Verdict, ParseFailure> {
    let mut decision = None;
    let mut rationale: Option<String> = None;
    let mut lines = text.lines();
    for line in lines.by_ref() {
        let upper = line.to_uppercase();
        let accept_at = upper.find("ACCEPT");
        let reject_at = upper.find("REJECT");
        let (d, token_end) = match (accept_at, reject_at) {
            (Some(a), Some(r)) if a <= r => (Decision::Accept, a + "ACCEPT".len()),
            (Some(_), Some(r)) => (Decision::Reject, r + "REJECT".len()),
            (Some(a), None) => (Decision::Accept, a + "ACCEPT".len()),
            (None, Some(r)) => (Decision::Reject, r + "REJECT".len()),
            (None, None) => continue,
        };
        decision = Some(d);
        let rest = line[token_end..]
            .trim_start_matches(|c: char| c.is_whitespace() || ",:;.!-—–".contains(c))
            .trim();
        if !rest.is_empty() {
            rationale = Some(rest.to_string());
        }
        break;
    }
    let Some(mut decision) = decision else {
        return Err(ParseFailure::NoVerdict(excerpt(text)));
    };
    if rationale.is_none() {
        rationale = lines.map(str::trim).find(|l| !l.is_empty()).map(str::to_string);
    }

    let mut qualifier_flagged = false;
    if strictness == Strictness::Stringent
        && decision == Decision::Accept
        && contains_qualifier(text, opts)
    {
        decision = Decision::Reject;
        qualifier_flagged = true;
    }
    Ok(Verdict { decision, rationale, qualifier_flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::builtin_schema;
    use proptest::prelude::*;

    fn provenance() -> RecordProvenance<'static> {
        RecordProvenance { chunk_id: "d#0000", model_name: "m", method_tag: MethodId::SingleStep }
    }

    #[test]
    fn recover_strips_code_fences() {
        let v = recover_json("```json\n{\"a\":1}\n```").unwrap();
        assert_eq!(v["a"], 1);
    }

    #[test]
    fn recover_finds_nested_object_in_prose() {
        let v = recover_json("Sure! {\"a\": {\"b\": 2}} hope that helps").unwrap();
        assert_eq!(v["a"]["b"], 2);
    }

    #[test]
    fn recover_fails_without_object() {
        assert!(matches!(recover_json("no json here"), Err(ParseFailure::NoJsonFound(_))));
    }

    #[test]
    fn recover_ignores_braces_inside_strings() {
        let v = recover_json("{\"a\": \"curly } brace \\\" quote\", \"b\": 3}").unwrap();
        assert_eq!(v["b"], 3);
    }

    #[test]
    fn recover_skips_unparseable_candidates() {
        let v = recover_json("{not json} then {\"ok\": true}").unwrap();
        assert_eq!(v["ok"], true);
    }

    #[test]
    fn recover_last_picks_final_object() {
        let text = "step 1 {\"Dam_Name\": \"early\"} more text {\"Dam_Name\": \"final\"}";
        assert_eq!(recover_json_scan(text, JsonScan::Last).unwrap()["Dam_Name"], "final");
        assert_eq!(recover_json_scan(text, JsonScan::First).unwrap()["Dam_Name"], "early");
    }

    #[test]
    fn excerpt_capped_at_500_chars() {
        let long = "x".repeat(2000);
        match recover_json(&long) {
            Err(ParseFailure::NoJsonFound(e)) => assert_eq!(e.chars().count(), 500),
            other => panic!("unexpected: {other:?}"),
        }
    }

    #[test]
    fn parse_extraction_single_present_value() {
        let schema = builtin_schema();
        let mut obj = serde_json::Map::new();
        for name in schema.field_names() {
            obj.insert(name.to_string(), Value::Null);
        }
        obj.insert("Dam_Name".into(), Value::String("Smith Dam".into()));
        let record = parse_extraction(
            &Value::Object(obj),
            &schema,
            provenance(),
            None,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(record.present_count(), 1);
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("Smith Dam"));
        assert_eq!(record.values.len(), 17);
        assert!(record.warnings.is_empty());
    }

    #[test]
    fn parse_extraction_folds_keys() {
        let schema = builtin_schema();
        let json: Value = serde_json::json!({"dam name": "X"});
        let record =
            parse_extraction(&json, &schema, provenance(), None, &ParseOptions::default()).unwrap();
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("X"));
        assert!(record.warnings.iter().any(|w| w.contains("folded")));
    }

    #[test]
    fn parse_extraction_null_tokens_become_absent() {
        let schema = builtin_schema();
        for token in ["N/A", "not specified", "Unknown", "none", ""] {
            let json: Value = serde_json::json!({ "Power_Capacity": token });
            let record =
                parse_extraction(&json, &schema, provenance(), None, &ParseOptions::default())
                    .unwrap();
            assert_eq!(record.values["Power_Capacity"], None, "token {token:?}");
        }
    }

    #[test]
    fn parse_extraction_numbers_become_decimal_strings() {
        let schema = builtin_schema();
        let json: Value = serde_json::json!({"Power_Capacity": 15, "Power_Head": 32.5});
        let record =
            parse_extraction(&json, &schema, provenance(), None, &ParseOptions::default()).unwrap();
        assert_eq!(record.values["Power_Capacity"].as_deref(), Some("15"));
        assert_eq!(record.values["Power_Head"].as_deref(), Some("32.5"));
    }

    #[test]
    fn parse_extraction_rejects_non_object() {
        let schema = builtin_schema();
        let json: Value = serde_json::json!([1, 2]);
        assert!(matches!(
            parse_extraction(&json, &schema, provenance(), None, &ParseOptions::default()),
            Err(ParseFailure::NotAnObject(_))
        ));
    }

    #[test]
    fn parse_extraction_ignores_non_requested_fields() {
        let schema = builtin_schema();
        let json: Value = serde_json::json!({"Dam_Name": "X", "County": "Y"});
        let record = parse_extraction(
            &json,
            &schema,
            provenance(),
            Some(&["Dam_Name"]),
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(record.values["Dam_Name"].as_deref(), Some("X"));
        assert_eq!(record.values["County"], None);
        assert!(record.warnings.iter().any(|w| w.contains("non-requested")));
    }

    #[test]
    fn parse_presence_all_yes() {
        let schema = builtin_schema();
        let mut obj = serde_json::Map::new();
        for name in schema.field_names() {
            obj.insert(name.to_string(), Value::String("YES".into()));
        }
        let map = parse_presence(&Value::Object(obj).to_string(), &schema).unwrap();
        assert_eq!(map.verdicts.len(), 17);
        assert!(map.verdicts.values().all(|v| *v == PresenceVerdict::Yes));
        assert_eq!(map.selected(&schema).len(), 17);
    }

    #[test]
    fn parse_presence_case_folds_tokens() {
        let schema = builtin_schema();
        let map =
            parse_presence(r#"{"Dam_Name": "yes", "County": "No"}"#, &schema).unwrap();
        assert_eq!(map.verdicts["Dam_Name"], PresenceVerdict::Yes);
        assert_eq!(map.verdicts["County"], PresenceVerdict::No);
        // unmentioned fields fail open
        assert_eq!(map.verdicts["Location"], PresenceVerdict::Maybe);
    }

    #[test]
    fn parse_presence_unknown_token_is_maybe_with_warning() {
        let schema = builtin_schema();
        let map = parse_presence(r#"{"Dam_Name": "perhaps"}"#, &schema).unwrap();
        assert_eq!(map.verdicts["Dam_Name"], PresenceVerdict::Maybe);
        assert!(map.warnings.iter().any(|w| w.contains("perhaps")));
    }

    #[test]
    fn parse_presence_line_fallback() {
        let schema = builtin_schema();
        let map = parse_presence("Dam_Name: YES\nCounty: NO\n", &schema).unwrap();
        assert_eq!(map.verdicts["Dam_Name"], PresenceVerdict::Yes);
        assert_eq!(map.verdicts["County"], PresenceVerdict::No);
    }

    #[test]
    fn parse_presence_unparseable_fails() {
        let schema = builtin_schema();
        assert!(parse_presence("total gibberish", &schema).is_err());
    }

    #[test]
    fn verdict_accept_with_rationale() {
        let v = parse_verdict(
            "ACCEPT — exact match found",
            Strictness::Lenient,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(v.decision, Decision::Accept);
        assert_eq!(v.rationale.as_deref(), Some("exact match found"));
        assert!(!v.qualifier_flagged);
    }

    #[test]
    fn verdict_stringent_qualifier_override() {
        let v = parse_verdict(
            "ACCEPT, though possibly the value is inferred",
            Strictness::Stringent,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(v.decision, Decision::Reject);
        assert!(v.qualifier_flagged);
    }

    #[test]
    fn verdict_lenient_ignores_qualifiers() {
        let v = parse_verdict(
            "ACCEPT, though possibly inferred",
            Strictness::Lenient,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(v.decision, Decision::Accept);
        assert!(!v.qualifier_flagged);
    }

    #[test]
    fn verdict_reject() {
        let v = parse_verdict("REJECT", Strictness::Lenient, &ParseOptions::default()).unwrap();
        assert_eq!(v.decision, Decision::Reject);
        assert_eq!(v.rationale, None);
    }

    #[test]
    fn verdict_rationale_from_next_line() {
        let v = parse_verdict(
            "REJECT\nThe number is rounded.",
            Strictness::Stringent,
            &ParseOptions::default(),
        )
        .unwrap();
        assert_eq!(v.rationale.as_deref(), Some("The number is rounded."));
    }

    #[test]
    fn verdict_missing_token_is_failure() {
        assert!(matches!(
            parse_verdict("I am not sure.", Strictness::Moderate, &ParseOptions::default()),
            Err(ParseFailure::NoVerdict(_))
        ));
    }

    #[test]
    fn qualifier_matching_is_word_bounded() {
        let opts = ParseOptions::default();
        // "maybe" contains "may" as a substring but is a different word.
        assert!(!contains_qualifier("maybe mayor dismayed", &opts));
        assert!(contains_qualifier("it may be wrong", &opts));
    }

    #[test]
    fn record_round_trips_through_json() {
        let schema = builtin_schema();
        let json: Value = serde_json::json!({"Dam_Name": "Smith Dam", "Power_Capacity": "15 MW"});
        let record =
            parse_extraction(&json, &schema, provenance(), None, &ParseOptions::default()).unwrap();
        let serialized = serde_json::to_string(&record).unwrap();
        let back: ExtractionRecord = serde_json::from_str(&serialized).unwrap();
        assert_eq!(back, record);
    }

    proptest! {
        #[test]
        fn prop_recover_json_never_panics(s in ".*") {
            let _ = recover_json(&s);
            let _ = recover_json_scan(&s, JsonScan::Last);
        }

        #[test]
        fn prop_extraction_totality(pairs in proptest::collection::vec(("[A-Za-z_ ]{0,14}", "[a-z0-9 ]{0,10}"), 0..8)) {
            let schema = builtin_schema();
            let mut obj = serde_json::Map::new();
            for (k, v) in pairs {
                obj.insert(k, Value::String(v));
            }
            let record = parse_extraction(
                &Value::Object(obj),
                &schema,
                RecordProvenance { chunk_id: "c", model_name: "m", method_tag: MethodId::SingleStep },
                None,
                &ParseOptions::default(),
            ).unwrap();
            prop_assert_eq!(record.values.len(), 17);
            for v in record.values.values().flatten() {
                prop_assert!(!v.is_empty(), "empty string stored as value");
            }
        }
    }
}
