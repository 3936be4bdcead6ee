//! Scoring: semantic value matching, field-level confusion counting, metric
//! aggregation at field/category/overall granularity, rejection-rate
//! analytics, and the recall-signature diagnostics.
//!
//! Confusion convention: a present prediction that mismatches a present
//! reference counts as a false positive only (not also a false negative).
//! Under this convention a record with no absent predictions has fn = 0 for
//! every field, so recall is exactly 1 whenever any true positive exists —
//! which is what makes blanket over-extraction show up as the perfect-recall
//! signature instead of looking like balanced performance.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::pipeline::{MethodId, ValidationOutcome};
use crate::prompt::Strictness;
use crate::schema::{FieldCategory, FieldSpec, Schema, ValueKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchReason {
    Exact,
    NormalizedNumeric,
    UnitSynonym,
    TokenEquivalent,
    NoMatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub is_match: bool,
    pub reason: MatchReason,
}

impl MatchDecision {
    fn hit(reason: MatchReason) -> Self {
        MatchDecision { is_match: true, reason }
    }

    fn miss() -> Self {
        MatchDecision { is_match: false, reason: MatchReason::NoMatch }
    }
}

/// Canonical form of a raw value for comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum NormalizedValue {
    Quantity {
        value: f64,
        /// Canonical unit id (`cfs`, `ft`, `mw`, `mwh`, `acre-feet`) or the
        /// lowercased raw token when unrecognized.
        unit: Option<String>,
        /// The unit text before canonicalization, for synonym detection.
        raw_unit: Option<String>,
    },
    Text {
        tokens: Vec<String>,
        /// Set when a numeric field's value had no parseable number and fell
        /// back to text comparison.
        numeric_fallback: bool,
    },
}

const STOPWORDS: [&str; 5] = ["the", "a", "an", "of", "project"];

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").expect("valid regex"))
}

fn thousands_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(\d),(\d{3})").expect("valid regex"))
}

/// Strip commas used as thousands separators ("1,000" -> "1000") without
/// touching commas in prose.
fn strip_thousands_separators(s: &str) -> String {
    let mut out = s.to_string();
    loop {
        let next = thousands_regex().replace_all(&out, "${1}${2}").into_owned();
        if next == out {
            return out;
        }
        out = next;
    }
}

/// Unit synonym table. Keys are space-joined lowercase token phrases.
fn canonical_unit(phrase: &str) -> Option<&'static str> {
    Some(match phrase {
        "cfs" | "cubic feet per second" | "cubic foot per second" => "cfs",
        "ft" | "feet" | "foot" => "ft",
        "mw" | "megawatt" | "megawatts" => "mw",
        "mwh" | "megawatt hour" | "megawatt hours" => "mwh",
        "acre feet" | "acre foot" | "af" => "acre-feet",
        _ => return None,
    })
}

fn clean_token(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_string()
}

fn text_tokens(raw: &str) -> Vec<String> {
    raw.to_lowercase()
        .split_whitespace()
        .map(clean_token)
        .filter(|t| !t.is_empty() && !STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn parse_quantity(lowered: &str) -> Option<(f64, Option<String>, Option<String>)> {
    let m = number_regex().find(lowered)?;
    let value: f64 = m.as_str().parse().ok()?;
    // Unit tokens follow the number; hyphens split so "acre-feet" and
    // "megawatt-hours" line up with their spaced spellings.
    let tail = &lowered[m.end()..];
    let tokens: Vec<String> = tail
        .split(|c: char| c.is_whitespace() || c == '-' || c == '/')
        .map(clean_token)
        .filter(|t| !t.is_empty())
        .take(4)
        .collect();
    if tokens.is_empty() {
        return Some((value, None, None));
    }
    for window in (1..=tokens.len().min(4)).rev() {
        let phrase = tokens[..window].join(" ");
        if let Some(unit) = canonical_unit(&phrase) {
            return Some((value, Some(unit.to_string()), Some(phrase)));
        }
    }
    let raw = tokens[0].clone();
    Some((value, Some(raw.clone()), Some(raw)))
}

/// Lowercase, collapse whitespace, strip thousands separators; numeric fields
/// parse to (number, canonical unit), text fields to a stopword-free token
/// sequence. A numeric field without a parseable number falls back to text.
pub fn normalize_value(raw: &str, field: &FieldSpec) -> NormalizedValue {
    let lowered = strip_thousands_separators(raw)
        .to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    match field.value_kind {
        ValueKind::NumericQuantity => match parse_quantity(&lowered) {
            Some((value, unit, raw_unit)) => NormalizedValue::Quantity { value, unit, raw_unit },
            None => NormalizedValue::Text { tokens: text_tokens(&lowered), numeric_fallback: true },
        },
        ValueKind::FreeText => {
            NormalizedValue::Text { tokens: text_tokens(&lowered), numeric_fallback: false }
        }
    }
}

fn tokens_equivalent(a: &[String], b: &[String]) -> bool {
    if a.is_empty() || b.is_empty() {
        return a.is_empty() && b.is_empty();
    }
    if a == b {
        return true;
    }
    let (short, long) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    long.windows(short.len()).any(|w| w == short)
}

/// Semantic equivalence of two present values for one field. Numeric values
/// match on exact number equality with compatible units (equal after
/// canonicalization, or absent on one side); text values match on equal
/// token sequences or contiguous containment. Symmetric by construction.
pub fn semantic_match(field: &FieldSpec, predicted: &str, reference: &str) -> MatchDecision {
    if predicted.trim() == reference.trim() {
        return MatchDecision::hit(MatchReason::Exact);
    }
    let a = normalize_value(predicted, field);
    let b = normalize_value(reference, field);
    match (&a, &b) {
        (
            NormalizedValue::Quantity { value: va, unit: ua, raw_unit: ra },
            NormalizedValue::Quantity { value: vb, unit: ub, raw_unit: rb },
        ) => {
            if va != vb {
                return MatchDecision::miss();
            }
            let compatible = match (ua, ub) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            };
            if !compatible {
                return MatchDecision::miss();
            }
            let reason = match (ra, rb) {
                (Some(x), Some(y)) if x != y => MatchReason::UnitSynonym,
                _ => MatchReason::NormalizedNumeric,
            };
            MatchDecision::hit(reason)
        }
        (NormalizedValue::Text { tokens: ta, .. }, NormalizedValue::Text { tokens: tb, .. }) => {
            if tokens_equivalent(ta, tb) {
                MatchDecision::hit(MatchReason::TokenEquivalent)
            } else {
                MatchDecision::miss()
            }
        }
        // One side parsed as a quantity, the other fell back to text:
        // compare both as raw token sequences.
        _ => {
            if tokens_equivalent(
                &text_tokens(&strip_thousands_separators(predicted)),
                &text_tokens(&strip_thousands_separators(reference)),
            ) {
                MatchDecision::hit(MatchReason::TokenEquivalent)
            } else {
                MatchDecision::miss()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Cell {
    TP,
    FP,
    FN,
    TN,
}

/// Score one (chunk, field) cell. A present prediction over an absent or
/// mismatching reference is a false positive; a missed present reference is
/// a false negative; both absent is a true negative.
pub fn score_cell(field: &FieldSpec, predicted: Option<&str>, reference: Option<&str>) -> Cell {
    match (predicted, reference) {
        (Some(p), Some(r)) => {
            if semantic_match(field, p, r).is_match {
                Cell::TP
            } else {
                Cell::FP
            }
        }
        (Some(_), None) => Cell::FP,
        (None, Some(_)) => Cell::FN,
        (None, None) => Cell::TN,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn record(&mut self, cell: Cell) {
        match cell {
            Cell::TP => self.tp += 1,
            Cell::FP => self.fp += 1,
            Cell::FN => self.fn_ += 1,
            Cell::TN => self.tn += 1,
        }
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn predicted_present(&self) -> u64 {
        self.tp + self.fp
    }
}

/// Precision/recall/F1 with explicit undefined markers. An undefined metric
/// is never coerced to 0; reports render it as "—" and means exclude it.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBlock {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricBlock {
    /// Harmonic F1 from rates. Undefined when either rate is undefined or
    /// when both are zero (zero denominator).
    pub fn from_rates(precision: Option<f64>, recall: Option<f64>) -> MetricBlock {
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        MetricBlock { precision, recall, f1 }
    }
}

/// Metrics from summed counts. Zero-denominator rates are undefined.
pub fn aggregate(counts: &ConfusionCounts) -> MetricBlock {
    let precision = if counts.tp + counts.fp > 0 {
        Some(counts.tp as f64 / (counts.tp + counts.fp) as f64)
    } else {
        None
    };
    let recall = if counts.tp + counts.fn_ > 0 {
        Some(counts.tp as f64 / (counts.tp + counts.fn_) as f64)
    } else {
        None
    };
    MetricBlock::from_rates(precision, recall)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedCounts {
    pub precision: u32,
    pub recall: u32,
    pub f1: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryEval {
    pub metrics: MetricBlock,
    /// Member fields excluded from each mean because their metric was
    /// undefined.
    pub undefined_fields: UndefinedCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEval {
    pub counts: ConfusionCounts,
    pub metrics: MetricBlock,
}

/// Unweighted mean of member-field metrics per category (macro averaging),
/// skipping undefined entries and reporting how many were skipped.
pub fn category_rollup(
    per_field: &BTreeMap<String, FieldEval>,
    schema: &Schema,
) -> BTreeMap<String, CategoryEval> {
    let mut out = BTreeMap::new();
    for category in FieldCategory::ALL {
        let members = schema.fields_in_category(category);
        let mut undefined = UndefinedCounts::default();
        let mean = |pick: &dyn Fn(&MetricBlock) -> Option<f64>, skipped: &mut u32| {
            let mut values = Vec::new();
            for f in &members {
                match per_field.get(&f.name).and_then(|fe| pick(&fe.metrics)) {
                    Some(v) => values.push(v),
                    None => *skipped += 1,
                }
            }
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        let precision = mean(&|m| m.precision, &mut undefined.precision);
        let recall = mean(&|m| m.recall, &mut undefined.recall);
        let f1 = mean(&|m| m.f1, &mut undefined.f1);
        out.insert(
            category.short_name().to_string(),
            CategoryEval { metrics: MetricBlock { precision, recall, f1 }, undefined_fields: undefined },
        );
    }
    out
}

/// Pooled rejection rate over outcomes: total rejected / total candidates.
pub fn rejection_rate(outcomes: &[ValidationOutcome]) -> Option<f64> {
    let candidates: u64 = outcomes.iter().map(|o| o.candidate_count as u64).sum();
    let rejected: u64 = outcomes.iter().map(|o| o.rejected_count as u64).sum();
    if candidates == 0 {
        None
    } else {
        Some(rejected as f64 / candidates as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    InBand,
    Below,
    Above,
}

/// Classify a rejection percentage against the 40-60% target band
/// (inclusive on both ends).
pub fn target_band(rate_percent: f64) -> Band {
    if rate_percent < 40.0 {
        Band::Below
    } else if rate_percent > 60.0 {
        Band::Above
    } else {
        Band::InBand
    }
}

/// Target-achievement label for a model's three rejection percentages.
///
/// Mapping, exactly:
/// - one strictness in band -> "{Lenient|Moderate|Stringent} only"
/// - several in band -> names joined with " + " in lenient->stringent order
/// - none in band, all three rates equal -> "None (convergence)"
/// - none in band, all three rates below 40 -> "None (low rejection)"
/// - none in band otherwise -> "None"
pub fn target_achievement(lenient_pct: f64, moderate_pct: f64, stringent_pct: f64) -> String {
    let rates = [lenient_pct, moderate_pct, stringent_pct];
    let in_band: Vec<&str> = Strictness::ALL
        .iter()
        .zip(rates.iter())
        .filter(|(_, r)| target_band(**r) == Band::InBand)
        .map(|(s, _)| s.display_name())
        .collect();
    match in_band.len() {
        0 => {
            let eps = 1e-9;
            if (rates[0] - rates[1]).abs() < eps && (rates[1] - rates[2]).abs() < eps {
                "None (convergence)".to_string()
            } else if rates.iter().all(|r| target_band(*r) == Band::Below) {
                "None (low rejection)".to_string()
            } else {
                "None".to_string()
            }
        }
        1 => format!("{} only", in_band[0]),
        _ => in_band.join(" + "),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignatureFlag {
    /// Recall >= 0.999 with precision < 0.5: the record set asserts values
    /// everywhere the reference does, which with low precision indicates
    /// blanket value generation rather than extraction quality.
    PerfectRecall,
    /// At least 95% of cells carry a predicted value.
    OverExtraction,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SignatureFlags {
    pub overall: Vec<SignatureFlag>,
    pub per_category: BTreeMap<String, Vec<SignatureFlag>>,
}

impl SignatureFlags {
    pub fn is_empty(&self) -> bool {
        self.overall.is_empty() && self.per_category.values().all(|v| v.is_empty())
    }
}

fn flags_for(counts: &ConfusionCounts, metrics: &MetricBlock) -> Vec<SignatureFlag> {
    let mut flags = Vec::new();
    if let (Some(r), Some(p)) = (metrics.recall, metrics.precision) {
        if r >= 0.999 && p < 0.5 {
            flags.push(SignatureFlag::PerfectRecall);
        }
    }
    let total = counts.total();
    if total > 0 && counts.predicted_present() as f64 / total as f64 >= 0.95 {
        flags.push(SignatureFlag::OverExtraction);
    }
    flags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub strictness: Strictness,
    pub candidates: u64,
    pub rejected: u64,
    pub parse_failures: u64,
    pub rate: Option<f64>,
    pub band: Option<Band>,
}

/// Scores for one (model, method) pair against a reference standard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub method: MethodId,
    pub scored_chunks: u64,
    pub per_field: BTreeMap<String, FieldEval>,
    pub per_category: BTreeMap<String, CategoryEval>,
    pub overall_counts: ConfusionCounts,
    pub overall: MetricBlock,
    pub rejection: Option<RejectionStats>,
    pub flags: SignatureFlags,
}

/// Per-field diagnostic flags derived from an existing report.
pub fn hallucination_signature(report: &EvalReport) -> SignatureFlags {
    let mut flags = SignatureFlags {
        overall: flags_for(&report.overall_counts, &report.overall),
        per_category: BTreeMap::new(),
    };
    let schema_categories: Vec<&str> = FieldCategory::ALL.iter().map(|c| c.short_name()).collect();
    for category in schema_categories {
        let mut counts = ConfusionCounts::default();
        for (name, fe) in &report.per_field {
            if field_category(name, report).as_deref() == Some(category) {
                counts.add(&fe.counts);
            }
        }
        let metrics = aggregate(&counts);
        flags.per_category.insert(category.to_string(), flags_for(&counts, &metrics));
    }
    flags
}

// Category lookup via the built-in schema naming; reports built from custom
// schemas carry their own category map in per_category.
fn field_category(field_name: &str, _report: &EvalReport) -> Option<String> {
    crate::schema::builtin_schema()
        .field(field_name)
        .map(|f| f.category.short_name().to_string())
}

/// Score a record set against reference annotations. `reference` maps
/// chunk_id -> field -> optional value; chunks missing from the reference are
/// skipped. Counts are per field, summed over scored chunks.
pub fn score_records(
    model: &str,
    method: MethodId,
    records: &[crate::parse::ExtractionRecord],
    reference: &BTreeMap<String, BTreeMap<String, Option<String>>>,
    outcomes: &[ValidationOutcome],
    schema: &Schema,
) -> EvalReport {
    let mut per_field: BTreeMap<String, FieldEval> = schema
        .field_names()
        .map(|n| (n.to_string(), FieldEval { counts: ConfusionCounts::default(), metrics: MetricBlock::default() }))
        .collect();
    let mut scored_chunks = 0;

    for record in records {
        let Some(annotation) = reference.get(&record.chunk_id) else { continue };
        scored_chunks += 1;
        for field in &schema.fields {
            let predicted = record.values.get(&field.name).and_then(|v| v.as_deref());
            let ref_value = annotation.get(&field.name).and_then(|v| v.as_deref());
            let cell = score_cell(field, predicted, ref_value);
            per_field.get_mut(&field.name).expect("schema field").counts.record(cell);
        }
    }

    let mut overall_counts = ConfusionCounts::default();
    for fe in per_field.values_mut() {
        fe.metrics = aggregate(&fe.counts);
        overall_counts.add(&fe.counts);
    }
    let overall = aggregate(&overall_counts);
    let per_category = category_rollup(&per_field, schema);

    let rejection = method.strictness().map(|strictness| {
        let rate = rejection_rate(outcomes);
        RejectionStats {
            strictness,
            candidates: outcomes.iter().map(|o| o.candidate_count as u64).sum(),
            rejected: outcomes.iter().map(|o| o.rejected_count as u64).sum(),
            parse_failures: outcomes.iter().map(|o| o.parse_failures as u64).sum(),
            rate,
            band: rate.map(|r| target_band(r * 100.0)),
        }
    });

    let mut report = EvalReport {
        model: model.to_string(),
        method,
        scored_chunks,
        per_field,
        per_category,
        overall_counts,
        overall,
        rejection,
        flags: SignatureFlags::default(),
    };
    report.flags = hallucination_signature(&report);
    report
}
