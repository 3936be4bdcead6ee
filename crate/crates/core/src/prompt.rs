//! Prompt construction for the extraction strategies, the validation pass,
//! and the reference judge. Every builder is a pure function of its inputs;
//! golden-file tests pin the rendered text so template drift is caught.
//!
//! Document text is always fenced between explicit BEGIN/END markers so field
//! names occurring inside a document cannot alter the instructions.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::DocumentChunk;
use crate::schema::{FieldCategory, FieldSpec, Schema};

/// Bumped whenever any template text changes.
pub const PROMPT_VERSION: &str = "v1";

const DOC_BEGIN: &str = "<<<BEGIN DOCUMENT>>>";
const DOC_END: &str = "<<<END DOCUMENT>>>";

const SYSTEM_TEXT: &str = "You are a careful information extraction assistant for hydropower \
licensing and regulatory documents. Follow the output format instructions exactly.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Which template produced a bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    SingleStep,
    TwoStepPresence,
    TwoStepExtract,
    Categorical,
    ChainOfThought,
    ValidateLenient,
    ValidateModerate,
    ValidateStringent,
    BronzeJudge,
}

impl PromptKind {
    pub fn tag(&self) -> &'static str {
        match self {
            PromptKind::SingleStep => "single_step",
            PromptKind::TwoStepPresence => "two_step_presence",
            PromptKind::TwoStepExtract => "two_step_extract",
            PromptKind::Categorical => "categorical",
            PromptKind::ChainOfThought => "chain_of_thought",
            PromptKind::ValidateLenient => "validate_lenient",
            PromptKind::ValidateModerate => "validate_moderate",
            PromptKind::ValidateStringent => "validate_stringent",
            PromptKind::BronzeJudge => "bronze_judge",
        }
    }

    pub fn from_tag(tag: &str) -> Option<PromptKind> {
        Some(match tag {
            "single_step" => PromptKind::SingleStep,
            "two_step_presence" => PromptKind::TwoStepPresence,
            "two_step_extract" => PromptKind::TwoStepExtract,
            "categorical" => PromptKind::Categorical,
            "chain_of_thought" => PromptKind::ChainOfThought,
            "validate_lenient" => PromptKind::ValidateLenient,
            "validate_moderate" => PromptKind::ValidateModerate,
            "validate_stringent" => PromptKind::ValidateStringent,
            "bronze_judge" => PromptKind::BronzeJudge,
            _ => return None,
        })
    }
}

/// What shape of output the bundle asks the model to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedOutput {
    JsonAllFields,
    PresenceMap,
    JsonSubset,
    JsonCategory,
    Verdict,
    SingleField,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub kind: PromptKind,
    pub expected: ExpectedOutput,
    pub messages: Vec<Message>,
}

impl PromptBundle {
    /// Render with role headers, for audits and golden files.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for m in &self.messages {
            let role = match m.role {
                Role::System => "system",
                Role::User => "user",
            };
            out.push_str(&format!("--- {role} ---\n{}\n", m.content));
        }
        out
    }
}

/// Validation strictness for the reflective pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strictness {
    Lenient,
    Moderate,
    Stringent,
}

impl Strictness {
    pub const ALL: [Strictness; 3] = [Strictness::Lenient, Strictness::Moderate, Strictness::Stringent];

    pub fn as_str(&self) -> &'static str {
        match self {
            Strictness::Lenient => "lenient",
            Strictness::Moderate => "moderate",
            Strictness::Stringent => "stringent",
        }
    }

    /// Table label, e.g. `Lenient`.
    pub fn display_name(&self) -> &'static str {
        match self {
            Strictness::Lenient => "Lenient",
            Strictness::Moderate => "Moderate",
            Strictness::Stringent => "Stringent",
        }
    }
}

impl std::fmt::Display for Strictness {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How conservative the reference judge should be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Conservatism {
    #[default]
    Strict,
    Balanced,
}

impl Conservatism {
    pub fn as_str(&self) -> &'static str {
        match self {
            Conservatism::Strict => "strict",
            Conservatism::Balanced => "balanced",
        }
    }
}

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("two_step_extract requires a non-empty field selection")]
    EmptySelection,
}

fn fenced_document(chunk_text: &str) -> String {
    format!("{DOC_BEGIN}\n{chunk_text}\n{DOC_END}")
}

fn field_lines(fields: &[&FieldSpec]) -> String {
    fields
        .iter()
        .map(|f| format!("- {}: {}", f.name, f.description))
        .collect::<Vec<_>>()
        .join("\n")
}

fn json_output_instructions(fields: &[&FieldSpec]) -> String {
    let names = fields.iter().map(|f| format!("\"{}\"", f.name)).collect::<Vec<_>>().join(", ");
    format!(
        "Respond with a single JSON object whose keys are exactly: {names}.\n\
         Use a JSON string for each value that is stated in the document and null for any \
         field whose value is not stated.\n\
         Do not include any text outside the JSON object."
    )
}

fn bundle(kind: PromptKind, expected: ExpectedOutput, user: String) -> PromptBundle {
    PromptBundle {
        kind,
        expected,
        messages: vec![
            Message { role: Role::System, content: SYSTEM_TEXT.to_string() },
            Message { role: Role::User, content: user },
        ],
    }
}

/// All fields requested at once, JSON out, null for absent values.
pub fn single_step_prompt(chunk: &DocumentChunk, schema: &Schema) -> PromptBundle {
    let fields: Vec<&FieldSpec> = schema.fields.iter().collect();
    let user = format!(
        "Extract the following {count} fields from the document excerpt below.\n\n\
         Fields:\n{fields}\n\n\
         Document excerpt:\n{doc}\n\n\
         {out}",
        count = fields.len(),
        fields = field_lines(&fields),
        doc = fenced_document(&chunk.text),
        out = json_output_instructions(&fields),
    );
    bundle(PromptKind::SingleStep, ExpectedOutput::JsonAllFields, user)
}

/// Phase 1 of two-step extraction: one YES/NO/MAYBE verdict per field.
pub fn two_step_presence_prompt(chunk: &DocumentChunk, schema: &Schema) -> PromptBundle {
    let fields: Vec<&FieldSpec> = schema.fields.iter().collect();
    let user = format!(
        "For each of the {count} fields listed below, decide whether the document excerpt \
         contains a value for it.\n\
         Answer \"YES\" if the value is clearly present, \"NO\" if it is absent, or \"MAYBE\" \
         if you are uncertain.\n\n\
         Fields:\n{fields}\n\n\
         Document excerpt:\n{doc}\n\n\
         Respond with a single JSON object mapping each field name to exactly one of \"YES\", \
         \"NO\", or \"MAYBE\". Do not include any text outside the JSON object.",
        count = fields.len(),
        fields = field_lines(&fields),
        doc = fenced_document(&chunk.text),
    );
    bundle(PromptKind::TwoStepPresence, ExpectedOutput::PresenceMap, user)
}

/// Phase 2 of two-step extraction: values for the gated fields only.
/// Selection is re-ordered to schema order; duplicates are dropped.
pub fn two_step_extract_prompt(
    chunk: &DocumentChunk,
    schema: &Schema,
    selected: &[&str],
) -> Result<PromptBundle, PromptError> {
    let fields: Vec<&FieldSpec> =
        schema.fields.iter().filter(|f| selected.contains(&f.name.as_str())).collect();
    if fields.is_empty() {
        return Err(PromptError::EmptySelection);
    }
    let user = format!(
        "Extract the following {count} fields from the document excerpt below.\n\n\
         Fields:\n{fields}\n\n\
         Document excerpt:\n{doc}\n\n\
         {out}",
        count = fields.len(),
        fields = field_lines(&fields),
        doc = fenced_document(&chunk.text),
        out = json_output_instructions(&fields),
    );
    Ok(bundle(PromptKind::TwoStepExtract, ExpectedOutput::JsonSubset, user))
}

/// One bundle per category, in canonical category order.
pub fn categorical_prompts(chunk: &DocumentChunk, schema: &Schema) -> Vec<PromptBundle> {
    FieldCategory::ALL
        .iter()
        .map(|category| {
            let fields = schema.fields_in_category(*category);
            let user = format!(
                "Extract the fields of the \"{label}\" group from the document excerpt below.\n\n\
                 Category: {label}\n\
                 Fields:\n{fields}\n\n\
                 Document excerpt:\n{doc}\n\n\
                 {out}",
                label = category.label(),
                fields = field_lines(&fields),
                doc = fenced_document(&chunk.text),
                out = json_output_instructions(&fields),
            );
            bundle(PromptKind::Categorical, ExpectedOutput::JsonCategory, user)
        })
        .collect()
}

const COT_STEPS: [&str; 6] = [
    "Document overview and type identification.",
    "Basic project information search.",
    "Flow and water management analysis.",
    "Physical infrastructure identification.",
    "Power generation details extraction.",
    "Environmental considerations review.",
];

/// Six-step guided reasoning, then the same all-fields JSON as single-step.
/// The JSON object must come last in the response.
pub fn chain_of_thought_prompt(chunk: &DocumentChunk, schema: &Schema) -> PromptBundle {
    let fields: Vec<&FieldSpec> = schema.fields.iter().collect();
    let steps = COT_STEPS
        .iter()
        .enumerate()
        .map(|(i, s)| format!("{}. {s}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    let user = format!(
        "Analyze the document excerpt below by working through the following six reasoning \
         steps, in order, before extracting any fields:\n{steps}\n\n\
         Document excerpt:\n{doc}\n\n\
         Write out your reasoning for each step. After the reasoning, finish your response \
         with the extraction result for the following {count} fields.\n\n\
         Fields:\n{fields}\n\n\
         {out}\n\
         The JSON object must be the last thing in your response.",
        doc = fenced_document(&chunk.text),
        count = fields.len(),
        fields = field_lines(&fields),
        out = json_output_instructions(&fields),
    );
    bundle(PromptKind::ChainOfThought, ExpectedOutput::JsonAllFields, user)
}

fn strictness_criteria(strictness: Strictness) -> &'static str {
    match strictness {
        Strictness::Lenient => {
            "Lean toward accepting. Accept the value if it appears in the document or can be \
             reasonably inferred from it; when evidence exists but is not explicit, accept. \
             Reject only values that are clearly wrong or unsupported by the document."
        }
        Strictness::Moderate => {
            "Accept reasonable variations of what the document states, including standard \
             abbreviations and formatting differences, as long as the essential information \
             matches. Numeric values must match the document exactly. Reject clear errors."
        }
        Strictness::Stringent => {
            "Require word-for-word correspondence between the value and the document text. \
             Reject any value that relies on inference, paraphrase, rounding, format \
             transformation, or a change of unit abbreviation. Reject if the value is \
             accompanied by qualifying language or any expression of uncertainty."
        }
    }
}

/// Post-extraction validation of one candidate value at a strictness level.
/// The verdict token (ACCEPT or REJECT) must open the response.
pub fn validation_prompt(
    chunk: &DocumentChunk,
    field: &FieldSpec,
    extracted_value: &str,
    strictness: Strictness,
) -> PromptBundle {
    let kind = match strictness {
        Strictness::Lenient => PromptKind::ValidateLenient,
        Strictness::Moderate => PromptKind::ValidateModerate,
        Strictness::Stringent => PromptKind::ValidateStringent,
    };
    let user = format!(
        "A value was extracted from the document excerpt below for this field:\n\
         Field: {name}: {desc}\n\
         Extracted value: {value}\n\n\
         Document excerpt:\n{doc}\n\n\
         Criteria ({level}):\n{criteria}\n\n\
         Decide whether to keep the extracted value.\n\
         Respond with ACCEPT or REJECT on the first line, optionally followed by one line \
         explaining your decision.",
        name = field.name,
        desc = field.description,
        value = extracted_value,
        doc = fenced_document(&chunk.text),
        level = strictness.as_str(),
        criteria = strictness_criteria(strictness),
    );
    bundle(kind, ExpectedOutput::Verdict, user)
}

const BALANCED_CLAUSE: &str = "Evidence that is explicit but formatted differently from the \
field description (abbreviations, number formatting, unit spelling) still counts as explicit \
support.";

/// Reference-judge prompt: one field per call, conservative extraction, null
/// for absent or ambiguous values.
pub fn bronze_judge_prompt(
    chunk: &DocumentChunk,
    field: &FieldSpec,
    conservatism: Conservatism,
) -> PromptBundle {
    let extra = match conservatism {
        Conservatism::Strict => String::new(),
        Conservatism::Balanced => format!(" {BALANCED_CLAUSE}"),
    };
    let user = format!(
        "Identify the value of the single field described below in the document excerpt, if \
         and only if it is explicitly stated.\n\
         Field: {name}: {desc}\n\n\
         Document excerpt:\n{doc}\n\n\
         Only report a value that has explicit textual support. Do not infer, estimate, or \
         combine information. If the value is absent or ambiguous, use null.{extra}\n\
         Respond with a single JSON object with exactly one key, \"{name}\", whose value is \
         the extracted string or null. Do not include any text outside the JSON object.",
        name = field.name,
        desc = field.description,
        doc = fenced_document(&chunk.text),
    );
    bundle(PromptKind::BronzeJudge, ExpectedOutput::SingleField, user)
}
