//! hydrofield: a batch harness for structured field extraction from
//! hydropower licensing documents via pluggable model endpoints.
//!
//! The pipeline: plain-text documents are split into overlapping word
//! chunks; each chunk runs through one of seven extraction methods (direct,
//! presence-gated, per-category, guided-reasoning, and three post-hoc
//! validation variants); outputs are parsed into schema-total records;
//! a conservative judge model produces the reference annotations; and the
//! evaluation stage scores records with semantic value matching into
//! field/category/overall precision-recall-F1 tables, rejection-rate
//! analytics, and over-extraction diagnostics.
//!
//! Modules map one-to-one onto the stages:
//! - [`corpus`] — document loading and word-window chunking
//! - [`schema`] — the extraction field set (17 built-in fields, six groups)
//! - [`prompt`] — prompt construction for every method and the judge
//! - [`gateway`] — HTTP/scripted backends, response cache, retries
//! - [`parse`] — JSON recovery and typed record/verdict parsing
//! - [`pipeline`] — per-chunk method orchestration
//! - [`bronze`] — reference-standard generation and coverage reporting
//! - [`baseline`] — rule-pattern extraction without a model
//! - [`eval`] — semantic matching, confusion counts, metric rollups
//! - [`report`] — result tables, JSON and CSV exports
//! - [`config`] / [`runner`] — experiment configuration and the CLI commands

pub mod baseline;
pub mod bronze;
pub mod config;
pub mod corpus;
pub mod eval;
pub mod gateway;
pub mod parse;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod runner;
pub mod schema;

pub use baseline::{default_patterns, extract_baseline, PatternSet, BASELINE_MODEL_NAME};
pub use bronze::{bronze_coverage_report, generate_bronze, BronzeStandard};
pub use config::ExperimentConfig;
pub use corpus::{chunk_document, load_corpus, tokenize_words, ChunkingConfig, DocumentChunk};
pub use eval::{
    aggregate, category_rollup, hallucination_signature, normalize_value, rejection_rate,
    score_cell, semantic_match, target_achievement, target_band, EvalReport, MetricBlock,
};
pub use gateway::{cache_key, GenerationRequest, ModelClient, ScriptedBackend};
pub use parse::{parse_extraction, parse_presence, parse_verdict, recover_json, ExtractionRecord};
pub use pipeline::{run_method, MethodId, ValidationOutcome};
pub use prompt::{Conservatism, PromptBundle, Strictness, PROMPT_VERSION};
pub use schema::{builtin_schema, FieldCategory, FieldSpec, Schema};
