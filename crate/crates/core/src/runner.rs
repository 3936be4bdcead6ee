//! Command implementations behind the CLI: corpus chunking, reference
//! generation, the (model x method) experiment matrix, evaluation, and
//! prompt dumps. All output files are written atomically and in canonical
//! order, so runs are byte-reproducible and resumable.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use thiserror::Error;

use crate::baseline::{default_patterns, extract_baseline, load_pattern_manifest, PatternSet};
use crate::bronze::{bronze_coverage_report, generate_bronze, BronzeStandard, CoverageReport};
use crate::config::{
    build_client, BackendConfig, ConfigError, ExperimentConfig, PairEntry, PairStatus,
    RunManifest, MANIFEST_FORMAT_VERSION,
};
use crate::corpus::{load_corpus, CorpusError, CorpusManifest, DocumentChunk};
use crate::eval::score_records;
use crate::gateway::ModelClient;
use crate::parse::ExtractionRecord;
use crate::pipeline::{run_method, MethodId, PipelineError, ResultFile, ValidationOutcome};
use crate::prompt::{
    bronze_judge_prompt, categorical_prompts, chain_of_thought_prompt, single_step_prompt,
    two_step_extract_prompt, two_step_presence_prompt, validation_prompt, PromptKind, Strictness,
};
use crate::report::{render_csv, render_tables, EvalBundle};
use crate::schema::Schema;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("I/O error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("{failed} of {total} matrix pairs failed")]
    PartialFailure { failed: usize, total: usize },
}

impl HarnessError {
    /// CLI exit code: 2 for configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            HarnessError::Config(_) | HarnessError::Invalid(_) => 2,
            _ => 1,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io { path: path.display().to_string(), source }
}

fn write_atomic(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn now_unix() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn sanitize_name(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect()
}

pub fn corpus_manifest_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("corpus.json")
}

pub fn bronze_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("bronze.json")
}

pub fn result_path(config: &ExperimentConfig, model: &str, method: MethodId) -> PathBuf {
    config.out_dir.join(format!("results_{}_{}.json", sanitize_name(model), method.as_str()))
}

pub fn manifest_path(config: &ExperimentConfig) -> PathBuf {
    config.out_dir.join("run_manifest.json")
}

/// Load documents, chunk them, and write `corpus.json`. Returns the manifest
/// with per-document chunk counts available for display.
pub fn cmd_chunk(config: &ExperimentConfig) -> Result<CorpusManifest, HarnessError> {
    let paths = config.resolve_corpus_paths()?;
    let corpus = load_corpus(&paths, &config.chunking)?;
    let manifest = corpus.to_manifest(&config.chunking);
    write_atomic(&corpus_manifest_path(config), &manifest.to_json())?;
    Ok(manifest)
}

fn load_corpus_manifest(config: &ExperimentConfig) -> Result<CorpusManifest, HarnessError> {
    let path = corpus_manifest_path(config);
    if !path.exists() {
        return Err(HarnessError::Invalid(format!(
            "{} not found; run the chunk command first",
            path.display()
        )));
    }
    Ok(CorpusManifest::load(&path)?)
}

/// Generate the reference standard over every corpus chunk and write
/// `bronze.json`.
pub fn cmd_bronze(
    config: &ExperimentConfig,
) -> Result<(BronzeStandard, CoverageReport), HarnessError> {
    let schema = config.load_schema()?;
    let manifest = load_corpus_manifest(config)?;
    let judge_config = config
        .judge
        .as_ref()
        .ok_or_else(|| HarnessError::Invalid("config has no judge backend".into()))?;
    let judge = build_client(
        &judge_config.name,
        &judge_config.backend,
        &schema,
        config.cache_dir.as_deref(),
    )?;
    let standard = generate_bronze(
        &manifest.chunks,
        &schema,
        &judge,
        judge_config.conservatism,
        config.max_tokens_validation,
        &config.pipeline_options().parse,
    )?;
    write_atomic(&bronze_path(config), &standard.to_json())?;
    let coverage = bronze_coverage_report(&standard, &schema);
    Ok((standard, coverage))
}

/// Index-ordered parallel map with a bounded worker count.
fn par_map<T: Sync, R: Send>(
    items: &[T],
    workers: usize,
    f: impl Fn(&T) -> R + Sync,
) -> Vec<R> {
    let workers = workers.max(1).min(items.len().max(1));
    if workers <= 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> =
        items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let out = f(&items[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots.into_iter().map(|s| s.into_inner().unwrap().expect("worker filled slot")).collect()
}

type PairOutput = (Vec<ExtractionRecord>, Vec<ValidationOutcome>);

fn run_model_pair(
    client: &ModelClient,
    method: MethodId,
    chunks: &[DocumentChunk],
    schema: &Schema,
    config: &ExperimentConfig,
) -> Result<PairOutput, PipelineError> {
    let opts = config.pipeline_options();
    let results = par_map(chunks, config.concurrency, |chunk| {
        run_method(method, chunk, client, schema, &opts)
    });
    let mut records = Vec::with_capacity(chunks.len());
    let mut outcomes = Vec::new();
    for result in results {
        let (record, outcome) = result?;
        records.push(record);
        if let Some(outcome) = outcome {
            outcomes.push(outcome);
        }
    }
    Ok((records, outcomes))
}

fn run_baseline_pair(
    chunks: &[DocumentChunk],
    schema: &Schema,
    config: &ExperimentConfig,
) -> Result<PairOutput, HarnessError> {
    let patterns = match &config.baseline_patterns {
        Some(path) => {
            let json = std::fs::read_to_string(path).map_err(io_err(path))?;
            load_pattern_manifest(&json, schema)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?
        }
        None => default_patterns(schema),
    };
    let set = PatternSet::compile(&patterns, schema)
        .map_err(|e| HarnessError::Invalid(e.to_string()))?;
    let records = chunks.iter().map(|c| extract_baseline(c, schema, &set)).collect();
    Ok((records, Vec::new()))
}

fn result_file_is_complete(path: &Path, model: &str, method: MethodId) -> bool {
    let Ok(json) = std::fs::read_to_string(path) else { return false };
    match ResultFile::from_json(&json) {
        Ok(file) => file.model == model && file.method == method,
        Err(_) => false,
    }
}

pub struct MatrixOutcome {
    pub manifest: RunManifest,
    pub failed: usize,
    pub completed: usize,
    pub resumed: usize,
}

/// Run every (model, method) pair over the corpus, skipping pairs whose
/// result file already exists and parses (resume). Baseline entries run
/// under single-step only; their other method pairs are marked skipped.
/// `max_pairs` bounds how many incomplete pairs are attempted, which lets
/// tests simulate an interrupted run.
pub fn cmd_run_matrix(
    config: &ExperimentConfig,
    max_pairs: Option<usize>,
) -> Result<MatrixOutcome, HarnessError> {
    let schema = config.load_schema()?;
    let manifest = load_corpus_manifest(config)?;
    let chunks = &manifest.chunks;
    let started_unix = now_unix();

    let mut pairs = Vec::new();
    let mut failed = 0;
    let mut completed = 0;
    let mut resumed = 0;
    let mut attempted = 0;

    for model_entry in &config.models {
        let is_baseline = matches!(model_entry.backend, BackendConfig::Baseline {});
        let client = if is_baseline {
            None
        } else {
            Some(build_client(
                &model_entry.name,
                &model_entry.backend,
                &schema,
                config.cache_dir.as_deref(),
            )?)
        };
        for method in &config.methods {
            let method = *method;
            let path = result_path(config, &model_entry.name, method);
            let rel_path = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string());

            if is_baseline && method != MethodId::SingleStep {
                pairs.push(PairEntry {
                    model: model_entry.name.clone(),
                    method,
                    path: rel_path,
                    status: PairStatus::Skipped,
                    detail: Some("baseline runs single_step only".into()),
                });
                continue;
            }
            if result_file_is_complete(&path, &model_entry.name, method) {
                resumed += 1;
                completed += 1;
                pairs.push(PairEntry {
                    model: model_entry.name.clone(),
                    method,
                    path: rel_path,
                    status: PairStatus::Completed,
                    detail: Some("existing result file kept".into()),
                });
                continue;
            }
            if let Some(limit) = max_pairs {
                if attempted >= limit {
                    pairs.push(PairEntry {
                        model: model_entry.name.clone(),
                        method,
                        path: rel_path,
                        status: PairStatus::Skipped,
                        detail: Some("pair limit reached".into()),
                    });
                    continue;
                }
            }
            attempted += 1;

            let outcome = if is_baseline {
                run_baseline_pair(chunks, &schema, config)
            } else {
                run_model_pair(client.as_ref().expect("client built"), method, chunks, &schema, config)
                    .map_err(HarnessError::from)
            };
            match outcome {
                Ok((records, outcomes)) => {
                    let mut file = ResultFile::new(&model_entry.name, method);
                    file.records = records;
                    file.outcomes = outcomes;
                    sort_result_file(&mut file, chunks);
                    write_atomic(&path, &file.to_json())?;
                    completed += 1;
                    pairs.push(PairEntry {
                        model: model_entry.name.clone(),
                        method,
                        path: rel_path,
                        status: PairStatus::Completed,
                        detail: None,
                    });
                }
                Err(err) => {
                    failed += 1;
                    pairs.push(PairEntry {
                        model: model_entry.name.clone(),
                        method,
                        path: rel_path,
                        status: PairStatus::Failed,
                        detail: Some(err.to_string()),
                    });
                }
            }
        }
    }

    let manifest = RunManifest {
        format_version: MANIFEST_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: config.snapshot_hash(),
        started_unix,
        finished_unix: now_unix(),
        pairs,
    };
    write_atomic(&manifest_path(config), &manifest.to_json())?;
    Ok(MatrixOutcome { manifest, failed, completed, resumed })
}

/// Chunk-index lookup so persisted orderings follow (doc_id, chunk index)
/// rather than whatever order parallel workers finished in.
fn sort_result_file(file: &mut ResultFile, chunks: &[DocumentChunk]) {
    let order: BTreeMap<&str, usize> =
        chunks.iter().enumerate().map(|(i, c)| (c.chunk_id.as_str(), i)).collect();
    let key = |chunk_id: &str| order.get(chunk_id).copied().unwrap_or(usize::MAX);
    file.records.sort_by_key(|r| key(&r.chunk_id));
    file.outcomes.sort_by_key(|o| key(&o.chunk_id));
}

pub struct Evaluation {
    pub bundle: EvalBundle,
    pub tables: String,
    pub csv: String,
    pub warnings: Vec<String>,
}

/// Score every available result file against the reference standard and
/// write `eval_report.json`, `eval_report.csv`, and `tables.txt`.
pub fn cmd_evaluate(config: &ExperimentConfig) -> Result<Evaluation, HarnessError> {
    let schema = config.load_schema()?;
    let bronze_file = bronze_path(config);
    if !bronze_file.exists() {
        return Err(HarnessError::Invalid(format!(
            "{} not found; run the bronze command first",
            bronze_file.display()
        )));
    }
    let bronze_json = std::fs::read_to_string(&bronze_file).map_err(io_err(&bronze_file))?;
    let standard = BronzeStandard::from_json(&bronze_json, &schema)
        .map_err(|e| HarnessError::Invalid(format!("bronze.json: {e}")))?;
    let reference = standard.reference_view();

    let mut warnings = Vec::new();
    let mut reports = Vec::new();
    for model_entry in &config.models {
        for method in &config.methods {
            let method = *method;
            let path = result_path(config, &model_entry.name, method);
            if !path.exists() {
                warnings.push(format!(
                    "missing result file {} (cell rendered as undefined)",
                    path.display()
                ));
                continue;
            }
            let json = std::fs::read_to_string(&path).map_err(io_err(&path))?;
            let file = ResultFile::from_json(&json)
                .map_err(|e| HarnessError::Invalid(format!("{}: {e}", path.display())))?;
            reports.push(score_records(
                &file.model,
                file.method,
                &file.records,
                &reference,
                &file.outcomes,
                &schema,
            ));
        }
    }

    let model_order: Vec<String> = config.models.iter().map(|m| m.name.clone()).collect();
    let tables = render_tables(&reports, &model_order);
    let csv = render_csv(&reports, &schema);
    let bundle = EvalBundle::new(reports);
    write_atomic(&config.out_dir.join("eval_report.json"), &bundle.to_json())?;
    write_atomic(&config.out_dir.join("eval_report.csv"), &csv)?;
    write_atomic(&config.out_dir.join("tables.txt"), &tables)?;
    Ok(Evaluation { bundle, tables, csv, warnings })
}

/// Render the exact prompt bundle(s) a method would issue for one chunk.
/// Validation kinds need a field and use `value` as the candidate;
/// bronze_judge needs a field.
pub fn cmd_dump_prompt(
    config: &ExperimentConfig,
    kind_tag: &str,
    chunk_id: &str,
    field: Option<&str>,
    value: Option<&str>,
) -> Result<String, HarnessError> {
    let schema = config.load_schema()?;
    let manifest = load_corpus_manifest(config)?;
    let chunk = manifest
        .chunk(chunk_id)
        .ok_or_else(|| HarnessError::Invalid(format!("unknown chunk id {chunk_id}")))?;
    let kind = PromptKind::from_tag(kind_tag)
        .ok_or_else(|| HarnessError::Invalid(format!("unknown prompt kind {kind_tag}")))?;
    let lookup_field = |name: Option<&str>| {
        let name = name.ok_or_else(|| {
            HarnessError::Invalid(format!("prompt kind {kind_tag} requires --field"))
        })?;
        schema
            .field(name)
            .ok_or_else(|| HarnessError::Invalid(format!("unknown field {name}")))
    };
    let rendered = match kind {
        PromptKind::SingleStep => single_step_prompt(chunk, &schema).render(),
        PromptKind::TwoStepPresence => two_step_presence_prompt(chunk, &schema).render(),
        PromptKind::TwoStepExtract => {
            let selected: Vec<&str> = match field {
                Some(f) => vec![lookup_field(Some(f))?.name.as_str()],
                None => schema.field_names().collect(),
            };
            two_step_extract_prompt(chunk, &schema, &selected)
                .map_err(|e| HarnessError::Invalid(e.to_string()))?
                .render()
        }
        PromptKind::Categorical => categorical_prompts(chunk, &schema)
            .iter()
            .map(|b| b.render())
            .collect::<Vec<_>>()
            .join("\n"),
        PromptKind::ChainOfThought => chain_of_thought_prompt(chunk, &schema).render(),
        PromptKind::ValidateLenient | PromptKind::ValidateModerate | PromptKind::ValidateStringent => {
            let strictness = match kind {
                PromptKind::ValidateLenient => Strictness::Lenient,
                PromptKind::ValidateModerate => Strictness::Moderate,
                _ => Strictness::Stringent,
            };
            validation_prompt(chunk, lookup_field(field)?, value.unwrap_or("<value>"), strictness)
                .render()
        }
        PromptKind::BronzeJudge => {
            let conservatism =
                config.judge.as_ref().map(|j| j.conservatism).unwrap_or_default();
            bronze_judge_prompt(chunk, lookup_field(field)?, conservatism).render()
        }
    };
    Ok(rendered)
}
