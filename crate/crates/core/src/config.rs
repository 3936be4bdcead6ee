//! Experiment configuration: one JSON document fully determines a run.
//! Secrets never live in the file; HTTP backends name an environment
//! variable and the key is read at client-build time.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::ChunkingConfig;
use crate::gateway::{
    Backend, GatewayError, HttpBackend, ModelClient, RetryPolicy, ScriptDefault, ScriptKey,
    ScriptRule, ScriptedBackend,
};
use crate::pipeline::MethodId;
use crate::prompt::Conservatism;
use crate::schema::Schema;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Invalid(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScriptDefaultConfig {
    /// Unmatched requests fail the call.
    #[default]
    Error,
    /// Unmatched requests get the all-null JSON object for the schema.
    AllNull,
    /// Unmatched requests get a fixed response text.
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRuleConfig {
    /// Substring matched against the prompt tag or message text.
    #[serde(default)]
    pub pattern: Option<String>,
    /// Exact request fingerprint.
    #[serde(default)]
    pub fingerprint: Option<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http {
        base_url: String,
        /// Name of the environment variable holding the API key.
        #[serde(default)]
        api_key_env: Option<String>,
        #[serde(default = "default_timeout_s")]
        timeout_s: u64,
        #[serde(default = "default_max_retries")]
        max_retries: u32,
        #[serde(default = "default_max_in_flight")]
        max_in_flight: usize,
    },
    Scripted {
        #[serde(default)]
        rules: Vec<ScriptRuleConfig>,
        #[serde(default)]
        default: ScriptDefaultConfig,
    },
    /// The rule-pattern baseline; runs without a gateway, single-step only.
    Baseline {},
}

fn default_timeout_s() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_max_in_flight() -> usize {
    4
}
fn default_concurrency() -> usize {
    1
}
fn default_max_tokens_extraction() -> u32 {
    2048
}
fn default_max_tokens_validation() -> u32 {
    512
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelEntry {
    pub name: String,
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeConfig {
    pub name: String,
    pub backend: BackendConfig,
    #[serde(default)]
    pub conservatism: Conservatism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    /// Directory scanned for `*.txt` documents, and/or explicit paths.
    #[serde(default)]
    pub corpus_dir: Option<PathBuf>,
    #[serde(default)]
    pub corpus_paths: Vec<PathBuf>,
    #[serde(default)]
    pub chunking: ChunkingConfig,
    pub models: Vec<ModelEntry>,
    pub methods: Vec<MethodId>,
    #[serde(default)]
    pub judge: Option<JudgeConfig>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_max_tokens_extraction")]
    pub max_tokens_extraction: u32,
    #[serde(default = "default_max_tokens_validation")]
    pub max_tokens_validation: u32,
    #[serde(default)]
    pub strict_parse: bool,
    /// Optional schema manifest replacing the built-in field set.
    #[serde(default)]
    pub schema_manifest: Option<PathBuf>,
    /// Optional rule-pattern manifest for the baseline.
    #[serde(default)]
    pub baseline_patterns: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        let json = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: ExperimentConfig = serde_json::from_str(&json)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.models.is_empty() {
            return Err(ConfigError::Invalid("at least one model is required".into()));
        }
        if self.methods.is_empty() {
            return Err(ConfigError::Invalid("at least one method is required".into()));
        }
        let mut names = std::collections::HashSet::new();
        for m in &self.models {
            if !names.insert(m.name.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate model name {}", m.name)));
            }
        }
        if self.corpus_dir.is_none() && self.corpus_paths.is_empty() {
            return Err(ConfigError::Invalid(
                "corpus_dir or corpus_paths must name at least one document".into(),
            ));
        }
        Ok(())
    }

    /// Document paths: explicit paths plus every `*.txt` under corpus_dir.
    pub fn resolve_corpus_paths(&self) -> Result<Vec<PathBuf>, ConfigError> {
        let mut paths = self.corpus_paths.clone();
        if let Some(dir) = &self.corpus_dir {
            let entries = std::fs::read_dir(dir).map_err(|source| ConfigError::Io {
                path: dir.display().to_string(),
                source,
            })?;
            for entry in entries {
                let entry = entry.map_err(|source| ConfigError::Io {
                    path: dir.display().to_string(),
                    source,
                })?;
                let path = entry.path();
                if path.extension().is_some_and(|e| e == "txt") {
                    paths.push(path);
                }
            }
        }
        if paths.is_empty() {
            return Err(ConfigError::Invalid("no documents found".into()));
        }
        paths.sort();
        Ok(paths)
    }

    pub fn load_schema(&self) -> Result<Schema, ConfigError> {
        match &self.schema_manifest {
            Some(path) => {
                Schema::load_manifest(path).map_err(|e| ConfigError::Invalid(e.to_string()))
            }
            None => Ok(crate::schema::builtin_schema()),
        }
    }

    /// Digest over the canonical serialized config, recorded in the run
    /// manifest so a result tree is traceable to the exact configuration.
    pub fn snapshot_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn pipeline_options(&self) -> crate::pipeline::PipelineOptions {
        crate::pipeline::PipelineOptions {
            max_tokens_extraction: self.max_tokens_extraction,
            max_tokens_validation: self.max_tokens_validation,
            strict_parse: self.strict_parse,
            parse: crate::parse::ParseOptions::default(),
        }
    }
}

/// Build the backend described by a config entry. The schema is needed for
/// the scripted all-null default.
pub fn build_backend(
    config: &BackendConfig,
    schema: &Schema,
) -> Result<Box<dyn Backend>, ConfigError> {
    match config {
        BackendConfig::Http { base_url, api_key_env, timeout_s, .. } => {
            let backend =
                HttpBackend::new(base_url, api_key_env.as_deref(), Duration::from_secs(*timeout_s))?;
            Ok(Box::new(backend))
        }
        BackendConfig::Scripted { rules, default } => {
            let rules = rules
                .iter()
                .map(|r| {
                    let key = match (&r.fingerprint, &r.pattern) {
                        (Some(fp), _) => ScriptKey::Fingerprint(fp.clone()),
                        (None, Some(p)) => ScriptKey::Pattern(p.clone()),
                        (None, None) => {
                            return Err(ConfigError::Invalid(
                                "scripted rule needs a pattern or a fingerprint".into(),
                            ))
                        }
                    };
                    Ok(ScriptRule { key, response: r.response.clone() })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let default = match default {
                ScriptDefaultConfig::Error => ScriptDefault::Error,
                ScriptDefaultConfig::AllNull => {
                    ScriptDefault::Fixed(ScriptedBackend::all_null_json(schema))
                }
                ScriptDefaultConfig::Fixed(text) => ScriptDefault::Fixed(text.clone()),
            };
            Ok(Box::new(ScriptedBackend::new(rules, default)))
        }
        BackendConfig::Baseline {} => Err(ConfigError::Invalid(
            "the baseline backend has no gateway; it is handled by the runner".into(),
        )),
    }
}

/// Build a gateway client for a model entry (not valid for baseline entries).
pub fn build_client(
    name: &str,
    backend_config: &BackendConfig,
    schema: &Schema,
    cache_dir: Option<&Path>,
) -> Result<ModelClient, ConfigError> {
    let backend = build_backend(backend_config, schema)?;
    let (retry, max_in_flight) = match backend_config {
        BackendConfig::Http { max_retries, max_in_flight, .. } => (
            RetryPolicy { max_retries: *max_retries, ..RetryPolicy::default() },
            *max_in_flight,
        ),
        _ => (RetryPolicy::default(), default_max_in_flight()),
    };
    Ok(ModelClient::new(
        name,
        backend,
        cache_dir.map(Path::to_path_buf),
        retry,
        max_in_flight,
    )?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Completed,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairEntry {
    pub model: String,
    pub method: MethodId,
    pub path: String,
    pub status: PairStatus,
    #[serde(default)]
    pub detail: Option<String>,
}

/// Run metadata written next to the result files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub pairs: Vec<PairEntry>,
}

impl RunManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<RunManifest, serde_json::Error> {
        serde_json::from_str(json)
    }

    /// Copy with wall-clock fields cleared, for semantic comparisons.
    pub fn without_timestamps(&self) -> RunManifest {
        RunManifest { started_unix: 0, finished_unix: 0, ..self.clone() }
    }
}
