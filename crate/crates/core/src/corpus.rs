//! Corpus ingestion: plain-text documents segmented into fixed-size
//! overlapping word windows. Chunks are the unit of all downstream work.
//!
//! A "word" is a maximal run of non-whitespace characters. Chunk text is the
//! token slice re-joined with single spaces, so it is a pure function of the
//! token sequence and independent of the source file's whitespace.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORPUS_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size_words: usize,
    pub overlap_words: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        ChunkingConfig { chunk_size_words: 1000, overlap_words: 200 }
    }
}

impl ChunkingConfig {
    pub fn stride(&self) -> usize {
        self.chunk_size_words - self.overlap_words
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.chunk_size_words == 0 || self.chunk_size_words <= self.overlap_words {
            return Err(CorpusError::InvalidChunking {
                chunk_size_words: self.chunk_size_words,
                overlap_words: self.overlap_words,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(
        "chunk_size_words ({chunk_size_words}) must be positive and greater than \
         overlap_words ({overlap_words})"
    )]
    InvalidChunking { chunk_size_words: usize, overlap_words: usize },
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not valid UTF-8 text")]
    NotUtf8 { path: String },
    #[error("duplicate document id {0} (two input files share a stem)")]
    DuplicateDocId(String),
    #[error("corpus manifest is not valid JSON: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("unsupported corpus manifest format_version {0}")]
    FormatVersion(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceDocument {
    pub doc_id: String,
    pub text: String,
    pub word_count: usize,
}

impl SourceDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        let word_count = tokenize_words(&text).len();
        SourceDocument { doc_id: doc_id.into(), text, word_count }
    }
}

/// One overlapping word-window of a source document. `end_word` is exclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub index: usize,
    pub start_word: usize,
    pub end_word: usize,
    pub text: String,
}

pub fn chunk_id(doc_id: &str, index: usize) -> String {
    format!("{doc_id}#{index:04}")
}

/// Split on runs of Unicode whitespace. Never yields empty tokens.
pub fn tokenize_words(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

/// Word-window boundaries for a document of `word_count` words: windows start
/// at multiples of the stride and are capped at the document end. A document
/// no longer than the window yields exactly one chunk covering all of it.
pub fn chunk_spans(
    word_count: usize,
    config: &ChunkingConfig,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    config.validate()?;
    if word_count == 0 {
        return Ok(Vec::new());
    }
    if word_count <= config.chunk_size_words {
        return Ok(vec![(0, word_count)]);
    }
    let stride = config.stride();
    let mut spans = Vec::new();
    let mut start = 0;
    while start < word_count {
        spans.push((start, (start + config.chunk_size_words).min(word_count)));
        start += stride;
    }
    Ok(spans)
}

pub fn chunk_document(
    doc: &SourceDocument,
    config: &ChunkingConfig,
) -> Result<Vec<DocumentChunk>, CorpusError> {
    let words = tokenize_words(&doc.text);
    let spans = chunk_spans(words.len(), config)?;
    Ok(spans
        .into_iter()
        .enumerate()
        .map(|(index, (start_word, end_word))| DocumentChunk {
            chunk_id: chunk_id(&doc.doc_id, index),
            doc_id: doc.doc_id.clone(),
            index,
            start_word,
            end_word,
            text: words[start_word..end_word].join(" "),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<SourceDocument>,
    pub chunks: Vec<DocumentChunk>,
    pub warnings: Vec<String>,
}

/// Load one document per path (doc_id = file stem), chunk them, and assemble
/// a corpus. Paths are processed in sorted order so output is deterministic
/// regardless of how the path list was produced.
pub fn load_corpus(paths: &[PathBuf], config: &ChunkingConfig) -> Result<Corpus, CorpusError> {
    config.validate()?;
    let mut sorted: Vec<&PathBuf> = paths.iter().collect();
    sorted.sort();

    let mut documents = Vec::new();
    let mut chunks = Vec::new();
    let mut warnings = Vec::new();
    let mut seen_ids = std::collections::HashSet::new();

    for path in sorted {
        let bytes = std::fs::read(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CorpusError::NotUtf8 { path: path.display().to_string() })?;
        let doc_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        if !seen_ids.insert(doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId(doc_id));
        }
        let doc = SourceDocument::new(doc_id, text);
        if doc.word_count == 0 {
            warnings.push(format!("document {} is empty (0 words, 0 chunks)", doc.doc_id));
        }
        chunks.extend(chunk_document(&doc, config)?);
        documents.push(doc);
    }
    Ok(Corpus { documents, chunks, warnings })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub word_count: usize,
}

/// On-disk corpus manifest. Documents are listed by id and size; chunk texts
/// carry everything downstream stages need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub format_version: u32,
    pub chunk_size_words: usize,
    pub overlap_words: usize,
    pub documents: Vec<DocumentSummary>,
    pub chunks: Vec<DocumentChunk>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn to_manifest(&self, config: &ChunkingConfig) -> CorpusManifest {
        CorpusManifest {
            format_version: CORPUS_FORMAT_VERSION,
            chunk_size_words: config.chunk_size_words,
            overlap_words: config.overlap_words,
            documents: self
                .documents
                .iter()
                .map(|d| DocumentSummary { doc_id: d.doc_id.clone(), word_count: d.word_count })
                .collect(),
            chunks: self.chunks.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

impl CorpusManifest {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn from_json(json: &str) -> Result<CorpusManifest, CorpusError> {
        let manifest: CorpusManifest = serde_json::from_str(json)?;
        if manifest.format_version != CORPUS_FORMAT_VERSION {
            return Err(CorpusError::FormatVersion(manifest.format_version));
        }
        Ok(manifest)
    }

    pub fn load(path: &Path) -> Result<CorpusManifest, CorpusError> {
        let json = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        CorpusManifest::from_json(&json)
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&DocumentChunk> {
        self.chunks.iter().find(|c| c.chunk_id == chunk_id)
    }
}
