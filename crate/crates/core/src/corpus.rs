//! Document ingestion: rule-based sentence splitting, overlapping child
//! chunks over sentence windows, and parent preservation.
//!
//! Every ingested document is kept whole as a parent. Retrieval happens over
//! child chunks, each of which links back to its parent by `parent_id`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("document {doc_id:?} has no sentences to chunk")]
    Unchunkable { doc_id: String },
    #[error("duplicate document id {0:?}")]
    DuplicateId(String),
    #[error("invalid chunking parameters: window {window}, stride {stride} (need window >= 1 and 1 <= stride <= window)")]
    InvalidChunking { window: usize, stride: usize },
    #[error("no documents in input")]
    EmptyInput,
    #[error("cannot read corpus {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// A malformed input record. Skipped and counted, never fatal.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("record at line {line}: {reason}")]
pub struct RecordError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    pub text: String,
}

impl Document {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: None,
            text: text.into(),
        }
    }

    pub fn with_title(mut self, title: impl Into<String>) -> Self {
        self.title = Some(title.into());
        self
    }
}

/// A sentence inside a document's text. `start`/`end` are UTF-8 byte offsets
/// on character boundaries, `end` exclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

impl SentenceSpan {
    pub fn slice<'a>(&self, text: &'a str) -> &'a str {
        &text[self.start..self.end]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChildChunk {
    pub chunk_id: String,
    pub parent_id: String,
    /// First and last sentence ordinals, both inclusive.
    pub sentence_range: (usize, usize),
    pub text: String,
}

impl ChildChunk {
    pub fn sentence_count(&self) -> usize {
        self.sentence_range.1 - self.sentence_range.0 + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChunkingConfig {
    pub window: usize,
    pub stride: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            window: 3,
            stride: 2,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.window == 0 || self.stride == 0 || self.stride > self.window {
            return Err(CorpusError::InvalidChunking {
                window: self.window,
                stride: self.stride,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub chunks: usize,
    pub skipped: usize,
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn opens_sentence(c: char) -> bool {
    c.is_uppercase() || c.is_ascii_digit() || matches!(c, '"' | '\'' | '\u{201C}' | '\u{2018}' | '\u{00AB}')
}

/// Splits `text` into sentences.
///
/// A sentence ends at `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter, a digit or an opening quote, or at end of text. There is
/// no abbreviation list, so "Dr. Smith" splits after "Dr.".
pub fn split_sentences(text: &str) -> Result<Vec<SentenceSpan>, CorpusError> {
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut chars = text.char_indices().peekable();

    while let Some((pos, c)) = chars.next() {
        if c.is_whitespace() {
            continue;
        }
        let sentence_start = *start.get_or_insert(pos);
        if !is_terminator(c) {
            continue;
        }
        let end = pos + c.len_utf8();
        let mut lookahead = text[end..].chars();
        let mut saw_space = false;
        let boundary = loop {
            match lookahead.next() {
                Some(next) if next.is_whitespace() => saw_space = true,
                Some(next) => break saw_space && opens_sentence(next),
                None => break false,
            }
        };
        if boundary {
            spans.push(SentenceSpan {
                index: spans.len(),
                start: sentence_start,
                end,
            });
            start = None;
            // Skip the whitespace run so the next span starts on content.
            while chars.peek().is_some_and(|(_, ch)| ch.is_whitespace()) {
                chars.next();
            }
        }
    }

    if let Some(sentence_start) = start {
        let end = sentence_start + text[sentence_start..].trim_end().len();
        spans.push(SentenceSpan {
            index: spans.len(),
            start: sentence_start,
            end,
        });
    }

    if spans.is_empty() {
        return Err(CorpusError::Unchunkable {
            doc_id: String::new(),
        });
    }
    Ok(spans)
}

/// Sentence windows `[first, last]` (inclusive) for `n` sentences.
///
/// Windows start at `0, stride, 2*stride, ...`; a trailing window whose
/// sentences all lie inside the previously emitted window is dropped.
pub fn sentence_windows(
    n: usize,
    config: ChunkingConfig,
) -> Result<Vec<(usize, usize)>, CorpusError> {
    config.validate()?;
    let mut windows: Vec<(usize, usize)> = Vec::new();
    for start in (0..n).step_by(config.stride) {
        let end = (start + config.window).min(n);
        if windows.last().is_some_and(|&(_, prev_last)| end - 1 <= prev_last) {
            continue;
        }
        windows.push((start, end - 1));
    }
    Ok(windows)
}

pub fn chunk_document(doc: &Document, config: ChunkingConfig) -> Result<Vec<ChildChunk>, CorpusError> {
    config.validate()?;
    let spans = split_sentences(&doc.text).map_err(|_| CorpusError::Unchunkable {
        doc_id: doc.doc_id.clone(),
    })?;
    let windows = sentence_windows(spans.len(), config)?;
    Ok(windows
        .into_iter()
        .map(|(first, last)| ChildChunk {
            chunk_id: format!("{}#{}", doc.doc_id, first),
            parent_id: doc.doc_id.clone(),
            sentence_range: (first, last),
            text: doc.text[spans[first].start..spans[last].end].to_string(),
        })
        .collect())
}

/// Parent documents plus their child chunks, in input order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    parents: Vec<Document>,
    chunks: Vec<ChildChunk>,
    #[serde(skip)]
    parent_pos: HashMap<String, usize>,
    #[serde(skip)]
    chunk_pos: HashMap<String, usize>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    /// Ingests a stream of records. Malformed records and documents without
    /// sentences are skipped and counted; a duplicate id aborts ingestion.
    pub fn ingest<I>(&mut self, records: I, config: ChunkingConfig) -> Result<CorpusStats, CorpusError>
    where
        I: IntoIterator<Item = Result<Document, RecordError>>,
    {
        config.validate()?;
        let mut stats = CorpusStats::default();
        let mut seen_any = false;
        for record in records {
            seen_any = true;
            let doc = match record {
                Ok(doc) => doc,
                Err(err) => {
                    warn!("skipping malformed record: {err}");
                    stats.skipped += 1;
                    continue;
                }
            };
            if doc.doc_id.is_empty() {
                warn!("skipping document with empty id");
                stats.skipped += 1;
                continue;
            }
            if self.parent_pos.contains_key(&doc.doc_id) {
                return Err(CorpusError::DuplicateId(doc.doc_id));
            }
            let chunks = match chunk_document(&doc, config) {
                Ok(chunks) => chunks,
                Err(CorpusError::Unchunkable { doc_id }) => {
                    warn!("skipping unchunkable document {doc_id:?}");
                    stats.skipped += 1;
                    continue;
                }
                Err(other) => return Err(other),
            };
            stats.docs += 1;
            stats.chunks += chunks.len();
            self.parent_pos.insert(doc.doc_id.clone(), self.parents.len());
            self.parents.push(doc);
            for chunk in chunks {
                self.chunk_pos.insert(chunk.chunk_id.clone(), self.chunks.len());
                self.chunks.push(chunk);
            }
        }
        if !seen_any {
            return Err(CorpusError::EmptyInput);
        }
        Ok(stats)
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>, config: ChunkingConfig) -> Result<Self, CorpusError> {
        let mut corpus = Self::new();
        corpus.ingest(docs.into_iter().map(Ok), config)?;
        Ok(corpus)
    }

    /// Rebuilds lookup tables after deserialization.
    pub(crate) fn reindex(&mut self) {
        self.parent_pos = self
            .parents
            .iter()
            .enumerate()
            .map(|(i, d)| (d.doc_id.clone(), i))
            .collect();
        self.chunk_pos = self
            .chunks
            .iter()
            .enumerate()
            .map(|(i, c)| (c.chunk_id.clone(), i))
            .collect();
    }

    pub fn parents(&self) -> &[Document] {
        &self.parents
    }

    pub fn chunks(&self) -> &[ChildChunk] {
        &self.chunks
    }

    pub fn parent(&self, doc_id: &str) -> Option<&Document> {
        self.parent_pos.get(doc_id).map(|&i| &self.parents[i])
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&ChildChunk> {
        self.chunk_pos.get(chunk_id).map(|&i| &self.chunks[i])
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            docs: self.parents.len(),
            chunks: self.chunks.len(),
            skipped: 0,
        }
    }
}

#[derive(Deserialize)]
struct RawRecord {
    document_id: String,
    text: String,
    #[serde(default)]
    title: Option<String>,
}

/// Parses one JSON-lines corpus record.
pub fn parse_record(line: &str, line_no: usize) -> Result<Document, RecordError> {
    let raw: RawRecord = serde_json::from_str(line).map_err(|e| RecordError {
        line: line_no,
        reason: e.to_string(),
    })?;
    Ok(Document {
        doc_id: raw.document_id,
        title: raw.title,
        text: raw.text,
    })
}

/// Reads a JSON-lines corpus. Blank lines are ignored; each remaining line is
/// parsed independently so one bad record does not sink the file.
pub fn read_corpus_file(path: &Path) -> Result<Vec<Result<Document, RecordError>>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record(&line, i + 1));
    }
    Ok(records)
}
