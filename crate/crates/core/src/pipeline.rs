//! Question → retrieve → read → aggregate → top answers, or the fallback
//! message.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::index::{Index, IndexParams};
use crate::reader::{self, AnswerSpan, ReaderError, ReaderParams, RemoteReader};
use crate::retriever::{self, RetrievedDocument, DEFAULT_TOP_K};
use crate::textproc::normalize_answer;

/// Shown instead of answers when none were found.
pub const FALLBACK_MESSAGE: &str = "We do not have an answer for your question";

pub const DEFAULT_ANSWERS: usize = 3;
pub const MAX_ANSWERS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("span refers to unknown document {0:?}")]
    UnknownDocument(String),
    #[error(transparent)]
    Reader(#[from] ReaderError),
    #[error("reader mode {0} needs a remote reader URL")]
    NoRemoteReader(ReaderMode),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReaderMode {
    #[default]
    Baseline,
    Remote,
    RemoteWithBaselineFallback,
}

impl ReaderMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReaderMode::Baseline => "baseline",
            ReaderMode::Remote => "remote",
            ReaderMode::RemoteWithBaselineFallback => "remote_with_baseline_fallback",
        }
    }
}

impl fmt::Display for ReaderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReaderMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "baseline" => Ok(ReaderMode::Baseline),
            "remote" => Ok(ReaderMode::Remote),
            "remote_with_baseline_fallback" | "fallback" => Ok(ReaderMode::RemoteWithBaselineFallback),
            other => Err(format!(
                "unknown reader mode {other:?} (expected baseline, remote or remote_with_baseline_fallback)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerResult {
    pub answer: String,
    pub score: f64,
    pub document_title: String,
    pub url: String,
    pub doc_id: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AskResponse {
    pub question: String,
    pub answers: Vec<AnswerResult>,
    pub message: String,
    pub elapsed_ms: f64,
    /// Set when the remote reader failed and the baseline answered instead.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

impl AskResponse {
    fn new(question: &str, answers: Vec<AnswerResult>, started: Instant, degraded: bool) -> Self {
        let message = if answers.is_empty() {
            FALLBACK_MESSAGE.to_string()
        } else {
            String::new()
        };
        Self {
            question: question.to_string(),
            answers,
            message,
            elapsed_ms: started.elapsed().as_secs_f64() * 1e3,
            degraded,
        }
    }
}

/// Deduplicates spans by normalized text (best confidence wins; ties go to
/// the smaller doc_id, then the smaller offset), orders by score descending
/// then normalized text, and keeps the first `n`.
pub fn aggregate_answers<F>(spans: Vec<AnswerSpan>, doc_lookup: F, n: usize) -> Result<Vec<AnswerResult>, PipelineError>
where
    F: Fn(&str) -> Option<(String, String)>,
{
    let mut resolved = HashMap::new();
    for s in &spans {
        if !resolved.contains_key(&s.doc_id) {
            let meta = doc_lookup(&s.doc_id).ok_or_else(|| PipelineError::UnknownDocument(s.doc_id.clone()))?;
            resolved.insert(s.doc_id.clone(), meta);
        }
    }
    let mut keyed: Vec<(String, AnswerSpan)> = spans.into_iter().map(|s| (normalize_answer(&s.text), s)).collect();
    keyed.sort_by(|(_, a), (_, b)| {
        b.confidence
            .total_cmp(&a.confidence)
            .then_with(|| a.doc_id.cmp(&b.doc_id))
            .then(a.char_start.cmp(&b.char_start))
    });
    let mut seen = HashSet::new();
    keyed.retain(|(key, _)| seen.insert(key.clone()));
    keyed.sort_by(|(ka, a), (kb, b)| b.confidence.total_cmp(&a.confidence).then_with(|| ka.cmp(kb)));
    keyed.truncate(n);
    Ok(keyed
        .into_iter()
        .map(|(_, s)| {
            let (title, url) = resolved[&s.doc_id].clone();
            AnswerResult {
                answer: s.text,
                score: s.confidence,
                document_title: title,
                url,
                doc_id: s.doc_id,
                char_start: s.char_start,
                char_end: s.char_end,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AskOptions {
    pub k_docs: usize,
    pub n_answers: usize,
}

impl Default for AskOptions {
    fn default() -> Self {
        Self {
            k_docs: DEFAULT_TOP_K,
            n_answers: DEFAULT_ANSWERS,
        }
    }
}

impl AskOptions {
    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.k_docs == 0 {
            return Err(PipelineError::InvalidRequest("k_docs must be >= 1".into()));
        }
        if !(1..=MAX_ANSWERS).contains(&self.n_answers) {
            return Err(PipelineError::InvalidRequest(format!(
                "n_answers must be between 1 and {MAX_ANSWERS}"
            )));
        }
        Ok(())
    }
}

/// A loaded index plus reader configuration. Cheap to share behind an
/// `Arc`; every method takes `&self`.
#[derive(Debug, Clone)]
pub struct Engine {
    index: Arc<Index>,
    bm25: IndexParams,
    reader_params: ReaderParams,
    mode: ReaderMode,
    remote: Option<RemoteReader>,
}

/// Answer plus the documents the retriever handed to the reader.
#[derive(Debug, Clone)]
pub struct AskTrace {
    pub response: AskResponse,
    pub retrieved: Vec<RetrievedDocument>,
}

impl Engine {
    /// Baseline-reader engine with default BM25 and reader parameters.
    pub fn new(index: Arc<Index>) -> Self {
        Self {
            index,
            bm25: IndexParams::default(),
            reader_params: ReaderParams::default(),
            mode: ReaderMode::Baseline,
            remote: None,
        }
    }

    pub fn with_bm25(mut self, params: IndexParams) -> Self {
        self.bm25 = params;
        self
    }

    pub fn with_reader_params(mut self, params: ReaderParams) -> Self {
        self.reader_params = params;
        self
    }

    /// Switches the reader mode; remote modes need `remote`.
    pub fn with_mode(mut self, mode: ReaderMode, remote: Option<RemoteReader>) -> Result<Self, PipelineError> {
        if mode != ReaderMode::Baseline && remote.is_none() {
            return Err(PipelineError::NoRemoteReader(mode));
        }
        self.mode = mode;
        self.remote = remote;
        Ok(self)
    }

    pub fn index(&self) -> &Arc<Index> {
        &self.index
    }

    pub fn mode(&self) -> ReaderMode {
        self.mode
    }

    pub fn retrieve(&self, question: &str, k: usize) -> Vec<RetrievedDocument> {
        retriever::retrieve(&self.index, self.bm25, question, k)
    }

    fn read_all_baseline(&self, question: &str, docs: &[RetrievedDocument]) -> Vec<AnswerSpan> {
        docs.iter()
            .flat_map(|d| reader::read_baseline(question, &d.doc_id, &d.body, self.index.as_ref(), &self.reader_params))
            .collect()
    }

    fn finish(
        &self,
        question: &str,
        spans: Vec<AnswerSpan>,
        retrieved: Vec<RetrievedDocument>,
        opts: AskOptions,
        started: Instant,
        degraded: bool,
    ) -> Result<AskTrace, PipelineError> {
        let lookup = |id: &str| {
            retrieved
                .iter()
                .find(|d| d.doc_id == id)
                .map(|d| (d.title.clone(), d.url.clone()))
        };
        let answers = aggregate_answers(spans, lookup, opts.n_answers)?;
        Ok(AskTrace {
            response: AskResponse::new(question, answers, started, degraded),
            retrieved,
        })
    }

    /// Baseline-only path; ignores the configured mode.
    pub fn ask_baseline(&self, question: &str, opts: AskOptions) -> Result<AskTrace, PipelineError> {
        opts.validate()?;
        let started = Instant::now();
        let retrieved = self.retrieve(question, opts.k_docs);
        let spans = self.read_all_baseline(question, &retrieved);
        self.finish(question, spans, retrieved, opts, started, false)
    }

    pub async fn ask_traced(&self, question: &str, opts: AskOptions) -> Result<AskTrace, PipelineError> {
        opts.validate()?;
        let started = Instant::now();
        let retrieved = self.retrieve(question, opts.k_docs);
        if retrieved.is_empty() {
            return self.finish(question, Vec::new(), retrieved, opts, started, false);
        }
        let remote = match (self.mode, &self.remote) {
            (ReaderMode::Baseline, _) | (_, None) => None,
            (_, Some(r)) => Some(r),
        };
        let Some(remote) = remote else {
            let spans = self.read_all_baseline(question, &retrieved);
            return self.finish(question, spans, retrieved, opts, started, false);
        };
        match remote.read(question, &retrieved, opts.n_answers).await {
            Ok(spans) => self.finish(question, spans, retrieved, opts, started, false),
            Err(e) if self.mode == ReaderMode::RemoteWithBaselineFallback => {
                tracing::warn!("remote reader failed, answering with baseline: {e}");
                let spans = self.read_all_baseline(question, &retrieved);
                self.finish(question, spans, retrieved, opts, started, true)
            }
            Err(e) => Err(e.into()),
        }
    }

    pub async fn ask(&self, question: &str, opts: AskOptions) -> Result<AskResponse, PipelineError> {
        Ok(self.ask_traced(question, opts).await?.response)
    }
}
