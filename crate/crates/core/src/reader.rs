//! Answer span extraction.
//!
//! Two readers share the [`AnswerSpan`] contract: a deterministic lexical
//! baseline that scores every short token run by how much question weight
//! sits in the window around it, and an HTTP client for an external neural
//! reader.
//!
//! Baseline scoring of a span `s` with window `W(s)` (tokens within
//! `window_radius` of the span, inclusive):
//!
//! ```text
//! cov(s)  = Σ idf(t) for distinct question terms t in W(s)
//! ov(s)   = Σ idf(t) for distinct question terms t inside s
//! raw(s)  = (cov − λ·ov) / Σ idf(Q) − μ·(len − 1)
//! conf(s) = clamp(raw, 0, 1)
//! ```
//!
//! Spans that begin or end on a question stopword are not candidates.

use std::collections::HashSet;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::index::Index;
use crate::retriever::RetrievedDocument;
use crate::textproc::{self, char_slice, normalize_answer};

pub const DEFAULT_REMOTE_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerSpan {
    /// Verbatim slice of the document body.
    pub text: String,
    pub doc_id: String,
    /// Char offsets into the body, end exclusive.
    pub char_start: usize,
    pub char_end: usize,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderParams {
    pub max_span_tokens: usize,
    pub window_radius: usize,
    pub overlap_penalty: f64,
    pub length_penalty: f64,
    pub spans_per_doc: usize,
    /// Spans must score strictly above this.
    pub min_confidence: f64,
}

impl Default for ReaderParams {
    fn default() -> Self {
        Self {
            max_span_tokens: 8,
            window_radius: 30,
            overlap_penalty: 1.0,
            length_penalty: 0.01,
            spans_per_doc: 3,
            min_confidence: 0.0,
        }
    }
}

impl ReaderParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_span_tokens == 0 {
            return Err("max_span_tokens must be >= 1".into());
        }
        if self.spans_per_doc == 0 {
            return Err("spans_per_doc must be >= 1".into());
        }
        if !(self.overlap_penalty >= 0.0 && self.length_penalty >= 0.0) {
            return Err("penalties must be >= 0".into());
        }
        if !self.min_confidence.is_finite() {
            return Err("min_confidence must be finite".into());
        }
        Ok(())
    }
}

/// Per-term weight source for the baseline reader.
pub trait TermWeights {
    fn weight(&self, term: &str) -> f64;
}

impl TermWeights for Index {
    fn weight(&self, term: &str) -> f64 {
        self.idf(term)
    }
}

impl<T: TermWeights + ?Sized> TermWeights for &T {
    fn weight(&self, term: &str) -> f64 {
        (**self).weight(term)
    }
}

struct Candidate {
    confidence: f64,
    first: usize,
    last: usize,
}

/// Lexical baseline reader over one document.
pub fn read_baseline(
    question: &str,
    doc_id: &str,
    body: &str,
    weights: &impl TermWeights,
    params: &ReaderParams,
) -> Vec<AnswerSpan> {
    let query = textproc::content_terms(question);
    let query_weights: Vec<f64> = query.iter().map(|t| weights.weight(t)).collect();
    let total: f64 = query_weights.iter().sum();
    if query.is_empty() || total.is_nan() || total <= 0.0 {
        return Vec::new();
    }
    let tokens = textproc::tokenize(body);
    let n = tokens.len();
    if n == 0 {
        return Vec::new();
    }

    // prefix[q][i] = occurrences of query term q among tokens[..i]
    let mut prefix = vec![vec![0u32; n + 1]; query.len()];
    for (i, tok) in tokens.iter().enumerate() {
        let hit = query.iter().position(|q| *q == tok.text);
        for (q, row) in prefix.iter_mut().enumerate() {
            row[i + 1] = row[i] + u32::from(hit == Some(q));
        }
    }
    let weight_in = |lo: usize, hi: usize| -> f64 {
        let mut sum = 0.0;
        for (row, w) in prefix.iter().zip(&query_weights) {
            if row[hi + 1] > row[lo] {
                sum += w;
            }
        }
        sum
    };
    let boundary_ok: Vec<bool> = tokens
        .iter()
        .map(|t| !textproc::is_question_stopword(&t.text))
        .collect();

    let mut candidates = Vec::new();
    for first in 0..n {
        if !boundary_ok[first] {
            continue;
        }
        let window_lo = first.saturating_sub(params.window_radius);
        let span_ends = boundary_ok
            .iter()
            .enumerate()
            .take(first + params.max_span_tokens)
            .skip(first);
        for (last, &ok) in span_ends {
            if !ok {
                continue;
            }
            let window_hi = (last + params.window_radius).min(n - 1);
            let cov = weight_in(window_lo, window_hi);
            let ov = weight_in(first, last);
            let len = (last - first) as f64;
            let raw = (cov - params.overlap_penalty * ov) / total - params.length_penalty * len;
            let confidence = raw.clamp(0.0, 1.0);
            if confidence > params.min_confidence {
                candidates.push(Candidate {
                    confidence,
                    first,
                    last,
                });
            }
        }
    }
    candidates.sort_unstable_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.first.cmp(&b.first))
            .then(a.last.cmp(&b.last))
    });

    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for c in candidates {
        let bytes = tokens[c.first].byte_range.start..tokens[c.last].byte_range.end;
        let text = &body[bytes];
        if !seen.insert(normalize_answer(text)) {
            continue;
        }
        out.push(AnswerSpan {
            text: text.to_string(),
            doc_id: doc_id.to_string(),
            char_start: tokens[c.first].char_start,
            char_end: tokens[c.last].char_end,
            confidence: c.confidence,
        });
        if out.len() == params.spans_per_doc {
            break;
        }
    }
    out
}

#[derive(Debug, thiserror::Error)]
pub enum ReaderError {
    #[error("remote reader unavailable: {0}")]
    Unavailable(String),
    #[error("remote reader protocol error: {0}")]
    Protocol(String),
}

/// `POST /read` request body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadRequest {
    pub question: String,
    pub top_k: usize,
    pub contexts: Vec<ReadContext>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadContext {
    pub doc_id: String,
    pub title: String,
    pub url: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadResponse {
    pub spans: Vec<WireSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireSpan {
    pub doc_id: String,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub score: f64,
}

impl ReadRequest {
    pub fn new(question: &str, docs: &[RetrievedDocument], top_k: usize) -> Self {
        Self {
            question: question.to_string(),
            top_k,
            contexts: docs
                .iter()
                .map(|d| ReadContext {
                    doc_id: d.doc_id.clone(),
                    title: d.title.clone(),
                    url: d.url.clone(),
                    text: d.body.clone(),
                })
                .collect(),
        }
    }
}

/// Keeps only spans that name a sent context, slice to their text, and carry
/// a score in [0, 1]. Violators are logged and dropped.
pub fn validate_spans(spans: Vec<WireSpan>, contexts: &[ReadContext]) -> Vec<AnswerSpan> {
    spans
        .into_iter()
        .filter_map(|s| {
            let problem = match contexts.iter().find(|c| c.doc_id == s.doc_id) {
                None => Some("unknown doc_id"),
                Some(_) if s.text.is_empty() => Some("empty text"),
                Some(_) if !(0.0..=1.0).contains(&s.score) => Some("score outside [0, 1]"),
                Some(c) if char_slice(&c.text, s.char_start, s.char_end) != Some(s.text.as_str()) => {
                    Some("offsets do not match text")
                }
                Some(_) => None,
            };
            if let Some(why) = problem {
                tracing::warn!(doc_id = %s.doc_id, text = %s.text, "dropping remote span: {why}");
                return None;
            }
            Some(AnswerSpan {
                text: s.text,
                doc_id: s.doc_id,
                char_start: s.char_start,
                char_end: s.char_end,
                confidence: s.score,
            })
        })
        .collect()
}

/// Client for an external reader speaking the `/read` protocol.
#[derive(Debug, Clone)]
pub struct RemoteReader {
    client: reqwest::Client,
    read_url: String,
}

impl RemoteReader {
    /// `base_url` is the reader's root; requests go to `<base_url>/read`.
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, ReaderError> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ReaderError::Unavailable(e.to_string()))?;
        Ok(Self {
            client,
            read_url: format!("{}/read", base_url.trim_end_matches('/')),
        })
    }

    pub fn read_url(&self) -> &str {
        &self.read_url
    }

    pub async fn read(
        &self,
        question: &str,
        docs: &[RetrievedDocument],
        top_k: usize,
    ) -> Result<Vec<AnswerSpan>, ReaderError> {
        let request = ReadRequest::new(question, docs, top_k);
        let resp = self
            .client
            .post(&self.read_url)
            .json(&request)
            .send()
            .await
            .map_err(|e| ReaderError::Unavailable(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ReaderError::Unavailable(format!("status {status}")));
        }
        let bytes = resp
            .bytes()
            .await
            .map_err(|e| ReaderError::Unavailable(e.to_string()))?;
        let parsed: ReadResponse = serde_json::from_slice(&bytes).map_err(|e| ReaderError::Protocol(e.to_string()))?;
        Ok(validate_spans(parsed.spans, &request.contexts))
    }
}
