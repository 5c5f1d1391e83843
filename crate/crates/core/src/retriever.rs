//! Okapi BM25 ranking over the inverted index.

use serde::{Deserialize, Serialize};

use crate::index::{Index, IndexParams};
use crate::textproc;

pub const DEFAULT_TOP_K: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDocument {
    pub doc_id: String,
    pub title: String,
    pub url: String,
    pub body: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("unknown document id {0:?}")]
pub struct UnknownDocument(pub String);

/// Saturated, length-normalized term frequency component.
#[inline]
fn tf_component(tf: f64, dl: f64, avgdl: f64, params: IndexParams) -> f64 {
    tf * (params.k1 + 1.0) / (tf + params.k1 * (1.0 - params.b + params.b * dl / avgdl))
}

fn dedup_terms<S: AsRef<str>>(terms: &[S]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::with_capacity(terms.len());
    for t in terms {
        if !out.contains(&t.as_ref()) {
            out.push(t.as_ref());
        }
    }
    out
}

/// BM25 score of a single document. Duplicate query terms count once.
pub fn bm25_score<S: AsRef<str>>(
    index: &Index,
    params: IndexParams,
    query_terms: &[S],
    doc_id: &str,
) -> Result<f64, UnknownDocument> {
    let ordinal = index
        .ordinal_of(doc_id)
        .ok_or_else(|| UnknownDocument(doc_id.to_string()))?;
    let dl = index.doc(ordinal).dl as f64;
    let mut score = 0.0;
    for term in dedup_terms(query_terms) {
        let Some(entry) = index.term(term) else { continue };
        if let Ok(pos) = entry.postings.binary_search_by_key(&ordinal, |p| p.doc) {
            let tf = entry.postings[pos].tf as f64;
            score += index.idf(term) * tf_component(tf, dl, index.avgdl(), params);
        }
    }
    Ok(score)
}

/// Scores every document matching at least one term, term-at-a-time.
/// Returns `(ordinal, score)` for documents with a positive score, sorted by
/// score descending then doc_id ascending, truncated to `k`.
pub fn rank_terms<S: AsRef<str>>(index: &Index, params: IndexParams, query_terms: &[S], k: usize) -> Vec<(u32, f64)> {
    if k == 0 {
        return Vec::new();
    }
    let mut acc = vec![0.0f64; index.n_docs()];
    let mut touched = Vec::new();
    let avgdl = index.avgdl();
    for term in dedup_terms(query_terms) {
        let Some(entry) = index.term(term) else { continue };
        let idf = index.idf(term);
        for p in &entry.postings {
            let slot = &mut acc[p.doc as usize];
            if *slot == 0.0 {
                touched.push(p.doc);
            }
            let dl = index.doc(p.doc).dl as f64;
            *slot += idf * tf_component(p.tf as f64, dl, avgdl, params);
        }
    }
    let mut hits: Vec<(u32, f64)> = touched
        .into_iter()
        .map(|o| (o, acc[o as usize]))
        .filter(|(_, s)| *s > 0.0)
        .collect();
    // ordinals follow doc_id order, so the ordinal is the tie-break
    let order = |a: &(u32, f64), b: &(u32, f64)| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0));
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(order);
    hits
}

/// Top-`k` documents for a natural-language question.
pub fn retrieve(index: &Index, params: IndexParams, question: &str, k: usize) -> Vec<RetrievedDocument> {
    let terms = textproc::content_terms(question);
    rank_terms(index, params, &terms, k)
        .into_iter()
        .enumerate()
        .map(|(i, (ordinal, score))| {
            let d = index.doc(ordinal);
            RetrievedDocument {
                doc_id: d.doc_id.clone(),
                title: d.title.clone(),
                url: d.url.clone(),
                body: d.body.clone(),
                score,
                rank: i + 1,
            }
        })
        .collect()
}
