//! Tokenization, question term extraction, IDF and answer normalization.
//!
//! Tokens are maximal runs of Unicode letters/digits, lowercased. No stemming
//! is applied. Offsets are counted in Unicode scalar values (`char`s) so they
//! line up with what a Python-side neural reader reports; the byte range is
//! kept alongside for slicing.

use std::collections::HashSet;
use std::ops::Range;

/// Question words stripped from questions (never from documents).
pub const QUESTION_STOPWORDS: [&str; 40] = [
    "a", "an", "and", "are", "as", "at", "be", "by", "did", "do", "does", "for", "from", "had", "has", "have", "how",
    "in", "is", "it", "its", "many", "much", "of", "on", "or", "that", "the", "to", "was", "were", "what", "when",
    "where", "which", "who", "whom", "why", "will", "with",
];

pub fn is_question_stopword(term: &str) -> bool {
    QUESTION_STOPWORDS.binary_search(&term).is_ok()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    /// Inclusive start, in chars.
    pub char_start: usize,
    /// Exclusive end, in chars.
    pub char_end: usize,
    pub byte_range: Range<usize>,
}

fn is_token_char(c: char) -> bool {
    c.is_alphanumeric()
}

pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    // (byte_start, char_start) of the run in progress
    let mut open: Option<(usize, usize)> = None;
    let mut char_pos = 0usize;
    for (byte_pos, c) in text.char_indices() {
        match (is_token_char(c), open) {
            (true, None) => open = Some((byte_pos, char_pos)),
            (false, Some((bs, cs))) => {
                tokens.push(make_token(text, bs, byte_pos, cs, char_pos));
                open = None;
            }
            _ => {}
        }
        char_pos += 1;
    }
    if let Some((bs, cs)) = open {
        tokens.push(make_token(text, bs, text.len(), cs, char_pos));
    }
    tokens
}

fn make_token(text: &str, bs: usize, be: usize, cs: usize, ce: usize) -> Token {
    Token {
        text: text[bs..be].to_lowercase(),
        char_start: cs,
        char_end: ce,
        byte_range: bs..be,
    }
}

/// Lowercased token strings only; used for index statistics.
pub fn terms(text: &str) -> Vec<String> {
    tokenize(text).into_iter().map(|t| t.text).collect()
}

/// Distinct non-stopword question terms, in first-occurrence order.
pub fn content_terms(question: &str) -> Vec<String> {
    let mut seen = HashSet::new();
    tokenize(question)
        .into_iter()
        .filter(|t| !is_question_stopword(&t.text))
        .filter(|t| seen.insert(t.text.clone()))
        .map(|t| t.text)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("idf undefined for df={df}, n_docs={n_docs} (need 1 <= df <= n_docs)")]
pub struct IdfDomainError {
    pub df: usize,
    pub n_docs: usize,
}

/// Smoothed BM25 IDF: `ln(1 + (N - df + 0.5) / (df + 0.5))`. Always positive.
pub fn idf(df: usize, n_docs: usize) -> Result<f64, IdfDomainError> {
    if df == 0 || df > n_docs {
        return Err(IdfDomainError { df, n_docs });
    }
    Ok(idf_unchecked(df as f64, n_docs as f64))
}

/// IDF for a term absent from the corpus (df smoothed down to zero).
pub fn idf_out_of_vocabulary(n_docs: usize) -> f64 {
    idf_unchecked(0.0, n_docs as f64)
}

#[inline]
pub(crate) fn idf_unchecked(df: f64, n: f64) -> f64 {
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

/// SQuAD-style normalization: lowercase, drop punctuation, drop the articles
/// a/an/the, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| c.is_alphanumeric() || c.is_whitespace())
        .collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Substring by char offsets `[start, end)`; `None` when out of range.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut bounds = text.char_indices().map(|(b, _)| b).chain(std::iter::once(text.len()));
    let b_start = bounds.nth(start)?;
    let b_end = if end == start {
        b_start
    } else {
        bounds.nth(end - start - 1)?
    };
    Some(&text[b_start..b_end])
}

/// Collapses whitespace runs to a single space and trims.
pub fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
