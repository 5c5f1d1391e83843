//! Immutable inverted index with BM25 statistics, and its on-disk container.
//!
//! File layout:
//!
//! ```text
//! SQAIDX01                       8-byte magic, last two bytes are the version
//! {"version":1,...}\n            header: n_docs, n_terms, avgdl, params echo
//! {"doc_id":...,"dl":N}\n        n_docs lines, doc_id order
//! {"term":...,"postings":[..]}\n n_terms lines, term order
//! xxxxxxxx\n                     CRC-32 (lowercase hex) of the header+record bytes
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::textproc;

pub const MAGIC_PREFIX: &[u8; 6] = b"SQAIDX";
pub const FORMAT_VERSION: &[u8; 2] = b"01";

#[derive(Debug, thiserror::Error)]
pub enum IndexError {
    #[error("cannot build an index from an empty corpus")]
    EmptyCorpus,
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("invalid BM25 parameters: {0}")]
    InvalidParams(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not an index file (bad magic)")]
    NotAnIndex,
    #[error("unsupported index version {0:?}")]
    UnsupportedVersion(String),
    #[error("index integrity check failed: {0}")]
    Integrity(String),
}

/// BM25 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IndexParams {
    pub k1: f64,
    pub b: f64,
}

impl Default for IndexParams {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl IndexParams {
    pub fn validate(&self) -> Result<(), IndexError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(IndexError::InvalidParams(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(IndexError::InvalidParams(format!(
                "b must be in [0, 1], got {}",
                self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredDoc {
    pub doc_id: String,
    pub title: String,
    pub url: String,
    pub body: String,
    pub source_tag: String,
    /// Token count of `body`.
    pub dl: u32,
}

impl StoredDoc {
    pub fn to_document(&self) -> Document {
        Document {
            doc_id: self.doc_id.clone(),
            title: self.title.clone(),
            url: self.url.clone(),
            body: self.body.clone(),
            source_tag: self.source_tag.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    /// Position of the document in `Index::docs` (sorted doc_id order).
    pub doc: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermEntry {
    pub df: u32,
    pub postings: Vec<Posting>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Index {
    n_docs: usize,
    avgdl: f64,
    params: IndexParams,
    docs: Vec<StoredDoc>,
    vocab: BTreeMap<String, TermEntry>,
}

impl Index {
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    /// Parameters echoed into the index at build time.
    pub fn params(&self) -> IndexParams {
        self.params
    }

    /// Documents in ordinal (sorted doc_id) order.
    pub fn docs(&self) -> &[StoredDoc] {
        &self.docs
    }

    pub fn doc(&self, ordinal: u32) -> &StoredDoc {
        &self.docs[ordinal as usize]
    }

    pub fn vocab(&self) -> &BTreeMap<String, TermEntry> {
        &self.vocab
    }

    pub fn term(&self, term: &str) -> Option<&TermEntry> {
        self.vocab.get(term)
    }

    pub fn ordinal_of(&self, doc_id: &str) -> Option<u32> {
        self.docs
            .binary_search_by(|d| d.doc_id.as_str().cmp(doc_id))
            .ok()
            .map(|i| i as u32)
    }

    pub fn stored(&self, doc_id: &str) -> Option<&StoredDoc> {
        self.ordinal_of(doc_id).map(|o| self.doc(o))
    }

    pub fn get_document(&self, doc_id: &str) -> Option<Document> {
        self.stored(doc_id).map(StoredDoc::to_document)
    }

    pub fn documents(&self) -> Vec<Document> {
        self.docs.iter().map(StoredDoc::to_document).collect()
    }

    /// Smoothed IDF of `term`; terms outside the vocabulary get the
    /// df→0 limit.
    pub fn idf(&self, term: &str) -> f64 {
        match self.vocab.get(term) {
            Some(e) => textproc::idf_unchecked(e.df as f64, self.n_docs as f64),
            None => textproc::idf_out_of_vocabulary(self.n_docs),
        }
    }

    /// Distinct source tags, sorted.
    pub fn source_tags(&self) -> Vec<String> {
        let mut tags: Vec<String> = self.docs.iter().map(|d| d.source_tag.clone()).collect();
        tags.sort();
        tags.dedup();
        tags
    }
}

pub fn build_index(corpus: &[Document]) -> Result<Index, IndexError> {
    build_index_with(corpus, IndexParams::default())
}

pub fn build_index_with(corpus: &[Document], params: IndexParams) -> Result<Index, IndexError> {
    params.validate()?;
    if corpus.is_empty() {
        return Err(IndexError::EmptyCorpus);
    }
    let mut sorted: Vec<&Document> = corpus.iter().collect();
    sorted.sort_by(|a, b| a.doc_id.cmp(&b.doc_id));
    if let Some(w) = sorted.windows(2).find(|w| w[0].doc_id == w[1].doc_id) {
        return Err(IndexError::DuplicateDocId(w[0].doc_id.clone()));
    }

    let mut docs = Vec::with_capacity(sorted.len());
    let mut vocab: BTreeMap<String, TermEntry> = BTreeMap::new();
    let mut total_len = 0u64;
    for (ordinal, doc) in sorted.iter().enumerate() {
        let terms = textproc::terms(&doc.body);
        let mut counts: HashMap<String, u32> = HashMap::new();
        for t in terms.iter() {
            *counts.entry(t.clone()).or_default() += 1;
        }
        for (term, tf) in counts {
            let entry = vocab.entry(term).or_insert_with(|| TermEntry {
                df: 0,
                postings: Vec::new(),
            });
            entry.df += 1;
            entry.postings.push(Posting {
                doc: ordinal as u32,
                tf,
            });
        }
        total_len += terms.len() as u64;
        docs.push(StoredDoc {
            doc_id: doc.doc_id.clone(),
            title: doc.title.clone(),
            url: doc.url.clone(),
            body: doc.body.clone(),
            source_tag: doc.source_tag.clone(),
            dl: terms.len() as u32,
        });
    }
    let n_docs = docs.len();
    Ok(Index {
        n_docs,
        avgdl: total_len as f64 / n_docs as f64,
        params,
        docs,
        vocab,
    })
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    n_docs: usize,
    n_terms: usize,
    avgdl: f64,
    params: IndexParams,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermLine {
    term: String,
    df: u32,
    /// (doc ordinal, tf) pairs.
    postings: Vec<(u32, u32)>,
}

/// Serializes the index into the container format.
pub fn encode_index(index: &Index) -> Vec<u8> {
    let mut payload = String::new();
    let header = Header {
        version: 1,
        n_docs: index.n_docs,
        n_terms: index.vocab.len(),
        avgdl: index.avgdl,
        params: index.params,
    };
    payload.push_str(&json_line(&header));
    for doc in &index.docs {
        payload.push_str(&json_line(doc));
    }
    for (term, entry) in &index.vocab {
        let line = TermLine {
            term: term.clone(),
            df: entry.df,
            postings: entry.postings.iter().map(|p| (p.doc, p.tf)).collect(),
        };
        payload.push_str(&json_line(&line));
    }
    let mut out = Vec::with_capacity(payload.len() + 18);
    out.extend_from_slice(MAGIC_PREFIX);
    out.extend_from_slice(FORMAT_VERSION);
    out.extend_from_slice(payload.as_bytes());
    let crc = crc32fast::hash(&out[8..]);
    out.extend_from_slice(format!("{crc:08x}\n").as_bytes());
    out
}

fn json_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("index records always serialize");
    s.push('\n');
    s
}

/// Parses and verifies a container produced by [`encode_index`].
pub fn decode_index(bytes: &[u8]) -> Result<Index, IndexError> {
    if bytes.len() < 8 || &bytes[..6] != MAGIC_PREFIX {
        return Err(IndexError::NotAnIndex);
    }
    if &bytes[6..8] != FORMAT_VERSION {
        return Err(IndexError::UnsupportedVersion(
            String::from_utf8_lossy(&bytes[6..8]).into_owned(),
        ));
    }
    let body = &bytes[8..];
    let integrity = |m: &str| IndexError::Integrity(m.to_string());
    if body.len() < 9 || !body.ends_with(b"\n") {
        return Err(integrity("file is truncated"));
    }
    let (payload, trailer) = body.split_at(body.len() - 9);
    let stored = std::str::from_utf8(&trailer[..8])
        .ok()
        .and_then(|h| u32::from_str_radix(h, 16).ok())
        .ok_or_else(|| integrity("missing checksum line"))?;
    if crc32fast::hash(payload) != stored {
        return Err(integrity("checksum mismatch"));
    }
    let payload = std::str::from_utf8(payload).map_err(|_| integrity("payload is not UTF-8"))?;
    let mut lines = payload.lines();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| IndexError::Integrity(format!("missing {what}")))
    };
    let parse_err = |e: serde_json::Error| IndexError::Integrity(e.to_string());

    let header: Header = serde_json::from_str(next("header")?).map_err(parse_err)?;
    if header.version != 1 {
        return Err(IndexError::UnsupportedVersion(header.version.to_string()));
    }
    let mut docs = Vec::with_capacity(header.n_docs);
    for _ in 0..header.n_docs {
        docs.push(serde_json::from_str::<StoredDoc>(next("document record")?).map_err(parse_err)?);
    }
    let mut vocab = BTreeMap::new();
    for _ in 0..header.n_terms {
        let line: TermLine = serde_json::from_str(next("term record")?).map_err(parse_err)?;
        let postings = line.postings.into_iter().map(|(doc, tf)| Posting { doc, tf }).collect();
        vocab.insert(line.term, TermEntry { df: line.df, postings });
    }
    if next("end").is_ok() {
        return Err(integrity("trailing records after vocabulary"));
    }
    let index = Index {
        n_docs: header.n_docs,
        avgdl: header.avgdl,
        params: header.params,
        docs,
        vocab,
    };
    check_invariants(&index).map_err(IndexError::Integrity)?;
    Ok(index)
}

/// Structural invariants every index satisfies.
pub fn check_invariants(index: &Index) -> Result<(), String> {
    if index.n_docs == 0 || index.n_docs != index.docs.len() {
        return Err("document count disagrees with header".into());
    }
    if index.docs.windows(2).any(|w| w[0].doc_id >= w[1].doc_id) {
        return Err("documents not in strictly increasing doc_id order".into());
    }
    let total: u64 = index.docs.iter().map(|d| d.dl as u64).sum();
    if total as f64 / index.n_docs as f64 != index.avgdl {
        return Err("avgdl disagrees with document lengths".into());
    }
    let mut tf_sum = vec![0u64; index.n_docs];
    for (term, entry) in &index.vocab {
        if entry.df as usize != entry.postings.len() || entry.df == 0 {
            return Err(format!("df of {term:?} disagrees with postings"));
        }
        if entry.postings.windows(2).any(|w| w[0].doc >= w[1].doc) {
            return Err(format!("postings of {term:?} not sorted"));
        }
        for p in &entry.postings {
            if p.tf == 0 || p.doc as usize >= index.n_docs {
                return Err(format!("bad posting for {term:?}"));
            }
            tf_sum[p.doc as usize] += p.tf as u64;
        }
    }
    if tf_sum.iter().zip(&index.docs).any(|(s, d)| *s != d.dl as u64) {
        return Err("postings disagree with document lengths".into());
    }
    Ok(())
}

pub fn save_index(index: &Index, path: &Path) -> Result<(), IndexError> {
    fs::write(path, encode_index(index)).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_index(path: &Path) -> Result<Index, IndexError> {
    let bytes = fs::read(path).map_err(|source| IndexError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_index(&bytes)
}
