//! Ingestion of wiki-page JSON, context CSV and question/answer triple CSV
//! files into documents and QA pairs.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::textproc::{self, collapse_whitespace};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("no documents produced from {path} ({skipped} records skipped)")]
    EmptyCorpus { path: PathBuf, skipped: usize },
    #[error("no question/answer pairs in {path}")]
    EmptyQaSet { path: PathBuf },
    #[error("{path} has no column named {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("duplicate document id {0:?}")]
    DuplicateDocId(String),
    #[error("invalid field mapping: {0}")]
    InvalidMapping(String),
}

/// One retrievable unit of corpus text. Field order is the corpus file order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub title: String,
    pub url: String,
    pub body: String,
    pub source_tag: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub gold_answer: String,
    pub gold_context: String,
    /// Empty until [`resolve_gold_docs`] finds the supporting document.
    #[serde(default)]
    pub gold_doc_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SourceFormat {
    WikiJson,
    ContextsCsv,
}

/// Names of the source fields/columns holding each piece of a record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub title_field: String,
    pub url_field: String,
    pub body_field: String,
    pub question_field: String,
    pub answer_field: String,
    pub context_field: String,
}

impl FieldMapping {
    pub fn wiki_default() -> Self {
        Self {
            title_field: "title".into(),
            url_field: "url".into(),
            body_field: "text".into(),
            question_field: "question".into(),
            answer_field: "answer".into(),
            context_field: "context".into(),
        }
    }

    pub fn contexts_default() -> Self {
        Self {
            body_field: "context".into(),
            ..Self::wiki_default()
        }
    }

    pub fn default_for(format: SourceFormat) -> Self {
        match format {
            SourceFormat::WikiJson => Self::wiki_default(),
            SourceFormat::ContextsCsv => Self::contexts_default(),
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fields = [
            ("title_field", &self.title_field),
            ("url_field", &self.url_field),
            ("body_field", &self.body_field),
            ("question_field", &self.question_field),
            ("answer_field", &self.answer_field),
            ("context_field", &self.context_field),
        ];
        for (name, value) in fields {
            if value.trim().is_empty() {
                return Err(CorpusError::InvalidMapping(format!("{name} is empty")));
            }
        }
        Ok(())
    }
}

/// A mapping file may name only some fields; the rest fall back to the
/// per-format defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartialFieldMapping {
    pub title_field: Option<String>,
    pub url_field: Option<String>,
    pub body_field: Option<String>,
    pub question_field: Option<String>,
    pub answer_field: Option<String>,
    pub context_field: Option<String>,
}

impl PartialFieldMapping {
    /// Reads a mapping file; `.json` is parsed as JSON, anything else as TOML.
    pub fn from_file(path: &Path) -> Result<Self, CorpusError> {
        let text = read_to_string(path)?;
        let parsed = if has_extension(path, "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|message| CorpusError::Parse {
            path: path.to_path_buf(),
            message,
        })
    }

    pub fn over(&self, base: FieldMapping) -> FieldMapping {
        let pick = |o: &Option<String>, d: String| o.clone().unwrap_or(d);
        FieldMapping {
            title_field: pick(&self.title_field, base.title_field),
            url_field: pick(&self.url_field, base.url_field),
            body_field: pick(&self.body_field, base.body_field),
            question_field: pick(&self.question_field, base.question_field),
            answer_field: pick(&self.answer_field, base.answer_field),
            context_field: pick(&self.context_field, base.context_field),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ingested {
    pub documents: Vec<Document>,
    /// Records dropped for a missing field or an empty body.
    pub skipped: usize,
}

pub fn format_doc_id(source_tag: &str, ordinal: usize) -> String {
    format!("{source_tag}/{ordinal:07}")
}

/// Ingests one file (or, for wiki JSON, a directory of `.json`/`.jsonl`
/// files in file-name order). Ids are `tag/NNNNNNN` numbered over emitted
/// documents only.
pub fn ingest_documents(
    path: &Path,
    format: SourceFormat,
    mapping: &FieldMapping,
    source_tag: &str,
) -> Result<Ingested, CorpusError> {
    ingest_documents_from(path, format, mapping, source_tag, 0)
}

/// Like [`ingest_documents`] but numbering starts at `first_ordinal`, so
/// several sources sharing a tag can be merged without id clashes.
pub fn ingest_documents_from(
    path: &Path,
    format: SourceFormat,
    mapping: &FieldMapping,
    source_tag: &str,
    first_ordinal: usize,
) -> Result<Ingested, CorpusError> {
    mapping.validate()?;
    let mut builder = DocBuilder {
        mapping,
        source_tag,
        next_ordinal: first_ordinal,
        out: Ingested {
            documents: Vec::new(),
            skipped: 0,
        },
    };
    match format {
        SourceFormat::WikiJson => {
            for file in wiki_files(path)? {
                for (n, record) in read_json_records(&file)?.into_iter().enumerate() {
                    builder.push_json(&file, n, &record);
                }
            }
        }
        SourceFormat::ContextsCsv => {
            let mut reader = csv_reader(path)?;
            let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
            for (n, row) in reader.records().enumerate() {
                match row {
                    Ok(row) => builder.push_csv(path, n, &headers, &row),
                    Err(e) => {
                        tracing::warn!("{}: record {n}: {e}; skipped", path.display());
                        builder.out.skipped += 1;
                    }
                }
            }
        }
    }
    if builder.out.documents.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: path.to_path_buf(),
            skipped: builder.out.skipped,
        });
    }
    Ok(builder.out)
}

struct DocBuilder<'a> {
    mapping: &'a FieldMapping,
    source_tag: &'a str,
    next_ordinal: usize,
    out: Ingested,
}

impl DocBuilder<'_> {
    fn emit(&mut self, title: String, url: String, body: String) {
        self.out.documents.push(Document {
            doc_id: format_doc_id(self.source_tag, self.next_ordinal),
            title,
            url,
            body,
            source_tag: self.source_tag.to_string(),
        });
        self.next_ordinal += 1;
    }

    fn skip(&mut self, file: &Path, n: usize, why: &str) {
        tracing::warn!("{}: record {n}: {why}; skipped", file.display());
        self.out.skipped += 1;
    }

    fn push_json(&mut self, file: &Path, n: usize, record: &Value) {
        let m = self.mapping;
        let fields = [&m.title_field, &m.url_field, &m.body_field];
        let mut values = Vec::with_capacity(3);
        for field in fields {
            match record.get(field.as_str()).map(json_scalar) {
                Some(Some(v)) => values.push(v),
                Some(None) => return self.skip(file, n, &format!("field {field:?} is not a scalar")),
                None => return self.skip(file, n, &format!("missing field {field:?}")),
            }
        }
        let body = values.pop().unwrap_or_default();
        let url = values.pop().unwrap_or_default();
        let title = values.pop().unwrap_or_default();
        if body.trim().is_empty() {
            return self.skip(file, n, "empty body");
        }
        self.emit(title, url, body);
    }

    fn push_csv(&mut self, file: &Path, n: usize, headers: &csv::StringRecord, row: &csv::StringRecord) {
        let m = self.mapping;
        let get = |field: &str| {
            headers
                .iter()
                .position(|h| h == field)
                .and_then(|i| row.get(i))
                .map(str::to_string)
        };
        let (Some(title), Some(url), Some(body)) = (get(&m.title_field), get(&m.url_field), get(&m.body_field)) else {
            return self.skip(file, n, "missing mapped column");
        };
        if body.trim().is_empty() {
            return self.skip(file, n, "empty body");
        }
        self.emit(title, url, body);
    }
}

fn json_scalar(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Null => Some(String::new()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Array(_) | Value::Object(_) => None,
    }
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

fn wiki_files(path: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(io_err)? {
        let p = entry.map_err(io_err)?.path();
        if p.is_file() && (has_extension(&p, "json") || has_extension(&p, "jsonl")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn read_to_string(path: &Path) -> Result<String, CorpusError> {
    fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Accepts a single object, an array of objects, or JSON lines.
fn read_json_records(path: &Path) -> Result<Vec<Value>, CorpusError> {
    let text = read_to_string(path)?;
    let text = text.trim_start_matches('\u{feff}');
    if text.trim().is_empty() {
        return Ok(Vec::new());
    }
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Array(items)) => Ok(items),
        Ok(v @ Value::Object(_)) => Ok(vec![v]),
        Ok(_) => Err(CorpusError::Parse {
            path: path.to_path_buf(),
            message: "top-level JSON value must be an object or an array".into(),
        }),
        Err(_) => {
            let mut records = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(line) {
                    Ok(v) => records.push(v),
                    Err(e) if records.is_empty() && i == 0 => {
                        return Err(CorpusError::Parse {
                            path: path.to_path_buf(),
                            message: e.to_string(),
                        })
                    }
                    Err(e) => {
                        tracing::warn!("{}: line {}: {e}; skipped", path.display(), i + 1);
                        // a non-object value is skipped in push_json
                        records.push(Value::Null);
                    }
                }
            }
            Ok(records)
        }
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, CorpusError> {
    let file = fs::File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new().flexible(true).from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads context-question-answer triples. Rows with an empty question or
/// answer are skipped.
pub fn load_qa_pairs(path: &Path, mapping: &FieldMapping) -> Result<Vec<QaPair>, CorpusError> {
    mapping.validate()?;
    let mut reader = csv_reader(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(CorpusError::EmptyQaSet {
            path: path.to_path_buf(),
        });
    }
    let column = |name: &String| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CorpusError::MissingColumn {
                path: path.to_path_buf(),
                column: name.clone(),
            })
    };
    let q_col = column(&mapping.question_field)?;
    let a_col = column(&mapping.answer_field)?;
    let c_col = column(&mapping.context_field)?;

    let mut pairs = Vec::new();
    for (n, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                tracing::warn!("{}: row {n}: {e}; skipped", path.display());
                continue;
            }
        };
        let cell = |i: usize| row.get(i).unwrap_or("").to_string();
        let (question, answer) = (cell(q_col), cell(a_col));
        if question.trim().is_empty() || answer.trim().is_empty() {
            tracing::warn!("{}: row {n}: empty question or answer; skipped", path.display());
            continue;
        }
        pairs.push(QaPair {
            question,
            gold_answer: answer,
            gold_context: cell(c_col),
            gold_doc_id: String::new(),
        });
    }
    if pairs.is_empty() {
        return Err(CorpusError::EmptyQaSet {
            path: path.to_path_buf(),
        });
    }
    Ok(pairs)
}

/// Sets each pair's `gold_doc_id` to the lexicographically smallest doc id
/// whose body contains the gold context (both whitespace-collapsed).
pub fn resolve_gold_docs(pairs: &[QaPair], corpus: &[Document]) -> Vec<QaPair> {
    let mut sorted: Vec<(&str, String)> = corpus
        .iter()
        .map(|d| (d.doc_id.as_str(), collapse_whitespace(&d.body)))
        .collect();
    sorted.sort_by(|a, b| a.0.cmp(b.0));
    pairs
        .iter()
        .map(|pair| {
            let needle = collapse_whitespace(&pair.gold_context);
            let gold_doc_id = if needle.is_empty() {
                String::new()
            } else {
                sorted
                    .iter()
                    .find(|(_, body)| body.contains(&needle))
                    .map(|(id, _)| id.to_string())
                    .unwrap_or_default()
            };
            QaPair {
                gold_doc_id,
                ..pair.clone()
            }
        })
        .collect()
}

/// Concatenates corpora, rejecting any repeated doc id.
pub fn merge_corpora(parts: Vec<Vec<Document>>) -> Result<Vec<Document>, CorpusError> {
    let mut seen = HashSet::new();
    let mut merged = Vec::new();
    for doc in parts.into_iter().flatten() {
        if !seen.insert(doc.doc_id.clone()) {
            return Err(CorpusError::DuplicateDocId(doc.doc_id));
        }
        merged.push(doc);
    }
    Ok(merged)
}

/// Splits each body into windows of at most `max_tokens` tokens starting
/// every `stride` tokens. Chunk ids are `<doc_id>#NNN`.
pub fn chunk_documents(docs: &[Document], max_tokens: usize, stride: usize) -> Vec<Document> {
    assert!(max_tokens >= 1 && stride >= 1, "chunk sizes must be positive");
    let mut out = Vec::new();
    for doc in docs {
        let tokens = textproc::tokenize(&doc.body);
        if tokens.len() <= max_tokens {
            out.push(doc.clone());
            continue;
        }
        let mut start = 0;
        let mut n = 0;
        loop {
            let end = (start + max_tokens).min(tokens.len());
            let bytes = tokens[start].byte_range.start..tokens[end - 1].byte_range.end;
            out.push(Document {
                doc_id: format!("{}#{n:03}", doc.doc_id),
                body: doc.body[bytes].to_string(),
                ..doc.clone()
            });
            n += 1;
            if end == tokens.len() {
                break;
            }
            start += stride;
        }
    }
    out
}

pub fn write_corpus(path: &Path, docs: &[Document]) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("documents always serialize");
        writeln!(out, "{line}").map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Document>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = BufReader::new(fs::File::open(path).map_err(io_err)?);
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            path: path.to_path_buf(),
            message: format!("line {}: {e}", i + 1),
        })?;
        docs.push(doc);
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus {
            path: path.to_path_buf(),
            skipped: 0,
        });
    }
    merge_corpora(vec![docs])
}
