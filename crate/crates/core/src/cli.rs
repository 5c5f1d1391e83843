//! `asksport` command line: ingest, index, ask, serve, eval.
//!
//! Exit status is 0 on success, 1 for user errors (bad flags, missing or
//! invalid input files) and 2 for internal failures.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};

use crate::corpus::{self, CorpusError, FieldMapping, PartialFieldMapping, SourceFormat};
use crate::eval::{self, EvalError};
use crate::index::{self, IndexError};
use crate::pipeline::{AskOptions, AskResponse, Engine, PipelineError, ReaderMode, FALLBACK_MESSAGE};
use crate::reader::{ReaderError, RemoteReader};
use crate::service::{self, ServiceConfig, ServiceError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USER: i32 = 1;
pub const EXIT_INTERNAL: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "asksport",
    version,
    about = "Sports question answering: BM25 retrieval + extractive reader"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert wiki JSON pages and/or context CSV files into a corpus file
    Ingest(IngestArgs),
    /// Build an index file from a corpus file
    Index(IndexArgs),
    /// Answer one question
    Ask(AskArgs),
    /// Run the HTTP API
    Serve(ServeArgs),
    /// Score the pipeline on question/answer triples
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Wiki page JSON file, or a directory of .json/.jsonl files
    #[arg(long, value_name = "DIR|FILE")]
    wiki: Option<PathBuf>,
    /// Context CSV file
    #[arg(long, value_name = "CSV")]
    contexts: Option<PathBuf>,
    /// TOML/JSON file overriding source field names
    #[arg(long, value_name = "FILE")]
    mapping: Option<PathBuf>,
    /// Source tag used as the doc id prefix, e.g. "basketball"
    #[arg(long, value_name = "SPORT")]
    tag: String,
    /// Output corpus (JSON lines)
    #[arg(long, value_name = "CORPUS.JSONL")]
    out: PathBuf,
    /// Split documents into 200-token passages with a 150-token stride
    #[arg(long)]
    chunk: bool,
}

#[derive(Debug, Args)]
struct IndexArgs {
    /// Corpus file produced by `ingest`
    #[arg(long, value_name = "JSONL")]
    corpus: PathBuf,
    /// Output index file
    #[arg(long, value_name = "IDX")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ReaderArgs {
    /// Reader: baseline, remote or remote_with_baseline_fallback
    #[arg(long, default_value = "baseline")]
    reader: ReaderMode,
    /// Base URL of the remote reader (requests go to <URL>/read)
    #[arg(long, value_name = "URL", env = "ASKSPORT_REMOTE_READER_URL")]
    remote_url: Option<String>,
    /// Remote reader timeout in seconds
    #[arg(long, value_name = "SECS", default_value_t = 30)]
    timeout: u64,
}

#[derive(Debug, Args)]
struct AskArgs {
    /// Index file produced by `index`
    #[arg(long, value_name = "IDX")]
    index: PathBuf,
    /// Natural-language question
    #[arg(long)]
    question: String,
    /// Documents to retrieve
    #[arg(long, default_value_t = 10)]
    k: usize,
    /// Answers to return (at most 3)
    #[arg(long, default_value_t = 3)]
    answers: usize,
    #[command(flatten)]
    reader: ReaderArgs,
    /// Print the response as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Service config file (TOML, or JSON with a .json extension)
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Index file produced by `index`
    #[arg(long, value_name = "IDX")]
    index: PathBuf,
    /// Context-question-answer CSV
    #[arg(long, value_name = "CSV")]
    qa: PathBuf,
    /// Documents to retrieve; also the k of hit@k
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[command(flatten)]
    reader: ReaderArgs,
    /// TOML/JSON file overriding the question/answer/context column names
    #[arg(long, value_name = "FILE")]
    mapping: Option<PathBuf>,
    /// Also report EM/F1 against the best of the three answers
    #[arg(long = "any-of-3")]
    any_of_3: bool,
    /// Print the report as JSON
    #[arg(long)]
    json: bool,
}

#[derive(Debug)]
enum CliError {
    User(String),
    Internal(String),
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        CliError::User(e.to_string())
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::InvalidRequest(_) | PipelineError::NoRemoteReader(_) => CliError::User(e.to_string()),
            PipelineError::Reader(ReaderError::Unavailable(_)) => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::NoPairs => CliError::User(e.to_string()),
            EvalError::Pipeline { index, source } => match CliError::from(source) {
                CliError::User(m) => CliError::User(format!("question {index}: {m}")),
                CliError::Internal(m) => CliError::Internal(format!("question {index}: {m}")),
            },
        }
    }
}

impl From<ServiceError> for CliError {
    fn from(e: ServiceError) -> Self {
        match e {
            ServiceError::Config(_) | ServiceError::Index(_) => CliError::User(e.to_string()),
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn io_internal(e: std::io::Error) -> CliError {
    CliError::Internal(e.to_string())
}

/// Parses `argv` (including the program name) and runs the command.
pub fn run_cli<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(err, "{text}");
                EXIT_USER
            } else {
                // --help / --version
                let _ = write!(out, "{text}");
                EXIT_OK
            };
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a, err),
        Command::Index(a) => build(a, err),
        Command::Ask(a) => runtime().and_then(|rt| rt.block_on(ask(a, out))),
        Command::Serve(a) => runtime().and_then(|rt| rt.block_on(serve(a))),
        Command::Eval(a) => runtime().and_then(|rt| rt.block_on(evaluate(a, out))),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::User(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USER
        }
        Err(CliError::Internal(m)) => {
            let _ = writeln!(err, "internal error: {m}");
            EXIT_INTERNAL
        }
    }
}

fn runtime() -> Result<tokio::runtime::Runtime, CliError> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_internal)
}

fn load_mapping(path: Option<&Path>, base: FieldMapping) -> Result<FieldMapping, CliError> {
    Ok(match path {
        Some(p) => PartialFieldMapping::from_file(p)?.over(base),
        None => base,
    })
}

fn ingest(a: IngestArgs, err: &mut dyn Write) -> Result<(), CliError> {
    if a.wiki.is_none() && a.contexts.is_none() {
        return Err(CliError::User("ingest needs --wiki and/or --contexts".into()));
    }
    if a.tag.trim().is_empty() {
        return Err(CliError::User("--tag must not be empty".into()));
    }
    let mut parts = Vec::new();
    let mut next = 0;
    let mut skipped = 0;
    let sources = [
        (a.wiki.as_ref(), SourceFormat::WikiJson),
        (a.contexts.as_ref(), SourceFormat::ContextsCsv),
    ];
    for (path, format) in sources {
        let Some(path) = path else { continue };
        let mapping = load_mapping(a.mapping.as_deref(), FieldMapping::default_for(format))?;
        let got = corpus::ingest_documents_from(path, format, &mapping, &a.tag, next)?;
        next += got.documents.len();
        skipped += got.skipped;
        parts.push(got.documents);
    }
    let mut docs = corpus::merge_corpora(parts)?;
    if a.chunk {
        docs = corpus::chunk_documents(&docs, 200, 150);
    }
    corpus::write_corpus(&a.out, &docs)?;
    let _ = writeln!(
        err,
        "wrote {} documents to {} ({skipped} records skipped)",
        docs.len(),
        a.out.display()
    );
    Ok(())
}

fn build(a: IndexArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let docs = corpus::read_corpus(&a.corpus)?;
    let idx = index::build_index(&docs)?;
    index::save_index(&idx, &a.out)?;
    let _ = writeln!(
        err,
        "indexed {} documents, {} terms, avgdl {:.2} -> {}",
        idx.n_docs(),
        idx.vocab().len(),
        idx.avgdl(),
        a.out.display()
    );
    Ok(())
}

fn engine_for(index_path: &Path, reader: &ReaderArgs) -> Result<Engine, CliError> {
    let idx = index::load_index(index_path)?;
    let remote = match (reader.reader, &reader.remote_url) {
        (ReaderMode::Baseline, _) => None,
        (_, Some(url)) => Some(
            RemoteReader::new(url, Duration::from_secs(reader.timeout))
                .map_err(|e| CliError::Internal(e.to_string()))?,
        ),
        (mode, None) => return Err(CliError::User(format!("--reader {mode} needs --remote-url"))),
    };
    Ok(Engine::new(Arc::new(idx)).with_mode(reader.reader, remote)?)
}

/// Human-readable answer box.
pub fn render_answers(resp: &AskResponse) -> String {
    let mut s = format!("Question: {}\n\n", resp.question);
    if resp.answers.is_empty() {
        s.push_str(FALLBACK_MESSAGE);
        s.push('\n');
        return s;
    }
    for (i, a) in resp.answers.iter().enumerate() {
        s.push_str(&format!(
            "{}. {}\n   Score:    {:.4}\n   Document: {}\n   URL:      {}\n",
            i + 1,
            a.answer,
            a.score,
            a.document_title,
            a.url
        ));
    }
    if resp.degraded {
        s.push_str("\n(remote reader unavailable; answered with the baseline reader)\n");
    }
    s
}

async fn ask(a: AskArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let engine = engine_for(&a.index, &a.reader)?;
    let opts = AskOptions {
        k_docs: a.k,
        n_answers: a.answers,
    };
    let resp = engine.ask(&a.question, opts).await?;
    if a.json {
        let text = serde_json::to_string_pretty(&resp).map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(out, "{text}").map_err(io_internal)?;
    } else {
        write!(out, "{}", render_answers(&resp)).map_err(io_internal)?;
    }
    Ok(())
}

async fn serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = match &a.config {
        Some(p) => ServiceConfig::from_file(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env()?;
    service::serve(config).await?;
    Ok(())
}

async fn evaluate(a: EvalArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let engine = engine_for(&a.index, &a.reader)?;
    let mapping = load_mapping(a.mapping.as_deref(), FieldMapping::contexts_default())?;
    let pairs = corpus::load_qa_pairs(&a.qa, &mapping)?;
    let pairs = corpus::resolve_gold_docs(&pairs, &engine.index().documents());
    let report = eval::evaluate(&engine, &pairs, a.k, a.any_of_3).await?;
    if a.json {
        let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?;
        writeln!(out, "{text}").map_err(io_internal)?;
    } else {
        write!(out, "{}", report.render_table()).map_err(io_internal)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run_cli(
            std::iter::once("asksport").chain(args.iter().copied()),
            &mut out,
            &mut err,
        );
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_nonzero() {
        assert_eq!(run(&["frobnicate"]).0, EXIT_USER);
        assert_eq!(run(&["ask", "--bogus"]).0, EXIT_USER);
        assert_eq!(run(&[]).0, EXIT_USER);
    }

    #[test]
    fn every_command_has_help() {
        for cmd in ["ingest", "index", "ask", "serve", "eval"] {
            let (code, out, _) = run(&[cmd, "--help"]);
            assert_eq!(code, EXIT_OK, "{cmd}");
            assert!(out.contains("Usage"), "{cmd}");
        }
        let (_, out, _) = run(&["ask", "--help"]);
        for flag in ["--index", "--question", "--k", "--answers", "--reader", "--json"] {
            assert!(out.contains(flag), "ask --help lacks {flag}");
        }
    }

    #[test]
    fn missing_corpus_is_user_error() {
        let (code, _, err) = run(&["index", "--corpus", "missing.jsonl", "--out", "/tmp/x.sqaidx"]);
        assert_eq!(code, EXIT_USER);
        assert!(err.contains("missing.jsonl"));
    }

    #[test]
    fn ingest_without_sources_is_user_error() {
        let (code, _, err) = run(&["ingest", "--tag", "basketball", "--out", "/tmp/c.jsonl"]);
        assert_eq!(code, EXIT_USER);
        assert!(err.contains("--wiki"));
    }
}
