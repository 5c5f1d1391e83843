//! Sports question answering: BM25 document retrieval over an inverted index,
//! extractive answer reading, and answer aggregation, exposed through a CLI
//! and a JSON HTTP API.
//!
//! ```no_run
//! use std::sync::Arc;
//! use asksport::{index, pipeline::{AskOptions, Engine}};
//!
//! # async fn demo() -> Result<(), Box<dyn std::error::Error>> {
//! let idx = index::load_index("basketball.sqaidx".as_ref())?;
//! let engine = Engine::new(Arc::new(idx));
//! let resp = engine.ask("How many titles do the NBA Warriors have?", AskOptions::default()).await?;
//! for a in &resp.answers {
//!     println!("{} ({:.4}) {} {}", a.answer, a.score, a.document_title, a.url);
//! }
//! # Ok(()) }
//! ```

pub mod cli;
pub mod corpus;
pub mod eval;
pub mod index;
pub mod pipeline;
pub mod reader;
pub mod retriever;
pub mod service;
pub mod textproc;

pub use corpus::{Document, QaPair};
pub use index::{Index, IndexParams};
pub use pipeline::{AnswerResult, AskResponse, Engine, ReaderMode, FALLBACK_MESSAGE};
pub use reader::{AnswerSpan, ReaderParams};
pub use retriever::RetrievedDocument;
