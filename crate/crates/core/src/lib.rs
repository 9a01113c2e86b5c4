//! Nugget-first retrieval-augmented report generation.
//!
//! A request's retrieved documents are distilled into a ranked bank of
//! question/answer nuggets; each nugget then drives extraction of one cited
//! sentence per supporting passage, and the best sentences are assembled into
//! a report. Reports are scored against gold nugget banks.

pub mod assemble;
pub mod error;
pub mod evaluation;
pub mod ideation;
pub mod ingest;
pub mod jsonl;
pub mod llm;
pub mod pipeline;
pub mod ranking;
pub mod retrieval;
pub mod scan;
pub mod text;

pub use error::{Error, Result};
