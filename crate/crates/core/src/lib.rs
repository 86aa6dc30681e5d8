//! Restoration and attribution tooling for damaged Greek inscriptions and
//! papyri.
//!
//! The crate turns Leiden-lite transcriptions into normalized records
//! ([`corpus`]), samples letter-counted gaps ([`masking`]), builds chat-style
//! training and evaluation sets ([`dataset`]), provides a character n-gram
//! baseline for restoration, place and date ([`baseline`]), scores any model's
//! output ([`metrics`]), talks to remote chat-completion endpoints
//! ([`inference`]) and includes a flat-vector TIES merge ([`merge`]).

pub mod baseline;
pub mod corpus;
pub mod dataset;
mod error;
pub mod inference;
pub mod jsonl;
pub mod masking;
pub mod merge;
pub mod metrics;
pub mod par;
pub mod report;
pub mod text;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
