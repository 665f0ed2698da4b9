//! Conversational late-interaction retrieval core.
//!
//! A conversation is encoded as one sequence (`context [SEP] last utterance`),
//! but only the last utterance's tokens take part in MaxSim matching against
//! passage tokens. The crate holds the pure parts of that pipeline:
//!
//! - [`types`]: conversations, token matrices, rankings, corpora.
//! - [`encoder`]: tokenization, the deterministic toy encoder, and the
//!   archive-backed provider for precomputed embeddings.
//! - [`query`]: the four query variants (last turn, all history, contextualized
//!   last turn, human rewrite) as token matrices plus match masks.
//! - [`index`]: masked MaxSim scoring with exact and two-stage search.
//! - [`eval`]: NDCG, recall, MaxP aggregation.
//! - [`stats`]: paired t-test and Pearson correlation.
//! - [`analysis`]: token drift, closest matches, anaphora/resolution similarity.
//!
//! The crate is `no_std` and only needs `alloc`. File formats and the
//! command-line driver live in the `zeco` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod encoder;
mod error;
pub mod eval;
pub mod index;
pub mod query;
pub mod stats;
pub mod types;
pub mod vector;

pub use error::{Error, Result};
pub use types::{
    build_context, Conversation, ConversationTurn, Corpus, RankedDoc, Ranking, Role, Token,
    TokenMatrix,
};
