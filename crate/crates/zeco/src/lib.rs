//! File formats, IO and the experiment driver around [`zeco_core`].
//!
//! - [`archive`]: the little-endian embedding archive shared with external
//!   checkpoint exporters.
//! - [`conversations`], [`corpus`], [`trec`]: dataset inputs and TREC
//!   run/qrels files.
//! - [`tables`]: CSV outputs of the analysis commands.
//! - [`config`] and [`commands`]: the `zeco` command-line workflow.

pub mod archive;
pub mod commands;
pub mod config;
pub mod conversations;
pub mod corpus;
mod error;
pub mod tables;
pub mod trec;

pub use error::{Error, ExitCode, Result};
