//! Probing toolkit for Chinese spell checking.
//!
//! The crate covers four strands of analysis:
//!
//! * glyph and phonetic probes over frozen character embeddings
//!   ([`char_knowledge`], [`probe_dataset`], [`embedding_store`], [`mlp_probe`]),
//! * the correction-with-misspelled-character coverage ratio ([`cccr`]),
//! * the isolation train/test setting that removes overlapping correction
//!   pairs ([`isolation`]),
//! * sentence-level detection/correction scoring ([`csc_metrics`]).
//!
//! [`cli`] wires everything into the `cscprobe` binary.

pub mod binfmt;
pub mod cccr;
pub mod char_knowledge;
pub mod cli;
pub mod csc_metrics;
pub mod embedding_store;
pub mod error;
pub mod isolation;
pub mod mlp_probe;
pub mod probe_dataset;
pub mod rng;

pub use error::{Error, Result};
