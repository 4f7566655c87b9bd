//! Contextual slot carryover for multi-turn, multi-schema dialogs.
//!
//! The crate is organised as a pipeline:
//!
//! - [`dialog`]: the turn/slot data model, corpus I/O, the DSTC2 converter
//!   and a synthetic heterogeneous-schema corpus generator.
//! - [`embeddings`]: token embeddings and the corpus-derived label
//!   embeddings for slot keys and dialog acts.
//! - [`candidates`]: candidate slot collection from the context window,
//!   embedding-based schema mapping and gold labelling.
//! - [`model`]: the attention-augmented recurrent encoder-decoder that
//!   scores each candidate, with hand-written backpropagation.
//! - [`training`]: class-weighted cross-entropy, Adam and early stopping.
//! - [`baselines`]: most-recent-turn and rule-based carryover.
//! - [`eval`]: precision/recall/F1, threshold sweeps and the
//!   within/cross-domain breakdown.
//! - [`cli`]: the `carryover` command line front end.

pub mod baselines;
pub mod candidates;
pub mod cli;
pub mod dialog;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod model;
pub mod pipeline;
pub mod training;

mod util;

pub use error::{Error, Result};
