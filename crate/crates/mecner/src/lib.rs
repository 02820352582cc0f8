//! Chinese named-entity recognition from multi-granularity embeddings.
//!
//! Per-character representations are composed from three streams: a
//! CNN over radical embeddings, a Conv-GRU over character embeddings,
//! and word embeddings duplicated onto each constituent character. A
//! BiGRU with a linear-chain CRF on top tags the sequence. Everything
//! runs on the built-in `nd` autodiff core; there is no external
//! tensor dependency.
//!
//! The `mecner` binary exposes training, evaluation, prediction, a
//! full-model gradient check, and a self-contained self test.

pub mod cli;
pub mod embeddings;
pub mod encoders;
pub mod nd;
pub mod pipeline;
pub mod synthetic;
pub mod tagger;
