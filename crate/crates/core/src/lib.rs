//! Reproducible GloVe training pipeline.
//!
//! Stages: corpus ingestion ([`corpus`]), vocabulary selection ([`vocab`]),
//! cooccurrence construction, merging and shuffling ([`cooccur`]), AdaGrad
//! training and export ([`trainer`]), WLS diagnostics ([`diagnostics`]) and
//! intrinsic evaluation ([`eval`]). [`pipeline`] runs them end to end from a
//! single config file.

pub mod cooccur;
pub mod corpus;
pub mod diagnostics;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod pipeline;
pub mod synth;
pub mod trainer;
pub mod vocab;

pub use error::{Error, Result};
