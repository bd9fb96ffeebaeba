//! Pump-and-dump target coin prediction pipeline.
//!
//! The crate covers both halves of the pipeline: data collection (message
//! ingestion, pump message detection, session aggregation, event extraction)
//! and target coin prediction (market features, pump-history sequences,
//! word-embedding pre-training, and the sequence neural network with
//! positional attention). A deterministic synthetic world generator makes
//! every stage testable end to end without live data sources.

pub mod corpus;
pub mod detector;
pub mod embed;
pub mod error;
pub mod eval;
pub mod events;
pub mod features;
pub mod market;
pub mod pipeline;
pub mod snn;
pub mod synth;

pub use error::{Error, Result};
