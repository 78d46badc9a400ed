//! Grammatical item profiling by exhaustive span classification.
//!
//! The pipeline: [`corpus`] reads span-annotated sentences, [`encoder`]
//! contextualizes tokens, [`span_model`] scores every span and the optional
//! difficulty level, [`trainer`] fits and selects models, [`profiler`] runs
//! inference on raw text, and [`index`] aggregates per-document grammatical
//! items and difficulty for retrieval.

pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod fixtures;
pub mod index;
pub mod metrics;
pub mod neural;
pub mod profiler;
pub mod span_model;
pub mod trainer;

pub use error::{Error, Result};
