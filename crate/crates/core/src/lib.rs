//! Detection of synthetic rows across heterogeneous tables.
//!
//! The crate is organised as a pipeline:
//!
//! - [`data`]: schemas, cells, tables and labelled row records;
//! - [`ingest`] and [`config`]: CSV/schema loading, row pooling and experiment plans;
//! - [`generators`]: small fitted samplers that stand in for deep tabular generators;
//! - [`encoders`]: flat-text linearisation, trigram bags and the column codec;
//! - [`nn`]: a reverse-mode tape with the layers needed by the transformer detectors;
//! - [`detectors`]: logistic regression, boosted trees and two transformer detectors;
//! - [`eval`]: setups, fold plans, metrics, the experiment runner and reports.
//!
//! Data-parallel inner loops (attention over the batch, split search over
//! features, batch prediction, experiment grid cells) go through [`par`], which
//! uses rayon when the `parallel` feature is enabled and falls back to plain
//! iteration otherwise. Both paths produce identical results.

pub mod config;
pub mod data;
pub mod detectors;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod generators;
pub mod ingest;
pub mod nn;
pub mod par;
pub mod util;

pub use error::{Error, Result};
