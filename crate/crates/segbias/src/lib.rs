//! File formats, pipelines and the command line around [`segbias_core`].
//!
//! Corpora live on disk as a `manifest.json` plus binary PGM images and
//! masks. A pipeline run writes every artifact (audit, models, evaluation,
//! separability, report) under one output directory; identical
//! configurations produce byte-identical JSON and CSV files regardless of
//! the number of worker threads.

pub mod artifacts;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod pnm;
pub mod report;
pub mod stages;

pub use error::{Error, Result};
pub use segbias_core as core;
