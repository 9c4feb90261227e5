//! Benchmark harness for predicting where a hidden household item is stored.
//!
//! The pipeline goes from container detections of a kitchen image to a
//! container table with spatial features, a verbal scene description, a
//! prompt, a language-model answer and finally an IoU score against human
//! ground truth. The dataset side (pair sampling, annotation storage,
//! consolidation, agreement) lives alongside it.

pub mod baselines;
pub mod choice;
pub mod cli;
pub mod clock;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod features;
pub mod gateway;
pub mod geometry;
pub mod io;
pub mod pipeline;
pub mod prompts;
pub mod scene;
pub mod seeding;
pub mod service;
pub mod verbalize;

#[cfg(test)]
pub(crate) mod test_support;

pub use error::{Error, Result};
