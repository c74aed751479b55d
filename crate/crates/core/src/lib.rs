//! Functionality-specific self-training for task-oriented NLU, with diversity-driven
//! selection of the pseudo-labeled augmentation set.
//!
//! The pipeline: [`corpus`] generates and persists annotated utterances, [`nlu`] trains
//! maxent classifiers and a CRF slot tagger over [`features`], [`ssl`] filters an unlabeled
//! pool and aggregates confident pseudo-labels, [`paraphrase`] learns an utterance
//! similarity scorer, [`selection`] picks a diverse subset of the augmentation set, and
//! [`harness`] measures slot error rate across annotation increments.

pub mod corpus;
pub mod error;
pub mod features;
pub mod harness;
pub mod nlu;
pub mod paraphrase;
pub mod selection;
pub mod ssl;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
