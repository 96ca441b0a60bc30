//! Radicalization-signal analytics over tweet corpora.
//!
//! The pipeline ingests a JSON-lines tweet stream into per-user aggregates,
//! selects a persistent promoter seed set, contrasts seed language against
//! everyone else to build a lexicon, computes four per-user signals, clusters
//! users in that signal space and tests inter-cluster retweet counts against
//! a label-shuffling null model.

pub mod analysis;
pub mod clustering;
pub mod corpus;
pub mod error;
pub mod figures;
pub mod lexicon;
pub mod matchers;
pub mod pipeline;
pub mod seeds;
pub mod signals;
pub mod synth;

pub use error::{Error, Result};
