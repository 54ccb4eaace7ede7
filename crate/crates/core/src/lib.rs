//! Pharmacovigilance text mining: corpora for drug-review sentiment, tweet
//! ADR presence and ADR mention tagging, with the classical baselines and the
//! evaluation and error-analysis procedures shared by every model.

#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod labels;
pub mod rng;
pub mod textprep;

pub use error::{Error, Result};
pub use labels::{BioTag, Label, PresenceLabel, SentimentLabel};
