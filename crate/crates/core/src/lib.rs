//! Distant-supervision pipeline for sentence-level MDD assertion labeling.
//!
//! Clinical notes are segmented into sentences and weak-labeled by a
//! keyword/cue rule engine into four classes (unknown, positive, possible,
//! negated). The weak labels are balanced and split into training data for
//! baseline classifiers over CBOW sentence embeddings, and every model is
//! scored against gold labels with per-class precision, recall and F1.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the precision used by the command-line pipeline.

pub mod baselines;
pub mod cohort;
pub mod corpus;
pub mod dataset;
pub mod embeddings;
pub mod eval;
pub mod error;
pub mod jsonl;
pub mod label;
pub mod pipeline;
pub mod rules;
pub mod scalar;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
pub use label::Label;
pub use scalar::Scalar;

/// Precision used by the command-line pipeline.
pub type Real = f32;
pub type Embeddings = embeddings::EmbeddingModel<Real>;
pub type Features = baselines::FeatureMatrix<Real>;
pub type Classifier = baselines::ClassifierModel<Real>;
