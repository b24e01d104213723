//! Headline/body stance detection for FNC-1 style data.
//!
//! Feature pipelines (term frequencies, keyword indicators, embedding
//! similarity) feed a one-hidden-layer perceptron; member models are fused
//! into ensembles and scored with the FNC weighted metric.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod embeddings;
pub mod ensemble;
pub mod eval;
pub mod error;
pub mod features;
pub mod keywords;
pub mod mlp;
pub mod pipeline;
pub mod stopwords;
pub mod text;
pub mod transport;

pub use corpus::{Corpus, Instance, Stance};
pub use error::{Error, Result};
