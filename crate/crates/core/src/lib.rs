//! Machine-learning toolkit for imbalanced binary survey data.
//!
//! The pipeline: ingest or synthesize a coded survey table, balance the
//! minority class by synthetic oversampling (SMOTE, RWO, PDFOS), fit three
//! classifiers (logistic regression with AIC forward selection, a random
//! forest, a single-hidden-layer neural net), assess them by Monte Carlo
//! cross-validation, and aggregate per-replication variable-importance
//! rankings into a cross-model consensus.

pub mod data;
pub mod forest;
pub mod harness;
pub mod importance;
pub mod logistic;
pub mod metrics;
pub mod neuralnet;
pub mod resample;
pub mod rng;

pub use data::{Dataset, FeatureKind, FeatureSpec, SyntheticConfig};
pub use resample::{BalancedDataset, ResampleMethod};
