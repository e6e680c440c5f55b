//! Data ingestion, synthetic data and experiment orchestration.

pub mod data;
pub mod experiment;
pub mod text;

pub use data::{ingest_csv, stratified_split, synth_gaussian, Dataset};
pub use experiment::{run_experiment, ExperimentConfig, ExperimentReport};
pub use text::{ingest_text_corpus, tokenize, Corpus, DashPolicy};
