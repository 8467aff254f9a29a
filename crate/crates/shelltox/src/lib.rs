//! Prediction of diarrhetic shellfish poisoning (DSP) toxicity in farmed
//! mussels from long-term harmful-algal-bloom monitoring data.
//!
//! The crate covers the whole pipeline:
//!
//! * [`ingest`]: parsing and validating the five raw monitoring CSV
//!   families, unit harmonization, descriptive statistics.
//! * [`preprocess`]: fusing the tables into the consolidated 14-variable
//!   dataset with a binary toxicity label, overlap cleaning, and the
//!   stratified train/test split.
//! * [`resample`]: SMOTE oversampling, random undersampling, and Edited
//!   Nearest Neighbours cleaning.
//! * [`models`]: CART decision tree, random forest, soft-margin SVM via
//!   SMO, and a shallow MLP behind one classifier contract.
//! * [`evaluate`]: metrics, stratified k-fold CV, grid search, the
//!   repeated evaluation protocol, and precision–recall curves.
//! * [`explain`]: permutation importance, exact path-dependent TreeSHAP
//!   with a brute-force Shapley oracle, rule extraction, and plot-data
//!   emission.
//! * [`synth`]: a desk-scale synthetic monitoring-data generator with
//!   known ground truth.
//!
//! A narrative guide with runnable examples lives in the `book/` directory
//! of the repository; its code snippets are compiled and run as part of
//! `cargo test` (see the hidden `book` module below).

pub mod dataset;
pub mod evaluate;
pub mod explain;
pub mod ingest;
pub mod models;
pub mod preprocess;
pub mod resample;
pub mod seeding;
pub mod species;
pub mod synth;

// Keep the book's code snippets compiling: every fenced Rust block in the
// guide runs as a doctest.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data-pipeline.md")]
    mod data_pipeline {}
    #[doc = include_str!("../../../book/src/imbalance.md")]
    mod imbalance {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/evaluation.md")]
    mod evaluation {}
    #[doc = include_str!("../../../book/src/explanation.md")]
    mod explanation {}
    #[doc = include_str!("../../../book/src/synthetic-data.md")]
    mod synthetic_data {}
}
