//! Classifier families behind one contract: CART decision tree, random
//! forest, soft-margin SVM trained by SMO, and a shallow MLP, plus the
//! z-score scaler the MLP embeds.
//!
//! Every model exposes `score` (real-valued positive-class score: a
//! probability for tree/forest/MLP, a signed margin for the SVM) and
//! `predict` (score thresholded at 0.5 for probability models, at 0 for
//! the margin; ties go negative). Fits are deterministic given a seed.

mod forest;
mod mlp;
mod svm;
mod tree;

pub use forest::{fit_forest, ForestConfig, ForestModel};
pub use mlp::{fit_mlp, MlpConfig, MlpModel, MlpParams};
pub use svm::{fit_svm, fit_svm_with_alphas, Gamma, Kernel, ResolvedKernel, SvmConfig, SvmModel};
pub use tree::{fit_tree, impurity, ClassWeight, Criterion, TreeConfig, TreeModel, TreeNode};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Label;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("impurity of all-zero class counts is undefined")]
    AllZero,
    #[error("cannot fit on an empty training set")]
    EmptyTrain,
    #[error("need both classes present, found only class {0}")]
    SingleClass(Label),
    #[error("model expects {expected} features, instance has {got}")]
    ArityMismatch { expected: usize, got: usize },
}

/// Per-feature z-score normalizer. Means and stds are population
/// statistics of the fit data; a zero-variance feature gets std 1 so
/// its scaled value is exactly 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &[Vec<f64>]) -> Scaler {
        assert!(!x.is_empty());
        let d = x[0].len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Scaler { mean, std }
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.transform_row(r)).collect()
    }
}

/// A fitted model of any family, tagged for serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Model {
    Tree(TreeModel),
    Forest(ForestModel),
    Svm(SvmModel),
    Mlp(MlpModel),
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Tree(m) => m.n_features,
            Model::Forest(m) => m.n_features,
            Model::Svm(m) => m.n_features(),
            Model::Mlp(m) => m.n_features(),
        }
    }

    pub fn algo_name(&self) -> &'static str {
        match self {
            Model::Tree(_) => "dt",
            Model::Forest(_) => "rf",
            Model::Svm(_) => "svm",
            Model::Mlp(_) => "mlp",
        }
    }

    /// Positive-class probability (tree/forest/MLP) or signed margin (SVM).
    pub fn score(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features() {
            return Err(ModelError::ArityMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(match self {
            Model::Tree(m) => m.root.score(x),
            Model::Forest(m) => m.score(x),
            Model::Svm(m) => m.margin(x),
            Model::Mlp(m) => m.probability(x),
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Label, ModelError> {
        let s = self.score(x)?;
        let threshold = match self {
            Model::Svm(_) => 0.0,
            _ => 0.5,
        };
        Ok(if s > threshold { 1 } else { 0 })
    }

    pub fn scores(&self, x: &[Vec<f64>]) -> Result<Vec<f64>, ModelError> {
        x.iter().map(|r| self.score(r)).collect()
    }

    pub fn predictions(&self, x: &[Vec<f64>]) -> Result<Vec<Label>, ModelError> {
        x.iter().map(|r| self.predict(r)).collect()
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// On-disk model envelope: format version, the feature names the model
/// was fitted on (in column order), and the tagged model itself.
///
/// JSON round-trips are bit-exact for every stored float because floats
/// are printed in shortest-round-trip form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub model: Model,
}

impl ModelFile {
    pub fn new(model: Model, feature_names: Vec<String>) -> ModelFile {
        ModelFile { format_version: MODEL_FORMAT_VERSION, feature_names, model }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<ModelFile, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Dataset;

    #[test]
    fn scaler_zero_variance_guard() {
        let x = vec![vec![5.0, 1.0], vec![5.0, 3.0]];
        let s = Scaler::fit(&x);
        assert_eq!(s.std[0], 1.0);
        assert_eq!(s.transform_row(&[5.0, 2.0]), vec![0.0, 0.0]);
        assert_eq!(s.transform_row(&[6.0, 3.0]), vec![1.0, 1.0]);
    }

    #[test]
    fn scaler_population_std() {
        let x = vec![vec![1.0], vec![3.0]];
        let s = Scaler::fit(&x);
        assert_eq!(s.mean[0], 2.0);
        assert_eq!(s.std[0], 1.0); // population std of {1,3}
    }

    #[test]
    fn model_json_round_trip_bit_exact() {
        let d = Dataset::new(
            vec![vec![1.0, 0.3], vec![2.0, 0.7], vec![3.0, 0.1], vec![10.0, 0.9], vec![11.0, 0.2]],
            vec![0, 0, 0, 1, 1],
        );
        let tree = fit_tree(&d, &TreeConfig::default()).unwrap();
        let file = ModelFile::new(Model::Tree(tree), vec!["a".into(), "b".into()]);
        let text = file.to_json();
        let back = ModelFile::from_json(&text).unwrap();
        assert_eq!(file, back);
        // serializing again yields the identical byte sequence
        assert_eq!(text, back.to_json());
    }

    #[test]
    fn arity_mismatch_detected() {
        let d = Dataset::new(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1]);
        let tree = Model::Tree(fit_tree(&d, &TreeConfig::default()).unwrap());
        assert_eq!(
            tree.score(&[1.0]),
            Err(ModelError::ArityMismatch { expected: 2, got: 1 })
        );
    }
}
