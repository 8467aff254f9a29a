//! Random forest: bagged CART trees with a uniform random feature
//! subset at every split. The forest score is the mean of the trees'
//! leaf positive-class fractions.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{grow, ClassWeight, Criterion, FeatureSampler, TreeConfig, TreeNode};
use super::ModelError;
use crate::dataset::Dataset;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    /// Features drawn per split; `None` resolves to floor(√d).
    pub max_features: Option<usize>,
    pub class_weight: ClassWeight,
}

impl Default for ForestConfig {
    fn default() -> ForestConfig {
        ForestConfig {
            n_estimators: 300,
            criterion: Criterion::Gini,
            max_depth: None,
            bootstrap: true,
            max_features: None,
            class_weight: ClassWeight::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub n_features: usize,
    pub n_estimators: usize,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub bootstrap: bool,
    pub max_features: usize,
    /// Seed that drove tree i's bootstrap draw and feature subsets.
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    pub fn score(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.score(x)).sum();
        sum / self.trees.len() as f64
    }
}

struct RandomSubset<'a> {
    rng: &'a mut ChaCha8Rng,
    m: usize,
}

impl FeatureSampler for RandomSubset<'_> {
    fn sample(&mut self, n_features: usize) -> Vec<usize> {
        let m = self.m.min(n_features);
        // Partial Fisher-Yates: first m slots hold the drawn subset.
        let mut idx: Vec<usize> = (0..n_features).collect();
        for k in 0..m {
            let j = self.rng.gen_range(k..n_features);
            idx.swap(k, j);
        }
        idx.truncate(m);
        idx.sort_unstable();
        idx
    }
}

/// Fit `n_estimators` trees, each on a bootstrap resample (unless
/// disabled as a test hook) with its own derived seed. Trees are fitted
/// in parallel; outputs depend only on `seed`, never on thread count.
pub fn fit_forest(train: &Dataset, config: &ForestConfig, seed: u64) -> Result<ForestModel, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrain);
    }
    let d = train.n_features();
    let max_features = config.max_features.unwrap_or_else(|| (d as f64).sqrt().floor() as usize).clamp(1, d);
    let tree_seeds: Vec<u64> = (0..config.n_estimators)
        .map(|i| seeding::derive_seed(seed, &["tree".into(), (i as u64).into()]))
        .collect();
    let tree_config = TreeConfig {
        criterion: config.criterion,
        max_depth: config.max_depth,
        class_weight: config.class_weight,
        min_samples_split: 2,
    };
    let n = train.len();
    let trees: Vec<TreeNode> = tree_seeds
        .par_iter()
        .map(|&tree_seed| {
            let mut rng = seeding::rng_from(tree_seed);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut counts = [0usize; 2];
            for &r in &rows {
                counts[train.y[r] as usize] += 1;
            }
            let weights = config.class_weight.weights(counts);
            let mut sampler = RandomSubset { rng: &mut rng, m: max_features };
            grow(&train.x, &train.y, rows, &tree_config, weights, 0, &mut sampler)
        })
        .collect();
    Ok(ForestModel {
        n_features: d,
        n_estimators: config.n_estimators,
        criterion: config.criterion,
        max_depth: config.max_depth,
        bootstrap: config.bootstrap,
        max_features,
        tree_seeds,
        trees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_tree;

    fn two_cluster(n_per: usize) -> Dataset {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n_per {
            x.push(vec![i as f64 * 0.1, 0.0]);
            y.push(0);
            x.push(vec![10.0 + i as f64 * 0.1, 1.0]);
            y.push(1);
        }
        Dataset::new(x, y)
    }

    #[test]
    fn single_tree_no_bootstrap_reduces_to_fit_tree() {
        let d = two_cluster(10);
        let cfg = ForestConfig {
            n_estimators: 1,
            bootstrap: false,
            max_features: Some(d.n_features()),
            ..ForestConfig::default()
        };
        let forest = fit_forest(&d, &cfg, 5).unwrap();
        let tree = fit_tree(&d, &TreeConfig::default()).unwrap();
        assert_eq!(forest.trees[0], tree.root);
    }

    #[test]
    fn scores_are_proportions() {
        use rand::Rng;
        let d = two_cluster(15);
        let cfg = ForestConfig { n_estimators: 25, ..ForestConfig::default() };
        let forest = fit_forest(&d, &cfg, 9).unwrap();
        let mut rng = seeding::rng(1, &["probe".into()]);
        for _ in 0..50 {
            let p = forest.score(&[rng.gen_range(-5.0..20.0), rng.gen_range(-1.0..2.0)]);
            assert!((0.0..=1.0).contains(&p));
        }
    }

    #[test]
    fn separated_clusters_train_accuracy_is_perfect() {
        let d = two_cluster(20);
        let cfg = ForestConfig { n_estimators: 30, ..ForestConfig::default() };
        let forest = fit_forest(&d, &cfg, 3).unwrap();
        for (row, &label) in d.x.iter().zip(&d.y) {
            let pred = u8::from(forest.score(row) > 0.5);
            assert_eq!(pred, label);
        }
    }

    #[test]
    fn tree_order_permutation_keeps_scores() {
        // Leaf values on separated data are exactly 0 or 1, so the mean
        // is exact and reversal cannot shift it.
        let d = two_cluster(12);
        let cfg = ForestConfig { n_estimators: 16, ..ForestConfig::default() };
        let mut forest = fit_forest(&d, &cfg, 21).unwrap();
        let before: Vec<f64> = d.x.iter().map(|r| forest.score(r)).collect();
        forest.trees.reverse();
        let after: Vec<f64> = d.x.iter().map(|r| forest.score(r)).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn duplicated_tree_keeps_score() {
        let d = two_cluster(8);
        let cfg = ForestConfig { n_estimators: 1, ..ForestConfig::default() };
        let single = fit_forest(&d, &cfg, 2).unwrap();
        let mut doubled = single.clone();
        doubled.trees.push(doubled.trees[0].clone());
        doubled.tree_seeds.push(doubled.tree_seeds[0]);
        doubled.n_estimators = 2;
        for row in &d.x {
            assert_eq!(single.score(row), doubled.score(row));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let d = two_cluster(10);
        let cfg = ForestConfig { n_estimators: 8, ..ForestConfig::default() };
        let a = fit_forest(&d, &cfg, 77).unwrap();
        let b = fit_forest(&d, &cfg, 77).unwrap();
        assert_eq!(a, b);
        let c = fit_forest(&d, &cfg, 78).unwrap();
        assert_ne!(a.tree_seeds, c.tree_seeds);
    }

    #[test]
    fn bootstrap_varies_trees() {
        use rand::Rng;
        let mut rng = seeding::rng(10, &["noise".into()]);
        let x: Vec<Vec<f64>> = (0..60).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y = (0..60).map(|i| (i % 2) as u8).collect();
        let d = Dataset::new(x, y);
        let cfg = ForestConfig { n_estimators: 6, ..ForestConfig::default() };
        let forest = fit_forest(&d, &cfg, 4).unwrap();
        assert!(forest.trees.windows(2).any(|w| w[0] != w[1]));
    }
}
