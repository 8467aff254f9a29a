//! CART decision tree: greedy recursive partitioning on midpoint
//! thresholds, gini or entropy impurity, optional balanced class
//! weights. Rows with feature value ≤ threshold go left.

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::dataset::{Dataset, Label};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
    Entropy,
}

impl Criterion {
    pub fn name(&self) -> &'static str {
        match self {
            Criterion::Gini => "gini",
            Criterion::Entropy => "entropy",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassWeight {
    None,
    Balanced,
}

impl ClassWeight {
    /// Per-class impurity weights. Balanced: w_c = n / (2 n_c), so a
    /// class's total weighted mass is n/2 regardless of its count.
    pub fn weights(&self, counts: [usize; 2]) -> [f64; 2] {
        match self {
            ClassWeight::None => [1.0, 1.0],
            ClassWeight::Balanced => {
                let n = (counts[0] + counts[1]) as f64;
                let w = |c: usize| if c == 0 { 1.0 } else { n / (2.0 * c as f64) };
                [w(counts[0]), w(counts[1])]
            }
        }
    }
}

/// Impurity of a node with the given (possibly weighted) class counts.
/// Gini = 1 − Σ p², entropy = −Σ p log₂ p with 0·log 0 := 0.
pub fn impurity(counts: &[f64], criterion: Criterion) -> Result<f64, ModelError> {
    let total: f64 = counts.iter().sum();
    if total <= 0.0 {
        return Err(ModelError::AllZero);
    }
    Ok(impurity_unchecked(counts, total, criterion))
}

fn impurity_unchecked(counts: &[f64], total: f64, criterion: Criterion) -> f64 {
    match criterion {
        Criterion::Gini => 1.0 - counts.iter().map(|c| (c / total) * (c / total)).sum::<f64>(),
        Criterion::Entropy => counts
            .iter()
            .map(|c| {
                let p = c / total;
                if p > 0.0 {
                    -p * p.log2()
                } else {
                    0.0
                }
            })
            .sum(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub class_weight: ClassWeight,
    pub min_samples_split: usize,
}

impl Default for TreeConfig {
    fn default() -> TreeConfig {
        TreeConfig {
            criterion: Criterion::Gini,
            max_depth: None,
            class_weight: ClassWeight::None,
            min_samples_split: 2,
        }
    }
}

/// A fitted tree node. Every node carries the class counts (covers) of
/// the training rows that reached it and its positive-class fraction;
/// internal nodes route `x[feature_index] ≤ threshold` to the left
/// child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature_index: usize,
        threshold: f64,
        covers: [usize; 2],
        value: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        covers: [usize; 2],
        value: f64,
    },
}

impl TreeNode {
    pub fn covers(&self) -> [usize; 2] {
        match self {
            TreeNode::Internal { covers, .. } | TreeNode::Leaf { covers, .. } => *covers,
        }
    }

    /// Total training rows that reached this node.
    pub fn cover(&self) -> f64 {
        let c = self.covers();
        (c[0] + c[1]) as f64
    }

    pub fn value(&self) -> f64 {
        match self {
            TreeNode::Internal { value, .. } | TreeNode::Leaf { value, .. } => *value,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Positive-class fraction of the leaf this instance routes to.
    pub fn score(&self, x: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value, .. } => *value,
            TreeNode::Internal { feature_index, threshold, left, right, .. } => {
                if x[*feature_index] <= *threshold {
                    left.score(x)
                } else {
                    right.score(x)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeModel {
    pub n_features: usize,
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub class_weight: ClassWeight,
    pub root: TreeNode,
}

/// Candidate-feature source for one split. Plain trees consider every
/// feature; forests draw a random subset per split.
pub(crate) trait FeatureSampler {
    /// Candidate feature indices, ascending (the tie rule depends on it).
    fn sample(&mut self, n_features: usize) -> Vec<usize>;
}

pub(crate) struct AllFeatures;

impl FeatureSampler for AllFeatures {
    fn sample(&mut self, n_features: usize) -> Vec<usize> {
        (0..n_features).collect()
    }
}

fn class_counts(y: &[Label], rows: &[usize]) -> [usize; 2] {
    let mut c = [0usize; 2];
    for &r in rows {
        c[y[r] as usize] += 1;
    }
    c
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Cover-weighted mean child impurity; lower is better. Ties keep
    /// the earlier candidate (lower feature index, then lower threshold).
    child_impurity: f64,
}

fn find_best_split(
    x: &[Vec<f64>],
    y: &[Label],
    rows: &[usize],
    weights: [f64; 2],
    criterion: Criterion,
    features: &[usize],
) -> Option<BestSplit> {
    if rows.len() < 2 {
        return None;
    }
    let total_w: f64 = rows
        .iter()
        .map(|&r| weights[y[r] as usize])
        .sum();
    let mut best: Option<BestSplit> = None;
    let mut order: Vec<usize> = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = [0.0f64; 2];
        let mut right = [0.0f64; 2];
        for &r in &order {
            right[y[r] as usize] += weights[y[r] as usize];
        }
        for w in 0..order.len() - 1 {
            let r = order[w];
            left[y[r] as usize] += weights[y[r] as usize];
            right[y[r] as usize] -= weights[y[r] as usize];
            let (lo, hi) = (x[order[w]][f], x[order[w + 1]][f]);
            if lo == hi {
                continue;
            }
            // Snap a midpoint that rounds up onto `hi` back to `lo` so
            // the ≤ comparison keeps both children non-empty.
            let mut threshold = (lo + hi) / 2.0;
            if threshold == hi {
                threshold = lo;
            }
            let lw: f64 = left.iter().sum();
            let rw = total_w - lw;
            let child = (lw * impurity_unchecked(&left, lw, criterion)
                + rw * impurity_unchecked(&right, rw, criterion))
                / total_w;
            if best.as_ref().map_or(true, |b| child < b.child_impurity) {
                best = Some(BestSplit { feature: f, threshold, child_impurity: child });
            }
        }
    }
    best
}

pub(crate) fn grow(
    x: &[Vec<f64>],
    y: &[Label],
    rows: Vec<usize>,
    config: &TreeConfig,
    weights: [f64; 2],
    depth: usize,
    sampler: &mut dyn FeatureSampler,
) -> TreeNode {
    let covers = class_counts(y, &rows);
    let value = covers[1] as f64 / (covers[0] + covers[1]) as f64;
    let at_depth_cap = config.max_depth.is_some_and(|m| depth >= m);
    let pure = covers[0] == 0 || covers[1] == 0;
    if pure || at_depth_cap || rows.len() < config.min_samples_split {
        return TreeNode::Leaf { covers, value };
    }
    let features = sampler.sample(x[0].len());
    let Some(split) = find_best_split(x, y, &rows, weights, config.criterion, &features) else {
        // All candidate features are constant on these rows.
        return TreeNode::Leaf { covers, value };
    };
    let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
        rows.into_iter().partition(|&r| x[r][split.feature] <= split.threshold);
    let left = grow(x, y, left_rows, config, weights, depth + 1, sampler);
    let right = grow(x, y, right_rows, config, weights, depth + 1, sampler);
    TreeNode::Internal {
        feature_index: split.feature,
        threshold: split.threshold,
        covers,
        value,
        left: Box::new(left),
        right: Box::new(right),
    }
}

/// Fit a CART tree. Candidate thresholds are midpoints of consecutive
/// distinct sorted values per feature; the split maximizing weighted
/// impurity decrease wins, ties resolved to the lower feature index and
/// then the lower threshold.
pub fn fit_tree(train: &Dataset, config: &TreeConfig) -> Result<TreeModel, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrain);
    }
    let weights = config.class_weight.weights(train.class_counts());
    let rows: Vec<usize> = (0..train.len()).collect();
    let root = grow(&train.x, &train.y, rows, config, weights, 0, &mut AllFeatures);
    Ok(TreeModel {
        n_features: train.n_features(),
        criterion: config.criterion,
        max_depth: config.max_depth,
        class_weight: config.class_weight,
        root,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn impurity_examples() {
        assert_eq!(impurity(&[50.0, 50.0], Criterion::Gini).unwrap(), 0.5);
        assert_eq!(impurity(&[50.0, 50.0], Criterion::Entropy).unwrap(), 1.0);
        assert_eq!(impurity(&[7.0, 0.0], Criterion::Gini).unwrap(), 0.0);
        assert_eq!(impurity(&[7.0, 0.0], Criterion::Entropy).unwrap(), 0.0);
        assert_eq!(impurity(&[0.0, 0.0], Criterion::Gini), Err(ModelError::AllZero));
        // entropy of (25, 75)
        let e = impurity(&[25.0, 75.0], Criterion::Entropy).unwrap();
        assert_abs_diff_eq!(e, -(0.25f64.log2() * 0.25 + 0.75f64.log2() * 0.75), epsilon = 1e-15);
    }

    #[test]
    fn balanced_weights_equalize_mass() {
        let w = ClassWeight::Balanced.weights([90, 10]);
        assert_abs_diff_eq!(w[0] * 90.0, 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w[1] * 10.0, 50.0, epsilon = 1e-12);
        let g = impurity(&[90.0 * w[0], 10.0 * w[1]], Criterion::Gini).unwrap();
        assert_abs_diff_eq!(g, 0.5, epsilon = 1e-12);
    }

    fn one_d(neg: &[f64], pos: &[f64]) -> Dataset {
        let mut x: Vec<Vec<f64>> = neg.iter().map(|&v| vec![v]).collect();
        x.extend(pos.iter().map(|&v| vec![v]));
        let mut y = vec![0; neg.len()];
        y.extend(vec![1; pos.len()]);
        Dataset::new(x, y)
    }

    /// Exhaustive split-scan oracle for the root: enumerate every
    /// midpoint threshold of every feature and return the best
    /// (feature, threshold) by gini decrease with the same tie rule.
    fn oracle_root_split(d: &Dataset) -> (usize, f64) {
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..d.n_features() {
            let mut vals: Vec<f64> = d.x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for pair in vals.windows(2) {
                let t = (pair[0] + pair[1]) / 2.0;
                let mut l = [0.0; 2];
                let mut r = [0.0; 2];
                for (row, &label) in d.x.iter().zip(&d.y) {
                    if row[f] <= t {
                        l[label as usize] += 1.0;
                    } else {
                        r[label as usize] += 1.0;
                    }
                }
                let (lw, rw) = (l[0] + l[1], r[0] + r[1]);
                let child = (lw * impurity(&l, Criterion::Gini).unwrap()
                    + rw * impurity(&r, Criterion::Gini).unwrap())
                    / (lw + rw);
                if best.map_or(true, |(b, _, _)| child < b) {
                    best = Some((child, f, t));
                }
            }
        }
        let (_, f, t) = best.unwrap();
        (f, t)
    }

    #[test]
    fn separated_one_d_fixture_splits_at_midgap() {
        let d = one_d(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        let model = fit_tree(&d, &TreeConfig::default()).unwrap();
        let TreeNode::Internal { feature_index, threshold, ref left, ref right, .. } = model.root
        else {
            panic!("expected a split at the root");
        };
        assert_eq!(feature_index, 0);
        assert_eq!(threshold, 6.5);
        assert!(left.is_leaf() && right.is_leaf());
        assert_eq!(left.covers(), [3, 0]);
        assert_eq!(right.covers(), [0, 3]);
        assert_eq!(oracle_root_split(&d), (0, 6.5));
    }

    #[test]
    fn root_split_matches_oracle_on_random_data() {
        use rand::Rng;
        let mut rng = crate::seeding::rng(4242, &["tree-oracle".into()]);
        for _ in 0..25 {
            let n = rng.gen_range(5..40);
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..4).map(|_| (rng.gen_range(0..8) as f64) / 2.0).collect())
                .collect();
            let y: Vec<Label> = (0..n).map(|_| rng.gen_range(0..2) as Label).collect();
            let d = Dataset::new(x, y);
            if d.class_counts().contains(&0) {
                continue;
            }
            let cfg = TreeConfig { max_depth: Some(1), ..TreeConfig::default() };
            let model = fit_tree(&d, &cfg).unwrap();
            match model.root {
                TreeNode::Internal { feature_index, threshold, .. } => {
                    assert_eq!((feature_index, threshold), oracle_root_split(&d));
                }
                TreeNode::Leaf { .. } => {
                    // only legitimate when every feature is constant
                    assert!((0..d.n_features()).all(|f| {
                        d.x.iter().all(|r| r[f] == d.x[0][f])
                    }));
                }
            }
        }
    }

    #[test]
    fn single_class_gives_depth_zero_leaf() {
        let d = one_d(&[1.0, 2.0, 3.0], &[]);
        let model = fit_tree(&d, &TreeConfig::default()).unwrap();
        assert_eq!(model.root, TreeNode::Leaf { covers: [3, 0], value: 0.0 });
    }

    #[test]
    fn empty_train_rejected() {
        let d = Dataset::new(vec![], vec![]);
        assert!(matches!(fit_tree(&d, &TreeConfig::default()), Err(ModelError::EmptyTrain)));
    }

    #[test]
    fn constant_features_give_leaf() {
        let d = Dataset::new(vec![vec![2.0], vec![2.0], vec![2.0]], vec![0, 1, 0]);
        let model = fit_tree(&d, &TreeConfig::default()).unwrap();
        assert_eq!(model.root, TreeNode::Leaf { covers: [2, 1], value: 1.0 / 3.0 });
    }

    #[test]
    fn max_depth_respected() {
        use rand::Rng;
        let mut rng = crate::seeding::rng(7, &["depth".into()]);
        let x: Vec<Vec<f64>> = (0..64).map(|_| vec![rng.gen::<f64>(), rng.gen::<f64>()]).collect();
        let y: Vec<Label> = (0..64).map(|_| rng.gen_range(0..2) as Label).collect();
        let d = Dataset::new(x, y);
        for cap in 1..4 {
            let cfg = TreeConfig { max_depth: Some(cap), ..TreeConfig::default() };
            let model = fit_tree(&d, &cfg).unwrap();
            assert!(model.root.depth() <= cap);
        }
    }

    fn assert_covers_consistent(node: &TreeNode) {
        if let TreeNode::Internal { covers, left, right, .. } = node {
            let (lc, rc) = (left.covers(), right.covers());
            assert_eq!(covers[0], lc[0] + rc[0]);
            assert_eq!(covers[1], lc[1] + rc[1]);
            assert_covers_consistent(left);
            assert_covers_consistent(right);
        }
    }

    fn route_and_count(node: &TreeNode, d: &Dataset) {
        // Re-route every training row; recomputed covers must equal the
        // stored ones at every node.
        fn recurse(node: &TreeNode, d: &Dataset, rows: Vec<usize>) {
            let mut c = [0usize; 2];
            for &r in &rows {
                c[d.y[r] as usize] += 1;
            }
            assert_eq!(node.covers(), c);
            if let TreeNode::Internal { feature_index, threshold, left, right, .. } = node {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| d.x[i][*feature_index] <= *threshold);
                recurse(left, d, l);
                recurse(right, d, r);
            }
        }
        recurse(node, d, (0..d.len()).collect());
    }

    #[test]
    fn covers_sum_and_routing_agree() {
        use rand::Rng;
        let mut rng = crate::seeding::rng(11, &["covers".into()]);
        let x: Vec<Vec<f64>> = (0..80)
            .map(|_| (0..3).map(|_| (rng.gen_range(0..10) as f64) / 3.0).collect())
            .collect();
        let y: Vec<Label> = (0..80).map(|_| rng.gen_range(0..2) as Label).collect();
        let d = Dataset::new(x, y);
        let model = fit_tree(&d, &TreeConfig::default()).unwrap();
        assert_covers_consistent(&model.root);
        route_and_count(&model.root, &d);
    }

    #[test]
    fn entropy_criterion_also_separates() {
        let d = one_d(&[1.0, 2.0, 3.0], &[10.0, 11.0, 12.0]);
        let cfg = TreeConfig { criterion: Criterion::Entropy, ..TreeConfig::default() };
        let model = fit_tree(&d, &cfg).unwrap();
        assert_eq!(model.root.score(&[2.0]), 0.0);
        assert_eq!(model.root.score(&[11.0]), 1.0);
    }

    #[test]
    fn pure_leaf_scores_are_exact() {
        let d = one_d(&[1.0, 2.0], &[5.0, 6.0]);
        let model = fit_tree(&d, &TreeConfig::default()).unwrap();
        for v in [0.0, 1.0, 2.0, 3.4] {
            assert_eq!(model.root.score(&[v]), 0.0);
        }
        for v in [3.6, 5.0, 9.0] {
            assert_eq!(model.root.score(&[v]), 1.0);
        }
    }
}
