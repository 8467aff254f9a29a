//! Neighbor-based resampling primitives: SMOTE oversampling, random
//! undersampling of the majority class, and Edited Nearest Neighbours
//! cleaning.
//!
//! Conventions shared by all three:
//!
//! * the positive class (label 1) is the minority class of this pipeline;
//! * distances are plain Euclidean on raw feature values (callers that
//!   want z-scored distances pass a scaled feature matrix);
//! * ratio targets are rounded half away from zero;
//! * identical seeds give identical outputs regardless of thread count.

use rand::seq::SliceRandom;
use rand::Rng;
use thiserror::Error;

use crate::dataset::{squared_euclidean, Dataset, Label, RowTag};
use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum ResampleError {
    #[error("need {needed} neighbors but only {available} candidates in scope")]
    TooFewNeighbors { needed: usize, available: usize },
    #[error("SMOTE needs at least k+1 = {needed} minority instances, found {found}")]
    TooFewMinority { needed: usize, found: usize },
    #[error("ENN needs at least k+1 = {needed} instances, found {found}")]
    TooFewInstances { needed: usize, found: usize },
    #[error("invalid resample config: {0}")]
    InvalidConfig(String),
}

/// Hyperparameters of the SMOTE → undersample stage.
///
/// Both strategies are desired minority/majority ratios after the
/// respective step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig {
    pub smote_k: usize,
    pub smote_strategy: f64,
    pub under_strategy: f64,
    pub seed: u64,
}

impl ResampleConfig {
    pub fn validate(&self) -> Result<(), ResampleError> {
        if self.smote_k < 1 {
            return Err(ResampleError::InvalidConfig("smote_k must be >= 1".into()));
        }
        for (name, s) in [("smote_strategy", self.smote_strategy), ("under_strategy", self.under_strategy)] {
            if !(s > 0.0 && s <= 1.0) {
                return Err(ResampleError::InvalidConfig(format!(
                    "{name} must be in (0, 1], got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Round half away from zero, the convention for all ratio targets.
pub fn round_half_away(v: f64) -> usize {
    v.round() as usize
}

/// The `k` nearest rows to `x[query]` by Euclidean distance, searched
/// among `scope` (the query itself is skipped if present), ties broken
/// by lower row index.
pub fn knn(
    x: &[Vec<f64>],
    query: usize,
    k: usize,
    scope: &[usize],
) -> Result<Vec<usize>, ResampleError> {
    let mut dists: Vec<(f64, usize)> = scope
        .iter()
        .copied()
        .filter(|&i| i != query)
        .map(|i| (squared_euclidean(&x[query], &x[i]), i))
        .collect();
    if dists.len() < k {
        return Err(ResampleError::TooFewNeighbors { needed: k, available: dists.len() });
    }
    dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(dists.into_iter().take(k).map(|(_, i)| i).collect())
}

/// SMOTE: append synthetic minority points until the minority count
/// reaches `round(smote_strategy * majority count)`.
///
/// Each synthetic point is `x + u * (x_nn - x)` with `u ~ Uniform[0, 1)`,
/// `x` a seed-chosen minority point and `x_nn` one of its `smote_k`
/// nearest minority neighbors. Synthetic rows carry label 1 and the
/// `Synthetic` provenance tag.
pub fn smote(train: &Dataset, cfg: &ResampleConfig) -> Result<Dataset, ResampleError> {
    cfg.validate()?;
    let minority: Vec<usize> = train.indices_of(1);
    let [majority_n, minority_n] = {
        let c = train.class_counts();
        [c[0], c[1]]
    };
    if minority_n < cfg.smote_k + 1 {
        return Err(ResampleError::TooFewMinority { needed: cfg.smote_k + 1, found: minority_n });
    }
    let target = round_half_away(cfg.smote_strategy * majority_n as f64);
    if target <= minority_n {
        return Ok(train.clone());
    }

    // Neighbor tables are computed once, on the original minority set.
    let mut neighbor_table: Vec<Vec<usize>> = Vec::with_capacity(minority.len());
    for &i in &minority {
        neighbor_table.push(knn(&train.x, i, cfg.smote_k, &minority)?);
    }

    let mut rng = seeding::rng(cfg.seed, &["smote".into()]);
    let mut out = train.clone();
    for _ in 0..target - minority_n {
        let pick = rng.gen_range(0..minority.len());
        let base = minority[pick];
        let nn = neighbor_table[pick][rng.gen_range(0..cfg.smote_k)];
        let u: f64 = rng.gen::<f64>();
        let row: Vec<f64> = train.x[base]
            .iter()
            .zip(&train.x[nn])
            .map(|(a, b)| a + u * (b - a))
            .collect();
        out.x.push(row);
        out.y.push(1);
        out.tags.push(RowTag::Synthetic);
    }
    Ok(out)
}

/// Random undersampling: keep a seed-chosen uniform subset of majority
/// rows so that `majority count = round(minority count / under_strategy)`;
/// identity when the target is already met. Minority rows and original
/// row order are untouched.
pub fn random_undersample(train: &Dataset, cfg: &ResampleConfig) -> Result<Dataset, ResampleError> {
    cfg.validate()?;
    let [majority_n, minority_n] = train.class_counts();
    debug_assert!(majority_n > 0 && minority_n > 0, "both classes must be present");
    let target = round_half_away(minority_n as f64 / cfg.under_strategy);
    if target >= majority_n {
        return Ok(train.clone());
    }
    let mut majority = train.indices_of(0);
    let mut rng = seeding::rng(cfg.seed, &["undersample".into()]);
    majority.shuffle(&mut rng);
    majority.truncate(target);
    majority.sort_unstable();

    let mut keep: Vec<usize> = train.indices_of(1);
    keep.extend(majority);
    keep.sort_unstable();
    Ok(train.select(&keep))
}

/// Outcome of an ENN pass: the cleaned dataset plus the removed row
/// indices (into the input dataset), ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct EnnOutcome {
    pub dataset: Dataset,
    pub removed: Vec<usize>,
}

/// Edited Nearest Neighbours, strict variant: an instance of
/// `edited_class` is removed iff any of its `k` nearest neighbors
/// (searched over all classes) carries a different label.
///
/// All removal decisions are made against the original dataset and
/// applied at once, so the result is independent of row order.
pub fn enn(dataset: &Dataset, k: usize, edited_class: Label) -> Result<EnnOutcome, ResampleError> {
    enn_with_features(dataset, &dataset.x, k, edited_class)
}

/// [`enn`] with an alternative feature matrix used only for the
/// neighbor search (e.g. z-scored copies of the rows).
pub fn enn_with_features(
    dataset: &Dataset,
    features: &[Vec<f64>],
    k: usize,
    edited_class: Label,
) -> Result<EnnOutcome, ResampleError> {
    assert_eq!(features.len(), dataset.len());
    if dataset.len() < k + 1 {
        return Err(ResampleError::TooFewInstances { needed: k + 1, found: dataset.len() });
    }
    let all: Vec<usize> = (0..dataset.len()).collect();
    let mut removed = Vec::new();
    for i in 0..dataset.len() {
        if dataset.y[i] != edited_class {
            continue;
        }
        let neighbors = knn(features, i, k, &all)?;
        if neighbors.iter().any(|&j| dataset.y[j] != edited_class) {
            removed.push(i);
        }
    }
    let keep: Vec<usize> = (0..dataset.len()).filter(|i| !removed.contains(i)).collect();
    Ok(EnnOutcome { dataset: dataset.select(&keep), removed })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_d(points: &[(f64, Label)]) -> Dataset {
        Dataset::new(points.iter().map(|(v, _)| vec![*v]).collect(), points.iter().map(|(_, l)| *l).collect())
    }

    fn cfg(k: usize, smote_s: f64, under_s: f64, seed: u64) -> ResampleConfig {
        ResampleConfig { smote_k: k, smote_strategy: smote_s, under_strategy: under_s, seed }
    }

    #[test]
    fn knn_basic_and_tie_rule() {
        let x = vec![vec![0.0], vec![1.0], vec![10.0]];
        assert_eq!(knn(&x, 0, 1, &[0, 1, 2]).unwrap(), vec![1]);
        // 0.0 and 2.0 are equidistant from 1.0; lower index wins.
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        assert_eq!(knn(&x, 1, 1, &[0, 1, 2]).unwrap(), vec![0]);
    }

    #[test]
    fn knn_too_few() {
        let x = vec![vec![0.0], vec![1.0]];
        assert_eq!(
            knn(&x, 0, 2, &[0, 1]),
            Err(ResampleError::TooFewNeighbors { needed: 2, available: 1 })
        );
    }

    #[test]
    fn knn_matches_exhaustive_scan() {
        use rand::Rng;
        let mut rng = seeding::rng(99, &["knn-oracle".into()]);
        let x: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let scope: Vec<usize> = (0..50).collect();
        for q in 0..50 {
            // Independent oracle: full sort of (distance, index) pairs.
            let mut pairs: Vec<(f64, usize)> = scope
                .iter()
                .filter(|&&i| i != q)
                .map(|&i| {
                    let d: f64 = x[q].iter().zip(&x[i]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                    (d, i)
                })
                .collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let expected: Vec<usize> = pairs.iter().take(7).map(|&(_, i)| i).collect();
            assert_eq!(knn(&x, q, 7, &scope).unwrap(), expected);
        }
    }

    #[test]
    fn smote_hits_target_count() {
        // majority 100, minority 20, strategy 0.4 -> minority becomes 40.
        let mut pts: Vec<(f64, Label)> = (0..100).map(|i| (i as f64, 0)).collect();
        pts.extend((0..20).map(|i| (200.0 + i as f64, 1)));
        let d = one_d(&pts);
        let out = smote(&d, &cfg(3, 0.4, 0.5, 7)).unwrap();
        assert_eq!(out.class_counts(), [100, 40]);
        assert_eq!(out.len(), 140);
        // never deletes rows
        assert_eq!(&out.x[..d.len()], &d.x[..]);
    }

    #[test]
    fn smote_noop_when_target_met() {
        let mut pts: Vec<(f64, Label)> = (0..100).map(|i| (i as f64, 0)).collect();
        pts.extend((0..20).map(|i| (200.0 + i as f64, 1)));
        let d = one_d(&pts);
        let out = smote(&d, &cfg(3, 0.1, 0.5, 7)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn smote_identical_minority_points_yield_identical_synthetics() {
        let mut pts: Vec<(f64, Label)> = (0..10).map(|i| (i as f64, 0)).collect();
        pts.extend(std::iter::repeat((42.0, 1)).take(5));
        let d = one_d(&pts);
        let out = smote(&d, &cfg(3, 0.8, 0.5, 7)).unwrap();
        for row in &out.x[d.len()..] {
            assert_eq!(row, &vec![42.0]);
        }
    }

    #[test]
    fn smote_too_few_minority() {
        let d = one_d(&[(0.0, 0), (1.0, 0), (2.0, 1), (3.0, 1)]);
        assert_eq!(
            smote(&d, &cfg(3, 0.9, 0.5, 7)),
            Err(ResampleError::TooFewMinority { needed: 4, found: 2 })
        );
    }

    #[test]
    fn undersample_hits_target() {
        let mut pts: Vec<(f64, Label)> = (0..100).map(|i| (i as f64, 0)).collect();
        pts.extend((0..40).map(|i| (200.0 + i as f64, 1)));
        let d = one_d(&pts);
        let out = random_undersample(&d, &cfg(3, 0.4, 0.5, 7)).unwrap();
        assert_eq!(out.class_counts(), [80, 40]);
        // balanced at strategy 1.0
        let out = random_undersample(&d, &cfg(3, 0.4, 1.0, 7)).unwrap();
        assert_eq!(out.class_counts(), [40, 40]);
        // identity when target >= current
        let out = random_undersample(&d, &cfg(3, 0.4, 0.401, 7)).unwrap();
        assert_eq!(out, d);
    }

    #[test]
    fn enn_identity_on_separated_clusters() {
        // Four negatives: each one's 3-NN stay inside its own cluster.
        let d = one_d(&[(0.0, 0), (0.1, 0), (0.2, 0), (0.3, 0), (10.0, 1), (10.1, 1), (10.2, 1)]);
        let out = enn(&d, 3, 0).unwrap();
        assert!(out.removed.is_empty());
        assert_eq!(out.dataset, d);
    }

    #[test]
    fn enn_single_boundary_removal() {
        // neg {0.0, 0.1, 0.2, 0.3}, pos {0.5, 5.0, 5.1}.
        // Row 3 (0.3) is tied 0.2 away from both 0.1 (idx 1) and 0.5
        // (idx 4); both fit within its 3-NN {0.2, 0.1, 0.5}, so the
        // positive at 0.5 flags it. Rows 0..=2 keep all-negative
        // neighborhoods and survive.
        let d = one_d(&[(0.0, 0), (0.1, 0), (0.2, 0), (0.3, 0), (0.5, 1), (5.0, 1), (5.1, 1)]);
        let out = enn(&d, 3, 0).unwrap();
        assert_eq!(out.removed, vec![3]);
        assert_eq!(out.dataset.class_counts(), [3, 3]);
        assert_eq!(out.dataset.x, vec![vec![0.0], vec![0.1], vec![0.2], vec![0.5], vec![5.0], vec![5.1]]);
    }

    #[test]
    fn enn_hand_computed_removals() {
        // neg {0.0, 0.1}, pos {0.2, 0.3, 0.4}, k=3:
        // 3-NN of 0.1 = {0.0, 0.2, 0.3} -> disagreeing neighbor -> removed
        // 3-NN of 0.0 = {0.1, 0.2, 0.3} -> removed
        let d = one_d(&[(0.0, 0), (0.1, 0), (0.2, 1), (0.3, 1), (0.4, 1)]);
        let out = enn(&d, 3, 0).unwrap();
        assert_eq!(out.removed, vec![0, 1]);
        assert_eq!(out.dataset.class_counts(), [0, 3]);
    }

    #[test]
    fn enn_removal_set_independent_of_row_order() {
        let pts = [(0.0, 0), (0.35, 0), (0.3, 1), (5.0, 1), (0.15, 0)];
        let d = one_d(&pts);
        let out = enn(&d, 2, 0).unwrap();
        let removed_values: Vec<f64> = out.removed.iter().map(|&i| d.x[i][0]).collect();

        let mut rev: Vec<(f64, Label)> = pts.to_vec();
        rev.reverse();
        let d2 = one_d(&rev);
        let out2 = enn(&d2, 2, 0).unwrap();
        let mut removed_values2: Vec<f64> = out2.removed.iter().map(|&i| d2.x[i][0]).collect();
        removed_values2.reverse();
        assert_eq!(removed_values, removed_values2);
    }

    #[test]
    fn enn_never_touches_positive_class() {
        let d = one_d(&[(0.0, 0), (0.01, 1), (0.02, 0), (0.03, 1), (5.0, 1)]);
        let out = enn(&d, 3, 0).unwrap();
        assert_eq!(out.dataset.class_counts()[1], 3);
    }

    #[test]
    fn enn_too_few() {
        let d = one_d(&[(0.0, 0), (1.0, 1)]);
        assert_eq!(
            enn(&d, 3, 0),
            Err(ResampleError::TooFewInstances { needed: 4, found: 2 })
        );
    }

    #[test]
    fn determinism_same_seed_same_output() {
        let mut pts: Vec<(f64, Label)> = (0..30).map(|i| (i as f64, 0)).collect();
        pts.extend((0..8).map(|i| (100.0 + i as f64, 1)));
        let d = one_d(&pts);
        let c = cfg(3, 0.9, 0.8, 123);
        assert_eq!(smote(&d, &c).unwrap(), smote(&d, &c).unwrap());
        assert_eq!(random_undersample(&d, &c).unwrap(), random_undersample(&d, &c).unwrap());
    }
}
