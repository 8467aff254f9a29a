//! Labeled feature matrix shared by the resamplers, models, and
//! evaluation protocol.

use serde::{Deserialize, Serialize};

/// Binary class labels: 0 = negative toxicity, 1 = positive.
pub type Label = u8;

/// Provenance of a dataset row, used to assert that validation folds
/// never see synthetic or resampled data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RowTag {
    /// Row `i` of the dataset the pipeline started from.
    Original(usize),
    /// Interpolated minority point created by SMOTE.
    Synthetic,
}

/// A labeled dataset: one feature row per instance.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub x: Vec<Vec<f64>>,
    pub y: Vec<Label>,
    pub tags: Vec<RowTag>,
}

impl Dataset {
    /// Build a dataset whose rows are all tagged `Original(i)`.
    pub fn new(x: Vec<Vec<f64>>, y: Vec<Label>) -> Self {
        assert_eq!(x.len(), y.len(), "feature/label length mismatch");
        let tags = (0..x.len()).map(RowTag::Original).collect();
        Dataset { x, y, tags }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Number of feature columns, 0 for an empty dataset.
    pub fn n_features(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    /// Instance counts as `[negative, positive]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let pos = self.y.iter().filter(|&&l| l == 1).count();
        [self.y.len() - pos, pos]
    }

    /// Row indices of the given class, in dataset order.
    pub fn indices_of(&self, label: Label) -> Vec<usize> {
        self.y
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == label)
            .map(|(i, _)| i)
            .collect()
    }

    /// New dataset containing the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            x: indices.iter().map(|&i| self.x[i].clone()).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            tags: indices.iter().map(|&i| self.tags[i]).collect(),
        }
    }

    /// Copy of the dataset with one feature column removed.
    pub fn drop_column(&self, col: usize) -> Dataset {
        let x = self
            .x
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != col)
                    .map(|(_, &v)| v)
                    .collect()
            })
            .collect();
        Dataset { x, y: self.y.clone(), tags: self.tags.clone() }
    }
}

/// Euclidean distance between two feature rows.
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_euclidean(a, b).sqrt()
}

/// Squared Euclidean distance; same ordering as [`euclidean`], cheaper.
pub fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_counts_and_selection() {
        let d = Dataset::new(
            vec![vec![0.0], vec![1.0], vec![2.0]],
            vec![0, 1, 0],
        );
        assert_eq!(d.class_counts(), [2, 1]);
        assert_eq!(d.indices_of(0), vec![0, 2]);
        let s = d.select(&[2, 0]);
        assert_eq!(s.x, vec![vec![2.0], vec![0.0]]);
        assert_eq!(s.tags, vec![RowTag::Original(2), RowTag::Original(0)]);
    }

    #[test]
    fn drop_column_removes_exactly_one() {
        let d = Dataset::new(vec![vec![1.0, 2.0, 3.0]], vec![0]);
        assert_eq!(d.drop_column(1).x, vec![vec![1.0, 3.0]]);
    }

    #[test]
    fn distances() {
        assert_eq!(euclidean(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
        assert_eq!(squared_euclidean(&[1.0], &[4.0]), 9.0);
    }
}
