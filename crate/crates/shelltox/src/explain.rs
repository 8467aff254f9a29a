//! Model explanation: exact Shapley values for trees and forests,
//! permutation importance, human-readable decision rules with DOT
//! export, and the tabular data behind beeswarm and force plots.
//!
//! Shapley values use the path-dependent conditional expectation game:
//! features in the coalition follow the instance down the tree,
//! features outside it split into both children weighted by training
//! cover. [`treeshap`] computes this exactly in polynomial time;
//! [`shap_bruteforce`] evaluates the defining sum over all 2^d
//! coalitions and exists to cross-check it. Explanations are in
//! positive-class probability units.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::dataset::Label;
use crate::evaluate::{self, compute_metrics, EvalError, Metrics};
use crate::models::{Model, TreeNode};
use crate::seeding;

#[derive(Debug, Error, PartialEq)]
pub enum ExplainError {
    #[error("model expects {expected} features, instance has {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("brute-force Shapley enumerates 2^d coalitions; {got} features exceeds the cap of {max}")]
    TooManyFeatures { max: usize, got: usize },
    #[error("tree node with zero cover; the model was not fitted on data")]
    MissingCovers,
    #[error("`{algo}` models have no tree structure to explain")]
    UnsupportedModel { algo: &'static str },
    #[error("no explanations given")]
    NoExplanations,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Shapley explanation of one prediction. `base` is the expected model
/// output over the training distribution; local accuracy guarantees
/// `base + Σ phi = fx` within 1e-9.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Explanation {
    pub phi: Vec<f64>,
    pub base: f64,
    pub fx: f64,
    pub x: Vec<f64>,
}

fn tree_roots(model: &Model) -> Result<Vec<&TreeNode>, ExplainError> {
    match model {
        Model::Tree(t) => Ok(vec![&t.root]),
        Model::Forest(f) => Ok(f.trees.iter().collect()),
        other => Err(ExplainError::UnsupportedModel { algo: other.algo_name() }),
    }
}

/// Cover-weighted mean leaf value of one tree.
fn tree_expected_value(root: &TreeNode) -> Result<f64, ExplainError> {
    fn weighted_sum(node: &TreeNode) -> f64 {
        match node {
            TreeNode::Leaf { .. } => node.cover() * node.value(),
            TreeNode::Internal { left, right, .. } => weighted_sum(left) + weighted_sum(right),
        }
    }
    let total = root.cover();
    if total == 0.0 {
        return Err(ExplainError::MissingCovers);
    }
    Ok(weighted_sum(root) / total)
}

/// Expected model output over the training distribution: the
/// cover-weighted mean of leaf values, averaged over a forest's trees.
pub fn expected_value(model: &Model) -> Result<f64, ExplainError> {
    let roots = tree_roots(model)?;
    let sum: f64 = roots.iter().map(|r| tree_expected_value(r)).sum::<Result<f64, _>>()?;
    Ok(sum / roots.len() as f64)
}

/// One entry of the feature-coalition path tracked by the TreeSHAP
/// recursion. Index 0 is the path base and carries no feature.
#[derive(Debug, Clone, Copy)]
struct PathElement {
    feature: Option<usize>,
    /// Fraction of cover flowing through when the feature is out of
    /// the coalition.
    zero_fraction: f64,
    /// 1 when the instance's own path goes this way, else 0.
    one_fraction: f64,
    /// Summed permutation weight of coalitions of this size.
    pweight: f64,
}

fn extend_path(path: &mut Vec<PathElement>, zero_fraction: f64, one_fraction: f64, feature: Option<usize>) {
    let n = path.len();
    path.push(PathElement {
        feature,
        zero_fraction,
        one_fraction,
        pweight: if n == 0 { 1.0 } else { 0.0 },
    });
    let scale = 1.0 / (n as f64 + 1.0);
    for i in (0..n).rev() {
        path[i + 1].pweight += one_fraction * path[i].pweight * (i as f64 + 1.0) * scale;
        path[i].pweight = zero_fraction * path[i].pweight * ((n - i) as f64) * scale;
    }
}

fn unwind_path(path: &mut Vec<PathElement>, index: usize) {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut next_one = path[depth].pweight;
    for i in (0..depth).rev() {
        if one_fraction != 0.0 {
            let tmp = path[i].pweight;
            path[i].pweight = next_one * (depth as f64 + 1.0) / ((i as f64 + 1.0) * one_fraction);
            next_one =
                tmp - path[i].pweight * zero_fraction * ((depth - i) as f64) / (depth as f64 + 1.0);
        } else {
            path[i].pweight =
                path[i].pweight * (depth as f64 + 1.0) / (zero_fraction * (depth - i) as f64);
        }
    }
    for i in index..depth {
        path[i].feature = path[i + 1].feature;
        path[i].zero_fraction = path[i + 1].zero_fraction;
        path[i].one_fraction = path[i + 1].one_fraction;
    }
    path.pop();
}

/// Total permutation weight the element at `index` would leave behind
/// if unwound, without mutating the path.
fn unwound_path_sum(path: &[PathElement], index: usize) -> f64 {
    let depth = path.len() - 1;
    let one_fraction = path[index].one_fraction;
    let zero_fraction = path[index].zero_fraction;
    let mut total = 0.0;
    if one_fraction != 0.0 {
        let mut next_one = path[depth].pweight;
        for i in (0..depth).rev() {
            let tmp = next_one / ((i as f64 + 1.0) * one_fraction);
            total += tmp;
            next_one = path[i].pweight - tmp * zero_fraction * ((depth - i) as f64);
        }
    } else {
        for i in (0..depth).rev() {
            total += path[i].pweight / (zero_fraction * (depth - i) as f64);
        }
    }
    total * (depth as f64 + 1.0)
}

fn shap_recurse(
    node: &TreeNode,
    x: &[f64],
    phi: &mut [f64],
    mut path: Vec<PathElement>,
    zero_fraction: f64,
    one_fraction: f64,
    feature: Option<usize>,
) -> Result<(), ExplainError> {
    extend_path(&mut path, zero_fraction, one_fraction, feature);
    match node {
        TreeNode::Leaf { value, .. } => {
            for i in 1..path.len() {
                let w = unwound_path_sum(&path, i);
                let el = path[i];
                let f = el.feature.expect("non-base path elements carry a feature");
                phi[f] += w * (el.one_fraction - el.zero_fraction) * value;
            }
        }
        TreeNode::Internal { feature_index, threshold, left, right, .. } => {
            let total = node.cover();
            if total == 0.0 {
                return Err(ExplainError::MissingCovers);
            }
            let (hot, cold): (&TreeNode, &TreeNode) = if x[*feature_index] <= *threshold {
                (left, right)
            } else {
                (right, left)
            };
            let hot_fraction = hot.cover() / total;
            let cold_fraction = cold.cover() / total;
            // a feature met again replaces its earlier path entry
            let mut incoming_zero = 1.0;
            let mut incoming_one = 1.0;
            if let Some(k) =
                path.iter().skip(1).position(|el| el.feature == Some(*feature_index))
            {
                let k = k + 1;
                incoming_zero = path[k].zero_fraction;
                incoming_one = path[k].one_fraction;
                unwind_path(&mut path, k);
            }
            let f = Some(*feature_index);
            shap_recurse(hot, x, phi, path.clone(), hot_fraction * incoming_zero, incoming_one, f)?;
            shap_recurse(cold, x, phi, path, cold_fraction * incoming_zero, 0.0, f)?;
        }
    }
    Ok(())
}

fn tree_phi(root: &TreeNode, x: &[f64], n_features: usize) -> Result<Vec<f64>, ExplainError> {
    let mut phi = vec![0.0; n_features];
    shap_recurse(root, x, &mut phi, Vec::new(), 1.0, 1.0, None)?;
    Ok(phi)
}

fn explain_with(
    model: &Model,
    x: &[f64],
    phi_of_tree: impl Fn(&TreeNode, &[f64], usize) -> Result<Vec<f64>, ExplainError>,
) -> Result<Explanation, ExplainError> {
    let d = model.n_features();
    if x.len() != d {
        return Err(ExplainError::ArityMismatch { expected: d, got: x.len() });
    }
    let roots = tree_roots(model)?;
    let mut phi = vec![0.0; d];
    let mut base = 0.0;
    let mut fx = 0.0;
    for root in &roots {
        for (acc, v) in phi.iter_mut().zip(phi_of_tree(root, x, d)?) {
            *acc += v;
        }
        base += tree_expected_value(root)?;
        fx += root.score(x);
    }
    let k = roots.len() as f64;
    for v in phi.iter_mut() {
        *v /= k;
    }
    Ok(Explanation { phi, base: base / k, fx: fx / k, x: x.to_vec() })
}

/// Exact Shapley values by the polynomial-time path-tracking recursion.
/// A forest's explanation is the mean of its trees' explanations.
pub fn treeshap(model: &Model, x: &[f64]) -> Result<Explanation, ExplainError> {
    explain_with(model, x, tree_phi)
}

/// Conditional expectation v(S): follow the instance where the split
/// feature is in the coalition `mask`, average both children by cover
/// otherwise.
fn coalition_value(node: &TreeNode, x: &[f64], mask: u32) -> Result<f64, ExplainError> {
    match node {
        TreeNode::Leaf { value, .. } => Ok(*value),
        TreeNode::Internal { feature_index, threshold, left, right, .. } => {
            if mask >> feature_index & 1 == 1 {
                if x[*feature_index] <= *threshold {
                    coalition_value(left, x, mask)
                } else {
                    coalition_value(right, x, mask)
                }
            } else {
                let total = node.cover();
                if total == 0.0 {
                    return Err(ExplainError::MissingCovers);
                }
                Ok((left.cover() * coalition_value(left, x, mask)?
                    + right.cover() * coalition_value(right, x, mask)?)
                    / total)
            }
        }
    }
}

const BRUTE_FORCE_MAX_FEATURES: usize = 15;

fn brute_phi(root: &TreeNode, x: &[f64], n_features: usize) -> Result<Vec<f64>, ExplainError> {
    let d = n_features;
    let mut factorial = vec![1.0; d + 1];
    for i in 1..=d {
        factorial[i] = factorial[i - 1] * i as f64;
    }
    let mut phi = vec![0.0; d];
    for (j, slot) in phi.iter_mut().enumerate() {
        for mask in 0u32..(1 << d) {
            if mask >> j & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let weight = factorial[s] * factorial[d - s - 1] / factorial[d];
            let with = coalition_value(root, x, mask | 1 << j)?;
            let without = coalition_value(root, x, mask)?;
            *slot += weight * (with - without);
        }
    }
    Ok(phi)
}

/// Shapley values by direct enumeration of all feature coalitions.
/// Exponential in the feature count; the oracle [`treeshap`] is tested
/// against.
pub fn shap_bruteforce(model: &Model, x: &[f64]) -> Result<Explanation, ExplainError> {
    let d = model.n_features();
    if d > BRUTE_FORCE_MAX_FEATURES {
        return Err(ExplainError::TooManyFeatures { max: BRUTE_FORCE_MAX_FEATURES, got: d });
    }
    explain_with(model, x, brute_phi)
}

/// Metric whose decrease under column shuffling defines importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PermMetric {
    Accuracy,
    #[default]
    F1,
    Recall,
}

impl PermMetric {
    pub fn parse(s: &str) -> Option<PermMetric> {
        match s {
            "accuracy" => Some(PermMetric::Accuracy),
            "f1" => Some(PermMetric::F1),
            "recall" => Some(PermMetric::Recall),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PermMetric::Accuracy => "accuracy",
            PermMetric::F1 => "f1",
            PermMetric::Recall => "recall",
        }
    }

    fn of(&self, m: &Metrics) -> f64 {
        match self {
            PermMetric::Accuracy => {
                let n = m.true_pos + m.false_pos + m.false_neg + m.true_neg;
                (m.true_pos + m.true_neg) as f64 / n as f64
            }
            PermMetric::F1 => m.f1,
            PermMetric::Recall => m.recall,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry {
    pub feature: usize,
    pub mean: f64,
    pub std: f64,
}

/// Per-feature metric decrease under column shuffling, sorted by mean
/// decrease descending. Negative means are possible and meaningful.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    pub metric: PermMetric,
    pub baseline: f64,
    pub n_repeats: usize,
    pub entries: Vec<ImportanceEntry>,
}

fn metric_of(model: &Model, x: &[Vec<f64>], y: &[Label], metric: PermMetric) -> Result<f64, ExplainError> {
    let preds = model.predictions(x).map_err(EvalError::from)?;
    let m = compute_metrics(y, &preds)?;
    Ok(metric.of(&m))
}

/// Permutation importance: for each feature, `n_repeats` times, shuffle
/// that column (seed derived per feature and repeat), re-score, and
/// record `baseline − shuffled`.
pub fn permutation_importance(
    model: &Model,
    x: &[Vec<f64>],
    y: &[Label],
    metric: PermMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<ImportanceReport, ExplainError> {
    assert!(n_repeats >= 1, "importance needs at least one repeat");
    let baseline = metric_of(model, x, y, metric)?;
    let d = model.n_features();
    let mut entries = Vec::with_capacity(d);
    for feature in 0..d {
        let mut samples = Vec::with_capacity(n_repeats);
        for repeat in 0..n_repeats {
            let mut column: Vec<f64> = x.iter().map(|row| row[feature]).collect();
            let mut rng = seeding::rng(seed, &["perm".into(), feature.into(), repeat.into()]);
            rand::seq::SliceRandom::shuffle(&mut column[..], &mut rng);
            let shuffled: Vec<Vec<f64>> = x
                .iter()
                .zip(&column)
                .map(|(row, &v)| {
                    let mut row = row.clone();
                    row[feature] = v;
                    row
                })
                .collect();
            samples.push(baseline - metric_of(model, &shuffled, y, metric)?);
        }
        let (mean, std) = evaluate::mean_and_std(&samples);
        entries.push(ImportanceEntry { feature, mean, std });
    }
    entries.sort_by(|a, b| b.mean.total_cmp(&a.mean).then(a.feature.cmp(&b.feature)));
    Ok(ImportanceReport { metric, baseline, n_repeats, entries })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleOp {
    Le,
    Gt,
}

impl fmt::Display for RuleOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RuleOp::Le => "<=",
            RuleOp::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleCondition {
    pub feature: usize,
    pub name: String,
    pub op: RuleOp,
    pub threshold: f64,
}

impl RuleCondition {
    pub fn matches(&self, x: &[f64]) -> bool {
        match self.op {
            RuleOp::Le => x[self.feature] <= self.threshold,
            RuleOp::Gt => x[self.feature] > self.threshold,
        }
    }
}

/// One root-to-leaf decision rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<RuleCondition>,
    /// "pos" when the leaf's positive fraction exceeds 1/2.
    pub label: &'static str,
    pub value: f64,
    pub covers: [usize; 2],
}

impl Rule {
    pub fn matches(&self, x: &[f64]) -> bool {
        self.conditions.iter().all(|c| c.matches(x))
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "IF ")?;
        if self.conditions.is_empty() {
            write!(f, "true")?;
        }
        for (i, c) in self.conditions.iter().enumerate() {
            if i > 0 {
                write!(f, " AND ")?;
            }
            write!(f, "{} {} {}", c.name, c.op, c.threshold)?;
        }
        write!(
            f,
            " THEN {} (p={}, covers=[{}, {}])",
            self.label, self.value, self.covers[0], self.covers[1]
        )
    }
}

fn leaf_label(value: f64) -> &'static str {
    if value > 0.5 {
        "pos"
    } else {
        "neg"
    }
}

/// One rule per leaf, in left-to-right leaf order. Applying a rule's
/// conjunction to the training set reproduces the leaf's covers.
pub fn extract_rules(root: &TreeNode, names: &[&str]) -> Vec<Rule> {
    fn walk(node: &TreeNode, names: &[&str], prefix: &mut Vec<RuleCondition>, out: &mut Vec<Rule>) {
        match node {
            TreeNode::Leaf { covers, value } => out.push(Rule {
                conditions: prefix.clone(),
                label: leaf_label(*value),
                value: *value,
                covers: *covers,
            }),
            TreeNode::Internal { feature_index, threshold, left, right, .. } => {
                let name = names[*feature_index].to_string();
                prefix.push(RuleCondition {
                    feature: *feature_index,
                    name: name.clone(),
                    op: RuleOp::Le,
                    threshold: *threshold,
                });
                walk(left, names, prefix, out);
                prefix.pop();
                prefix.push(RuleCondition {
                    feature: *feature_index,
                    name,
                    op: RuleOp::Gt,
                    threshold: *threshold,
                });
                walk(right, names, prefix, out);
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(root, names, &mut Vec::new(), &mut out);
    out
}

/// Graphviz DOT rendering of the tree; left edges are the `<=` branch.
pub fn export_dot(root: &TreeNode, names: &[&str]) -> String {
    fn walk(node: &TreeNode, names: &[&str], next_id: &mut usize, out: &mut String) -> usize {
        let id = *next_id;
        *next_id += 1;
        let covers = node.covers();
        match node {
            TreeNode::Leaf { value, .. } => {
                out.push_str(&format!(
                    "  n{id} [label=\"{} p={}\\n[neg, pos] = [{}, {}]\"];\n",
                    leaf_label(*value),
                    value,
                    covers[0],
                    covers[1]
                ));
            }
            TreeNode::Internal { feature_index, threshold, left, right, .. } => {
                out.push_str(&format!(
                    "  n{id} [label=\"{} <= {}\\n[neg, pos] = [{}, {}]\"];\n",
                    names[*feature_index], threshold, covers[0], covers[1]
                ));
                let l = walk(left, names, next_id, out);
                out.push_str(&format!("  n{id} -> n{l} [label=\"yes\"];\n"));
                let r = walk(right, names, next_id, out);
                out.push_str(&format!("  n{id} -> n{r} [label=\"no\"];\n"));
            }
        }
        id
    }
    let mut out = String::from("digraph decision_tree {\n  node [shape=box];\n");
    let mut next_id = 0;
    walk(root, names, &mut next_id, &mut out);
    out.push_str("}\n");
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeeswarmRow {
    pub instance: usize,
    pub feature: usize,
    pub value: f64,
    pub phi: f64,
}

/// Rows behind a beeswarm plot, grouped by feature in display order
/// (descending mean |φ| across the explained instances).
#[derive(Debug, Clone, PartialEq)]
pub struct BeeswarmData {
    pub feature_order: Vec<usize>,
    pub rows: Vec<BeeswarmRow>,
}

pub fn beeswarm_data(explanations: &[Explanation]) -> Result<BeeswarmData, ExplainError> {
    let d = explanations.first().ok_or(ExplainError::NoExplanations)?.phi.len();
    for e in explanations {
        if e.phi.len() != d {
            return Err(ExplainError::ArityMismatch { expected: d, got: e.phi.len() });
        }
    }
    let mut mean_abs: Vec<(usize, f64)> = (0..d)
        .map(|f| {
            let m = explanations.iter().map(|e| e.phi[f].abs()).sum::<f64>()
                / explanations.len() as f64;
            (f, m)
        })
        .collect();
    mean_abs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let feature_order: Vec<usize> = mean_abs.iter().map(|(f, _)| *f).collect();
    let mut rows = Vec::with_capacity(d * explanations.len());
    for &feature in &feature_order {
        for (instance, e) in explanations.iter().enumerate() {
            rows.push(BeeswarmRow { instance, feature, value: e.x[feature], phi: e.phi[feature] });
        }
    }
    Ok(BeeswarmData { feature_order, rows })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ForceContribution {
    pub feature: usize,
    pub value: f64,
    pub phi: f64,
}

/// Force-plot record: how the features push the output from the base
/// value to the prediction, largest |φ| first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForceRecord {
    pub base: f64,
    pub prediction: f64,
    pub contributions: Vec<ForceContribution>,
}

pub fn force_data(e: &Explanation) -> ForceRecord {
    let mut contributions: Vec<ForceContribution> = e
        .phi
        .iter()
        .enumerate()
        .map(|(feature, &phi)| ForceContribution { feature, value: e.x[feature], phi })
        .collect();
    contributions.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()).then(a.feature.cmp(&b.feature)));
    ForceRecord { base: e.base, prediction: e.fx, contributions }
}
