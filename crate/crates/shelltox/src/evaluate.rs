//! Metrics, stratified cross-validation, grid search, the repeated
//! train/test evaluation protocol, and precision-recall curves.
//!
//! Resampling is applied to training folds only; validation folds stay
//! untouched originals (asserted on row provenance). All enumeration
//! orders, fold assignments and winners are functions of the seed
//! alone, never of thread count.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::dataset::{Dataset, Label, RowTag};
use crate::models::{
    fit_forest, fit_mlp, fit_svm, fit_tree, ClassWeight, Criterion, ForestConfig, MlpConfig,
    Model, ModelError, SvmConfig, TreeConfig,
};
use crate::preprocess;
use crate::resample::{random_undersample, smote, ResampleConfig, ResampleError};
use crate::seeding::{self, Path};
use crate::species;

const K_FOLDS: usize = 5;

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("y_true has {true_len} entries, y_pred {pred_len}")]
    LengthMismatch { true_len: usize, pred_len: usize },
    #[error("stratified {k}-fold needs ≥ {k} instances of class {class}, found {found}")]
    TooFewPerClass { k: usize, class: Label, found: usize },
    #[error("precision-recall curve needs at least one positive instance")]
    NoPositives,
    #[error("every grid cell failed; first error: {0}")]
    AllCellsFailed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Split(#[from] crate::preprocess::PreprocessError),
}

/// Positive-class precision, recall and F1 plus the confusion counts.
/// All 0/0 ratios are defined as 0, so the fields are never NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub true_pos: usize,
    pub false_pos: usize,
    pub false_neg: usize,
    pub true_neg: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 = 2PR/(P+R), 0 when both are 0.
pub fn f1_from_pr(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn compute_metrics(y_true: &[Label], y_pred: &[Label]) -> Result<Metrics, EvalError> {
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch { true_len: y_true.len(), pred_len: y_pred.len() });
    }
    let mut tp = 0;
    let mut fp = 0;
    let mut fneg = 0;
    let mut tn = 0;
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fneg += 1,
            _ => tn += 1,
        }
    }
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fneg);
    Ok(Metrics {
        true_pos: tp,
        false_pos: fp,
        false_neg: fneg,
        true_neg: tn,
        precision,
        recall,
        f1: f1_from_pr(precision, recall),
    })
}

/// The metric grid search maximizes (and the early-warning variants).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizeMetric {
    F1,
    Recall,
    Precision,
}

impl OptimizeMetric {
    pub fn of(&self, m: &Metrics) -> f64 {
        match self {
            OptimizeMetric::F1 => m.f1,
            OptimizeMetric::Recall => m.recall,
            OptimizeMetric::Precision => m.precision,
        }
    }

    pub fn parse(s: &str) -> Option<OptimizeMetric> {
        match s {
            "f1" => Some(OptimizeMetric::F1),
            "recall" => Some(OptimizeMetric::Recall),
            "precision" => Some(OptimizeMetric::Precision),
            _ => None,
        }
    }
}

/// Disjoint validation index sets covering 0..n. Per-class indices are
/// shuffled under the seed and dealt round-robin, so per-fold class
/// counts stay within one instance of proportional.
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let mut rng = seeding::rng(seed, &["kfold".into()]);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    for class in [0u8, 1u8] {
        let mut idx: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(EvalError::TooFewPerClass { k, class, found: idx.len() });
        }
        idx.shuffle(&mut rng);
        for (pos, i) in idx.into_iter().enumerate() {
            folds[pos % k].push(i);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    Dt,
    Rf,
    Svm,
    Mlp,
}

impl Algo {
    pub const ALL: [Algo; 4] = [Algo::Dt, Algo::Rf, Algo::Svm, Algo::Mlp];

    pub fn name(&self) -> &'static str {
        match self {
            Algo::Dt => "dt",
            Algo::Rf => "rf",
            Algo::Svm => "svm",
            Algo::Mlp => "mlp",
        }
    }

    pub fn parse(s: &str) -> Option<Algo> {
        match s {
            "dt" => Some(Algo::Dt),
            "rf" => Some(Algo::Rf),
            "svm" => Some(Algo::Svm),
            "mlp" => Some(Algo::Mlp),
            _ => None,
        }
    }
}

/// Model half of one grid cell. The MLP variant records whether the
/// month column (consolidated layout position 0) is dropped before
/// scaling, the default for the network.
#[derive(Debug, Clone, PartialEq)]
pub enum AlgoConfig {
    Dt(TreeConfig),
    Rf(ForestConfig),
    Svm(SvmConfig),
    Mlp { config: MlpConfig, drop_month: bool },
}

impl AlgoConfig {
    pub fn algo(&self) -> Algo {
        match self {
            AlgoConfig::Dt(_) => Algo::Dt,
            AlgoConfig::Rf(_) => Algo::Rf,
            AlgoConfig::Svm(_) => Algo::Svm,
            AlgoConfig::Mlp { .. } => Algo::Mlp,
        }
    }

    /// The dataset view this config fits and predicts on.
    pub fn view(&self, d: &Dataset) -> Dataset {
        match self {
            AlgoConfig::Mlp { drop_month: true, .. } => d.drop_column(species::MONTH_COLUMN),
            _ => d.clone(),
        }
    }

    pub fn fit(&self, train: &Dataset, seed: u64) -> Result<Model, ModelError> {
        let train = self.view(train);
        match self {
            AlgoConfig::Dt(c) => fit_tree(&train, c).map(Model::Tree),
            AlgoConfig::Rf(c) => fit_forest(&train, c, seed).map(Model::Forest),
            AlgoConfig::Svm(c) => fit_svm(&train, c).map(Model::Svm),
            AlgoConfig::Mlp { config, .. } => fit_mlp(&train, config, seed).map(Model::Mlp),
        }
    }

    pub fn label(&self) -> String {
        fn depth(d: Option<usize>) -> String {
            d.map_or("none".to_string(), |v| v.to_string())
        }
        match self {
            AlgoConfig::Dt(c) => format!(
                "dt(depth={},criterion={},class_weight={})",
                depth(c.max_depth),
                c.criterion.name(),
                match c.class_weight {
                    ClassWeight::None => "none",
                    ClassWeight::Balanced => "balanced",
                }
            ),
            AlgoConfig::Rf(c) => {
                format!("rf(trees={},criterion={})", c.n_estimators, c.criterion.name())
            }
            AlgoConfig::Svm(c) => format!("svm(c={})", c.c),
            AlgoConfig::Mlp { config, .. } => format!("mlp(hidden={})", config.hidden),
        }
    }
}

/// Resampling half of one grid cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleSpec {
    pub smote_k: usize,
    pub smote_strategy: f64,
    pub under_strategy: f64,
}

impl ResampleSpec {
    pub fn config(&self, seed: u64) -> ResampleConfig {
        ResampleConfig {
            smote_k: self.smote_k,
            smote_strategy: self.smote_strategy,
            under_strategy: self.under_strategy,
            seed,
        }
    }

    pub fn label(&self) -> String {
        format!(
            "smote(k={},s={})+under(s={})",
            self.smote_k, self.smote_strategy, self.under_strategy
        )
    }

    pub fn apply(&self, train: &Dataset, seed: u64) -> Result<Dataset, ResampleError> {
        let cfg = self.config(seed);
        let oversampled = smote(train, &cfg)?;
        random_undersample(&oversampled, &cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub id: usize,
    pub algo: AlgoConfig,
    pub resample: ResampleSpec,
}

impl GridCell {
    pub fn label(&self) -> String {
        format!("{}+{}", self.algo.label(), self.resample.label())
    }
}

/// Resampling value lists, cross-producted into every grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ResampleGrid {
    pub smote_k: Vec<usize>,
    pub smote_strategy: Vec<f64>,
    pub under_strategy: Vec<f64>,
}

impl Default for ResampleGrid {
    fn default() -> ResampleGrid {
        ResampleGrid {
            smote_k: vec![3, 5],
            smote_strategy: vec![0.3, 0.4, 0.5, 0.6],
            under_strategy: vec![0.5, 0.6, 0.7],
        }
    }
}

impl ResampleGrid {
    /// A single fixed resampling setting; keeps smoke tests fast.
    pub fn fixed(smote_k: usize, smote_strategy: f64, under_strategy: f64) -> ResampleGrid {
        ResampleGrid {
            smote_k: vec![smote_k],
            smote_strategy: vec![smote_strategy],
            under_strategy: vec![under_strategy],
        }
    }

    fn enumerate(&self) -> Vec<ResampleSpec> {
        let mut out = Vec::new();
        for &k in &self.smote_k {
            for &s in &self.smote_strategy {
                for &u in &self.under_strategy {
                    out.push(ResampleSpec { smote_k: k, smote_strategy: s, under_strategy: u });
                }
            }
        }
        out
    }
}

/// Hyperparameter value lists for one algorithm family, cross-producted
/// with the resampling grid. Model values vary slowest, resampling
/// fastest, in the field order written here; ties in grid search go to
/// the earlier cell.
#[derive(Debug, Clone, PartialEq)]
pub enum GridSpec {
    Dt {
        max_depths: Vec<Option<usize>>,
        criteria: Vec<Criterion>,
        class_weights: Vec<ClassWeight>,
        resample: ResampleGrid,
    },
    Rf {
        n_estimators: Vec<usize>,
        criteria: Vec<Criterion>,
        resample: ResampleGrid,
    },
    Svm {
        c: Vec<f64>,
        resample: ResampleGrid,
    },
    Mlp {
        hidden: Vec<usize>,
        drop_month: bool,
        resample: ResampleGrid,
    },
}

impl GridSpec {
    /// Default search spaces. Each contains the winning configuration
    /// of the study this pipeline reproduces.
    pub fn default_for(algo: Algo) -> GridSpec {
        match algo {
            Algo::Dt => GridSpec::Dt {
                max_depths: vec![Some(2), Some(3), Some(4), Some(5), None],
                criteria: vec![Criterion::Gini, Criterion::Entropy],
                class_weights: vec![ClassWeight::None, ClassWeight::Balanced],
                resample: ResampleGrid::default(),
            },
            Algo::Rf => GridSpec::Rf {
                n_estimators: vec![100, 300, 500],
                criteria: vec![Criterion::Gini, Criterion::Entropy],
                resample: ResampleGrid::default(),
            },
            Algo::Svm => GridSpec::Svm { c: vec![1.0, 10.0, 100.0], resample: ResampleGrid::default() },
            Algo::Mlp => {
                GridSpec::Mlp { hidden: vec![3, 8], drop_month: true, resample: ResampleGrid::default() }
            }
        }
    }

    pub fn algo(&self) -> Algo {
        match self {
            GridSpec::Dt { .. } => Algo::Dt,
            GridSpec::Rf { .. } => Algo::Rf,
            GridSpec::Svm { .. } => Algo::Svm,
            GridSpec::Mlp { .. } => Algo::Mlp,
        }
    }

    pub fn enumerate(&self) -> Vec<GridCell> {
        let mut algos: Vec<AlgoConfig> = Vec::new();
        let resample = match self {
            GridSpec::Dt { max_depths, criteria, class_weights, resample } => {
                for &depth in max_depths {
                    for &criterion in criteria {
                        for &class_weight in class_weights {
                            algos.push(AlgoConfig::Dt(TreeConfig {
                                criterion,
                                max_depth: depth,
                                class_weight,
                                min_samples_split: 2,
                            }));
                        }
                    }
                }
                resample
            }
            GridSpec::Rf { n_estimators, criteria, resample } => {
                for &n in n_estimators {
                    for &criterion in criteria {
                        algos.push(AlgoConfig::Rf(ForestConfig {
                            n_estimators: n,
                            criterion,
                            ..ForestConfig::default()
                        }));
                    }
                }
                resample
            }
            GridSpec::Svm { c, resample } => {
                for &c in c {
                    algos.push(AlgoConfig::Svm(SvmConfig { c, ..SvmConfig::default() }));
                }
                resample
            }
            GridSpec::Mlp { hidden, drop_month, resample } => {
                for &h in hidden {
                    algos.push(AlgoConfig::Mlp {
                        config: MlpConfig { hidden: h, ..MlpConfig::default() },
                        drop_month: *drop_month,
                    });
                }
                resample
            }
        };
        let resamples = resample.enumerate();
        let mut cells = Vec::with_capacity(algos.len() * resamples.len());
        for algo in &algos {
            for rs in &resamples {
                cells.push(GridCell { id: cells.len(), algo: algo.clone(), resample: *rs });
            }
        }
        cells
    }
}

/// One row of the CV table: mean validation score per cell, or the
/// first error if any fold failed (failed cells score −∞ and can never
/// win).
#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: GridCell,
    pub fold_scores: Vec<f64>,
    pub mean_score: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best: GridCell,
    pub best_score: f64,
    pub table: Vec<CellResult>,
}

fn eval_cell_fold(
    cell: &GridCell,
    train: &Dataset,
    fold: &[usize],
    rest: &[usize],
    seed: u64,
    optimize: OptimizeMetric,
) -> Result<f64, String> {
    let fit_part = train.select(rest);
    let val_part = train.select(fold);
    // Validation rows must be untouched originals: synthetic rows only
    // ever enter the fitting portion.
    assert!(
        val_part.tags.iter().all(|t| matches!(t, RowTag::Original(_))),
        "validation fold contains resampled rows"
    );
    let resampled = cell
        .resample
        .apply(&fit_part, seeding::derive_seed(seed, &["resample".into()]))
        .map_err(|e| e.to_string())?;
    let model = cell
        .algo
        .fit(&resampled, seeding::derive_seed(seed, &["fit".into()]))
        .map_err(|e| e.to_string())?;
    let val_view = cell.algo.view(&val_part);
    let preds = model.predictions(&val_view.x).map_err(|e| e.to_string())?;
    let m = compute_metrics(&val_view.y, &preds).map_err(|e| e.to_string())?;
    Ok(optimize.of(&m))
}

/// 5-fold stratified grid search. Each cell resamples the fitting
/// portion of every fold (never the validation fold), fits, and scores
/// the untouched validation rows; the cell score is the mean over
/// folds. Errors inside a cell mark it failed without aborting the
/// search. Ties go to the first cell in enumeration order.
pub fn grid_search(
    train: &Dataset,
    grid: &GridSpec,
    seed: u64,
    optimize: OptimizeMetric,
) -> Result<GridSearchResult, EvalError> {
    let folds = stratified_kfold(&train.y, K_FOLDS, seeding::derive_seed(seed, &["folds".into()]))?;
    let rests: Vec<Vec<usize>> = folds
        .iter()
        .map(|fold| (0..train.len()).filter(|i| !fold.contains(i)).collect())
        .collect();
    let cells = grid.enumerate();
    let table: Vec<CellResult> = cells
        .into_par_iter()
        .map(|cell| {
            let mut fold_scores = Vec::with_capacity(K_FOLDS);
            let mut error = None;
            for (f, (fold, rest)) in folds.iter().zip(&rests).enumerate() {
                let cell_seed = seeding::derive_seed(
                    seed,
                    &["cell".into(), cell.id.into(), "fold".into(), f.into()],
                );
                match eval_cell_fold(&cell, train, fold, rest, cell_seed, optimize) {
                    Ok(s) => fold_scores.push(s),
                    Err(e) => {
                        error = Some(e);
                        break;
                    }
                }
            }
            let mean_score = if error.is_some() {
                f64::NEG_INFINITY
            } else {
                fold_scores.iter().sum::<f64>() / fold_scores.len() as f64
            };
            CellResult { cell, fold_scores, mean_score, error }
        })
        .collect();
    let mut best: Option<&CellResult> = None;
    for r in &table {
        if r.error.is_none() && best.map_or(true, |b| r.mean_score > b.mean_score) {
            best = Some(r);
        }
    }
    let best = best.ok_or_else(|| {
        let first = table.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        EvalError::AllCellsFailed(first)
    })?;
    Ok(GridSearchResult { best: best.cell.clone(), best_score: best.mean_score, table: table.clone() })
}

/// Per-iteration outcome of the repeated protocol.
#[derive(Debug, Clone)]
pub struct IterationRow {
    pub iteration: usize,
    pub algo: Algo,
    pub metrics: Metrics,
    pub winning_cell_id: usize,
    pub winning_label: String,
    /// Test-set (recall, precision) sweep for this iteration's winner.
    pub pr: Vec<(f64, f64)>,
}

/// Mean ± population std of each metric over iterations. `f1_mean` is
/// the mean of per-iteration F1 scores; `f1_of_mean_pr` recombines the
/// mean precision and recall instead. The report emits both.
#[derive(Debug, Clone, Serialize)]
pub struct AlgoAggregate {
    pub algo: String,
    pub iterations: usize,
    pub precision_mean: f64,
    pub precision_std: f64,
    pub recall_mean: f64,
    pub recall_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub f1_of_mean_pr: f64,
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub rows: Vec<IterationRow>,
    pub aggregates: Vec<AlgoAggregate>,
    /// Per algorithm: precision averaged across iterations on the
    /// fixed recall grid {0, 0.01, …, 1}.
    pub averaged_pr: Vec<(Algo, Vec<(f64, f64)>)>,
}

pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub struct RepeatedEvalConfig {
    pub n_iterations: usize,
    pub train_fraction: f64,
    /// Re-draw the 70/30 split every iteration (default) or freeze one
    /// split and only re-run search/fit randomness.
    pub fixed_split: bool,
    pub optimize: OptimizeMetric,
}

impl Default for RepeatedEvalConfig {
    fn default() -> RepeatedEvalConfig {
        RepeatedEvalConfig {
            n_iterations: 100,
            train_fraction: 0.7,
            fixed_split: false,
            optimize: OptimizeMetric::F1,
        }
    }
}

/// The repeated evaluation protocol: per iteration, draw a fresh
/// stratified 70/30 split, grid-search each algorithm on the training
/// side, refit each winner on the full (resampled) training side, and
/// score it once on the held-out test side.
pub fn repeated_eval(
    dataset: &Dataset,
    grids: &[GridSpec],
    config: &RepeatedEvalConfig,
    master_seed: u64,
) -> Result<EvalReport, EvalError> {
    let iter_rows: Vec<Result<Vec<IterationRow>, EvalError>> = (0..config.n_iterations)
        .into_par_iter()
        .map(|iteration| {
            let split_path: Vec<Path> = if config.fixed_split {
                vec!["split".into()]
            } else {
                vec!["iter".into(), iteration.into(), "split".into()]
            };
            let split_seed = seeding::derive_seed(master_seed, &split_path);
            let (train, test) =
                preprocess::stratified_split(dataset, config.train_fraction, split_seed)?;
            let mut rows = Vec::with_capacity(grids.len());
            for grid in grids {
                let algo = grid.algo();
                let search_seed = seeding::derive_seed(
                    master_seed,
                    &["iter".into(), iteration.into(), algo.name().into()],
                );
                let search = grid_search(&train, grid, search_seed, config.optimize)?;
                let final_seed = seeding::derive_seed(
                    master_seed,
                    &["iter".into(), iteration.into(), algo.name().into(), "final".into()],
                );
                let resampled = search
                    .best
                    .resample
                    .apply(&train, seeding::derive_seed(final_seed, &["resample".into()]))
                    .map_err(|e| EvalError::AllCellsFailed(e.to_string()))?;
                let model =
                    search.best.algo.fit(&resampled, seeding::derive_seed(final_seed, &["fit".into()]))?;
                let test_view = search.best.algo.view(&test);
                let preds = model.predictions(&test_view.x)?;
                let metrics = compute_metrics(&test_view.y, &preds)?;
                let scores = model.scores(&test_view.x)?;
                let pr = pr_curve(&scores, &test_view.y)?;
                rows.push(IterationRow {
                    iteration,
                    algo,
                    metrics,
                    winning_cell_id: search.best.id,
                    winning_label: search.best.label(),
                    pr,
                });
            }
            Ok(rows)
        })
        .collect();

    let mut rows = Vec::new();
    for r in iter_rows {
        rows.extend(r?);
    }

    let mut aggregates = Vec::new();
    let mut averaged_pr = Vec::new();
    for grid in grids {
        let algo = grid.algo();
        let of_algo: Vec<&IterationRow> = rows.iter().filter(|r| r.algo == algo).collect();
        let (p_mean, p_std) =
            mean_and_std(&of_algo.iter().map(|r| r.metrics.precision).collect::<Vec<_>>());
        let (r_mean, r_std) =
            mean_and_std(&of_algo.iter().map(|r| r.metrics.recall).collect::<Vec<_>>());
        let (f_mean, f_std) = mean_and_std(&of_algo.iter().map(|r| r.metrics.f1).collect::<Vec<_>>());
        aggregates.push(AlgoAggregate {
            algo: algo.name().to_string(),
            iterations: of_algo.len(),
            precision_mean: p_mean,
            precision_std: p_std,
            recall_mean: r_mean,
            recall_std: r_std,
            f1_mean: f_mean,
            f1_std: f_std,
            f1_of_mean_pr: f1_from_pr(p_mean, r_mean),
        });
        let curves: Vec<&[(f64, f64)]> = of_algo.iter().map(|r| r.pr.as_slice()).collect();
        averaged_pr.push((algo, average_pr(&curves)));
    }
    Ok(EvalReport { rows, aggregates, averaged_pr })
}

/// Threshold sweep over the distinct scores, descending; an instance is
/// predicted positive iff its score ≥ the threshold. Returns (recall,
/// precision) per threshold, so recall is non-decreasing along the
/// list.
pub fn pr_curve(scores: &[f64], y_true: &[Label]) -> Result<Vec<(f64, f64)>, EvalError> {
    if scores.len() != y_true.len() {
        return Err(EvalError::LengthMismatch { true_len: y_true.len(), pred_len: scores.len() });
    }
    let total_pos = y_true.iter().filter(|&&l| l == 1).count();
    if total_pos == 0 {
        return Err(EvalError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut curve = Vec::new();
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut i = 0;
    while i < order.len() {
        // advance through every instance tied at this threshold
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            tp += usize::from(y_true[order[i]] == 1);
            predicted += 1;
            i += 1;
        }
        curve.push((tp as f64 / total_pos as f64, tp as f64 / predicted as f64));
    }
    Ok(curve)
}

/// Average PR curves on the fixed recall grid {0, 0.01, …, 1}. The
/// precision a curve contributes at recall r is that of its first
/// threshold-descending point with recall ≥ r (stepwise-constant
/// interpolation from the right); at r = 0 that is the highest-score
/// threshold's precision.
pub fn average_pr(curves: &[&[(f64, f64)]]) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(101);
    for step in 0..=100 {
        let r = step as f64 / 100.0;
        let mut sum = 0.0;
        let mut count = 0usize;
        for curve in curves {
            if let Some(&(_, p)) = curve.iter().find(|&&(rec, _)| rec >= r - 1e-12) {
                sum += p;
                count += 1;
            }
        }
        out.push((r, if count > 0 { sum / count as f64 } else { 0.0 }));
    }
    out
}
