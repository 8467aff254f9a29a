//! Shallow MLP: one relu hidden layer, sigmoid output, trained on
//! binary cross-entropy with adaptive-moment minibatch descent. The
//! model embeds its own z-score scaler, fitted on the training data.
//!
//! `MlpParams` exposes the raw loss and gradient so tests can check the
//! backward pass against finite differences.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ModelError, Scaler};
use crate::dataset::Dataset;
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: usize,
    pub max_iter: usize,
    /// Minibatch size is min(batch_cap, n).
    pub batch_cap: usize,
    pub lr: f64,
    /// Stop after `n_iter_no_change` consecutive epochs whose loss
    /// improves on the best seen by less than `tol`.
    pub tol: f64,
    pub n_iter_no_change: usize,
}

impl Default for MlpConfig {
    fn default() -> MlpConfig {
        MlpConfig { hidden: 3, max_iter: 5000, batch_cap: 200, lr: 1e-3, tol: 1e-4, n_iter_no_change: 10 }
    }
}

/// Weight matrices and biases: input → hidden (w1, b1), hidden →
/// logit (w2, b2). w1 is hidden-major: w1[h][i].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub w1: Vec<Vec<f64>>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl MlpParams {
    /// Glorot-uniform weights in ±√(6/(fan_in+fan_out)), zero biases.
    pub fn init(d_in: usize, hidden: usize, rng: &mut impl Rng) -> MlpParams {
        let bound1 = (6.0 / (d_in + hidden) as f64).sqrt();
        let w1 = (0..hidden)
            .map(|_| (0..d_in).map(|_| rng.gen_range(-bound1..bound1)).collect())
            .collect();
        let bound2 = (6.0 / (hidden + 1) as f64).sqrt();
        let w2 = (0..hidden).map(|_| rng.gen_range(-bound2..bound2)).collect();
        MlpParams { w1, b1: vec![0.0; hidden], w2, b2: 0.0 }
    }

    pub fn hidden(&self) -> usize {
        self.w2.len()
    }

    pub fn d_in(&self) -> usize {
        self.w1.first().map_or(0, Vec::len)
    }

    fn hidden_pre(&self, x: &[f64]) -> Vec<f64> {
        self.w1
            .iter()
            .zip(&self.b1)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }

    pub fn logit(&self, x: &[f64]) -> f64 {
        let z1 = self.hidden_pre(x);
        z1.iter().zip(&self.w2).map(|(z, w)| z.max(0.0) * w).sum::<f64>() + self.b2
    }

    /// Mean binary cross-entropy over the batch, computed in the
    /// logit-stable form softplus(z) − y·z.
    pub fn loss(&self, x: &[Vec<f64>], y: &[f64]) -> f64 {
        let total: f64 = x
            .iter()
            .zip(y)
            .map(|(row, &t)| {
                let z = self.logit(row);
                softplus(z) - t * z
            })
            .sum();
        total / x.len() as f64
    }

    /// Mean gradient of [`loss`](Self::loss) with respect to every
    /// parameter, same shape as `self`.
    pub fn grad(&self, x: &[Vec<f64>], y: &[f64]) -> MlpParams {
        let hidden = self.hidden();
        let d_in = self.d_in();
        let mut g = MlpParams {
            w1: vec![vec![0.0; d_in]; hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        };
        for (row, &t) in x.iter().zip(y) {
            let z1 = self.hidden_pre(row);
            let a1: Vec<f64> = z1.iter().map(|z| z.max(0.0)).collect();
            let z = a1.iter().zip(&self.w2).map(|(a, w)| a * w).sum::<f64>() + self.b2;
            let dz = sigmoid(z) - t;
            g.b2 += dz;
            for h in 0..hidden {
                g.w2[h] += dz * a1[h];
                if z1[h] > 0.0 {
                    let dh = dz * self.w2[h];
                    g.b1[h] += dh;
                    for i in 0..d_in {
                        g.w1[h][i] += dh * row[i];
                    }
                }
            }
        }
        let n = x.len() as f64;
        g.scale(1.0 / n);
        g
    }

    fn scale(&mut self, s: f64) {
        for row in &mut self.w1 {
            for v in row {
                *v *= s;
            }
        }
        for v in &mut self.b1 {
            *v *= s;
        }
        for v in &mut self.w2 {
            *v *= s;
        }
        self.b2 *= s;
    }

    /// Parameters flattened in a fixed order (w1 row-major, b1, w2, b2).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.hidden() * (self.d_in() + 2) + 1);
        for row in &self.w1 {
            v.extend_from_slice(row);
        }
        v.extend_from_slice(&self.b1);
        v.extend_from_slice(&self.w2);
        v.push(self.b2);
        v
    }

    pub fn set_from_flat(&mut self, flat: &[f64]) {
        let mut it = flat.iter().copied();
        for row in &mut self.w1 {
            for v in row {
                *v = it.next().expect("flat vector too short");
            }
        }
        for v in &mut self.b1 {
            *v = it.next().expect("flat vector too short");
        }
        for v in &mut self.w2 {
            *v = it.next().expect("flat vector too short");
        }
        self.b2 = it.next().expect("flat vector too short");
        assert!(it.next().is_none(), "flat vector too long");
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub scaler: Scaler,
    pub params: MlpParams,
    pub hidden: usize,
    pub activation: String,
    pub n_epochs: usize,
    pub final_loss: f64,
    /// True when the no-improvement rule fired before max_iter.
    pub stopped_early: bool,
}

impl MlpModel {
    pub fn n_features(&self) -> usize {
        self.scaler.mean.len()
    }

    pub fn probability(&self, x: &[f64]) -> f64 {
        sigmoid(self.params.logit(&self.scaler.transform_row(x)))
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    lr: f64,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Adam {
        Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let c2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + Self::EPS);
        }
    }
}

/// Fit the MLP. The scaler is fitted on (and only on) `train`; epoch
/// order is shuffled under the derived seed; the epoch loss used for
/// early stopping is the batch-size-weighted mean of batch losses,
/// each computed before its update.
pub fn fit_mlp(train: &Dataset, config: &MlpConfig, seed: u64) -> Result<MlpModel, ModelError> {
    if train.is_empty() {
        return Err(ModelError::EmptyTrain);
    }
    let scaler = Scaler::fit(&train.x);
    let xs = scaler.transform(&train.x);
    let y: Vec<f64> = train.y.iter().map(|&l| l as f64).collect();
    let n = train.len();
    let batch = config.batch_cap.min(n).max(1);

    let mut rng = seeding::rng(seed, &["mlp".into()]);
    let mut params = MlpParams::init(train.n_features(), config.hidden, &mut rng);
    let mut flat = params.to_flat();
    let mut adam = Adam::new(flat.len(), config.lr);

    let mut order: Vec<usize> = (0..n).collect();
    let mut best_loss = f64::INFINITY;
    let mut no_improve = 0usize;
    let mut epoch_loss = f64::NAN;
    let mut epochs_run = 0;
    let mut stopped_early = false;

    for _ in 0..config.max_iter {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
            loss_sum += params.loss(&bx, &by) * chunk.len() as f64;
            let g = params.grad(&bx, &by).to_flat();
            adam.step(&mut flat, &g);
            params.set_from_flat(&flat);
        }
        epoch_loss = loss_sum / n as f64;
        epochs_run += 1;
        if epoch_loss > best_loss - config.tol {
            no_improve += 1;
            if no_improve >= config.n_iter_no_change {
                stopped_early = true;
                break;
            }
        } else {
            no_improve = 0;
        }
        best_loss = best_loss.min(epoch_loss);
    }

    Ok(MlpModel {
        scaler,
        params,
        hidden: config.hidden,
        activation: "relu".to_string(),
        n_epochs: epochs_run,
        final_loss: epoch_loss,
        stopped_early,
    })
}
