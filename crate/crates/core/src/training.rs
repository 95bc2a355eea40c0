//! Losses, analytic gradients, SGD with heavy-ball momentum and the
//! mini-batch training loop.
//!
//! Gradients never flow through the gate stream: `h_r` contains no
//! trainable weight, so the gates act as constant masks and no gradient is
//! ever produced for a random matrix.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::stream;
use crate::network::{
    DeepModel, LsrIeModel, Model, Network, RandomFeatureModel, ReluNet, ShallowModel, Trace,
};
use crate::numerics::{hadamard, matmul_nt, matmul_tn, Matrix};

/// Training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Loss {
    /// `(1/2m) Σ (y − ŷ)²` summed over all outputs.
    #[default]
    Squared,
    /// Mean softmax cross-entropy against one-hot rows.
    SoftmaxCrossEntropy,
}

impl FromStr for Loss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" | "mse" => Ok(Loss::Squared),
            "softmax" | "cross-entropy" | "softmax-cross-entropy" => Ok(Loss::SoftmaxCrossEntropy),
            other => Err(Error::param(format!("unknown loss {other:?}"))),
        }
    }
}

fn check_same_shape(op: &'static str, a: &Matrix, b: &Matrix) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

/// `(1/2m) Σ_{i,j} (y_ij − ŷ_ij)²`.
pub fn squared_loss(preds: &Matrix, targets: &Matrix) -> Result<f64> {
    check_same_shape("squared_loss", preds, targets)?;
    let m = preds.rows().max(1) as f64;
    let sum: f64 = preds
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / (2.0 * m))
}

/// Mean squared error over all entries.
pub fn mean_squared_error(preds: &Matrix, targets: &Matrix) -> Result<f64> {
    check_same_shape("mean_squared_error", preds, targets)?;
    let n = preds.len().max(1) as f64;
    Ok(preds
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (t - p) * (t - p))
        .sum::<f64>()
        / n)
}

fn softmax_row(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Loss value and `dL/dŷ` for a batch.
pub fn loss_and_output_grad(loss: Loss, preds: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    check_same_shape("loss", preds, targets)?;
    let m = preds.rows().max(1) as f64;
    match loss {
        Loss::Squared => {
            let value = squared_loss(preds, targets)?;
            let grad = preds.sub(targets)?.scale(1.0 / m);
            Ok((value, grad))
        }
        Loss::SoftmaxCrossEntropy => {
            let mut value = 0.0;
            let mut grad = Matrix::zeros(preds.rows(), preds.cols());
            for i in 0..preds.rows() {
                let p = softmax_row(preds.row(i));
                let t = targets.row(i);
                // Equals p - t for one-hot rows.
                let mass: f64 = t.iter().sum();
                for (j, (&pj, &tj)) in p.iter().zip(t).enumerate() {
                    if tj != 0.0 {
                        value -= tj * pj.max(1e-300).ln();
                    }
                    grad.set(i, j, (pj * mass - tj) / m);
                }
            }
            Ok((value / m, grad))
        }
    }
}

pub fn loss_value(loss: Loss, preds: &Matrix, targets: &Matrix) -> Result<f64> {
    match loss {
        Loss::Squared => squared_loss(preds, targets),
        Loss::SoftmaxCrossEntropy => Ok(loss_and_output_grad(loss, preds, targets)?.0),
    }
}

/// Fraction of rows whose argmax differs from the target's argmax.
pub fn error_rate(preds: &Matrix, targets: &Matrix) -> Result<f64> {
    check_same_shape("error_rate", preds, targets)?;
    if preds.rows() == 0 {
        return Ok(0.0);
    }
    let wrong = (0..preds.rows())
        .filter(|&i| argmax(preds.row(i)) != argmax(targets.row(i)))
        .count();
    Ok(wrong as f64 / preds.rows() as f64)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Loss value plus one gradient per trainable matrix, in
/// [`Network::trainable`] order.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub loss: f64,
    pub grads: Vec<Matrix>,
}

/// Models that can produce exact gradients of a loss.
pub trait Trainable: Network {
    /// Gradient of `loss` over the batch `(x, y)` using random bank `bank`
    /// (always 0 for single-bank models).
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, bank: usize) -> Result<Gradients>;
}

/// Backpropagates `d_out` through a semi-random trace. Returns gradients
/// for `W^(1)…W^(H)` (when `hidden` is true) followed by `W^(H+1)`.
fn backprop_semi_random(
    trace: &Trace,
    hidden_weights: &[Matrix],
    output: &Matrix,
    d_out: &Matrix,
    hidden: bool,
) -> Result<Vec<Matrix>> {
    let depth = trace.hidden.len();
    let grad_out = matmul_tn(&trace.hidden[depth - 1], d_out)?;
    if !hidden {
        return Ok(vec![grad_out]);
    }
    let mut grads = vec![Matrix::zeros(0, 0); depth];
    let mut dh = matmul_nt(d_out, output)?;
    for l in (0..depth).rev() {
        let dpre = hadamard(&dh, &trace.gates[l])?;
        let input = if l == 0 { &trace.input } else { &trace.hidden[l - 1] };
        grads[l] = matmul_tn(input, &dpre)?;
        if l > 0 {
            dh = matmul_nt(&dpre, &hidden_weights[l])?;
        }
    }
    grads.push(grad_out);
    Ok(grads)
}

fn semi_random_gradients(
    trace: Trace,
    hidden_weights: &[Matrix],
    output: &Matrix,
    y: &Matrix,
    loss: Loss,
    hidden: bool,
) -> Result<Gradients> {
    let (value, d_out) = loss_and_output_grad(loss, &trace.output, y)?;
    let grads = backprop_semi_random(&trace, hidden_weights, output, &d_out, hidden)?;
    Ok(Gradients { loss: value, grads })
}

impl Trainable for ShallowModel {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, _bank: usize) -> Result<Gradients> {
        let trace = self.trace(x)?;
        semi_random_gradients(trace, std::slice::from_ref(&self.w1), &self.w2, y, loss, true)
    }
}

impl Trainable for DeepModel {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, _bank: usize) -> Result<Gradients> {
        let trace = self.trace(x)?;
        semi_random_gradients(trace, &self.weights.hidden, &self.weights.output, y, loss, true)
    }
}

impl Trainable for RandomFeatureModel {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, _bank: usize) -> Result<Gradients> {
        let inner = self.inner();
        let trace = inner.trace(x)?;
        semi_random_gradients(trace, &inner.weights.hidden, &inner.weights.output, y, loss, false)
    }
}

impl Trainable for LsrIeModel {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, bank: usize) -> Result<Gradients> {
        let trace = self.trace(x, bank)?;
        semi_random_gradients(trace, &self.weights.hidden, &self.weights.output, y, loss, true)
    }
}

impl Trainable for ReluNet {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, _bank: usize) -> Result<Gradients> {
        let trace = self.trace(x)?;
        let out = trace.pre.last().expect("at least one layer");
        let (value, mut dz) = loss_and_output_grad(loss, out, y)?;
        let n = self.layers.len();
        let mut grads = vec![Matrix::zeros(0, 0); n];
        for l in (0..n).rev() {
            grads[l] = matmul_tn(&trace.inputs[l], &dz)?;
            if l > 0 {
                let da_aug = matmul_nt(&dz, &self.layers[l])?;
                let pre = &trace.pre[l - 1];
                // Drop the bias column; relu'(z) = 1 for z > 0, else 0.
                dz = Matrix::from_fn(pre.rows(), pre.cols(), |i, j| {
                    if pre.get(i, j) > 0.0 {
                        da_aug.get(i, j + 1)
                    } else {
                        0.0
                    }
                });
            }
        }
        Ok(Gradients { loss: value, grads })
    }
}

impl Trainable for Model {
    fn gradients(&self, x: &Matrix, y: &Matrix, loss: Loss, bank: usize) -> Result<Gradients> {
        match self {
            Model::SemiRandom(m) => m.gradients(x, y, loss, bank),
            Model::RandomFeature(m) => m.gradients(x, y, loss, bank),
            Model::Relu(m) => m.gradients(x, y, loss, bank),
            Model::Ensemble(m) => m.gradients(x, y, loss, bank),
        }
    }
}

/// Classical momentum: `v ← μ v − η g`, `θ ← θ + v`.
pub fn sgd_momentum_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    velocity: &mut [Matrix],
    lr: f64,
    momentum: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(Error::shape("sgd_momentum_step", "parameter, gradient and velocity counts differ"));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        if p.shape() != g.shape() || p.shape() != v.shape() {
            return Err(Error::shape(
                "sgd_momentum_step",
                format!("{:?} / {:?} / {:?}", p.shape(), g.shape(), v.shape()),
            ));
        }
        for ((pv, &gv), vv) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g.as_slice())
            .zip(v.as_mut_slice().iter_mut())
        {
            *vv = momentum * *vv - lr * gv;
            *pv += *vv;
        }
    }
    Ok(())
}

/// Staircase exponential decay: `initial · decay^epoch`.
pub fn lr_schedule(initial: f64, epoch: usize, decay: f64) -> f64 {
    initial * decay.powi(epoch as i32)
}

/// Analytic versus central-difference gradients of one model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// `‖g_analytic − g_numeric‖₂ / max(‖g_analytic‖₂, ‖g_numeric‖₂)` over
    /// all trainable entries; 0 when both vanish.
    pub rel_error: f64,
    pub max_abs_error: f64,
    pub params: usize,
}

/// Compares [`Trainable::gradients`] with central differences of step `h`
/// on every trainable entry.
pub fn gradcheck<M: Trainable + Clone>(
    model: &M,
    x: &Matrix,
    y: &Matrix,
    loss: Loss,
    bank: usize,
    h: f64,
) -> Result<GradCheck> {
    let analytic = model.gradients(x, y, loss, bank)?.grads;
    let mut probe = model.clone();
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut params = 0;
    for (mi, g) in analytic.iter().enumerate() {
        for idx in 0..g.as_slice().len() {
            let orig = probe.trainable()[mi].as_slice()[idx];
            probe.trainable_mut()[mi].as_mut_slice()[idx] = orig + h;
            let up = probe.gradients(x, y, loss, bank)?.loss;
            probe.trainable_mut()[mi].as_mut_slice()[idx] = orig - h;
            let down = probe.gradients(x, y, loss, bank)?.loss;
            probe.trainable_mut()[mi].as_mut_slice()[idx] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = g.as_slice()[idx];
            diff_sq += (a - numeric).powi(2);
            a_sq += a * a;
            n_sq += numeric * numeric;
            max_abs = max_abs.max((a - numeric).abs());
            params += 1;
        }
    }
    let scale = a_sq.sqrt().max(n_sq.sqrt());
    let rel_error = if scale == 0.0 { 0.0 } else { diff_sq.sqrt() / scale };
    Ok(GradCheck {
        rel_error,
        max_abs_error: max_abs,
        params,
    })
}

/// Hyperparameters of [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_decay_per_epoch: f64,
    pub seed: u64,
    pub loss: Loss,
    /// Record wall-clock seconds in the history. Off keeps the history
    /// reproducible byte for byte.
    pub record_time: bool,
}

impl TrainConfig {
    /// Sine benchmark protocol: lr 5e-4, momentum 0.9, batch 500, 100 epochs.
    pub fn sine() -> Self {
        TrainConfig {
            learning_rate: 5e-4,
            momentum: 0.9,
            batch_size: 500,
            epochs: 100,
            lr_decay_per_epoch: 1.0,
            seed: 0,
            loss: Loss::Squared,
            record_time: false,
        }
    }

    /// Tabular benchmark protocol: lr 0.1, momentum 0.9, batch 128, 100
    /// epochs, ×0.95 per epoch.
    pub fn tabular() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            momentum: 0.9,
            batch_size: 128,
            epochs: 100,
            lr_decay_per_epoch: 0.95,
            seed: 0,
            loss: Loss::Squared,
            record_time: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::param("learning rate must be finite and non-negative"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::param("momentum must lie in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if !(self.lr_decay_per_epoch > 0.0 && self.lr_decay_per_epoch <= 1.0) {
            return Err(Error::param("learning-rate decay must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Metrics after one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    /// Mini-batch steps taken so far.
    pub steps: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    /// Argmax error rate for multi-output targets, mean squared error for
    /// a single output.
    pub test_error: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,test_loss,test_error,seconds";

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(HISTORY_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                opt(r.test_loss),
                opt(r.test_error),
                r.seconds
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Test-split metric matching [`EpochRecord::test_error`].
pub fn test_error(preds: &Matrix, targets: &Matrix) -> Result<f64> {
    if targets.cols() > 1 {
        error_rate(preds, targets)
    } else {
        mean_squared_error(preds, targets)
    }
}

/// Trains `model` in place with shuffled mini-batches and momentum SGD.
///
/// Each epoch draws a fresh permutation from stream `("shuffle", epoch)`;
/// multi-bank models draw their per-step bank from stream `("bank", 0)`.
/// The last, possibly short, batch of each epoch is kept.
pub fn train<M: Trainable>(
    model: &mut M,
    train_set: &Dataset,
    test_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<TrainHistory> {
    config.validate()?;
    let m = train_set.len();
    if m == 0 {
        return Err(Error::param("training set is empty"));
    }
    let start = Instant::now();
    let mut velocity: Vec<Matrix> = model
        .trainable()
        .iter()
        .map(|w| Matrix::zeros(w.rows(), w.cols()))
        .collect();
    let mut bank_rng = stream(config.seed, "bank", 0);
    let banks = model.bank_count();
    let mut history = TrainHistory::default();
    let mut steps = 0;
    for epoch in 0..config.epochs {
        let lr = lr_schedule(config.learning_rate, epoch, config.lr_decay_per_epoch);
        let mut order: Vec<usize> = (0..m).collect();
        order.shuffle(&mut stream(config.seed, "shuffle", epoch as u64));
        for batch in order.chunks(config.batch_size) {
            let x = train_set.x.select_rows(batch);
            let y = train_set.y.select_rows(batch);
            let bank = if banks > 1 { bank_rng.random_range(0..banks) } else { 0 };
            let g = model.gradients(&x, &y, config.loss, bank)?;
            if !g.loss.is_finite() || g.grads.iter().any(|m| !m.is_finite()) {
                return Err(Error::Diverged {
                    epoch: epoch + 1,
                    step: steps,
                    loss: g.loss,
                });
            }
            sgd_momentum_step(
                &mut model.trainable_mut(),
                &g.grads,
                &mut velocity,
                lr,
                config.momentum,
            )?;
            steps += 1;
        }
        let train_loss = loss_value(config.loss, &model.predict(&train_set.x)?, &train_set.y)?;
        if !train_loss.is_finite() {
            return Err(Error::Diverged {
                epoch: epoch + 1,
                step: steps,
                loss: train_loss,
            });
        }
        let (test_loss, test_err) = match test_set {
            Some(t) => {
                let p = model.predict(&t.x)?;
                (Some(loss_value(config.loss, &p, &t.y)?), Some(test_error(&p, &t.y)?))
            }
            None => (None, None),
        };
        history.records.push(EpochRecord {
            epoch: epoch + 1,
            steps,
            train_loss,
            test_loss,
            test_error: test_err,
            seconds: if config.record_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        });
    }
    Ok(history)
}
