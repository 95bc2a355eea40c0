//! Closed-form optimization oracles for shallow semi-random models.
//!
//! With the gates frozen, the shallow output is linear in the composite
//! weights `[[w]]_k = w2_k · w1_k`:
//!
//! ```text
//! ŷ_i = Σ_k σ_s(x_iᵀ r_k) x_iᵀ (w2_k w1_k) = (D [[w]])_i
//! ```
//!
//! where block `(i, k)` of the design matrix `D` is `σ_s(x_iᵀ r_k) x_iᵀ` on
//! the augmented input. Every local minimum of the squared loss therefore
//! attains `‖P_null(Dᵀ) Y‖² / 2m`, with predictions `P_col(D) Y`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{activation, sample_first_layer_gates, stream, ActivationOrder};
use crate::network::{DeepModel, Network, ShallowModel};
use crate::numerics::{dot, least_squares, matvec, Matrix};

/// Largest path tensor [`path_expand`] will build.
pub const PATH_LIMIT: usize = 1_000_000;

/// Design matrix `D` of shape `m × n(d+1)`; block `(i, k)` is
/// `σ_s(x_iᵀ r_k) · x_i` with `x_i` augmented by a leading 1.
pub fn build_d(x: &Matrix, gates: &Matrix, s: ActivationOrder) -> Result<Matrix> {
    let (m, d) = x.shape();
    if gates.rows() != d + 1 {
        return Err(Error::shape(
            "build_d",
            format!("{d} input features against gates with {} rows", gates.rows()),
        ));
    }
    let n = gates.cols();
    let width = d + 1;
    let mut out = Matrix::zeros(m, n * width);
    let mut xa = vec![0.0; width];
    for i in 0..m {
        xa[0] = 1.0;
        xa[1..].copy_from_slice(x.row(i));
        let row = out.row_mut(i);
        for k in 0..n {
            let z: f64 = (0..width).map(|p| xa[p] * gates.get(p, k)).sum();
            let g = activation(s, z);
            if g != 0.0 {
                for p in 0..width {
                    row[k * width + p] = g * xa[p];
                }
            }
        }
    }
    Ok(out)
}

/// `(1/2m) ‖P_null(Dᵀ) Y‖²`, the loss at every global minimum.
pub fn global_min_loss(d: &Matrix, y: &[f64]) -> Result<f64> {
    let m = y.len().max(1) as f64;
    Ok(least_squares(d, y)?.residual_sq / (2.0 * m))
}

/// Global-minimum weights: the minimum-norm composite `[[w]]`, factored
/// with every `w2_k = 1` so that no output weight vanishes.
///
/// Returns `(W1, W2)` with `W1` of shape `(d+1) × n` and `W2` of `n × 1`.
pub fn recover_optimal_weights(d: &Matrix, y: &[f64], input_dim: usize) -> Result<(Matrix, Matrix)> {
    let width = input_dim + 1;
    if !d.cols().is_multiple_of(width) {
        return Err(Error::shape(
            "recover_optimal_weights",
            format!("{} columns is not a multiple of {width}", d.cols()),
        ));
    }
    let n = d.cols() / width;
    let ls = least_squares(d, y)?;
    let w1 = Matrix::from_fn(width, n, |p, k| ls.solution[k * width + p]);
    let w2 = Matrix::filled(n, 1, 1.0);
    Ok((w1, w2))
}

/// Summary of the closed-form optimum for one shallow instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub d_shape: (usize, usize),
    pub global_min_loss: f64,
    /// `P_col(D) Y`.
    pub projected_predictions: Vec<f64>,
    pub recovered_w1: Matrix,
    pub recovered_w2: Matrix,
    pub rank: usize,
    /// `‖(DᵀD)† Dᵀ Y‖₂`, the smallest composite-weight norm reaching the
    /// optimum.
    pub min_weight_norm: f64,
}

impl OracleReport {
    /// The shallow model carrying the recovered weights.
    pub fn model(&self, gates: &Matrix, s: ActivationOrder) -> Result<ShallowModel> {
        ShallowModel::new(s, gates.clone(), self.recovered_w1.clone(), self.recovered_w2.clone())
    }
}

/// Runs every oracle on `(x, y)` for the given frozen gates.
pub fn analyze(x: &Matrix, y: &[f64], gates: &Matrix, s: ActivationOrder) -> Result<OracleReport> {
    if x.rows() != y.len() {
        return Err(Error::shape("analyze", "inputs and targets differ in length"));
    }
    let d = build_d(x, gates, s)?;
    let ls = least_squares(&d, y)?;
    let m = y.len().max(1) as f64;
    let projected_predictions = matvec(&d, &ls.solution)?;
    let (w1, w2) = recover_optimal_weights(&d, y, x.cols())?;
    Ok(OracleReport {
        d_shape: d.shape(),
        global_min_loss: ls.residual_sq / (2.0 * m),
        projected_predictions,
        recovered_w1: w1,
        recovered_w2: w2,
        rank: ls.rank,
        min_weight_norm: crate::numerics::norm(&ls.solution),
    })
}

/// Design matrix of the last two layers of a deep model: block `(i, k)` is
/// `h_r^(H)_{ik} · h_w^(H-1)_i` (or the augmented input when `H = 1`).
/// Least squares on it gives the best loss reachable by moving only
/// `(W^(H), W^(H+1))`.
pub fn last_layers_design(model: &DeepModel, x: &Matrix) -> Result<Matrix> {
    let trace = model.trace(x)?;
    let depth = trace.hidden.len();
    let inputs = if depth == 1 { &trace.input } else { &trace.hidden[depth - 2] };
    let gates = &trace.gates[depth - 1];
    let (m, p) = inputs.shape();
    let n = gates.cols();
    Ok(Matrix::from_fn(m, n * p, |i, col| {
        gates.get(i, col / p) * inputs.get(i, col % p)
    }))
}

/// Random shallow instance for landscape checks.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeInstance {
    pub id: usize,
    pub x: Matrix,
    pub y: Vec<f64>,
    pub s: ActivationOrder,
    pub gates: Matrix,
    pub init_w1: Matrix,
    /// Every entry has magnitude at least 0.25.
    pub init_w2: Matrix,
}

impl LandscapeInstance {
    /// Draws instance `id` of `seed`: `m ∈ [5, 40]`, `d ∈ [1, 4]`,
    /// `n ∈ [1, 6]`, `s ∈ {0, 1}`, inputs uniform on `[-1, 1]^d` and
    /// standard normal targets.
    pub fn random(seed: u64, id: usize) -> Self {
        let mut rng = stream(seed, "landscape", id as u64);
        let m = rng.random_range(5..=40);
        let d = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let s = ActivationOrder(rng.random_range(0..=1));
        Self::sample(&mut rng, id, m, d, n, s)
    }

    pub fn sample<R: Rng + ?Sized>(
        rng: &mut R,
        id: usize,
        m: usize,
        d: usize,
        n: usize,
        s: ActivationOrder,
    ) -> Self {
        let x = Matrix::from_fn(m, d, |_, _| rng.random_range(-1.0..=1.0));
        let y: Vec<f64> = (0..m).map(|_| StandardNormal.sample(rng)).collect();
        let radius = (0..m)
            .map(|i| crate::numerics::norm(x.row(i)))
            .fold(0.0, f64::max)
            .max(1e-3);
        let gates = sample_first_layer_gates(d, n, radius, rng).expect("valid sizes");
        let init_w1 = Matrix::from_fn(d + 1, n, |_, _| {
            let z: f64 = StandardNormal.sample(rng);
            0.5 * z
        });
        let init_w2 = Matrix::from_fn(n, 1, |_, _| {
            let mag = rng.random_range(0.25..=1.0);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        });
        LandscapeInstance {
            id,
            x,
            y,
            s,
            gates,
            init_w1,
            init_w2,
        }
    }

    pub fn m(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn n(&self) -> usize {
        self.gates.cols()
    }

    pub fn initial_model(&self) -> Result<ShallowModel> {
        ShallowModel::new(self.s, self.gates.clone(), self.init_w1.clone(), self.init_w2.clone())
    }
}

/// Gradient-descent settings for [`verify_landscape`].
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeConfig {
    /// Tried in order; the search stops at the first that converges.
    pub learning_rates: Vec<f64>,
    /// Heavy-ball momentum; 0 gives plain gradient descent.
    pub momentum: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Optima below this count as zero and use `abs_tol`.
    pub zero_threshold: f64,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            learning_rates: vec![1.0, 0.3, 1e-1, 3e-2, 1e-2, 1e-3, 1e-4],
            momentum: 0.9,
            max_iters: 100_000,
            rel_tol: 1e-3,
            abs_tol: 1e-6,
            zero_threshold: 1e-12,
        }
    }
}

impl LandscapeConfig {
    fn converged(&self, loss: f64, optimum: f64) -> bool {
        let gap = loss - optimum;
        if optimum < self.zero_threshold {
            gap <= self.abs_tol
        } else {
            gap / optimum <= self.rel_tol
        }
    }
}

/// Outcome of gradient descent against the oracle optimum.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeReport {
    pub global_min_loss: f64,
    /// Best final loss over the tried step sizes.
    pub final_loss: f64,
    /// `final_loss − global_min_loss`.
    pub gap: f64,
    /// `gap / global_min_loss`, or the gap itself when the optimum is zero.
    pub rel_gap: f64,
    pub converged: bool,
    /// Every step size diverged.
    pub diverged: bool,
    pub learning_rate: f64,
    pub iterations: usize,
}

/// Squared loss of a single-output shallow model and its gradients with
/// respect to `W1` and `w2`, computed through the design matrix.
///
/// The composite weights are `u_k = w2_k · w1_k`, so with
/// `g = Dᵀ(D u − y) / m` the gradients are `g_k · w2_k` and `g_kᵀ w1_k`.
/// This matches backpropagation through the network exactly.
pub fn shallow_loss_grad(
    d: &Matrix,
    y: &[f64],
    w1: &Matrix,
    w2: &[f64],
    g1: &mut Matrix,
    g2: &mut [f64],
) -> f64 {
    let (m, cols) = d.shape();
    let (width, n) = w1.shape();
    let mut u = vec![0.0; cols];
    for k in 0..n {
        for p in 0..width {
            u[k * width + p] = w1.get(p, k) * w2[k];
        }
    }
    let mut gu = vec![0.0; cols];
    let mut loss = 0.0;
    for (i, &yi) in y.iter().enumerate().take(m) {
        let row = d.row(i);
        let r = dot(row, &u) - yi;
        loss += r * r;
        for (g, a) in gu.iter_mut().zip(row) {
            *g += a * r;
        }
    }
    let mf = m.max(1) as f64;
    for k in 0..n {
        let mut acc = 0.0;
        for p in 0..width {
            let g = gu[k * width + p] / mf;
            g1.set(p, k, g * w2[k]);
            acc += g * w1.get(p, k);
        }
        g2[k] = acc;
    }
    loss / (2.0 * mf)
}

/// Runs full-batch gradient descent from the instance's initialization and
/// compares the result with [`global_min_loss`]. Divergence is reported,
/// not returned as an error.
pub fn verify_landscape(inst: &LandscapeInstance, cfg: &LandscapeConfig) -> Result<LandscapeReport> {
    let d = build_d(&inst.x, &inst.gates, inst.s)?;
    let optimum = global_min_loss(&d, &inst.y)?;
    let (width, n) = inst.init_w1.shape();
    let mut best: Option<(f64, f64, usize)> = None;
    let mut any_finite = false;
    for &lr in &cfg.learning_rates {
        let mut w1 = inst.init_w1.clone();
        let mut w2 = inst.init_w2.as_slice().to_vec();
        let mut g1 = Matrix::zeros(width, n);
        let mut g2 = vec![0.0; n];
        let mut v1 = Matrix::zeros(width, n);
        let mut v2 = vec![0.0; n];
        let mut last = shallow_loss_grad(&d, &inst.y, &w1, &w2, &mut g1, &mut g2);
        let mut iters = 0;
        let mut finite = last.is_finite();
        while finite && iters < cfg.max_iters && !cfg.converged(last, optimum) {
            let step = |w: &mut [f64], v: &mut [f64], g: &[f64]| {
                for ((w, v), g) in w.iter_mut().zip(v.iter_mut()).zip(g) {
                    *v = cfg.momentum * *v - lr * g;
                    *w += *v;
                }
            };
            step(w1.as_mut_slice(), v1.as_mut_slice(), g1.as_slice());
            step(&mut w2, &mut v2, &g2);
            last = shallow_loss_grad(&d, &inst.y, &w1, &w2, &mut g1, &mut g2);
            finite = last.is_finite() && g1.is_finite() && g2.iter().all(|g| g.is_finite());
            iters += 1;
        }
        if finite {
            any_finite = true;
            if best.is_none_or(|(b, _, _)| last < b) {
                best = Some((last, lr, iters));
            }
            if cfg.converged(last, optimum) {
                break;
            }
        }
    }
    let (final_loss, learning_rate, iterations) = best.unwrap_or((f64::NAN, f64::NAN, 0));
    let gap = final_loss - optimum;
    let rel_gap = if optimum < cfg.zero_threshold { gap } else { gap / optimum };
    Ok(LandscapeReport {
        global_min_loss: optimum,
        final_loss,
        gap,
        rel_gap,
        converged: any_finite && cfg.converged(final_loss, optimum),
        diverged: !any_finite,
        learning_rate,
        iterations,
    })
}

/// Path expansion of a single-output deep model at one input.
///
/// Entry `(k_0, k_1, …, k_H)` (row-major, `k_0` slowest) of `sigma` is
/// `x_{k_0} · Π_l h_r^(l)_{k_l}` and of `weights` is
/// `Π_l W^(l)_{k_{l-1} k_l} · W^(H+1)_{k_H}`. Their inner product is the
/// network output.
#[derive(Debug, Clone, PartialEq)]
pub struct PathTensors {
    pub sigma: Vec<f64>,
    pub weights: Vec<f64>,
}

impl PathTensors {
    pub fn inner(&self) -> f64 {
        dot(&self.sigma, &self.weights)
    }
}

/// Number of paths `(d+1) · n_1 ⋯ n_H`, or `None` on overflow.
pub fn path_count(d: usize, widths: &[usize]) -> Option<usize> {
    widths.iter().try_fold(d + 1, |acc, &n| acc.checked_mul(n))
}

pub fn path_expand(model: &DeepModel, x_raw: &[f64]) -> Result<PathTensors> {
    let arch = model.arch();
    if arch.outputs != 1 {
        return Err(Error::param("path expansion needs a single-output model"));
    }
    let total = path_count(arch.input_dim, &arch.widths).unwrap_or(usize::MAX);
    if total > PATH_LIMIT {
        return Err(Error::param(format!(
            "{total} paths exceed the limit of {PATH_LIMIT}"
        )));
    }
    let x = Matrix::row_vector(x_raw)?;
    if x.cols() != arch.input_dim {
        return Err(Error::shape("path_expand", "input dimension mismatch"));
    }
    let gates = model.gates().activations(&x)?;
    let mut sigma: Vec<f64> = std::iter::once(1.0).chain(x_raw.iter().copied()).collect();
    let mut weights = vec![1.0; sigma.len()];
    let mut prev_width = arch.input_dim + 1;
    for (l, w) in model.weights.hidden.iter().enumerate() {
        let n = w.cols();
        let h = gates[l].row(0);
        let mut s_next = Vec::with_capacity(sigma.len() * n);
        let mut w_next = Vec::with_capacity(sigma.len() * n);
        for (idx, (&sv, &wv)) in sigma.iter().zip(&weights).enumerate() {
            let k_prev = idx % prev_width;
            for (k, &hk) in h.iter().enumerate().take(n) {
                s_next.push(sv * hk);
                w_next.push(wv * w.get(k_prev, k));
            }
        }
        sigma = s_next;
        weights = w_next;
        prev_width = n;
    }
    let out = &model.weights.output;
    for (idx, wv) in weights.iter_mut().enumerate() {
        *wv *= out.get(idx % prev_width, 0);
    }
    Ok(PathTensors { sigma, weights })
}

/// Trainable parameter count `(d+1) n_1 + c n_H + Σ_{l≥2} n_{l-1} n_l`.
pub fn param_count(d: usize, widths: &[usize], c: usize) -> usize {
    let Some(&first) = widths.first() else {
        return 0;
    };
    let inner: usize = widths.windows(2).map(|w| w[0] * w[1]).sum();
    (d + 1) * first + c * widths[widths.len() - 1] + inner
}
