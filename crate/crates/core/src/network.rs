//! Forward evaluation of semi-random networks and their baselines.
//!
//! A semi-random network carries two streams. The gate stream
//! `h_r^(l) = σ_s(h_r^(l-1) R^(l))` depends only on the frozen random
//! matrices and the input; the trainable stream
//! `h_w^(l) = h_r^(l) ⊙ (h_w^(l-1) W^(l))` multiplies it in. The first layer
//! of both streams reads the augmented input `x = (1, x_raw)`, and the
//! network output is `h_w^(H) W^(H+1)`.
//!
//! Shapes, for input dimension `d`, widths `n_1..n_H` and `c` outputs:
//!
//! - `R^(1)`, `W^(1)`: `(d+1) × n_1`
//! - `R^(l)`, `W^(l)`: `n_{l-1} × n_l` for `l ≥ 2`
//! - `W^(H+1)`: `n_H × c`
//!
//! Every gate matrix has `e₁` as its first column, so unit 1 of each layer
//! is never switched off.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::NormStats;
use crate::error::{Error, Result};
use crate::features::{
    activation, sample_first_layer_gates, sample_hidden_gates, stream, ActivationOrder,
    RandomDirection,
};
use crate::numerics::{hadamard, matmul, Matrix};

/// Layer sizes `d-n_1-…-n_H-c`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    pub outputs: usize,
}

impl Architecture {
    pub fn new(input_dim: usize, widths: Vec<usize>, outputs: usize) -> Result<Self> {
        if widths.contains(&0) {
            return Err(Error::param("hidden widths must be at least 1"));
        }
        if outputs == 0 {
            return Err(Error::param("output count must be at least 1"));
        }
        Ok(Architecture {
            input_dim,
            widths,
            outputs,
        })
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn last_width(&self) -> usize {
        *self.widths.last().unwrap_or(&(self.input_dim + 1))
    }

    /// `(rows, cols)` of `W^(1)…W^(H)`.
    pub fn hidden_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.widths.len());
        let mut fan_in = self.input_dim + 1;
        for &w in &self.widths {
            shapes.push((fan_in, w));
            fan_in = w;
        }
        shapes
    }

    fn require_hidden(&self) -> Result<()> {
        if self.widths.is_empty() {
            Err(Error::param("semi-random networks need at least one hidden layer"))
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.input_dim)?;
        for w in &self.widths {
            write!(f, "-{w}")?;
        }
        write!(f, "-{}", self.outputs)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    /// Parses `"1-50-50-1"`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<usize> = s
            .split('-')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::param(format!("bad architecture component {p:?} in {s:?}")))
            })
            .collect::<Result<_>>()?;
        if parts.len() < 2 {
            return Err(Error::param(format!(
                "architecture {s:?} needs at least input and output sizes"
            )));
        }
        Architecture::new(
            parts[0],
            parts[1..parts.len() - 1].to_vec(),
            parts[parts.len() - 1],
        )
    }
}

/// Initialization of trainable matrices: standard normal entries times a
/// scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightInit {
    /// Scale `1/√fan_in`, where fan-in is the layer's input dimension.
    FanIn,
    /// Fixed scale for every layer.
    Scaled(f64),
}

fn init_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, init: WeightInit, rng: &mut R) -> Matrix {
    let scale = match init {
        WeightInit::FanIn => 1.0 / (rows.max(1) as f64).sqrt(),
        WeightInit::Scaled(c) => c,
    };
    Matrix::from_fn(rows, cols, |_, _| {
        let z: f64 = StandardNormal.sample(rng);
        z * scale
    })
}

/// The frozen random matrices `R^(1)…R^(H)` of one random net.
#[derive(Debug, Clone, PartialEq)]
pub struct GateStack {
    s: ActivationOrder,
    layers: Vec<Matrix>,
}

impl GateStack {
    /// Samples gates for `arch`. The first layer's biases are drawn from
    /// `Uniform[-radius, radius]`.
    pub fn sample<R: Rng + ?Sized>(
        arch: &Architecture,
        s: ActivationOrder,
        radius: f64,
        rng: &mut R,
    ) -> Result<Self> {
        arch.require_hidden()?;
        let mut layers = Vec::with_capacity(arch.depth());
        layers.push(sample_first_layer_gates(
            arch.input_dim,
            arch.widths[0],
            radius,
            rng,
        )?);
        for l in 1..arch.depth() {
            layers.push(sample_hidden_gates(arch.widths[l - 1], arch.widths[l], rng)?);
        }
        Ok(GateStack { s, layers })
    }

    pub fn from_layers(s: ActivationOrder, layers: Vec<Matrix>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("gate stack needs at least one layer"));
        }
        for (l, g) in layers.iter().enumerate() {
            if l > 0 && g.rows() != layers[l - 1].cols() {
                return Err(Error::shape(
                    "GateStack",
                    format!("layer {l} has {} rows, previous width {}", g.rows(), layers[l - 1].cols()),
                ));
            }
            check_e1_column(g)?;
        }
        Ok(GateStack { s, layers })
    }

    pub fn s(&self) -> ActivationOrder {
        self.s
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    /// `h_r^(1)…h_r^(H)` for a batch of raw inputs.
    pub fn activations(&self, x_raw: &Matrix) -> Result<Vec<Matrix>> {
        gate_activations(self.s, &self.layers, &x_raw.augment_ones())
    }

    /// Smallest `|z|` over every gate preactivation of the batch. Gate
    /// values are nondifferentiable in their input only where this is 0.
    pub fn min_abs_preactivation(&self, x_raw: &Matrix) -> Result<f64> {
        let mut prev = x_raw.augment_ones();
        let mut min = f64::INFINITY;
        for r in &self.layers {
            let z = matmul(&prev, r)?;
            min = z.as_slice().iter().fold(min, |a, v| a.min(v.abs()));
            prev = z.map(|v| activation(self.s, v));
        }
        Ok(min)
    }

    /// The first-layer gate `k` as a [`RandomDirection`].
    pub fn first_layer_direction(&self, k: usize) -> RandomDirection {
        let col = self.layers[0].col(k);
        RandomDirection {
            r0: col[0],
            r: col[1..].to_vec(),
        }
    }
}

fn check_e1_column(g: &Matrix) -> Result<()> {
    if g.cols() == 0 || g.rows() == 0 {
        return Err(Error::shape("gates", "empty gate matrix"));
    }
    let ok = (0..g.rows()).all(|i| g.get(i, 0) == if i == 0 { 1.0 } else { 0.0 });
    if ok {
        Ok(())
    } else {
        Err(Error::param("first gate column must be e1"))
    }
}

/// Trainable matrices `W^(1)…W^(H)` and `W^(H+1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub hidden: Vec<Matrix>,
    pub output: Matrix,
}

impl Weights {
    pub fn init<R: Rng + ?Sized>(arch: &Architecture, init: WeightInit, rng: &mut R) -> Self {
        let hidden = arch
            .hidden_shapes()
            .into_iter()
            .map(|(r, c)| init_matrix(r, c, init, rng))
            .collect();
        let output = init_matrix(arch.last_width(), arch.outputs, init, rng);
        Weights { hidden, output }
    }

    pub fn zeros(arch: &Architecture) -> Self {
        Weights {
            hidden: arch
                .hidden_shapes()
                .into_iter()
                .map(|(r, c)| Matrix::zeros(r, c))
                .collect(),
            output: Matrix::zeros(arch.last_width(), arch.outputs),
        }
    }

    pub fn matrices(&self) -> Vec<&Matrix> {
        self.hidden.iter().chain(std::iter::once(&self.output)).collect()
    }

    pub fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        self.hidden
            .iter_mut()
            .chain(std::iter::once(&mut self.output))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.matrices().iter().map(|m| m.len()).sum()
    }

    fn check(&self, arch: &Architecture) -> Result<()> {
        let shapes = arch.hidden_shapes();
        if self.hidden.len() != shapes.len() {
            return Err(Error::shape(
                "Weights",
                format!("{} hidden matrices for depth {}", self.hidden.len(), shapes.len()),
            ));
        }
        for (l, (m, &shape)) in self.hidden.iter().zip(&shapes).enumerate() {
            if m.shape() != shape {
                return Err(Error::shape(
                    "Weights",
                    format!("W^({}) is {:?}, expected {:?}", l + 1, m.shape(), shape),
                ));
            }
        }
        if self.output.shape() != (arch.last_width(), arch.outputs) {
            return Err(Error::shape(
                "Weights",
                format!("output matrix is {:?}", self.output.shape()),
            ));
        }
        Ok(())
    }
}

/// Gate-stream activations on already augmented inputs.
pub(crate) fn gate_activations(
    s: ActivationOrder,
    gates: &[Matrix],
    input_aug: &Matrix,
) -> Result<Vec<Matrix>> {
    let mut acts: Vec<Matrix> = Vec::with_capacity(gates.len());
    for (l, r) in gates.iter().enumerate() {
        let prev = if l == 0 { input_aug } else { &acts[l - 1] };
        let g = matmul(prev, r)?.map(|z| activation(s, z));
        acts.push(g);
    }
    Ok(acts)
}

/// Intermediate values of one semi-random forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Augmented inputs, `m × (d+1)`.
    pub input: Matrix,
    /// Gate stream `h_r^(l)`.
    pub gates: Vec<Matrix>,
    /// Trainable stream `h_w^(l)`.
    pub hidden: Vec<Matrix>,
    pub output: Matrix,
}

pub(crate) fn semi_random_trace(
    s: ActivationOrder,
    gates: &[Matrix],
    hidden: &[Matrix],
    output: &Matrix,
    x_raw: &Matrix,
) -> Result<Trace> {
    let input = x_raw.augment_ones();
    if gates.len() != hidden.len() {
        return Err(Error::shape("forward", "gate and weight depths differ"));
    }
    let gate_acts = gate_activations(s, gates, &input)?;
    let mut hw: Vec<Matrix> = Vec::with_capacity(hidden.len());
    for (l, w) in hidden.iter().enumerate() {
        let prev = if l == 0 { &input } else { &hw[l - 1] };
        let h = hadamard(&gate_acts[l], &matmul(prev, w)?)?;
        hw.push(h);
    }
    let last = hw.last().ok_or_else(|| Error::param("empty network"))?;
    let out = matmul(last, output)?;
    Ok(Trace {
        input,
        gates: gate_acts,
        hidden: hw,
        output: out,
    })
}

fn check_input(arch: &Architecture, x: &Matrix) -> Result<()> {
    if x.cols() != arch.input_dim {
        return Err(Error::shape(
            "forward",
            format!("inputs have {} features, model expects {}", x.cols(), arch.input_dim),
        ));
    }
    Ok(())
}

fn single_row(x_raw: &[f64]) -> Result<Matrix> {
    Matrix::row_vector(x_raw)
}

/// Common read-only surface of every trainable model.
pub trait Network {
    fn arch(&self) -> &Architecture;

    /// Evaluation-mode outputs (`m × c`) for a batch of raw inputs (`m × d`).
    fn predict(&self, x: &Matrix) -> Result<Matrix>;

    /// Number of interchangeable random banks; more than one only for the
    /// implicit ensemble.
    fn bank_count(&self) -> usize {
        1
    }

    /// Matrices updated by training, in a fixed order.
    fn trainable(&self) -> Vec<&Matrix>;

    fn trainable_mut(&mut self) -> Vec<&mut Matrix>;

    /// Matrices that must never change during training.
    fn frozen(&self) -> Vec<&Matrix>;
}

/// One-hidden-layer model `(σ_s(xᵀR) ⊙ (xᵀW1)) W2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShallowModel {
    arch: Architecture,
    s: ActivationOrder,
    gates: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
}

impl ShallowModel {
    /// `gates` and `w1` are `(d+1) × n`, `w2` is `n × c`.
    pub fn new(s: ActivationOrder, gates: Matrix, w1: Matrix, w2: Matrix) -> Result<Self> {
        check_e1_column(&gates)?;
        if gates.rows() == 0 {
            return Err(Error::shape("ShallowModel", "gate matrix has no rows"));
        }
        let arch = Architecture::new(gates.rows() - 1, vec![gates.cols()], w2.cols().max(1))?;
        let weights = Weights {
            hidden: vec![w1],
            output: w2,
        };
        weights.check(&arch)?;
        let Weights { mut hidden, output } = weights;
        Ok(ShallowModel {
            arch,
            s,
            gates,
            w1: hidden.remove(0),
            w2: output,
        })
    }

    pub fn s(&self) -> ActivationOrder {
        self.s
    }

    pub fn gates(&self) -> &Matrix {
        &self.gates
    }

    pub fn width(&self) -> usize {
        self.gates.cols()
    }

    pub fn forward(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&single_row(x_raw)?)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.output)
    }

    pub fn trace(&self, x: &Matrix) -> Result<Trace> {
        check_input(&self.arch, x)?;
        semi_random_trace(
            self.s,
            std::slice::from_ref(&self.gates),
            std::slice::from_ref(&self.w1),
            &self.w2,
            x,
        )
    }

    pub fn to_deep(&self) -> DeepModel {
        DeepModel {
            arch: self.arch.clone(),
            gates: GateStack {
                s: self.s,
                layers: vec![self.gates.clone()],
            },
            weights: Weights {
                hidden: vec![self.w1.clone()],
                output: self.w2.clone(),
            },
        }
    }
}

impl Network for ShallowModel {
    fn arch(&self) -> &Architecture {
        &self.arch
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_batch(x)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.w1, &self.w2]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w1, &mut self.w2]
    }

    fn frozen(&self) -> Vec<&Matrix> {
        vec![&self.gates]
    }
}

/// Semi-random network with `H ≥ 1` hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DeepModel {
    arch: Architecture,
    gates: GateStack,
    pub weights: Weights,
}

impl DeepModel {
    /// Samples gates from stream `("gates", 0)` and weights from
    /// `("weights", 0)` of `seed`.
    pub fn sample(
        arch: &Architecture,
        s: ActivationOrder,
        radius: f64,
        init: WeightInit,
        seed: u64,
    ) -> Result<Self> {
        let gates = GateStack::sample(arch, s, radius, &mut stream(seed, "gates", 0))?;
        let weights = Weights::init(arch, init, &mut stream(seed, "weights", 0));
        Ok(DeepModel {
            arch: arch.clone(),
            gates,
            weights,
        })
    }

    pub fn from_parts(gates: GateStack, weights: Weights, outputs: usize) -> Result<Self> {
        let layers = gates.layers();
        let d = layers[0]
            .rows()
            .checked_sub(1)
            .ok_or_else(|| Error::shape("DeepModel", "empty first gate layer"))?;
        let arch = Architecture::new(d, layers.iter().map(|g| g.cols()).collect(), outputs)?;
        for (g, (r, c)) in layers.iter().zip(arch.hidden_shapes()) {
            if g.shape() != (r, c) {
                return Err(Error::shape("DeepModel", format!("gate shape {:?}", g.shape())));
            }
        }
        weights.check(&arch)?;
        Ok(DeepModel {
            arch,
            gates,
            weights,
        })
    }

    pub fn s(&self) -> ActivationOrder {
        self.gates.s
    }

    pub fn gates(&self) -> &GateStack {
        &self.gates
    }

    pub fn param_count(&self) -> usize {
        self.weights.param_count()
    }

    pub fn forward(&self, x_raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&single_row(x_raw)?)?.into_vec())
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.output)
    }

    pub fn trace(&self, x: &Matrix) -> Result<Trace> {
        check_input(&self.arch, x)?;
        semi_random_trace(
            self.gates.s,
            &self.gates.layers,
            &self.weights.hidden,
            &self.weights.output,
            x,
        )
    }
}

impl Network for DeepModel {
    fn arch(&self) -> &Architecture {
        &self.arch
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_batch(x)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        self.weights.matrices()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights.matrices_mut()
    }

    fn frozen(&self) -> Vec<&Matrix> {
        self.gates.layers.iter().collect()
    }
}

/// Random-feature baseline: a semi-random network whose hidden weights
/// stay at their random initialization. Only `W^(H+1)` trains.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureModel {
    inner: DeepModel,
}

impl RandomFeatureModel {
    pub fn new(inner: DeepModel) -> Self {
        RandomFeatureModel { inner }
    }

    pub fn sample(
        arch: &Architecture,
        s: ActivationOrder,
        radius: f64,
        init: WeightInit,
        seed: u64,
    ) -> Result<Self> {
        DeepModel::sample(arch, s, radius, init, seed).map(Self::new)
    }

    pub fn inner(&self) -> &DeepModel {
        &self.inner
    }

    pub fn into_inner(self) -> DeepModel {
        self.inner
    }

    /// Same forward pass as the wrapped semi-random network.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        self.inner.forward_batch(x)
    }
}

impl Network for RandomFeatureModel {
    fn arch(&self) -> &Architecture {
        &self.inner.arch
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.inner.forward_batch(x)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        vec![&self.inner.weights.output]
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.inner.weights.output]
    }

    fn frozen(&self) -> Vec<&Matrix> {
        let mut f: Vec<&Matrix> = self.inner.gates.layers.iter().collect();
        f.extend(self.inner.weights.hidden.iter());
        f
    }
}

/// Implicit ensemble: `K` frozen random banks sharing one set of trainable
/// weights. Training picks one bank per step; evaluation averages the
/// network outputs over all banks.
#[derive(Debug, Clone, PartialEq)]
pub struct LsrIeModel {
    arch: Architecture,
    banks: Vec<GateStack>,
    pub weights: Weights,
}

impl LsrIeModel {
    /// Bank `k` is drawn from stream `("gates", k)` and the weights from
    /// `("weights", 0)`, so bank 0 and the weights coincide with
    /// [`DeepModel::sample`] for the same seed.
    pub fn sample(
        arch: &Architecture,
        s: ActivationOrder,
        radius: f64,
        init: WeightInit,
        banks: usize,
        seed: u64,
    ) -> Result<Self> {
        if banks == 0 {
            return Err(Error::param("implicit ensemble needs at least one bank"));
        }
        let banks = (0..banks)
            .map(|k| GateStack::sample(arch, s, radius, &mut stream(seed, "gates", k as u64)))
            .collect::<Result<Vec<_>>>()?;
        let weights = Weights::init(arch, init, &mut stream(seed, "weights", 0));
        Ok(LsrIeModel {
            arch: arch.clone(),
            banks,
            weights,
        })
    }

    pub fn from_parts(banks: Vec<GateStack>, weights: Weights, outputs: usize) -> Result<Self> {
        let first = banks
            .first()
            .ok_or_else(|| Error::param("implicit ensemble needs at least one bank"))?;
        let arch = DeepModel::from_parts(first.clone(), weights.clone(), outputs)?.arch;
        for b in &banks[1..] {
            let shapes: Vec<_> = b.layers.iter().map(|m| m.shape()).collect();
            let expected: Vec<_> = first.layers.iter().map(|m| m.shape()).collect();
            if shapes != expected || b.s != first.s {
                return Err(Error::shape("LsrIeModel", "banks differ in shape"));
            }
        }
        Ok(LsrIeModel {
            arch,
            banks,
            weights,
        })
    }

    pub fn banks(&self) -> &[GateStack] {
        &self.banks
    }

    pub fn s(&self) -> ActivationOrder {
        self.banks[0].s
    }

    /// Training-mode pass through bank `k` (0-based).
    pub fn forward_train(&self, x: &Matrix, k: usize) -> Result<Matrix> {
        Ok(self.trace(x, k)?.output)
    }

    pub fn trace(&self, x: &Matrix, k: usize) -> Result<Trace> {
        let bank = self.banks.get(k).ok_or(Error::Index {
            index: k,
            len: self.banks.len(),
        })?;
        check_input(&self.arch, x)?;
        semi_random_trace(bank.s, &bank.layers, &self.weights.hidden, &self.weights.output, x)
    }

    /// Test-mode output: mean of the bank outputs.
    pub fn forward_test(&self, x: &Matrix) -> Result<Matrix> {
        let mut acc = self.forward_train(x, 0)?;
        if self.banks.len() == 1 {
            return Ok(acc);
        }
        for k in 1..self.banks.len() {
            let out = self.forward_train(x, k)?;
            for (a, o) in acc.as_mut_slice().iter_mut().zip(out.as_slice()) {
                *a += o;
            }
        }
        Ok(acc.scale(1.0 / self.banks.len() as f64))
    }
}

impl Network for LsrIeModel {
    fn arch(&self) -> &Architecture {
        &self.arch
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_test(x)
    }

    fn bank_count(&self) -> usize {
        self.banks.len()
    }

    fn trainable(&self) -> Vec<&Matrix> {
        self.weights.matrices()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights.matrices_mut()
    }

    fn frozen(&self) -> Vec<&Matrix> {
        self.banks.iter().flat_map(|b| b.layers.iter()).collect()
    }
}

/// Fully connected ReLU network with a bias at every layer. Layer `l` has
/// a weight matrix of shape `(fan_in + 1) × fan_out` whose first row is the
/// bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ReluNet {
    arch: Architecture,
    pub layers: Vec<Matrix>,
}

/// Intermediate values of a ReLU forward pass.
#[derive(Debug, Clone)]
pub struct ReluTrace {
    /// Augmented input of each layer.
    pub inputs: Vec<Matrix>,
    /// Pre-activations of each layer; the last is the network output.
    pub pre: Vec<Matrix>,
}

impl ReluNet {
    pub fn sample(arch: &Architecture, init: WeightInit, seed: u64) -> Self {
        let mut rng = stream(seed, "weights", 0);
        let layers = relu_shapes(arch)
            .into_iter()
            .map(|(r, c)| init_matrix(r, c, init, &mut rng))
            .collect();
        ReluNet {
            arch: arch.clone(),
            layers,
        }
    }

    pub fn from_layers(arch: &Architecture, layers: Vec<Matrix>) -> Result<Self> {
        let shapes = relu_shapes(arch);
        if layers.len() != shapes.len()
            || layers.iter().zip(&shapes).any(|(m, &s)| m.shape() != s)
        {
            return Err(Error::shape("ReluNet", format!("layers do not match {arch}")));
        }
        Ok(ReluNet {
            arch: arch.clone(),
            layers,
        })
    }

    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.pre.pop().expect("at least one layer"))
    }

    pub fn trace(&self, x: &Matrix) -> Result<ReluTrace> {
        check_input(&self.arch, x)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = x.augment_ones();
        for (l, w) in self.layers.iter().enumerate() {
            let z = matmul(&a, w)?;
            inputs.push(a);
            if l + 1 < self.layers.len() {
                a = z.map(|v| v.max(0.0)).augment_ones();
            } else {
                a = Matrix::zeros(0, 0);
            }
            pre.push(z);
        }
        Ok(ReluTrace { inputs, pre })
    }
}

fn relu_shapes(arch: &Architecture) -> Vec<(usize, usize)> {
    let mut shapes = Vec::new();
    let mut fan_in = arch.input_dim;
    for &w in &arch.widths {
        shapes.push((fan_in + 1, w));
        fan_in = w;
    }
    shapes.push((fan_in + 1, arch.outputs));
    shapes
}

/// ReLU network output for one raw input.
pub fn relu_forward(arch: &Architecture, layers: &[Matrix], x_raw: &[f64]) -> Result<Vec<f64>> {
    let net = ReluNet::from_layers(arch, layers.to_vec())?;
    Ok(net.forward_batch(&single_row(x_raw)?)?.into_vec())
}

impl Network for ReluNet {
    fn arch(&self) -> &Architecture {
        &self.arch
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.forward_batch(x)
    }

    fn trainable(&self) -> Vec<&Matrix> {
        self.layers.iter().collect()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.layers.iter_mut().collect()
    }

    fn frozen(&self) -> Vec<&Matrix> {
        Vec::new()
    }
}

/// Kind of hidden unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKind {
    /// Linear semi-random (`s = 0`).
    Lsr,
    /// Squared semi-random (`s = 1`).
    Ssr,
    Relu,
    /// Random features: semi-random forward with frozen hidden weights.
    Rf,
    /// Linear semi-random implicit ensemble.
    LsrIe,
}

impl UnitKind {
    pub fn default_order(self) -> ActivationOrder {
        match self {
            UnitKind::Ssr => ActivationOrder::SQUARED,
            _ => ActivationOrder::LINEAR,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UnitKind::Lsr => "lsr",
            UnitKind::Ssr => "ssr",
            UnitKind::Relu => "relu",
            UnitKind::Rf => "rf",
            UnitKind::LsrIe => "lsr-ie",
        }
    }
}

impl fmt::Display for UnitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UnitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lsr" => UnitKind::Lsr,
            "ssr" => UnitKind::Ssr,
            "relu" => UnitKind::Relu,
            "rf" => UnitKind::Rf,
            "lsr-ie" => UnitKind::LsrIe,
            other => {
                return Err(Error::param(format!(
                    "unknown unit {other:?} (expected lsr, ssr, relu, rf or lsr-ie)"
                )))
            }
        })
    }
}

/// Everything needed to rebuild a model's random parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub unit: UnitKind,
    pub arch: Architecture,
    pub s: ActivationOrder,
    /// Number of random banks; only used by `lsr-ie`.
    pub banks: usize,
    /// First-layer gate bias range.
    pub radius: f64,
    pub init: WeightInit,
    pub seed: u64,
}

/// Any of the supported models.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    SemiRandom(DeepModel),
    RandomFeature(RandomFeatureModel),
    Relu(ReluNet),
    Ensemble(LsrIeModel),
}

impl Model {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let ModelSpec {
            unit,
            ref arch,
            s,
            banks,
            radius,
            init,
            seed,
        } = *spec;
        Ok(match unit {
            UnitKind::Lsr | UnitKind::Ssr => {
                Model::SemiRandom(DeepModel::sample(arch, s, radius, init, seed)?)
            }
            UnitKind::Rf => {
                Model::RandomFeature(RandomFeatureModel::sample(arch, s, radius, init, seed)?)
            }
            UnitKind::Relu => Model::Relu(ReluNet::sample(arch, init, seed)),
            UnitKind::LsrIe => {
                Model::Ensemble(LsrIeModel::sample(arch, s, radius, init, banks, seed)?)
            }
        })
    }

    /// Smallest `|z|` over the gate (or ReLU hidden) preactivations of
    /// the batch, across all banks.
    pub fn min_abs_preactivation(&self, x: &Matrix) -> Result<f64> {
        match self {
            Model::SemiRandom(m) => m.gates().min_abs_preactivation(x),
            Model::RandomFeature(m) => m.inner().gates().min_abs_preactivation(x),
            Model::Ensemble(m) => m.banks().iter().try_fold(f64::INFINITY, |a, g| {
                Ok(a.min(g.min_abs_preactivation(x)?))
            }),
            Model::Relu(m) => {
                let t = m.trace(x)?;
                let hidden = &t.pre[..t.pre.len() - 1];
                Ok(hidden
                    .iter()
                    .flat_map(|z| z.as_slice())
                    .fold(f64::INFINITY, |a, v| a.min(v.abs())))
            }
        }
    }

    fn as_network(&self) -> &dyn Network {
        match self {
            Model::SemiRandom(m) => m,
            Model::RandomFeature(m) => m,
            Model::Relu(m) => m,
            Model::Ensemble(m) => m,
        }
    }

    fn as_network_mut(&mut self) -> &mut dyn Network {
        match self {
            Model::SemiRandom(m) => m,
            Model::RandomFeature(m) => m,
            Model::Relu(m) => m,
            Model::Ensemble(m) => m,
        }
    }

    /// All weight matrices in storage order, trainable or not (random
    /// feature hidden weights included, gates excluded).
    pub fn stored_weights(&self) -> Vec<&Matrix> {
        match self {
            Model::SemiRandom(m) => m.weights.matrices(),
            Model::RandomFeature(m) => m.inner.weights.matrices(),
            Model::Relu(m) => m.layers.iter().collect(),
            Model::Ensemble(m) => m.weights.matrices(),
        }
    }

    fn stored_weights_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            Model::SemiRandom(m) => m.weights.matrices_mut(),
            Model::RandomFeature(m) => m.inner.weights.matrices_mut(),
            Model::Relu(m) => m.layers.iter_mut().collect(),
            Model::Ensemble(m) => m.weights.matrices_mut(),
        }
    }
}

impl Network for Model {
    fn arch(&self) -> &Architecture {
        self.as_network().arch()
    }

    fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.as_network().predict(x)
    }

    fn bank_count(&self) -> usize {
        self.as_network().bank_count()
    }

    fn trainable(&self) -> Vec<&Matrix> {
        self.as_network().trainable()
    }

    fn trainable_mut(&mut self) -> Vec<&mut Matrix> {
        self.as_network_mut().trainable_mut()
    }

    fn frozen(&self) -> Vec<&Matrix> {
        self.as_network().frozen()
    }
}

const MODEL_FORMAT: &str = "semirandom-model";
const MODEL_VERSION: u32 = 1;

/// On-disk model container (JSON).
///
/// Random gate matrices are not stored; they are regenerated from
/// `spec.seed` and `spec.radius`. `weights` lists every weight matrix in
/// [`Model::stored_weights`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub spec: ModelSpec,
    pub weights: Vec<Matrix>,
    /// Input transform fitted on the training split, if any.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalization: Option<NormStats>,
    /// Class label of each output column, for classification models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn new(spec: &ModelSpec, model: &Model) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_owned(),
            version: MODEL_VERSION,
            spec: spec.clone(),
            weights: model.stored_weights().into_iter().cloned().collect(),
            normalization: None,
            labels: None,
        }
    }

    pub fn to_model(&self) -> Result<Model> {
        if self.format != MODEL_FORMAT || self.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported container {} v{}",
                self.format, self.version
            )));
        }
        let mut model = Model::build(&self.spec)?;
        let mut slots = model.stored_weights_mut();
        if slots.len() != self.weights.len() {
            return Err(Error::Format(format!(
                "{} weight matrices stored, model has {}",
                self.weights.len(),
                slots.len()
            )));
        }
        for (slot, w) in slots.iter_mut().zip(&self.weights) {
            if slot.shape() != w.shape() {
                return Err(Error::Format(format!(
                    "stored matrix {:?} does not fit slot {:?}",
                    w.shape(),
                    slot.shape()
                )));
            }
            **slot = w.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::semi_random_feature;
    use crate::numerics::dot;
    use proptest::prelude::*;
    use rand::Rng;

    const S0: ActivationOrder = ActivationOrder(0);

    fn m(rows: &[&[f64]]) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn architecture_parsing() {
        let a: Architecture = "1-50-50-1".parse().unwrap();
        assert_eq!(a.input_dim, 1);
        assert_eq!(a.widths, vec![50, 50]);
        assert_eq!(a.outputs, 1);
        assert_eq!(a.to_string(), "1-50-50-1");
        assert!("3".parse::<Architecture>().is_err());
        assert!("3-0-1".parse::<Architecture>().is_err());
        assert!("3-x-1".parse::<Architecture>().is_err());
        assert!("3-2-0".parse::<Architecture>().is_err());
    }

    #[test]
    fn shallow_single_unit_by_hand() {
        let gates = m(&[&[1.0], &[0.0]]);
        let model = ShallowModel::new(S0, gates, m(&[&[1.0], &[3.0]]), m(&[&[2.0]])).unwrap();
        assert_eq!(model.forward(&[2.0]).unwrap(), vec![14.0]);

        let zero = ShallowModel::new(S0, model.gates.clone(), Matrix::zeros(2, 1), m(&[&[2.0]]))
            .unwrap();
        assert_eq!(zero.forward(&[-7.0]).unwrap(), vec![0.0]);
        assert!(model.forward(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn shallow_rejects_bad_gate_column() {
        let gates = m(&[&[0.5], &[0.0]]);
        assert!(ShallowModel::new(S0, gates, Matrix::zeros(2, 1), Matrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn shallow_equals_sum_of_units() {
        for seed in 0..20 {
            let arch = Architecture::new(3, vec![5], 1).unwrap();
            for s in 0..3 {
                let deep =
                    DeepModel::sample(&arch, ActivationOrder(s), 2.0, WeightInit::FanIn, seed)
                        .unwrap();
                let mut rng = stream(seed, "x", 0);
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
                let out = deep.forward(&x).unwrap()[0];
                let mut sum = 0.0;
                for k in 0..5 {
                    let dir = deep.gates().first_layer_direction(k);
                    let w = deep.weights.hidden[0].col(k);
                    sum += semi_random_feature(&x, &dir, &w, ActivationOrder(s)).unwrap()
                        * deep.weights.output.get(k, 0);
                }
                assert!((out - sum).abs() <= 1e-12 * sum.abs().max(1.0));
            }
        }
    }

    #[test]
    fn deep_with_one_layer_is_shallow() {
        let arch = Architecture::new(2, vec![4], 2).unwrap();
        let deep = DeepModel::sample(&arch, S0, 1.5, WeightInit::FanIn, 3).unwrap();
        let shallow = ShallowModel::new(
            S0,
            deep.gates().layers()[0].clone(),
            deep.weights.hidden[0].clone(),
            deep.weights.output.clone(),
        )
        .unwrap();
        let x = m(&[&[0.1, -0.3], &[0.9, 0.2]]);
        assert_eq!(deep.forward_batch(&x).unwrap(), shallow.forward_batch(&x).unwrap());
        assert_eq!(shallow.to_deep(), deep);
    }

    #[test]
    fn all_open_gates_give_linear_network() {
        // Gate biases large and positive, x small: every σ₀ preactivation > 0.
        let g1 = m(&[&[1.0, 5.0, 5.0], &[0.0, 0.6, -0.8]]);
        let g2 = m(&[&[1.0, 0.6], &[0.0, 0.8], &[0.0, 0.0]]);
        let gates = GateStack::from_layers(S0, vec![g1, g2]).unwrap();
        let arch = Architecture::new(1, vec![3, 2], 1).unwrap();
        let weights = Weights::init(&arch, WeightInit::FanIn, &mut stream(4, "w", 0));
        let model = DeepModel::from_parts(gates, weights.clone(), 1).unwrap();
        let x = [0.7];
        let xa = m(&[&[1.0, 0.7]]);
        let lin = matmul(
            &matmul(&matmul(&xa, &weights.hidden[0]).unwrap(), &weights.hidden[1]).unwrap(),
            &weights.output,
        )
        .unwrap();
        let out = model.forward(&x).unwrap();
        assert!((out[0] - lin.get(0, 0)).abs() < 1e-12);
    }

    #[test]
    fn two_layer_hand_unroll() {
        // d=1, n1=n2=1: both gate matrices are e1, so gates are σ_s(1) = 1.
        let gates =
            GateStack::from_layers(ActivationOrder(1), vec![m(&[&[1.0], &[0.0]]), m(&[&[1.0]])])
                .unwrap();
        let weights = Weights {
            hidden: vec![m(&[&[0.5], &[2.0]]), m(&[&[-3.0]])],
            output: m(&[&[0.25]]),
        };
        let model = DeepModel::from_parts(gates, weights, 1).unwrap();
        // h1 = 1·(0.5 + 2·1.5) = 3.5; h2 = 1·(3.5·−3) = −10.5; out = −2.625
        assert_eq!(model.forward(&[1.5]).unwrap(), vec![-2.625]);
    }

    #[test]
    fn gate_stream_ignores_weights() {
        let arch = Architecture::new(2, vec![4, 3], 1).unwrap();
        let a = DeepModel::sample(&arch, ActivationOrder(1), 1.0, WeightInit::FanIn, 8).unwrap();
        let mut b = a.clone();
        for w in b.weights.matrices_mut() {
            for v in w.as_mut_slice() {
                *v = *v * 3.0 - 1.0;
            }
        }
        let x = m(&[&[0.3, -0.2], &[-0.9, 0.4]]);
        let ta = a.trace(&x).unwrap();
        let tb = b.trace(&x).unwrap();
        assert_eq!(ta.gates, tb.gates);
    }

    #[test]
    fn heaviside_gates_ignore_positive_column_scaling() {
        let arch = Architecture::new(2, vec![5, 4], 1).unwrap();
        let a = DeepModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 21).unwrap();
        let scaled: Vec<Matrix> = a
            .gates()
            .layers()
            .iter()
            .map(|g| Matrix::from_fn(g.rows(), g.cols(), |i, j| {
                if j == 0 { g.get(i, j) } else { g.get(i, j) * (0.5 + j as f64) }
            }))
            .collect();
        let b = DeepModel::from_parts(
            GateStack::from_layers(S0, scaled).unwrap(),
            a.weights.clone(),
            1,
        )
        .unwrap();
        let x = m(&[&[0.3, -0.2], &[-0.9, 0.4], &[0.05, 0.6]]);
        assert_eq!(a.forward_batch(&x).unwrap(), b.forward_batch(&x).unwrap());
    }

    #[test]
    fn param_count_matches_formula() {
        for (d, widths, c) in [(1, vec![50], 1), (1, vec![50, 50], 1), (3, vec![4, 2, 5], 2)] {
            let arch = Architecture::new(d, widths.clone(), c).unwrap();
            let model = DeepModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 0).unwrap();
            let mut expect = (d + 1) * widths[0] + c * widths[widths.len() - 1];
            for l in 1..widths.len() {
                expect += widths[l - 1] * widths[l];
            }
            assert_eq!(model.param_count(), expect);
        }
    }

    #[test]
    fn ensemble_degenerate_cases() {
        let arch = Architecture::new(2, vec![4, 3], 2).unwrap();
        let x = m(&[&[0.3, -0.2], &[-0.9, 0.4]]);
        let single = LsrIeModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 1, 5).unwrap();
        let plain = DeepModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 5).unwrap();
        assert_eq!(single.forward_train(&x, 0).unwrap(), plain.forward_batch(&x).unwrap());
        assert_eq!(single.forward_test(&x).unwrap(), plain.forward_batch(&x).unwrap());
        assert!(matches!(single.forward_train(&x, 1), Err(Error::Index { .. })));

        let twin = LsrIeModel::from_parts(
            vec![plain.gates().clone(), plain.gates().clone()],
            plain.weights.clone(),
            2,
        )
        .unwrap();
        assert_eq!(twin.forward_train(&x, 0).unwrap(), twin.forward_train(&x, 1).unwrap());
        assert_eq!(twin.forward_test(&x).unwrap(), plain.forward_batch(&x).unwrap());

        let pair = LsrIeModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 2, 5).unwrap();
        let a = pair.forward_train(&x, 0).unwrap();
        let b = pair.forward_train(&x, 1).unwrap();
        let t = pair.forward_test(&x).unwrap();
        for ((u, v), w) in a.as_slice().iter().zip(b.as_slice()).zip(t.as_slice()) {
            assert!((0.5 * (u + v) - w).abs() <= 1e-12);
        }
        assert_eq!(pair.forward_train(&x, 1).unwrap(), b);
    }

    #[test]
    fn relu_examples() {
        let arch = Architecture::new(2, vec![3], 1).unwrap();
        let zeros = vec![Matrix::zeros(3, 3), Matrix::zeros(4, 1)];
        assert_eq!(relu_forward(&arch, &zeros, &[1.0, -2.0]).unwrap(), vec![0.0]);

        let linear = Architecture::new(2, vec![], 1).unwrap();
        let w = m(&[&[0.5], &[2.0], &[-1.0]]);
        assert_eq!(relu_forward(&linear, &[w], &[1.0, 3.0]).unwrap(), vec![-0.5]);

        // Hidden pre-activations all negative: only the output bias survives.
        let layers = vec![m(&[&[-1.0, -1.0, -1.0], &[0.0, 0.0, 0.0], &[0.0, 0.0, 0.0]]), m(&[&[0.7], &[1.0], &[2.0], &[3.0]])];
        assert_eq!(relu_forward(&arch, &layers, &[4.0, 5.0]).unwrap(), vec![0.7]);
        assert!(relu_forward(&arch, &layers, &[4.0]).is_err());
    }

    #[test]
    fn random_feature_shares_forward() {
        let arch = Architecture::new(2, vec![4], 1).unwrap();
        let rf = RandomFeatureModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 2).unwrap();
        let sr = DeepModel::sample(&arch, S0, 1.0, WeightInit::FanIn, 2).unwrap();
        let x = m(&[&[0.3, -0.2]]);
        assert_eq!(rf.forward_batch(&x).unwrap(), sr.forward_batch(&x).unwrap());
        assert_eq!(rf.trainable().len(), 1);
        assert_eq!(rf.frozen().len(), 2);
    }

    #[test]
    fn model_file_round_trip() {
        let spec = ModelSpec {
            unit: UnitKind::LsrIe,
            arch: "2-4-3-2".parse().unwrap(),
            s: S0,
            banks: 3,
            radius: 1.25,
            init: WeightInit::Scaled(0.1),
            seed: 77,
        };
        let mut model = Model::build(&spec).unwrap();
        for w in model.trainable_mut() {
            w.as_mut_slice()[0] = 0.123_456_789_012_345_6;
        }
        let file = ModelFile::new(&spec, &model);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        file.save(&path).unwrap();
        let loaded = ModelFile::load(&path).unwrap().to_model().unwrap();
        assert_eq!(loaded, model);

        let mut bad = file.clone();
        bad.weights.pop();
        assert!(bad.to_model().is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn shallow_output_is_bilinear_in_composite_weights(seed in any::<u64>(), s in 0u32..3) {
            // f(x) = Σ_k w2_k · σ(x r_k) · (x · w1_k) = ⟨[[σ,x]], [[w]]⟩.
            let arch = Architecture::new(2, vec![3], 1).unwrap();
            let model = DeepModel::sample(&arch, ActivationOrder(s), 1.0, WeightInit::FanIn, seed).unwrap();
            let mut rng = stream(seed, "x", 1);
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            let xa = [1.0, x[0], x[1]];
            let gate_row = model.gates().activations(&Matrix::row_vector(&x).unwrap()).unwrap();
            let mut sigma_x = Vec::new();
            let mut w = Vec::new();
            for k in 0..3 {
                for (i, &xi) in xa.iter().enumerate().take(3) {
                    sigma_x.push(gate_row[0].get(0, k) * xi);
                    w.push(model.weights.output.get(k, 0) * model.weights.hidden[0].get(i, k));
                }
            }
            let f = model.forward(&x).unwrap()[0];
            prop_assert!((f - dot(&sigma_x, &w)).abs() <= 1e-12 * f.abs().max(1.0));
        }
    }
}
