//! Generalization and approximation bound calculators.
//!
//! - Generalization (shallow and deep alike):
//!   `(C_Y² + C_Ŷ²) √(ln(1/δ) / 2m) + 2 (C_Y + C_Ŷ) C_Ŷ / √m` with
//!   `C_Ŷ = C_W · C_σx`.
//! - Approximation lower bound over the smooth class `Γ_C` on `[0, 1]^d`:
//!   `κ C / d² · (Π n_l)^{-1/d}`, with `κ = 1 / (8π e^{π-1})`.
//! - Importance-weight constants `q₀ = Γ(d/2) / (2π^{d/2})` (inverse area of
//!   the unit sphere) and `q₁ = Γ(d/2 + 1) / (π^{d/2} C_W^d)` (inverse
//!   volume of the radius-`C_W` ball).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::features::ActivationOrder;
use crate::network::{DeepModel, Network};
use crate::numerics::{least_squares, norm, Matrix};
use crate::oracle::build_d;

/// `κ = 1 / (8π e^{π-1})`.
pub const KAPPA: f64 = 0.004_673_887_646_553_264;

/// Constants feeding the bound formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Bound on `|y|`.
    pub c_y: f64,
    /// Bound on the composite weight norm `‖vec([[w]])‖₂`.
    pub c_w: f64,
    /// Bound on the feature norm `‖vec([[σ, x]])‖₂`.
    pub c_sigma_x: f64,
    /// Sample count.
    pub m: usize,
    /// Confidence parameter in `(0, 1]`.
    pub delta: f64,
    /// Smoothness constant of `Γ_C`.
    pub c: f64,
    /// Input dimension.
    pub d: usize,
    pub widths: Vec<usize>,
}

impl BoundInputs {
    /// `C_Ŷ = C_W · C_σx`.
    pub fn c_yhat(&self) -> f64 {
        self.c_w * self.c_sigma_x
    }
}

fn nonneg(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be finite and non-negative, got {v}")))
    }
}

/// Upper bound on `½ E(f − f̂)² − L(w)`, holding with probability `1 − δ`.
pub fn generalization_bound(inp: &BoundInputs) -> Result<f64> {
    if !(inp.delta > 0.0 && inp.delta <= 1.0) {
        return Err(Error::param(format!("delta must lie in (0, 1], got {}", inp.delta)));
    }
    if inp.m == 0 {
        return Err(Error::param("sample count must be at least 1"));
    }
    nonneg("C_Y", inp.c_y)?;
    nonneg("C_W", inp.c_w)?;
    nonneg("C_sigma_x", inp.c_sigma_x)?;
    let m = inp.m as f64;
    let cy = inp.c_y;
    let cyh = inp.c_yhat();
    let confidence = (cy * cy + cyh * cyh) * ((1.0 / inp.delta).ln() / (2.0 * m)).sqrt();
    let complexity = 2.0 * (cy + cyh) * cyh / m.sqrt();
    Ok(confidence + complexity)
}

/// Expected-risk bound at a global minimum, split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskBound {
    /// `‖P_null(Dᵀ) Y‖² / m`.
    pub empirical: f64,
    /// Twice the generalization bound.
    pub complexity: f64,
    pub total: f64,
}

/// `E(f − f̂)² ≤ ‖P_null(Dᵀ) Y‖² / m + 2·generalization_bound`, where the
/// first term is twice the optimal empirical loss.
pub fn expected_risk_bound(null_residual_sq: f64, inp: &BoundInputs) -> Result<RiskBound> {
    nonneg("residual", null_residual_sq)?;
    let empirical = null_residual_sq / inp.m.max(1) as f64;
    let complexity = 2.0 * generalization_bound(inp)?;
    Ok(RiskBound {
        empirical,
        complexity,
        total: empirical + complexity,
    })
}

fn check_approx(c: f64, d: usize, widths: &[usize]) -> Result<()> {
    nonneg("C", c)?;
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    if widths.is_empty() || widths.contains(&0) {
        return Err(Error::param("widths must be non-empty and positive"));
    }
    Ok(())
}

/// `κ C / d² · (Π n_l)^{-1/d}`.
pub fn approx_lower_bound(c: f64, d: usize, widths: &[usize]) -> Result<f64> {
    check_approx(c, d, widths)?;
    let log_prod: f64 = widths.iter().map(|&n| (n as f64).ln()).sum();
    let d = d as f64;
    Ok(KAPPA * c / (d * d) * (-log_prod / d).exp())
}

/// The same bound for a random-feature model, where only the last hidden
/// width counts: `κ C / d² · n_H^{-1/d}`.
pub fn random_feature_lower_bound(c: f64, d: usize, n_last: usize) -> Result<f64> {
    approx_lower_bound(c, d, &[n_last])
}

/// `(q₀, q₁)` for dimension `d` and weight radius `C_W`.
pub fn importance_constants(d: usize, c_w: f64) -> Result<(f64, f64)> {
    if d == 0 {
        return Err(Error::param("dimension must be at least 1"));
    }
    if !(c_w > 0.0 && c_w.is_finite()) {
        return Err(Error::param("C_W must be positive"));
    }
    let half = d as f64 / 2.0;
    let q0 = (ln_gamma(half) - (2.0f64).ln() - half * PI.ln()).exp();
    let q1 = (ln_gamma(half + 1.0) - half * PI.ln() - d as f64 * c_w.ln()).exp();
    Ok((q0, q1))
}

/// Where the empirical norms come from.
#[derive(Debug, Clone, Copy)]
pub enum BoundSource<'a> {
    /// A shallow model's frozen gates; `C_W` is the norm of the
    /// minimum-norm least-squares composite weights.
    Shallow {
        gates: &'a Matrix,
        s: ActivationOrder,
    },
    /// A deep model's current weights.
    Deep(&'a DeepModel),
}

/// Measures `C_Y`, `C_σx` and `C_W` on a single-target dataset.
///
/// For deep models the path tensors are outer products, so their norms
/// factor: `‖[[σ, x]]‖ = ‖x‖ Π_l ‖h_r^(l)‖`, and `‖[[w]]‖²` is a chain of
/// squared-weight matrix products. Neither requires materializing the
/// tensors.
pub fn empirical_bound_inputs(ds: &Dataset, source: BoundSource<'_>, delta: f64) -> Result<BoundInputs> {
    if ds.outputs() != 1 {
        return Err(Error::param("bound inputs need a single-target dataset"));
    }
    let y = ds.y.as_slice();
    let c_y = y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let (c_w, c_sigma_x, widths) = match source {
        BoundSource::Shallow { gates, s } => {
            let d = build_d(&ds.x, gates, s)?;
            let ls = least_squares(&d, y)?;
            let c_sx = (0..d.rows()).map(|i| norm(d.row(i))).fold(0.0, f64::max);
            (norm(&ls.solution), c_sx, vec![gates.cols()])
        }
        BoundSource::Deep(model) => {
            if model.arch().outputs != 1 {
                return Err(Error::param("bound inputs need a single-output model"));
            }
            let gates = model.gates().activations(&ds.x)?;
            let xa = ds.x.augment_ones();
            let c_sx = (0..ds.len())
                .map(|i| norm(xa.row(i)) * gates.iter().map(|g| norm(g.row(i))).product::<f64>())
                .fold(0.0, f64::max);
            (composite_weight_norm(model), c_sx, model.arch().widths.clone())
        }
    };
    Ok(BoundInputs {
        c_y,
        c_w,
        c_sigma_x,
        m: ds.len(),
        delta,
        c: 1.0,
        d: ds.dim(),
        widths,
    })
}

/// `‖vec([[w]])‖₂` of a single-output deep model.
pub fn composite_weight_norm(model: &DeepModel) -> f64 {
    let hidden = &model.weights.hidden;
    // acc[k] = Σ over paths ending at unit k of the squared path weight.
    let mut acc: Vec<f64> = (0..hidden[0].cols())
        .map(|k| (0..hidden[0].rows()).map(|p| hidden[0].get(p, k).powi(2)).sum())
        .collect();
    for w in &hidden[1..] {
        acc = (0..w.cols())
            .map(|k| (0..w.rows()).map(|p| acc[p] * w.get(p, k).powi(2)).sum())
            .collect();
    }
    let out = &model.weights.output;
    acc.iter()
        .enumerate()
        .map(|(k, a)| a * out.get(k, 0).powi(2))
        .sum::<f64>()
        .sqrt()
}
