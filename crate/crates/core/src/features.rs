//! The gate activation family `σ_s(z) = z^s · H(z)`, seeded sampling of
//! random gate directions, and the single semi-random unit
//! `σ_s(xᵀr) · (xᵀw)` on augmented inputs `x = (1, x_raw)`.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{dot, norm, Matrix};

/// Order `s` of the gate activation. `s = 0` is the linear semi-random
/// unit (Heaviside gate), `s = 1` the squared one (ramp gate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActivationOrder(pub u32);

impl ActivationOrder {
    pub const LINEAR: ActivationOrder = ActivationOrder(0);
    pub const SQUARED: ActivationOrder = ActivationOrder(1);

    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        activation(self, z)
    }
}

impl fmt::Display for ActivationOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `σ_s(z) = z^s H(z)` with `H(z) = 1` for `z > 0` and `0` otherwise, so
/// `σ_s(0) = 0` for every `s`.
#[inline]
pub fn activation(s: ActivationOrder, z: f64) -> f64 {
    if z > 0.0 {
        match s.0 {
            0 => 1.0,
            1 => z,
            k => z.powi(k as i32),
        }
    } else {
        0.0
    }
}

/// Derives an independent ChaCha stream from `(seed, label, index)`.
///
/// Every random draw in the crate goes through a stream named by its
/// purpose, so adding draws for one purpose never shifts another.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut state = seed ^ h.rotate_left(17) ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws a direction uniformly from the unit sphere `𝕊^{dim-1}` by
/// normalizing a standard normal vector.
pub fn sample_direction<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<f64>> {
    if dim == 0 {
        return Err(Error::param("direction dimension must be at least 1"));
    }
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-300 {
            return Ok(v.into_iter().map(|x| x / n).collect());
        }
    }
}

/// A gate parameter `(r₀, r)`: bias and direction.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomDirection {
    pub r0: f64,
    pub r: Vec<f64>,
}

impl RandomDirection {
    /// The fixed first gate `e₁ = (1, 0, …, 0)`, which is always open.
    pub fn first(dim: usize) -> Self {
        RandomDirection {
            r0: 1.0,
            r: vec![0.0; dim],
        }
    }

    /// Samples `r` uniformly on the sphere and `r₀ ~ Uniform[-radius, radius]`.
    pub fn sample<R: Rng + ?Sized>(dim: usize, radius: f64, rng: &mut R) -> Result<Self> {
        check_radius(radius)?;
        let r0 = rng.random_range(-radius..=radius);
        let r = sample_direction(dim, rng)?;
        Ok(RandomDirection { r0, r })
    }

    /// The gate as a column of length `dim + 1`.
    pub fn to_column(&self) -> Vec<f64> {
        let mut c = Vec::with_capacity(self.r.len() + 1);
        c.push(self.r0);
        c.extend_from_slice(&self.r);
        c
    }

    pub fn preactivation(&self, x_raw: &[f64]) -> f64 {
        self.r0 + dot(&self.r, x_raw)
    }
}

fn check_radius(radius: f64) -> Result<()> {
    if radius.is_finite() && radius > 0.0 {
        Ok(())
    } else {
        Err(Error::param(format!("sampling radius must be positive, got {radius}")))
    }
}

/// First-layer gate matrix of shape `(d+1) × n`: column 0 is `e₁`, every
/// other column is an independent [`RandomDirection::sample`].
pub fn sample_first_layer_gates<R: Rng + ?Sized>(
    d: usize,
    n: usize,
    radius: f64,
    rng: &mut R,
) -> Result<Matrix> {
    check_radius(radius)?;
    if n == 0 {
        return Err(Error::param("layer width must be at least 1"));
    }
    let mut cols = vec![RandomDirection::first(d).to_column()];
    for _ in 1..n {
        cols.push(RandomDirection::sample(d, radius, rng)?.to_column());
    }
    Ok(columns_to_matrix(d + 1, &cols))
}

/// Gate matrix for a layer past the first, shape `in_dim × n`: column 0 is
/// `e₁`, the rest are uniform on `𝕊^{in_dim-1}` with no separate bias.
pub fn sample_hidden_gates<R: Rng + ?Sized>(in_dim: usize, n: usize, rng: &mut R) -> Result<Matrix> {
    if n == 0 || in_dim == 0 {
        return Err(Error::param("layer widths must be at least 1"));
    }
    let mut e1 = vec![0.0; in_dim];
    e1[0] = 1.0;
    let mut cols = vec![e1];
    for _ in 1..n {
        cols.push(sample_direction(in_dim, rng)?);
    }
    Ok(columns_to_matrix(in_dim, &cols))
}

fn columns_to_matrix(rows: usize, cols: &[Vec<f64>]) -> Matrix {
    Matrix::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

/// Evaluates one semi-random unit `σ_s(r₀ + rᵀx) · (w₀ + wᵀx)`.
pub fn semi_random_feature(
    x_raw: &[f64],
    dir: &RandomDirection,
    w: &[f64],
    s: ActivationOrder,
) -> Result<f64> {
    if dir.r.len() != x_raw.len() || w.len() != x_raw.len() + 1 {
        return Err(Error::shape(
            "semi_random_feature",
            format!(
                "input {}, gate {}, weights {}",
                x_raw.len(),
                dir.r.len(),
                w.len()
            ),
        ));
    }
    let gate = activation(s, dir.preactivation(x_raw));
    Ok(gate * (w[0] + dot(&w[1..], x_raw)))
}
