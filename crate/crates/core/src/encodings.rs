//! RoPE and token-aware phase attention (TAPA) score functions.
//!
//! Angles use the "turns" convention everywhere: the RoPE rotation for pair `d`
//! at relative distance `λ` is `2π·λ·θ_d`, and the TAPA phase enters as
//! `cos(2π·|m−n|^α·φ)`. Turns are reduced to `[-1/2, 1/2]` before multiplying by
//! `2π`, so large distances do not lose accuracy to the `2π` product.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RopeParams {
    pub dim: usize,
    /// Inverse base frequency; the base is `1/theta0`.
    pub theta0: f64,
}

impl RopeParams {
    pub fn new(dim: usize, theta0: f64) -> Result<Self> {
        let p = RopeParams { dim, theta0 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "RoPE dimension must be even and positive, got {}",
                self.dim
            )));
        }
        if !(self.theta0 > 0.0 && self.theta0 < 1.0) {
            return Err(Error::Config(format!(
                "RoPE theta0 must lie in (0, 1), got {}",
                self.theta0
            )));
        }
        Ok(())
    }

    pub fn pairs(&self) -> usize {
        self.dim / 2
    }

    /// All rotation frequencies `θ_d`, `d = 0..D/2`.
    pub fn thetas(&self) -> Vec<f64> {
        (0..self.pairs())
            .map(|d| self.theta0.powf(2.0 * d as f64 / self.dim as f64))
            .collect()
    }
}

/// `θ_d = θ0^{2d/D}`.
pub fn rope_theta_d(d: usize, p: &RopeParams) -> Result<f64> {
    p.validate()?;
    if d >= p.pairs() {
        return Err(Error::Domain(format!(
            "pair index {d} out of range for D = {}",
            p.dim
        )));
    }
    Ok(p.theta0.powf(2.0 * d as f64 / p.dim as f64))
}

/// Fractional part of `x` in `[-1/2, 1/2]`.
#[inline]
pub fn reduce_turns(x: f64) -> f64 {
    x - x.round()
}

/// `(sin 2πx, cos 2πx)`.
#[inline]
pub fn sin_cos_turns(x: f64) -> (f64, f64) {
    (TAU * reduce_turns(x)).sin_cos()
}

#[inline]
pub fn cos_turns(x: f64) -> f64 {
    (TAU * reduce_turns(x)).cos()
}

/// `A_d = q_{2d}k_{2d} + q_{2d+1}k_{2d+1}` and `B_d = q_{2d}k_{2d+1} − q_{2d+1}k_{2d}`.
pub fn ab_coefficients(q: &[f64], k: &[f64], d: usize) -> Result<(f64, f64)> {
    if q.len() != k.len() {
        return Err(Error::Domain(format!(
            "query has length {} but key has length {}",
            q.len(),
            k.len()
        )));
    }
    if 2 * d + 1 >= q.len() {
        return Err(Error::Domain(format!(
            "pair index {d} out of range for vectors of length {}",
            q.len()
        )));
    }
    let (q0, q1, k0, k1) = (q[2 * d], q[2 * d + 1], k[2 * d], k[2 * d + 1]);
    Ok((q0 * k0 + q1 * k1, q0 * k1 - q1 * k0))
}

fn check_rope_inputs(q: &[f64], k: &[f64], p: &RopeParams) -> Result<()> {
    p.validate()?;
    if q.len() != p.dim || k.len() != p.dim {
        return Err(Error::Domain(format!(
            "RoPE with D = {} applied to vectors of length {} and {}",
            p.dim,
            q.len(),
            k.len()
        )));
    }
    Ok(())
}

/// RoPE score through the complexified pairs:
/// `(1/√D)·Re Σ_d q^ℂ_d·conj(k^ℂ_d)·e^{i·2π(m−n)θ_d}`.
pub fn rope_score_complex(q: &[f64], k: &[f64], m: f64, n: f64, p: &RopeParams) -> Result<f64> {
    check_rope_inputs(q, k, p)?;
    let lambda = m - n;
    let total: Complex64 = p
        .thetas()
        .iter()
        .enumerate()
        .map(|(d, theta)| {
            let qc = Complex64::new(q[2 * d], q[2 * d + 1]);
            let kc = Complex64::new(k[2 * d], k[2 * d + 1]);
            let (s, c) = sin_cos_turns(lambda * theta);
            qc * kc.conj() * Complex64::new(c, s)
        })
        .sum();
    Ok(total.re / (p.dim as f64).sqrt())
}

/// RoPE score through the real expansion `(1/√D)·Σ_d A_d cos 2πλθ_d + B_d sin 2πλθ_d`.
pub fn rope_score_expanded(q: &[f64], k: &[f64], m: f64, n: f64, p: &RopeParams) -> Result<f64> {
    check_rope_inputs(q, k, p)?;
    let lambda = m - n;
    let mut total = 0.0;
    for (d, theta) in p.thetas().iter().enumerate() {
        let (a, b) = ab_coefficients(q, k, d)?;
        let (s, c) = sin_cos_turns(lambda * theta);
        total += a * c + b * s;
    }
    Ok(total / (p.dim as f64).sqrt())
}

/// Maps raw token positions before scoring.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PositionMap {
    Identity,
    /// Position interpolation: positions are divided by `scale >= 1`.
    Interpolation {
        scale: f64,
    },
}

impl PositionMap {
    pub fn interpolation(scale: f64) -> Result<Self> {
        let map = PositionMap::Interpolation { scale };
        map.validate()?;
        Ok(map)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PositionMap::Identity => Ok(()),
            PositionMap::Interpolation { scale } if scale >= 1.0 && scale.is_finite() => Ok(()),
            PositionMap::Interpolation { scale } => Err(Error::Config(format!(
                "interpolation scale must be >= 1, got {scale}"
            ))),
        }
    }
}

pub fn apply_position_map(pos: f64, map: &PositionMap) -> f64 {
    match *map {
        PositionMap::Identity => pos,
        PositionMap::Interpolation { scale } => pos / scale,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// `φ = q_Pᵀk_P / √((1−θ)D)`.
    QuadraticSplit,
    /// `φ = (Σ q_P + Σ k_P) / √((1−θ)D)`.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TapaParams {
    pub dim: usize,
    /// Fraction of coordinates allocated to the amplitude segment.
    pub theta: f64,
    pub alpha: f64,
    pub phase: PhaseKind,
}

impl TapaParams {
    pub fn new(dim: usize, theta: f64, alpha: f64, phase: PhaseKind) -> Result<Self> {
        let t = TapaParams {
            dim,
            theta,
            alpha,
            phase,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn quadratic(dim: usize, theta: f64, alpha: f64) -> Result<Self> {
        Self::new(dim, theta, alpha, PhaseKind::QuadraticSplit)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 1.0) {
            return Err(Error::Config(format!(
                "TAPA split fraction must lie in (0, 1), got {}",
                self.theta
            )));
        }
        let split = self.theta * self.dim as f64;
        let rounded = split.round();
        if (split - rounded).abs() > 1e-9 || rounded < 1.0 || rounded as usize >= self.dim {
            return Err(Error::Config(format!(
                "theta*D = {split} must be an integer strictly between 0 and D = {}",
                self.dim
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "TAPA exponent alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    /// `θD`, the length of `q_A` and `k_A`.
    pub fn amplitude_dims(&self) -> usize {
        (self.theta * self.dim as f64).round() as usize
    }

    /// `(1−θ)D`, the length of `q_P` and `k_P`.
    pub fn phase_dims(&self) -> usize {
        self.dim - self.amplitude_dims()
    }
}

/// `|m−n|^α`, with `0^α = 0`.
#[inline]
pub fn distance_power(m: f64, n: f64, alpha: f64) -> f64 {
    let gap = (m - n).abs();
    if gap == 0.0 {
        0.0
    } else {
        gap.powf(alpha)
    }
}

fn check_tapa_inputs(q: &[f64], k: &[f64], t: &TapaParams) -> Result<()> {
    t.validate()?;
    if q.len() != t.dim || k.len() != t.dim {
        return Err(Error::Domain(format!(
            "TAPA with D = {} applied to vectors of length {} and {}",
            t.dim,
            q.len(),
            k.len()
        )));
    }
    Ok(())
}

/// Amplitude `q_Aᵀk_A / √(θD)`.
pub(crate) fn tapa_amplitude(q: &[f64], k: &[f64], t: &TapaParams) -> f64 {
    let a = t.amplitude_dims();
    scaled_dot(&q[..a], &k[..a], 1.0 / (a as f64).sqrt())
}

/// `Σ q_i·(c·k_i)`, summed in order. This is the exact operation sequence of a
/// diagonal bilinear form, so the split and block-matrix paths agree bitwise.
fn scaled_dot(q: &[f64], k: &[f64], c: f64) -> f64 {
    q.iter().zip(k).map(|(x, y)| x * (c * y)).sum()
}

/// Quadratic phase `q_Pᵀk_P / √((1−θ)D)`.
pub(crate) fn quadratic_phase(q: &[f64], k: &[f64], t: &TapaParams) -> f64 {
    let a = t.amplitude_dims();
    scaled_dot(&q[a..], &k[a..], 1.0 / (t.phase_dims() as f64).sqrt())
}

/// Split-form TAPA score with the quadratic phase:
/// `(q_Aᵀk_A/√(θD))·cos(2π|m−n|^α·q_Pᵀk_P/√((1−θ)D))`.
pub fn tapa_score_split(q: &[f64], k: &[f64], m: f64, n: f64, t: &TapaParams) -> Result<f64> {
    check_tapa_inputs(q, k, t)?;
    let turns = distance_power(m, n, t.alpha) * quadratic_phase(q, k, t);
    Ok(tapa_amplitude(q, k, t) * cos_turns(turns))
}

/// Linear phase `(Σ q_P + Σ k_P) / √((1−θ)D)`; the ones-vector runs over both
/// phase segments.
pub fn linear_phase(q: &[f64], k: &[f64], t: &TapaParams) -> Result<f64> {
    check_tapa_inputs(q, k, t)?;
    let a = t.amplitude_dims();
    let sum: f64 = q[a..].iter().chain(&k[a..]).sum();
    Ok(sum / (t.phase_dims() as f64).sqrt())
}

/// TAPA score using the linear phase in place of the quadratic form.
pub fn tapa_score_linear(q: &[f64], k: &[f64], m: f64, n: f64, t: &TapaParams) -> Result<f64> {
    let phi = linear_phase(q, k, t)?;
    Ok(tapa_amplitude(q, k, t) * cos_turns(distance_power(m, n, t.alpha) * phi))
}

/// Dispatches on the configured phase kind.
pub fn tapa_score(q: &[f64], k: &[f64], m: f64, n: f64, t: &TapaParams) -> Result<f64> {
    match t.phase {
        PhaseKind::QuadraticSplit => tapa_score_split(q, k, m, n, t),
        PhaseKind::Linear => tapa_score_linear(q, k, m, n, t),
    }
}

/// General TAPA with amplitude matrix `M` and phase form `φ(q,k) = qᵀNk`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralTapa {
    pub amplitude: Matrix,
    pub phase: Matrix,
    pub alpha: f64,
}

impl GeneralTapa {
    pub fn new(amplitude: Matrix, phase: Matrix, alpha: f64) -> Result<Self> {
        let g = GeneralTapa {
            amplitude,
            phase,
            alpha,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.amplitude.rows();
        if self.amplitude.cols() != d || self.phase.rows() != d || self.phase.cols() != d {
            return Err(Error::Domain(format!(
                "M is {}x{} and N is {}x{}; both must be DxD",
                self.amplitude.rows(),
                self.amplitude.cols(),
                self.phase.rows(),
                self.phase.cols()
            )));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "TAPA exponent alpha must be positive, got {}",
                self.alpha
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.amplitude.rows()
    }

    /// Block-diagonal `M`, `N` that reproduce the split form:
    /// `M = diag(I_{θD}, 0)/√(θD)` and `N = diag(0, I_{(1−θ)D})/√((1−θ)D)`.
    pub fn from_split(t: &TapaParams) -> Result<Self> {
        t.validate()?;
        let (a, dim) = (t.amplitude_dims(), t.dim);
        let mut m = Matrix::zeros(dim, dim);
        let mut n = Matrix::zeros(dim, dim);
        let (ma, np) = (
            1.0 / (a as f64).sqrt(),
            1.0 / (t.phase_dims() as f64).sqrt(),
        );
        for i in 0..dim {
            if i < a {
                m.set(i, i, ma);
            } else {
                n.set(i, i, np);
            }
        }
        GeneralTapa::new(m, n, t.alpha)
    }
}

/// `qᵀMk · cos(2π|m−n|^α·qᵀNk)`.
pub fn tapa_score_general(q: &[f64], k: &[f64], m: f64, n: f64, g: &GeneralTapa) -> Result<f64> {
    g.validate()?;
    let amplitude = g.amplitude.bilinear(q, k)?;
    let phi = g.phase.bilinear(q, k)?;
    Ok(amplitude * cos_turns(distance_power(m, n, g.alpha) * phi))
}

/// Positional encoding used by the attention layer and experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum AttentionConfig {
    Rope(RopeParams),
    Tapa(TapaParams),
    TapaGeneral(GeneralTapa),
}

impl AttentionConfig {
    pub fn dim(&self) -> usize {
        match self {
            AttentionConfig::Rope(p) => p.dim,
            AttentionConfig::Tapa(t) => t.dim,
            AttentionConfig::TapaGeneral(g) => g.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AttentionConfig::Rope(p) => p.validate(),
            AttentionConfig::Tapa(t) => t.validate(),
            AttentionConfig::TapaGeneral(g) => g.validate(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AttentionConfig::Rope(_) => "rope",
            AttentionConfig::Tapa(TapaParams {
                phase: PhaseKind::Linear,
                ..
            }) => "tapa_linear",
            AttentionConfig::Tapa(_) => "tapa",
            AttentionConfig::TapaGeneral(_) => "tapa_general",
        }
    }

    /// Pre-softmax score between a query at position `m` and a key at `n`.
    pub fn score(&self, q: &[f64], k: &[f64], m: f64, n: f64) -> Result<f64> {
        match self {
            AttentionConfig::Rope(p) => rope_score_expanded(q, k, m, n, p),
            AttentionConfig::Tapa(t) => tapa_score(q, k, m, n, t),
            AttentionConfig::TapaGeneral(g) => tapa_score_general(q, k, m, n, g),
        }
    }
}

/// Largest `|complex − expanded|` over `trials` random inputs with
/// `D ∈ {2, 4, 64, 128}`, `θ0 ∈ {1e-2, 1e-4}` and positions in `[0, 10^6]`.
pub fn max_form_discrepancy(seed: u64, trials: usize) -> Result<f64> {
    let worst = crate::numeric::par_map_indexed(trials, |i| -> Result<f64> {
        let mut rng = crate::numeric::stream_rng(seed, i);
        let dim = [2usize, 4, 64, 128][rng.random_range(0..4usize)];
        let theta0 = [1e-2, 1e-4][rng.random_range(0..2usize)];
        let p = RopeParams::new(dim, theta0)?;
        let q = random_vector(&mut rng, dim);
        let k = random_vector(&mut rng, dim);
        let m = rng.random_range(0..=1_000_000u32) as f64;
        let n = rng.random_range(0..=1_000_000u32) as f64;
        Ok((rope_score_complex(&q, &k, m, n, &p)? - rope_score_expanded(&q, &k, m, n, &p)?).abs())
    });
    worst.into_iter().try_fold(0.0f64, |acc, x| Ok(acc.max(x?)))
}

/// Number of random `(q, k, m, n, t)` for which the RoPE score changes
/// (bitwise) when both positions are shifted by `t`.
pub fn shift_mismatches(seed: u64, trials: usize) -> Result<usize> {
    let flags = crate::numeric::par_map_indexed(trials, |i| -> Result<bool> {
        let mut rng = crate::numeric::stream_rng(seed, i);
        let dim = [2usize, 4, 64, 128][rng.random_range(0..4usize)];
        let theta0 = [1e-2, 1e-4, 2e-6][rng.random_range(0..3usize)];
        let p = RopeParams::new(dim, theta0)?;
        let q = random_vector(&mut rng, dim);
        let k = random_vector(&mut rng, dim);
        let m = rng.random_range(0..=1_000_000u32) as f64;
        let n = rng.random_range(0..=1_000_000u32) as f64;
        let t = rng.random_range(0..=1_000_000_000u64) as f64;
        let base = rope_score_expanded(&q, &k, m, n, &p)?;
        let moved = rope_score_expanded(&q, &k, m + t, n + t, &p)?;
        let moved_c = rope_score_complex(&q, &k, m + t, n + t, &p)?;
        let base_c = rope_score_complex(&q, &k, m, n, &p)?;
        Ok(base.to_bits() != moved.to_bits() || base_c.to_bits() != moved_c.to_bits())
    });
    flags
        .into_iter()
        .try_fold(0usize, |acc, f| Ok(acc + usize::from(f?)))
}

fn random_vector(rng: &mut impl rand::Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect()
}
