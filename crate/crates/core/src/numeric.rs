//! Dense kernels, the seeded query/key sampler and summary statistics.
//!
//! The sampler realizes the moment model used throughout the crate:
//! `q ~ N(0, I_D)` and `k = (μ0/2)·q + (ν0/2)·R(q) + b·ε`, where `R` rotates
//! every coordinate pair `(2d, 2d+1)` by 90° and `ε ~ N(0, I_D)` is independent
//! of `q`. Per pair this gives `E[A_d] = μ0` and `E[B_d] = ν0`.
//!
//! Every draw is keyed by `(seed, stream_index)`: stream `i` always produces the
//! same pair regardless of which worker evaluates it, so parallel Monte Carlo
//! reductions are reproducible.

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real vector whose entries are always finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vec64(Vec<f64>);

impl Vec64 {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if let Some(i) = entries.iter().position(|x| !x.is_finite()) {
            return Err(Error::Domain(format!(
                "vector entry {i} is not finite ({})",
                entries[i]
            )));
        }
        Ok(Vec64(entries))
    }

    pub fn zeros(len: usize) -> Self {
        Vec64(vec![0.0; len])
    }

    /// Unit basis vector `e_index` of length `len`.
    pub fn basis(len: usize, index: usize) -> Self {
        let mut v = vec![0.0; len];
        v[index] = 1.0;
        Vec64(v)
    }

    // Callers guarantee finiteness.
    pub(crate) fn from_raw(entries: Vec<f64>) -> Self {
        debug_assert!(entries.iter().all(|x| x.is_finite()));
        Vec64(entries)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &Vec64) -> f64 {
        dot(&self.0, &other.0)
    }
}

impl Deref for Vec64 {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Vec64 {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Vec64::new(v)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != n_cols) {
            return Err(Error::Domain("ragged matrix rows".into()));
        }
        let data: Vec<f64> = rows.into_iter().flatten().collect();
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("matrix entry is not finite".into()));
        }
        Ok(Matrix {
            rows: n_rows,
            cols: n_cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `uᵀ·M·v`.
    pub fn bilinear(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        if u.len() != self.rows || v.len() != self.cols {
            return Err(Error::Domain(format!(
                "bilinear form of a {}x{} matrix with vectors of length {} and {}",
                self.rows,
                self.cols,
                u.len(),
                v.len()
            )));
        }
        Ok((0..self.rows).map(|r| u[r] * dot(self.row(r), v)).sum())
    }
}

/// Parameters of the query/key sampler.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerSpec {
    /// Head dimension `D` (even, at least 4).
    pub dim: usize,
    /// Target `E[A_d]`.
    pub mu0: f64,
    /// Target `E[B_d]`.
    pub nu0: f64,
    /// Scale `b` of the independent key noise.
    pub noise_scale: f64,
    pub seed: u64,
}

impl SamplerSpec {
    pub fn new(dim: usize, mu0: f64, nu0: f64, noise_scale: f64, seed: u64) -> Result<Self> {
        let spec = SamplerSpec {
            dim,
            mu0,
            nu0,
            noise_scale,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim < 4 || !self.dim.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "sampler dimension must be even and >= 4, got {}",
                self.dim
            )));
        }
        if !(self.noise_scale > 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!(
                "noise scale b must be positive, got {}",
                self.noise_scale
            )));
        }
        if !self.mu0.is_finite() || !self.nu0.is_finite() {
            return Err(Error::Config("mu0 and nu0 must be finite".into()));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SamplerSpec { seed, ..self }
    }
}

/// Stream-keyed ChaCha8 generator.
pub(crate) fn stream_rng(seed: u64, stream_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_index);
    rng
}

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Draws `(q, k)` for the given stream.
pub fn sample_pair(spec: &SamplerSpec, stream_index: u64) -> Result<(Vec64, Vec64)> {
    spec.validate()?;
    let (q, eps) = draw_base(spec, stream_index);
    let k = correlated_key(spec, &q, &eps, 0..spec.dim);
    Ok((Vec64::from_raw(q), Vec64::from_raw(k)))
}

/// Draws `(q, k)` whose first `amplitude_dims` coordinates follow the
/// correlated construction while the remaining (phase) coordinates of `k` are
/// independent standard normals, independent of everything else.
///
/// This is the sampler used for token-aware phase attention experiments, where
/// the phase segments must be independent of the amplitude segments.
pub fn sample_split_pair(
    spec: &SamplerSpec,
    amplitude_dims: usize,
    stream_index: u64,
) -> Result<(Vec64, Vec64)> {
    spec.validate()?;
    if amplitude_dims == 0 || amplitude_dims >= spec.dim || !amplitude_dims.is_multiple_of(2) {
        return Err(Error::Config(format!(
            "amplitude segment must be an even size in (0, {}), got {amplitude_dims}",
            spec.dim
        )));
    }
    let (q, eps) = draw_base(spec, stream_index);
    let mut k = correlated_key(spec, &q, &eps, 0..amplitude_dims);
    k.extend_from_slice(&eps[amplitude_dims..]);
    Ok((Vec64::from_raw(q), Vec64::from_raw(k)))
}

fn draw_base(spec: &SamplerSpec, stream_index: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream_rng(spec.seed, stream_index);
    let q = normals(&mut rng, spec.dim);
    let eps = normals(&mut rng, spec.dim);
    (q, eps)
}

fn correlated_key(
    spec: &SamplerSpec,
    q: &[f64],
    eps: &[f64],
    coords: std::ops::Range<usize>,
) -> Vec<f64> {
    let (a, c, b) = (spec.mu0 / 2.0, spec.nu0 / 2.0, spec.noise_scale);
    coords
        .map(|i| {
            // R(x, y) = (-y, x) within each pair
            let rotated = if i % 2 == 0 { -q[i + 1] } else { q[i - 1] };
            a * q[i] + c * rotated + b * eps[i]
        })
        .collect()
}

/// Per-coordinate second moment `E|q_d k_d|²` implied by the sampler.
///
/// For coordinate `x` of a pair with partner `y`:
/// `q_d k_d = (μ0/2)x² ∓ (ν0/2)xy + b·x·ε`, and all cross moments vanish, so
/// `E|q_d k_d|² = 3μ0²/4 + ν0²/4 + b²`.
pub fn sampler_sigma0_sq(spec: &SamplerSpec) -> f64 {
    let b = spec.noise_scale;
    0.75 * spec.mu0 * spec.mu0 + 0.25 * spec.nu0 * spec.nu0 + b * b
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    /// `1.96·sqrt(variance/n)`.
    pub ci95_half_width: f64,
}

impl SummaryStats {
    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    /// `|mean - target|` in units of the 95% half-width (`inf` when the
    /// half-width is zero and the mean misses the target).
    pub fn ci_distance(&self, target: f64) -> f64 {
        let gap = (self.mean - target).abs();
        if gap == 0.0 {
            0.0
        } else {
            gap / self.ci95_half_width
        }
    }
}

pub const Z95: f64 = 1.96;

/// Pairwise (cascade) summation. The association order depends only on the
/// slice length, so the result is reproducible bit for bit.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn summarize(samples: &[f64]) -> Result<SummaryStats> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let mean = pairwise_sum(samples) / n as f64;
    let sq: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    let variance = pairwise_sum(&sq) / (n - 1) as f64;
    Ok(SummaryStats {
        n,
        mean,
        variance,
        ci95_half_width: Z95 * (variance / n as f64).sqrt(),
    })
}

/// Evaluates `f(0..n)` in parallel and returns the results in index order.
pub fn par_map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n as u64).into_par_iter().map(f).collect()
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
