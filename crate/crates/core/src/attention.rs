//! Causal single-head attention scores, row softmax, and TAPA score gradients.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encodings::{
    distance_power, quadratic_phase, sin_cos_turns, tapa_amplitude, tapa_score_split,
    AttentionConfig, PhaseKind, TapaParams,
};
use crate::error::{Error, Result};
use crate::numeric::{stream_rng, Matrix, Vec64};

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionInput {
    /// `L×D` query rows.
    pub queries: Matrix,
    /// `L×D` key rows.
    pub keys: Matrix,
    pub positions: Vec<f64>,
    pub config: AttentionConfig,
}

impl AttentionInput {
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let len = self.positions.len();
        if len == 0 {
            return Err(Error::Config("sequence length must be at least 1".into()));
        }
        let dim = self.config.dim();
        for (name, m) in [("query", &self.queries), ("key", &self.keys)] {
            if m.rows() != len || m.cols() != dim {
                return Err(Error::Config(format!(
                    "{name} matrix is {}x{}, expected {len}x{dim}",
                    m.rows(),
                    m.cols()
                )));
            }
            if (0..len).any(|r| m.row(r).iter().any(|x| !x.is_finite())) {
                return Err(Error::Config(format!(
                    "{name} matrix has non-finite entries"
                )));
            }
        }
        if self.positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::Config("positions must be finite".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Square score matrix with a causal mask. Masked entries hold `-inf` and are
/// skipped by [`softmax_rows`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    len: usize,
    values: Vec<f64>,
    masked: Vec<bool>,
}

impl ScoreMatrix {
    /// Builds a matrix from explicit rows; `None` marks a masked entry.
    pub fn from_rows(rows: Vec<Vec<Option<f64>>>) -> Result<Self> {
        let len = rows.len();
        let mut values = Vec::with_capacity(len * len);
        let mut masked = Vec::with_capacity(len * len);
        for row in rows {
            if row.len() != len {
                return Err(Error::Domain(format!(
                    "score matrix rows must have length {len}, got {}",
                    row.len()
                )));
            }
            for entry in row {
                values.push(entry.unwrap_or(f64::NEG_INFINITY));
                masked.push(entry.is_none());
            }
        }
        Ok(ScoreMatrix {
            len,
            values,
            masked,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.values[m * self.len + n]
    }

    pub fn is_masked(&self, m: usize, n: usize) -> bool {
        self.masked[m * self.len + n]
    }

    pub fn row(&self, m: usize) -> &[f64] {
        &self.values[m * self.len..(m + 1) * self.len]
    }
}

/// Pairwise scores `S[m][n]` for query row `m` and key row `n`; entries with
/// `n > m` are masked.
pub fn score_matrix(input: &AttentionInput) -> Result<ScoreMatrix> {
    input.validate()?;
    let len = input.len();
    let rows: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|m| {
            let q = input.queries.row(m);
            (0..len)
                .map(|n| {
                    if n > m {
                        Ok(f64::NEG_INFINITY)
                    } else {
                        input.config.score(
                            q,
                            input.keys.row(n),
                            input.positions[m],
                            input.positions[n],
                        )
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let masked = (0..len * len).map(|i| i % len > i / len).collect();
    Ok(ScoreMatrix {
        len,
        values: rows.into_iter().flatten().collect(),
        masked,
    })
}

/// Max-subtracted softmax over the unmasked entries of each row.
pub fn softmax_rows(s: &ScoreMatrix) -> Result<ScoreMatrix> {
    let len = s.len;
    let mut values = vec![0.0; len * len];
    for m in 0..len {
        let live: Vec<usize> = (0..len).filter(|&n| !s.is_masked(m, n)).collect();
        if live.is_empty() {
            return Err(Error::Domain(format!("row {m} is fully masked")));
        }
        let max = live
            .iter()
            .map(|&n| s.get(m, n))
            .fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Domain(format!("row {m} has a non-finite score")));
        }
        let exps: Vec<f64> = live.iter().map(|&n| (s.get(m, n) - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        for (&n, e) in live.iter().zip(&exps) {
            values[m * len + n] = e / total;
        }
    }
    Ok(ScoreMatrix {
        len,
        values,
        masked: s.masked.clone(),
    })
}

/// Attention weights `softmax_rows(score_matrix(input))`.
pub fn attention_weights(input: &AttentionInput) -> Result<ScoreMatrix> {
    softmax_rows(&score_matrix(input)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGradient {
    pub d_q: Vec64,
    pub d_k: Vec64,
}

fn require_quadratic(t: &TapaParams) -> Result<()> {
    if t.phase != PhaseKind::QuadraticSplit {
        return Err(Error::Config(
            "gradients are implemented for the quadratic split phase only".into(),
        ));
    }
    Ok(())
}

/// Analytic partials of the split TAPA score with respect to `q` and `k`.
pub fn tapa_score_grad(
    q: &[f64],
    k: &[f64],
    m: f64,
    n: f64,
    t: &TapaParams,
) -> Result<ScoreGradient> {
    require_quadratic(t)?;
    // validates lengths and split
    tapa_score_split(q, k, m, n, t)?;
    let a = t.amplitude_dims();
    let (ra, rp) = ((a as f64).sqrt(), (t.phase_dims() as f64).sqrt());
    let amp = tapa_amplitude(q, k, t);
    let power = distance_power(m, n, t.alpha);
    let (sin, cos) = sin_cos_turns(power * quadratic_phase(q, k, t));
    let phase_scale = -amp * sin * std::f64::consts::TAU * power / rp;

    let partial = |other: &[f64]| -> Vec<f64> {
        other
            .iter()
            .enumerate()
            .map(|(i, x)| if i < a { x * cos / ra } else { phase_scale * x })
            .collect()
    };
    Ok(ScoreGradient {
        d_q: Vec64::new(partial(k))?,
        d_k: Vec64::new(partial(q))?,
    })
}

/// Central-difference gradient of the split TAPA score with step `h`.
pub fn tapa_score_grad_fd(
    q: &[f64],
    k: &[f64],
    m: f64,
    n: f64,
    t: &TapaParams,
    h: f64,
) -> Result<ScoreGradient> {
    require_quadratic(t)?;
    let central = |which_q: bool| -> Result<Vec<f64>> {
        let base = if which_q { q } else { k };
        (0..base.len())
            .map(|i| {
                let mut plus = base.to_vec();
                let mut minus = base.to_vec();
                plus[i] += h;
                minus[i] -= h;
                let (fp, fm) = if which_q {
                    (
                        tapa_score_split(&plus, k, m, n, t)?,
                        tapa_score_split(&minus, k, m, n, t)?,
                    )
                } else {
                    (
                        tapa_score_split(q, &plus, m, n, t)?,
                        tapa_score_split(q, &minus, m, n, t)?,
                    )
                };
                Ok((fp - fm) / (2.0 * h))
            })
            .collect()
    };
    Ok(ScoreGradient {
        d_q: Vec64::new(central(true)?)?,
        d_k: Vec64::new(central(false)?)?,
    })
}

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_ABS_FLOOR: f64 = 1e-8;

/// One random TAPA configuration for gradient checking.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientCase {
    pub q: Vec<f64>,
    pub k: Vec<f64>,
    pub m: f64,
    pub n: f64,
    pub params: TapaParams,
}

/// Draws case `index` of the gradient sweep: `D ∈ {4, 8, ..., 64}`,
/// `θ ∈ {1/4, 1/2, 3/4}`, `α ~ U(0.05, 0.5)`, positions in `[0, 1024]`.
pub fn gradient_case(seed: u64, index: u64) -> GradientCase {
    let mut rng = stream_rng(seed, index);
    let dim = 4 * rng.random_range(1..=16usize);
    let theta = [0.25, 0.5, 0.75][rng.random_range(0..3usize)];
    let alpha = rng.random_range(0.05..0.5);
    let m = rng.random_range(0..=1024u32) as f64;
    let n = rng.random_range(0..=1024u32) as f64;
    let mut normal = || -> f64 { rng.sample(rand_distr::StandardNormal) };
    let q = (0..dim).map(|_| normal()).collect();
    let k = (0..dim).map(|_| normal()).collect();
    GradientCase {
        q,
        k,
        m,
        n,
        params: TapaParams::quadratic(dim, theta, alpha).expect("grid values are admissible"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientCheck {
    /// Largest relative error over components whose absolute error exceeds
    /// [`GRAD_ABS_FLOOR`]; zero when every component is within the floor.
    pub max_rel_err: f64,
    pub max_abs_err: f64,
}

impl GradientCheck {
    pub fn passes(&self, rel_tol: f64) -> bool {
        self.max_rel_err <= rel_tol
    }
}

/// Compares analytic and central-difference gradients for one case.
pub fn check_gradient(case: &GradientCase, h: f64) -> Result<GradientCheck> {
    let analytic = tapa_score_grad(&case.q, &case.k, case.m, case.n, &case.params)?;
    let numeric = tapa_score_grad_fd(&case.q, &case.k, case.m, case.n, &case.params, h)?;
    let mut out = GradientCheck {
        max_rel_err: 0.0,
        max_abs_err: 0.0,
    };
    let pairs = analytic
        .d_q
        .iter()
        .zip(numeric.d_q.iter())
        .chain(analytic.d_k.iter().zip(numeric.d_k.iter()));
    for (a, n) in pairs {
        let abs = (a - n).abs();
        out.max_abs_err = out.max_abs_err.max(abs);
        if abs > GRAD_ABS_FLOOR {
            out.max_rel_err = out.max_rel_err.max(abs / a.abs().max(n.abs()));
        }
    }
    Ok(out)
}
