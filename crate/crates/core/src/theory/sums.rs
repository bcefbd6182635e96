use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::extprec::{self, ThetaTable, FAST_PATH_LIMIT};
use super::{params, TheoryCheckReport};
use crate::encodings::{reduce_turns, RopeParams};
use crate::error::{Error, Result};
use crate::numeric::{
    pairwise_sum, par_map_indexed, sample_pair, summarize, SamplerSpec, SummaryStats,
};

/// Parameters of the oscillatory sums and their bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SumParams {
    pub lambda: f64,
    pub theta0: f64,
    pub dim: usize,
    /// Slack exponent of the discretization error term.
    pub alpha: f64,
    /// Exponent of the lower-bound window.
    pub eps0: f64,
}

impl SumParams {
    pub fn rope(&self) -> Result<RopeParams> {
        RopeParams::new(self.dim, self.theta0)
    }
}

/// Rotation frequencies of one `(θ0, D)` with accurate `sin/cos(2πλθ_d)`.
#[derive(Debug, Clone)]
pub struct RopeSpectrum {
    params: RopeParams,
    thetas: Vec<f64>,
}

impl RopeSpectrum {
    pub fn new(params: &RopeParams) -> Result<Self> {
        params.validate()?;
        Ok(RopeSpectrum {
            params: *params,
            thetas: params.thetas(),
        })
    }

    pub fn params(&self) -> &RopeParams {
        &self.params
    }

    pub fn thetas(&self) -> &[f64] {
        &self.thetas
    }

    /// `(sin 2πλθ_d, cos 2πλθ_d)` for every pair `d`.
    pub fn sin_cos(&self, lambda: f64) -> Vec<(f64, f64)> {
        let mut table: Option<Arc<ThetaTable>> = None;
        self.thetas
            .iter()
            .enumerate()
            .map(|(d, theta)| {
                let x = lambda * theta;
                if x.abs() > FAST_PATH_LIMIT {
                    let t = table.get_or_insert_with(|| {
                        extprec::theta_table(
                            self.params.theta0,
                            self.params.dim,
                            extprec::bits_for(lambda),
                        )
                    });
                    t.sin_cos(lambda, d)
                } else {
                    (TAU * reduce_turns(x)).sin_cos()
                }
            })
            .collect()
    }

    /// `(C_D(λ), S_D(λ))`.
    pub fn sums(&self, lambda: f64) -> (f64, f64) {
        let sc = self.sin_cos(lambda);
        let dim = self.params.dim as f64;
        let c: Vec<f64> = sc.iter().map(|p| p.1).collect();
        let s: Vec<f64> = sc.iter().map(|p| p.0).collect();
        (pairwise_sum(&c) / dim, pairwise_sum(&s) / dim)
    }

    /// `Γ_λ = μ0·C_D(λ) + ν0·S_D(λ)`.
    pub fn gamma(&self, lambda: f64, mu0: f64, nu0: f64) -> f64 {
        let (c, s) = self.sums(lambda);
        mu0 * c + nu0 * s
    }
}

/// `C_D(λ) = (1/D)·Σ_{d<D/2} cos(2πλθ0^{2d/D})`.
pub fn cd_sum(lambda: f64, p: &RopeParams) -> Result<f64> {
    Ok(RopeSpectrum::new(p)?.sums(lambda).0)
}

/// `S_D(λ) = (1/D)·Σ_{d<D/2} sin(2πλθ0^{2d/D})`.
pub fn sd_sum(lambda: f64, p: &RopeParams) -> Result<f64> {
    Ok(RopeSpectrum::new(p)?.sums(lambda).1)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::precondition("0 < α < 1", format!("α = {alpha}")))
    }
}

/// `ε(D; λ, θ0, α) = α + 4πλθ0^α/D`.
pub fn eps_bound(p: &SumParams) -> Result<f64> {
    check_alpha(p.alpha)?;
    Ok(p.alpha + 4.0 * PI * p.lambda * p.theta0.powf(p.alpha) / p.dim as f64)
}

fn lemma1_preconditions(p: &SumParams) -> Result<()> {
    if !(p.theta0 > 0.0 && p.theta0 < 0.1) {
        return Err(Error::precondition(
            "θ0 < 1/10",
            format!("θ0 = {}", p.theta0),
        ));
    }
    let bound = 4.0 * p.theta0.ln().abs();
    if p.dim as f64 <= bound {
        return Err(Error::precondition(
            "D > 4|log θ0|",
            format!("D = {}, 4|log θ0| = {bound}", p.dim),
        ));
    }
    if !(p.lambda > 1.0) {
        return Err(Error::precondition("λ > 1", format!("λ = {}", p.lambda)));
    }
    check_alpha(p.alpha)?;
    p.rope()?;
    Ok(())
}

fn sum_params(p: &SumParams) -> super::Params {
    params([
        ("lambda", p.lambda),
        ("theta0", p.theta0),
        ("dim", p.dim as f64),
        ("alpha", p.alpha),
    ])
}

/// Upper bounds `|C_D| <= 2/(θ0|log θ0|λπ) + ε` and `|S_D| <= 2/|log θ0| + ε`.
pub fn lemma1_check(p: &SumParams) -> Result<(TheoryCheckReport, TheoryCheckReport)> {
    lemma1_preconditions(p)?;
    let (c, s) = RopeSpectrum::new(&p.rope()?)?.sums(p.lambda);
    let eps = eps_bound(p)?;
    let log = p.theta0.ln().abs();
    let cos_bound = 2.0 / (p.theta0 * log * p.lambda * PI) + eps;
    let sin_bound = 2.0 / log + eps;
    Ok((
        TheoryCheckReport::at_most("lemma1_cos", sum_params(p), c.abs(), cos_bound),
        TheoryCheckReport::at_most("lemma1_sin", sum_params(p), s.abs(), sin_bound),
    ))
}

/// Lower bound `C_D(λ) > ½(1−ε0)·cos(2πλθ0^{ε0}) − 1/|log θ0| − ε`.
pub fn lemma2_check(p: &SumParams) -> Result<TheoryCheckReport> {
    lemma1_preconditions(p)?;
    if !(p.eps0 > 0.0 && p.eps0 < 1.0) {
        return Err(Error::precondition(
            "0 < ε0 < 1",
            format!("ε0 = {}", p.eps0),
        ));
    }
    let window = p.lambda * p.theta0.powf(p.eps0);
    if !(window < 0.25) {
        return Err(Error::precondition(
            "λθ0^ε0 < 1/4",
            format!("λθ0^ε0 = {window}"),
        ));
    }
    let c = cd_sum(p.lambda, &p.rope()?)?;
    let bound =
        0.5 * (1.0 - p.eps0) * (TAU * window).cos() - 1.0 / p.theta0.ln().abs() - eps_bound(p)?;
    let mut prm = sum_params(p);
    prm.insert("eps0".into(), p.eps0);
    Ok(TheoryCheckReport::above("lemma2", prm, c, bound))
}

/// Expected normalized RoPE score `Γ_λ = μ0·C_D(λ) + ν0·S_D(λ)`.
pub fn gamma_bias(lambda: f64, mu0: f64, nu0: f64, p: &RopeParams) -> Result<f64> {
    Ok(RopeSpectrum::new(p)?.gamma(lambda, mu0, nu0))
}

pub const MIN_MC_SAMPLES: usize = 1000;

/// Monte Carlo estimate of `E[rope_score/√D]` at distance `λ`. The variance of
/// the returned stats is the variance of the fluctuation `Z_λ`.
pub fn monte_carlo_rope_bias(
    lambda: f64,
    spec: &SamplerSpec,
    p: &RopeParams,
    n_samples: usize,
) -> Result<SummaryStats> {
    if n_samples < MIN_MC_SAMPLES {
        return Err(Error::Config(format!(
            "need at least {MIN_MC_SAMPLES} samples, got {n_samples}"
        )));
    }
    if spec.dim != p.dim {
        return Err(Error::Config(format!(
            "sampler dimension {} does not match RoPE dimension {}",
            spec.dim, p.dim
        )));
    }
    spec.validate()?;
    let rot = RopeSpectrum::new(p)?.sin_cos(lambda);
    let dim = p.dim as f64;
    let samples: Vec<f64> = par_map_indexed(n_samples, |i| {
        let (q, k) = sample_pair(spec, i).expect("validated spec");
        normalized_score(&q, &k, &rot) / dim
    });
    summarize(&samples)
}

/// `Σ_d A_d cos + B_d sin` with precomputed rotations.
pub(crate) fn normalized_score(q: &[f64], k: &[f64], rot: &[(f64, f64)]) -> f64 {
    rot.iter()
        .enumerate()
        .map(|(d, (s, c))| {
            let (q0, q1, k0, k1) = (q[2 * d], q[2 * d + 1], k[2 * d], k[2 * d + 1]);
            (q0 * k0 + q1 * k1) * c + (q0 * k1 - q1 * k0) * s
        })
        .sum()
}
