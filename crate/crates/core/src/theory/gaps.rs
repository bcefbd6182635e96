use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sums::RopeSpectrum;
use super::{params, TheoryCheckReport};
use crate::encodings::{reduce_turns, RopeParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapParams {
    pub lambda_near: f64,
    pub lambda_far: f64,
    pub mu0: f64,
    pub nu0: f64,
    pub theta0: f64,
    pub dim: usize,
}

impl GapParams {
    pub fn rope(&self) -> Result<RopeParams> {
        RopeParams::new(self.dim, self.theta0)
    }

    /// `Δ = Γ_{λ_near} − Γ_{λ_far}`.
    pub fn delta(&self) -> Result<f64> {
        let spectrum = RopeSpectrum::new(&self.rope()?)?;
        Ok(spectrum.gamma(self.lambda_near, self.mu0, self.nu0)
            - spectrum.gamma(self.lambda_far, self.mu0, self.nu0))
    }

    fn report_params(&self) -> super::Params {
        params([
            ("lambda_near", self.lambda_near),
            ("lambda_far", self.lambda_far),
            ("mu0", self.mu0),
            ("nu0", self.nu0),
            ("theta0", self.theta0),
            ("dim", self.dim as f64),
        ])
    }
}

/// Which hypotheses of the gap check are enforced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    /// `θ0 < e^{−64(|μ0|+|ν0|)/|μ0|}` and `1 < λ_near < θ0^{−1/4}/8`, `λ_far > 1/θ0`.
    Strict,
    /// Only `λ_near > 1`, `λ_far > 1/θ0` and `μ0 ≠ 0`.
    Empirical,
}

/// `sgn(μ0)·(Γ_{λ_near} − Γ_{λ_far}) > |μ0|/8`.
pub fn theorem2_gap_check(g: &GapParams, mode: Admissibility) -> Result<TheoryCheckReport> {
    g.rope()?;
    if g.mu0 == 0.0 || !g.mu0.is_finite() {
        return Err(Error::precondition("μ0 ≠ 0", format!("μ0 = {}", g.mu0)));
    }
    if !(g.lambda_near > 1.0) {
        return Err(Error::precondition(
            "λ_near > 1",
            format!("λ_near = {}", g.lambda_near),
        ));
    }
    if !(g.lambda_far > 1.0 / g.theta0) {
        return Err(Error::precondition(
            "λ_far > 1/θ0",
            format!("λ_far = {}, 1/θ0 = {}", g.lambda_far, 1.0 / g.theta0),
        ));
    }
    if mode == Admissibility::Strict {
        let near_cap = g.theta0.powf(-0.25) / 8.0;
        if !(g.lambda_near < near_cap) {
            return Err(Error::precondition(
                "λ_near < θ0^(-1/4)/8",
                format!("λ_near = {}, θ0^(-1/4)/8 = {near_cap}", g.lambda_near),
            ));
        }
        let threshold = (-64.0 * (g.mu0.abs() + g.nu0.abs()) / g.mu0.abs()).exp();
        if !(g.theta0 < threshold) {
            return Err(Error::precondition(
                "θ0 < e^(-64(|μ0|+|ν0|)/|μ0|)",
                format!("θ0 = {}, threshold = {threshold:e}", g.theta0),
            ));
        }
    }
    let lhs = g.mu0.signum() * g.delta()?;
    let mut prm = g.report_params();
    prm.insert(
        "strict".into(),
        if mode == Admissibility::Strict {
            1.0
        } else {
            0.0
        },
    );
    Ok(TheoryCheckReport::above(
        "theorem2",
        prm,
        lhs,
        g.mu0.abs() / 8.0,
    ))
}

pub const SHRINK_BUDGET: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShrinkStep {
    pub step: usize,
    pub theta0: f64,
    pub dim: usize,
    pub abs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkOutcome {
    pub report: TheoryCheckReport,
    pub trace: Vec<ShrinkStep>,
}

/// Drives `θ0` down by factors of ten, doubling `D` whenever `D <= 4|log θ0|`,
/// until `|Δ| < eps` or the step budget runs out.
pub fn theorem3_shrink_check(g: &GapParams, eps: f64) -> Result<ShrinkOutcome> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("eps must be positive, got {eps}")));
    }
    let mut cur = *g;
    cur.rope()?;
    let mut trace = Vec::new();
    for step in 0..=SHRINK_BUDGET {
        let abs_delta = cur.delta()?.abs();
        trace.push(ShrinkStep {
            step,
            theta0: cur.theta0,
            dim: cur.dim,
            abs_delta,
        });
        if abs_delta < eps || step == SHRINK_BUDGET {
            break;
        }
        cur.theta0 /= 10.0;
        if cur.dim as f64 <= 4.0 * cur.theta0.ln().abs() {
            cur.dim *= 2;
        }
    }
    let last = *trace.last().expect("at least one step");
    let mut prm = g.report_params();
    prm.insert("eps".into(), eps);
    prm.insert("final_theta0".into(), last.theta0);
    prm.insert("final_dim".into(), last.dim as f64);
    prm.insert("steps".into(), last.step as f64);
    Ok(ShrinkOutcome {
        report: TheoryCheckReport::below("theorem3", prm, last.abs_delta, eps),
        trace,
    })
}

/// `2Γ_λ = (2R/D)·Σ_d sin(2πλθ_d + φ)` with `R = √(μ0²+ν0²)`, `φ = atan2(μ0, ν0)`.
fn twice_gamma(lambda: f64, thetas: &[f64], amp: f64, phi: f64, dim: f64) -> f64 {
    let total: f64 = thetas
        .iter()
        .map(|t| (TAU * reduce_turns(lambda * t) + phi).sin())
        .sum();
    2.0 * amp * total / dim
}

/// Scans integer `λ ∈ [1, λ_max]` for the value of `2Γ_λ` closest to `γ`.
/// Returns `(λ, |2Γ_λ − γ|)`, taking the smallest `λ` among ties.
pub fn theorem1_subconvergence_search(
    gamma_target: f64,
    mu0: f64,
    nu0: f64,
    p: &RopeParams,
    lambda_max: u64,
) -> Result<(u64, f64)> {
    p.validate()?;
    let amp = mu0.hypot(nu0);
    if !(gamma_target.abs() <= amp) {
        return Err(Error::Domain(format!(
            "target {gamma_target} outside [-{amp}, {amp}]"
        )));
    }
    if lambda_max < 1 {
        return Err(Error::Domain("lambda_max must be at least 1".into()));
    }
    let phi = mu0.atan2(nu0);
    let thetas = p.thetas();
    let dim = p.dim as f64;
    let best = (1..=lambda_max)
        .into_par_iter()
        .map(|l| {
            let err = (twice_gamma(l as f64, &thetas, amp, phi, dim) - gamma_target).abs();
            (err, l)
        })
        .reduce(
            || (f64::INFINITY, u64::MAX),
            |a, b| if (b.0, b.1) < (a.0, a.1) { b } else { a },
        );
    Ok((best.1, best.0))
}

/// `2Γ_λ` as evaluated by the search.
pub fn theorem1_value(lambda: u64, mu0: f64, nu0: f64, p: &RopeParams) -> Result<f64> {
    p.validate()?;
    Ok(twice_gamma(
        lambda as f64,
        &p.thetas(),
        mu0.hypot(nu0),
        mu0.atan2(nu0),
        p.dim as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::theory::gamma_bias;

    fn gap(mu0: f64, nu0: f64, theta0: f64, dim: usize, near: f64, far: f64) -> GapParams {
        GapParams {
            lambda_near: near,
            lambda_far: far,
            mu0,
            nu0,
            theta0,
            dim,
        }
    }

    #[test]
    fn theorem2_empirical_regime() {
        for mu0 in [1.0, -1.0] {
            for nu0 in [0.0, 0.5] {
                let r = theorem2_gap_check(
                    &gap(mu0, nu0, 1e-6, 1024, 10.0, 1e7),
                    Admissibility::Empirical,
                )
                .unwrap();
                assert!(r.pass, "{r:?}");
            }
        }
    }

    #[test]
    fn theorem2_strict_regime() {
        let r = theorem2_gap_check(
            &gap(1.0, 0.0, 1e-30, 4096, 10.0, 1e31),
            Admissibility::Strict,
        )
        .unwrap();
        assert!(r.pass && r.lhs > 0.45, "{r:?}");
        // ν0 = 0.5 needs θ0 < e^{-96}
        assert!(matches!(
            theorem2_gap_check(
                &gap(1.0, 0.5, 1e-30, 4096, 10.0, 1e31),
                Admissibility::Strict
            ),
            Err(Error::Precondition { .. })
        ));
        // λ_near above θ0^{-1/4}/8 ≈ 3.95
        assert!(matches!(
            theorem2_gap_check(&gap(1.0, 0.0, 1e-6, 1024, 10.0, 1e7), Admissibility::Strict),
            Err(Error::Precondition { .. })
        ));
    }

    #[test]
    fn theorem2_rejects_unit_near_distance() {
        match theorem2_gap_check(
            &gap(1.0, 0.0, 1e-6, 1024, 1.0, 1e7),
            Admissibility::Empirical,
        ) {
            Err(Error::Precondition { condition, .. }) => assert_eq!(condition, "λ_near > 1"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn theorem2_sign_symmetry() {
        let a = theorem2_gap_check(
            &gap(1.0, 0.0, 1e-6, 1024, 10.0, 1e7),
            Admissibility::Empirical,
        )
        .unwrap();
        let b = theorem2_gap_check(
            &gap(-1.0, 0.0, 1e-6, 1024, 10.0, 1e7),
            Admissibility::Empirical,
        )
        .unwrap();
        assert_eq!(a.lhs, b.lhs);
    }

    #[test]
    fn theorem3_cases() {
        let zero = theorem3_shrink_check(&gap(0.0, 0.0, 2e-6, 128, 10.0, 1e4), 1e-9).unwrap();
        assert!(zero.report.pass && zero.trace.len() == 1);

        let out = theorem3_shrink_check(&gap(1.0, 0.0, 2e-6, 128, 10.0, 1e4), 0.05).unwrap();
        assert!(out.report.pass, "{:?}", out.trace);
        let last = out.trace.last().unwrap();
        assert_eq!(last.step, 14);
        assert_eq!(last.dim, 256);
        assert!(out.trace.windows(2).all(|w| w[1].dim >= w[0].dim));

        let easy = theorem3_shrink_check(&gap(1.0, 0.5, 1e-2, 64, 10.0, 1e4), 3.1).unwrap();
        assert!(easy.report.pass && easy.trace.len() == 1);
        assert!(theorem3_shrink_check(&gap(1.0, 0.0, 2e-6, 128, 10.0, 1e4), 0.0).is_err());
    }

    #[test]
    fn theorem3_budget_exhaustion_reports_failure() {
        let out = theorem3_shrink_check(&gap(1.0, 0.0, 2e-6, 128, 10.0, 1e4), 1e-12).unwrap();
        assert!(!out.report.pass);
        assert_eq!(out.trace.len(), SHRINK_BUDGET + 1);
    }

    #[test]
    fn theorem1_value_matches_gamma() {
        let p = RopeParams::new(8, 0.1).unwrap();
        for (mu0, nu0) in [(1.0, 0.0), (0.3, -0.8), (0.0, 1.0)] {
            for l in [1u64, 5, 99] {
                let g = gamma_bias(l as f64, mu0, nu0, &p).unwrap();
                assert!((theorem1_value(l, mu0, nu0, &p).unwrap() - 2.0 * g).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn theorem1_planted_target() {
        let p = RopeParams::new(8, 0.1).unwrap();
        let target = theorem1_value(37, 1.0, 0.0, &p).unwrap();
        let (l, err) = theorem1_subconvergence_search(target, 1.0, 0.0, &p, 100).unwrap();
        assert_eq!(err, 0.0);
        assert_eq!(theorem1_value(l, 1.0, 0.0, &p).unwrap(), target);
    }

    #[test]
    fn theorem1_search_monotone_and_dense() {
        let p = RopeParams::new(8, 0.1).unwrap();
        let mut prev = f64::INFINITY;
        for lmax in [1u64, 10, 100, 1000, 10_000, 1_000_000] {
            let (_, err) = theorem1_subconvergence_search(0.9, 1.0, 0.0, &p, lmax).unwrap();
            assert!(err <= prev);
            prev = err;
        }
        assert!(prev < 0.1, "{prev}");
        assert!(theorem1_subconvergence_search(1.5, 1.0, 0.0, &p, 10).is_err());
    }
}
