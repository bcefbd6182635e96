//! Flat TOML run configuration with `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use tapa_core::encodings::PhaseKind;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,

    // shared encoding and sampler parameters
    pub dim: usize,
    pub theta0: f64,
    pub theta: f64,
    pub alpha: f64,
    pub phase: PhaseKind,
    pub mu0: f64,
    pub nu0: f64,
    pub noise_scale: f64,
    pub encodings: Vec<String>,

    pub lemma_theta0: Vec<f64>,
    pub lemma_dims: Vec<usize>,
    pub lemma_lambdas: Vec<f64>,
    pub lemma_alphas: Vec<f64>,
    pub lemma_eps0: f64,

    pub gap_mu0: Vec<f64>,
    pub gap_nu0: Vec<f64>,
    pub strict_theta0: f64,
    pub strict_dim: usize,
    pub strict_lambda_near: f64,
    pub strict_lambda_far: f64,
    pub empirical_theta0: f64,
    pub empirical_dim: usize,
    pub empirical_lambda_near: f64,
    pub empirical_lambda_far: f64,

    pub shrink_theta0: f64,
    pub shrink_dim: usize,
    pub shrink_lambda_near: f64,
    pub shrink_lambda_far: f64,
    pub shrink_mu0: f64,
    pub shrink_nu0: f64,
    pub shrink_eps: f64,

    pub decay_dim: usize,
    pub decay_theta: f64,
    pub decay_alpha: f64,
    pub decay_distances: Vec<f64>,
    pub decay_samples: usize,

    pub variance_dim: usize,
    pub variance_distance: f64,
    pub variance_samples: usize,

    pub form_trials: usize,
    pub shift_trials: usize,

    pub grad_trials: usize,
    pub grad_tolerance: f64,

    pub mc_dims: Vec<usize>,
    pub mc_theta0: Vec<f64>,
    pub mc_lambdas: Vec<f64>,
    pub mc_samples: usize,
    pub mc_variance_samples: usize,

    pub hist_pairs: usize,
    pub hist_bins: usize,
    pub short_range: [u64; 2],
    pub long_range: [u64; 2],

    pub curve_dim: usize,
    pub curve_distances: Vec<f64>,
    pub curve_samples: usize,

    pub sweep_theta0: Vec<f64>,
    pub sweep_scales: Vec<f64>,
    pub sweep_distances: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let powers_of_two: Vec<f64> = (0..=10).map(|i| (1u64 << i) as f64).collect();
        RunConfig {
            seed: 20_240_601,
            dim: 128,
            theta0: 2e-6,
            theta: 0.5,
            alpha: 0.1,
            phase: PhaseKind::QuadraticSplit,
            mu0: 1.0,
            nu0: 0.0,
            noise_scale: 1.0,
            encodings: vec!["rope".into(), "tapa".into()],

            lemma_theta0: vec![1e-2, 1e-4, 1e-6, 1e-10],
            lemma_dims: vec![64, 128, 512, 2048],
            lemma_lambdas: vec![2.0, 10.0, 1e3, 1e6],
            lemma_alphas: vec![0.1, 0.3, 0.5],
            lemma_eps0: 0.25,

            gap_mu0: vec![1.0, -1.0],
            gap_nu0: vec![0.0, 0.5],
            strict_theta0: 1e-30,
            strict_dim: 4096,
            strict_lambda_near: 10.0,
            strict_lambda_far: 1e31,
            empirical_theta0: 1e-6,
            empirical_dim: 1024,
            empirical_lambda_near: 10.0,
            empirical_lambda_far: 1e7,

            shrink_theta0: 2e-6,
            shrink_dim: 128,
            shrink_lambda_near: 10.0,
            shrink_lambda_far: 1e4,
            shrink_mu0: 1.0,
            shrink_nu0: 0.0,
            shrink_eps: 0.05,

            decay_dim: 8,
            decay_theta: 0.5,
            decay_alpha: 0.1,
            decay_distances: powers_of_two.clone(),
            decay_samples: 1_000_000,

            variance_dim: 8,
            variance_distance: 1e4,
            variance_samples: 1_000_000,

            form_trials: 10_000,
            shift_trials: 1000,

            grad_trials: 1000,
            grad_tolerance: 1e-5,

            mc_dims: vec![64, 128],
            mc_theta0: vec![1e-2, 2e-6],
            mc_lambdas: vec![1.0, 10.0, 1000.0],
            mc_samples: 100_000,
            mc_variance_samples: 1_000_000,

            hist_pairs: 10_000,
            hist_bins: 50,
            short_range: [0, 100],
            long_range: [10_000, 10_100],

            curve_dim: 8,
            curve_distances: [0.0].into_iter().chain(powers_of_two).collect(),
            curve_samples: 100_000,

            sweep_theta0: vec![1e-2, 1e-4, 2e-6],
            sweep_scales: vec![1.0, 2.0, 4.0, 8.0],
            sweep_distances: vec![1.0, 10.0, 100.0, 1000.0, 8192.0, 65536.0],
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `overrides` of the form `key=value`, and
    /// validates the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{item}` is not key=value")))?;
            let (key, value) = (key.trim(), value.trim());
            let parsed = format!("{key} = {value}")
                .parse::<toml::Table>()
                .or_else(|_| format!("{key} = {}", toml::Value::from(value)).parse::<toml::Table>())
                .map_err(|e| CliError::Usage(format!("override `{item}`: {e}")))?;
            table.extend(parsed);
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        for &t in &self.lemma_theta0 {
            if !(t > 0.0 && t < 0.1) {
                return bad(format!(
                    "lemma_theta0 contains {t}: precondition θ0 < 1/10 is violated"
                ));
            }
        }
        for &l in &self.lemma_lambdas {
            if !(l > 1.0) {
                return bad(format!(
                    "lemma_lambdas contains {l}: precondition λ > 1 is violated"
                ));
            }
        }
        for &a in &self.lemma_alphas {
            if !(a > 0.0 && a < 1.0) {
                return bad(format!("lemma_alphas contains {a}: need 0 < α < 1"));
            }
        }
        if !(self.lemma_eps0 > 0.0 && self.lemma_eps0 < 1.0) {
            return bad(format!(
                "lemma_eps0 = {} must lie in (0, 1)",
                self.lemma_eps0
            ));
        }
        if self.decay_distances.is_empty() {
            return bad("decay_distances is empty".into());
        }
        if self.curve_distances.is_empty() {
            return bad("curve_distances is empty".into());
        }
        for d in self.decay_distances.iter().chain(&self.curve_distances) {
            if !(d.is_finite() && *d >= 0.0) {
                return bad(format!("distance {d} must be finite and non-negative"));
            }
        }
        if self.decay_distances.iter().any(|&d| d <= 0.0) {
            return bad("decay_distances must be positive for the log-log fit".into());
        }
        if self.grad_trials == 0 {
            return bad("grad_trials must be at least 1".into());
        }
        if !(self.grad_tolerance >= 0.0) {
            return bad(format!(
                "grad_tolerance = {} must be >= 0",
                self.grad_tolerance
            ));
        }
        for (name, n) in [
            ("form_trials", self.form_trials),
            ("shift_trials", self.shift_trials),
        ] {
            if n == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, n) in [
            ("decay_samples", self.decay_samples),
            ("variance_samples", self.variance_samples),
            ("mc_samples", self.mc_samples),
            ("mc_variance_samples", self.mc_variance_samples),
            ("curve_samples", self.curve_samples),
        ] {
            if n < 1000 {
                return bad(format!("{name} = {n} must be at least 1000"));
            }
        }
        if self.encodings.is_empty() {
            return bad("encodings is empty".into());
        }
        for e in &self.encodings {
            if e != "rope" && e != "tapa" {
                return bad(format!("unknown encoding `{e}` (expected rope or tapa)"));
            }
        }
        if self.short_range[0] > self.short_range[1] || self.long_range[0] > self.long_range[1] {
            return bad("distance ranges must be written [lo, hi] with lo <= hi".into());
        }
        if !(self.shrink_eps > 0.0) {
            return bad(format!("shrink_eps = {} must be positive", self.shrink_eps));
        }
        if self.sweep_scales.iter().any(|s| !(*s >= 1.0)) {
            return bad("sweep_scales must all be >= 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::default().validate().unwrap();
        assert_eq!(RunConfig::load(None, &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_apply() {
        let c = RunConfig::load(
            None,
            &[
                "dim=64".into(),
                "lemma_dims=[64, 128]".into(),
                "phase=linear".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.dim, 64);
        assert_eq!(c.lemma_dims, vec![64, 128]);
        assert_eq!(c.phase, PhaseKind::Linear);
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(matches!(
            RunConfig::load(None, &["nonsense=1".into()]),
            Err(CliError::Config(_))
        ));
        match RunConfig::load(None, &["lemma_theta0=[0.2]".into()]) {
            Err(CliError::Config(msg)) => assert!(msg.contains("θ0 < 1/10")),
            other => panic!("{other:?}"),
        }
        assert!(RunConfig::load(None, &["grad_trials=0".into()]).is_err());
        assert!(RunConfig::load(None, &["curve_distances=[]".into()]).is_err());
        assert!(matches!(
            RunConfig::load(None, &["novalue".into()]),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn reads_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "seed = 5\nmu0 = 0.5\n").unwrap();
        let c = RunConfig::load(Some(&path), &["seed=6".into()]).unwrap();
        assert_eq!((c.seed, c.mu0), (6, 0.5));
    }
}
