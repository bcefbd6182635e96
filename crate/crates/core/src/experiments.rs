//! Distance-bias histograms and decay curves under synthetic query/key statistics.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encodings::AttentionConfig;
use crate::error::{Error, Result};
use crate::numeric::{
    pairwise_sum, par_map_indexed, sample_pair, sample_split_pair, stream_rng, summarize,
    SamplerSpec,
};
use crate::theory::tapa::tapa_decay_curve;
use crate::theory::{
    gamma_bias, monte_carlo_rope_bias, tapa_expected_score, DecayCurve, DecayEstimator, DecayRow,
    RopeSpectrum,
};

/// Streams at or above this index drive position draws; sample streams stay below it.
const POSITION_STREAMS: u64 = 1 << 63;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    /// Inclusive integer distance interval for the near evaluation.
    pub short_range: (u64, u64),
    /// Inclusive integer distance interval for the far evaluation.
    pub long_range: (u64, u64),
    pub n_pairs: usize,
    pub bins: usize,
    pub encoding: AttentionConfig,
    pub sampler: SamplerSpec,
}

impl HistogramSpec {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.sampler.validate()?;
        let (s, l) = (self.short_range, self.long_range);
        if s.0 > s.1 || l.0 > l.1 {
            return Err(Error::Config(
                "distance intervals must have lo <= hi".into(),
            ));
        }
        if !(s.1 < l.0 || l.1 < s.0) {
            return Err(Error::Config(format!(
                "distance intervals [{}, {}] and [{}, {}] overlap",
                s.0, s.1, l.0, l.1
            )));
        }
        if self.n_pairs < 1000 {
            return Err(Error::Config(format!(
                "need at least 1000 pairs, got {}",
                self.n_pairs
            )));
        }
        if self.bins < 10 {
            return Err(Error::Config(format!(
                "need at least 10 bins, got {}",
                self.bins
            )));
        }
        if self.encoding.dim() != self.sampler.dim {
            return Err(Error::Config(format!(
                "encoding dimension {} does not match sampler dimension {}",
                self.encoding.dim(),
                self.sampler.dim
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasHistogram {
    pub label: String,
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub mean: f64,
    pub std: f64,
    pub ci95: f64,
    pub n: usize,
}

/// Draws `(q, k)` for one trial. TAPA uses the split sampler so its phase
/// segments are independent of everything else.
fn trial_pair(
    encoding: &AttentionConfig,
    spec: &SamplerSpec,
    stream: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (q, k) = match encoding {
        AttentionConfig::Tapa(t) => sample_split_pair(spec, t.amplitude_dims(), stream)?,
        _ => sample_pair(spec, stream)?,
    };
    Ok((q.into_inner(), k.into_inner()))
}

/// Score differences `Attn(λ) − Attn(Λ)` for one shared `(q, k)` per trial,
/// key at position 0 and query at the sampled distance.
pub fn bias_samples(spec: &HistogramSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    par_map_indexed(spec.n_pairs, |i| {
        let (q, k) = trial_pair(&spec.encoding, &spec.sampler, i)?;
        let mut rng = stream_rng(spec.sampler.seed, POSITION_STREAMS | i);
        let near = rng.random_range(spec.short_range.0..=spec.short_range.1) as f64;
        let far = rng.random_range(spec.long_range.0..=spec.long_range.1) as f64;
        Ok(spec.encoding.score(&q, &k, near, 0.0)? - spec.encoding.score(&q, &k, far, 0.0)?)
    })
    .into_iter()
    .collect()
}

pub fn run_bias_histogram(spec: &HistogramSpec) -> Result<BiasHistogram> {
    let samples = bias_samples(spec)?;
    let stats = summarize(&samples)?;
    let (bin_edges, counts) = histogram(&samples, spec.bins);
    Ok(BiasHistogram {
        label: spec.encoding.label().to_string(),
        bin_edges,
        counts,
        mean: stats.mean,
        std: stats.std_dev(),
        ci95: stats.ci95_half_width,
        n: stats.n,
    })
}

/// Equal-width bins spanning the data range; the last bin is closed.
pub fn histogram(samples: &[f64], bins: usize) -> (Vec<f64>, Vec<u64>) {
    let mut lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + width * i as f64).collect();
    edges.push(hi);
    let mut counts = vec![0u64; bins];
    for &x in samples {
        let mut b = (((x - lo) / width) as usize).min(bins - 1);
        // guard against rounding at interior edges
        while b > 0 && x < edges[b] {
            b -= 1;
        }
        while b + 1 < bins && x >= edges[b + 1] {
            b += 1;
        }
        counts[b] += 1;
    }
    (edges, counts)
}

/// Exact expected score difference under uniform integer distances.
pub fn histogram_oracle(spec: &HistogramSpec) -> Result<f64> {
    spec.validate()?;
    let mean_over = |range: (u64, u64), f: &dyn Fn(f64) -> Result<f64>| -> Result<f64> {
        let values = (range.0..=range.1)
            .map(|d| f(d as f64))
            .collect::<Result<Vec<f64>>>()?;
        Ok(pairwise_sum(&values) / values.len() as f64)
    };
    match &spec.encoding {
        AttentionConfig::Rope(p) => {
            let spectrum = RopeSpectrum::new(p)?;
            let (mu0, nu0) = (spec.sampler.mu0, spec.sampler.nu0);
            let g = |d: f64| Ok(spectrum.gamma(d, mu0, nu0));
            let root = (p.dim as f64).sqrt();
            Ok(root * (mean_over(spec.short_range, &g)? - mean_over(spec.long_range, &g)?))
        }
        AttentionConfig::Tapa(t) => {
            let g = |d: f64| tapa_expected_score(d, t, &spec.sampler);
            Ok(mean_over(spec.short_range, &g)? - mean_over(spec.long_range, &g)?)
        }
        AttentionConfig::TapaGeneral(_) => Err(Error::Config(
            "general TAPA has no closed-form bias oracle".into(),
        )),
    }
}

/// Per-encoding estimate of the expected score against distance. RoPE rows
/// are normalized by `1/√D` and compared with `Γ_λ`; TAPA rows use the
/// phase-conditional estimator against the closed form.
pub fn run_decay_comparison(
    encodings: &[AttentionConfig],
    distances: &[f64],
    sampler: &SamplerSpec,
    n_samples: usize,
) -> Result<Vec<DecayCurve>> {
    if distances.is_empty() {
        return Err(Error::Config("distance list is empty".into()));
    }
    if let Some(d) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::Config(format!(
            "distances must be finite and >= 0, got {d}"
        )));
    }
    encodings
        .iter()
        .map(|enc| {
            enc.validate()?;
            if enc.dim() != sampler.dim {
                return Err(Error::Config(format!(
                    "encoding dimension {} does not match sampler dimension {}",
                    enc.dim(),
                    sampler.dim
                )));
            }
            match enc {
                AttentionConfig::Rope(p) => {
                    let rows = distances
                        .iter()
                        .map(|&d| {
                            let stats = monte_carlo_rope_bias(d, sampler, p, n_samples)?;
                            Ok(DecayRow {
                                distance: d,
                                estimate: stats.mean,
                                ci95: stats.ci95_half_width,
                                oracle: gamma_bias(d, sampler.mu0, sampler.nu0, p)?,
                            })
                        })
                        .collect::<Result<_>>()?;
                    Ok(DecayCurve {
                        label: enc.label().to_string(),
                        estimator: DecayEstimator::Crude,
                        rows,
                    })
                }
                AttentionConfig::Tapa(t) => {
                    let mut curve = tapa_decay_curve(
                        t,
                        sampler,
                        distances,
                        n_samples,
                        DecayEstimator::PhaseConditional,
                    )?;
                    curve.label = enc.label().to_string();
                    Ok(curve)
                }
                AttentionConfig::TapaGeneral(_) => Err(Error::Config(
                    "general TAPA has no closed-form decay oracle".into(),
                )),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encodings::{RopeParams, TapaParams};

    fn spec(encoding: AttentionConfig, mu0: f64, n_pairs: usize) -> HistogramSpec {
        let dim = encoding.dim();
        HistogramSpec {
            short_range: (0, 100),
            long_range: (10_000, 10_100),
            n_pairs,
            bins: 40,
            encoding,
            sampler: SamplerSpec::new(dim, mu0, 0.0, 1.0, 2024).unwrap(),
        }
    }

    fn rope() -> AttentionConfig {
        AttentionConfig::Rope(RopeParams::new(128, 2e-6).unwrap())
    }

    fn tapa() -> AttentionConfig {
        AttentionConfig::Tapa(TapaParams::quadratic(128, 0.5, 0.1).unwrap())
    }

    #[test]
    fn histogram_integrity() {
        let (edges, counts) = histogram(&[0.0, 1.0, 1.0, 2.5, -3.0, 4.0], 10);
        assert_eq!(counts.iter().sum::<u64>(), 6);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(edges[0], -3.0);
        assert_eq!(*edges.last().unwrap(), 4.0);
        assert_eq!(counts[9], 1);
        let (edges, counts) = histogram(&[2.0, 2.0], 10);
        assert_eq!(counts.iter().sum::<u64>(), 2);
        assert!(edges.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn zero_mean_statistics() {
        let h = run_bias_histogram(&spec(rope(), 0.0, 5000)).unwrap();
        assert!(h.mean.abs() < 4.0 * h.ci95);
        assert_eq!(h.counts.iter().sum::<u64>(), 5000);
        assert_eq!(h.n, 5000);
    }

    #[test]
    fn rope_matches_oracle_and_dominates_tapa() {
        let rs = spec(rope(), 1.0, 10_000);
        let r = run_bias_histogram(&rs).unwrap();
        let oracle = histogram_oracle(&rs).unwrap();
        assert!(
            (r.mean - oracle).abs() < 4.0 * r.ci95,
            "{} vs {oracle}",
            r.mean
        );

        let ts = spec(tapa(), 1.0, 10_000);
        let t = run_bias_histogram(&ts).unwrap();
        let t_oracle = histogram_oracle(&ts).unwrap();
        assert!((t.mean - t_oracle).abs() < 4.0 * t.ci95);
        assert!(r.mean.abs() > 5.0 * t.mean.abs());
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let s = spec(tapa(), 1.0, 2000);
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let four = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap();
        let a = one.install(|| run_bias_histogram(&s)).unwrap();
        let b = four.install(|| run_bias_histogram(&s)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn spec_validation() {
        let mut s = spec(rope(), 1.0, 2000);
        s.long_range = (50, 200);
        assert!(s.validate().is_err());
        let mut s = spec(rope(), 1.0, 999);
        assert!(s.validate().is_err());
        s.n_pairs = 1000;
        s.bins = 9;
        assert!(s.validate().is_err());
    }

    #[test]
    fn decay_comparison_matches_oracles() {
        let enc = [
            AttentionConfig::Rope(RopeParams::new(16, 1e-3).unwrap()),
            AttentionConfig::Tapa(TapaParams::quadratic(16, 0.5, 0.1).unwrap()),
        ];
        let sampler = SamplerSpec::new(16, 1.0, 0.0, 1.0, 77).unwrap();
        let curves =
            run_decay_comparison(&enc, &[0.0, 1.0, 16.0, 256.0], &sampler, 50_000).unwrap();
        assert_eq!(curves.len(), 2);
        for c in &curves {
            for r in &c.rows {
                assert!(
                    (r.estimate - r.oracle).abs() < 4.0 * r.ci95,
                    "{} {r:?}",
                    c.label
                );
            }
        }
        // distance 0: RoPE μ0·C_D(0) = 1/2; TAPA amplitude mean μ0·(θD/2)/√(θD) = √2
        assert_eq!(curves[0].rows[0].oracle, 0.5);
        assert!((curves[1].rows[0].oracle - 2f64.sqrt()).abs() < 1e-15);
        assert!(run_decay_comparison(&enc, &[], &sampler, 50_000).is_err());
    }
}
