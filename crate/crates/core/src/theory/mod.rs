//! Deterministic sums and bounds behind the RoPE distance-bias analysis, and
//! numerical checks of the TAPA decay and variance statements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub mod extprec;
pub mod gaps;
pub mod sums;
pub mod tapa;

pub use gaps::{
    theorem1_subconvergence_search, theorem2_gap_check, theorem3_shrink_check, Admissibility,
    GapParams, ShrinkOutcome, ShrinkStep,
};
pub use sums::{
    cd_sum, eps_bound, gamma_bias, lemma1_check, lemma2_check, monte_carlo_rope_bias, sd_sum,
    RopeSpectrum, SumParams,
};
pub use tapa::{
    tapa_expected_bias_oracle, tapa_expected_score, theorem4_decay_check, theorem5_variance_check,
    DecayCurve, DecayEstimator, DecayOutcome, DecayRow,
};

/// One verified inequality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryCheckReport {
    pub name: String,
    pub params: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
    /// Distance from the boundary, positive when the inequality holds.
    pub margin: f64,
    pub pass: bool,
}

pub type Params = BTreeMap<String, f64>;

pub fn params<const N: usize>(entries: [(&str, f64); N]) -> Params {
    entries
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

impl TheoryCheckReport {
    /// `lhs <= rhs`.
    pub fn at_most(name: &str, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::build(name, params, lhs, rhs, rhs - lhs, lhs <= rhs)
    }

    /// `lhs < rhs`.
    pub fn below(name: &str, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::build(name, params, lhs, rhs, rhs - lhs, lhs < rhs)
    }

    /// `lhs >= rhs`.
    pub fn at_least(name: &str, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::build(name, params, lhs, rhs, lhs - rhs, lhs >= rhs)
    }

    /// `lhs > rhs`.
    pub fn above(name: &str, params: Params, lhs: f64, rhs: f64) -> Self {
        Self::build(name, params, lhs, rhs, lhs - rhs, lhs > rhs)
    }

    fn build(name: &str, params: Params, lhs: f64, rhs: f64, margin: f64, pass: bool) -> Self {
        TheoryCheckReport {
            name: name.to_string(),
            params,
            lhs,
            rhs,
            margin,
            pass: pass && lhs.is_finite() && rhs.is_finite(),
        }
    }
}
