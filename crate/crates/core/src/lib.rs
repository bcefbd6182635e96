//! RoPE and token-aware phase attention (TAPA) scoring, with numerical checks of
//! the distance-bias, decay and variance statements about them.

pub mod attention;
pub mod encodings;
pub mod error;
pub mod experiments;
pub mod numeric;
pub mod theory;

pub use encodings::{AttentionConfig, GeneralTapa, PhaseKind, PositionMap, RopeParams, TapaParams};
pub use error::{Error, Result};
pub use numeric::{SamplerSpec, SummaryStats, Vec64};
pub use theory::TheoryCheckReport;
