//! Statistical fault localization over instrumented predicates.
//!
//! The pipeline relabels coincidentally correct passing runs, estimates the
//! fault-proneness of every function from static code metrics, and fits an
//! elastic net with one penalty factor per predicate. Predicates are ranked
//! by the magnitude of their coefficients and scored against known faults
//! with the T-score (dependence-graph distance) and P-score (rank position).
//!
//! Numeric code is generic over [`Scalar`] (`f32`/`f64`); the `*64` aliases
//! below are what the CLI uses.

pub mod cleaning;
pub mod enet;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod synth;

mod linalg;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type FaultPronenessModel64 = metrics::FaultPronenessModel<f64>;
pub type FitResult64 = enet::FitResult<f64>;
pub type Standardized64 = enet::Standardized<f64>;
pub type PenaltyFactors64 = metrics::PenaltyFactors<f64>;
