//! Energy-delay power control for interference-limited wireless networks.
//!
//! Links choose transmit powers to trade energy per delivered bit against
//! queueing delay. The crate provides the SINR and cost model, feasibility
//! tests for per-link reliability targets, distributed best-response dynamics,
//! centralized block-improvement benchmarks, and scenario generation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod central;
pub mod error;
pub mod feasibility;
pub mod game;
pub mod model;
pub mod numerics;
pub mod scenario;

pub use error::{Error, InfeasibleCause, Result};
pub use model::{GameSpec, LinkCoefficients, LinkSpec, PowerVector, SuccessCurve, SuccessModel};
