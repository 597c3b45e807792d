//! Hybrid-Bayesian design of single-arm trials with one interim analysis.

pub mod design;
pub mod error;
pub mod mc;
pub mod optimal;
pub mod planners;
pub mod power;
pub mod recalc;
mod spline;
pub mod stats;

pub use error::{Error, Result};
pub use power::InterimObservation;
pub use stats::TruncatedNormalPrior;
