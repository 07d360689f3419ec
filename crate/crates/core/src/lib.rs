//! Difficulty-aware rejection sampling for math instruction data.
//!
//! The pipeline profiles each query's fail rate, turns fail rates into
//! per-query targets, samples until targets are met or a per-query cap is
//! hit, and assembles the accepted responses into a training set.

pub mod allocator;
pub mod backend;
pub mod config;
pub mod cost;
pub mod dataset;
pub mod grader;
pub mod profiler;
pub mod rng;
pub mod scheduler;

pub use num_rational::BigRational;

/// Exact scalar used where results must match enumeration bit for bit.
pub type Exact = BigRational;
pub type CostCurveRow64 = cost::CostCurveRow<f64>;
pub type CostCurveRowExact = cost::CostCurveRow<Exact>;

/// An argument outside the domain of a numeric routine.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("domain error: {0}")]
pub struct DomainError(pub String);
