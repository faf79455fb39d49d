//! Directed polymers in random environments driven by random walks with
//! slowly varying (tail-exponent-zero) increments.
//!
//! The crate computes exact partition functions on finite windows and provides
//! the numerical machinery behind the strong/weak disorder criteria: entropy
//! brackets, size-biased environments, rectangle coarse-graining and
//! extreme-order statistics.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coarse_grain;
pub mod environment;
pub mod error;
pub mod lattice_field;
pub mod logmag;
pub mod order_stats;
pub mod partition;
pub mod rng;
pub mod size_bias;
pub mod special;
pub mod stats;
pub mod walk_laws;

pub use environment::EnvironmentLaw;
pub use error::{Error, Result};
pub use lattice_field::LatticeField;
pub use logmag::LogMagnitude;
pub use walk_laws::{Draw, Entropy, Family, IncrementLaw, LawSpec};

/// Version string stamped into every output row.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
