//! Toolkit for vision-transformer architecture search with fair channel
//! weight sharing.
//!
//! The crate is organised around the two stages of one-shot search:
//!
//! * [`mapping`] builds and scores channel-group sharing patterns
//!   (ordinal, bilateral, cyclic) and [`simshare`] simulates how a
//!   weight-sharing supernet would train under each of them.
//! * [`space`] models the Twins- and DeiT-style search spaces, [`cost`]
//!   estimates MACs and parameters, [`search`] runs NSGA-II under a FLOPs
//!   budget and [`rank`] measures how well a score ranks architectures.
//!
//! Numeric kernels that benefit from exact arithmetic are generic over
//! [`Scalar`]; the aliases below fix the common instantiations.

pub mod cost;
pub mod error;
pub mod mapping;
pub mod rank;
pub mod scalar;
pub mod search;
pub mod simshare;
pub mod space;

pub use error::{Error, Result};
pub use scalar::{RealScalar, Scalar};

use num_rational::BigRational;

/// Mapping metrics in double precision.
pub type Metrics = mapping::MappingMetrics<f64>;
/// Mapping metrics in exact rational arithmetic.
pub type ExactMetrics = mapping::MappingMetrics<BigRational>;
/// Influence matrix in double precision.
pub type Influence = mapping::InfluenceMatrix<f64>;
/// Influence matrix in exact rational arithmetic.
pub type ExactInfluence = mapping::InfluenceMatrix<BigRational>;
/// Rank statistics in double precision.
pub type Stats = rank::RankStats<f64>;
/// Single-precision rank statistics.
pub type Stats32 = rank::RankStats<f32>;
/// Tiny fully-connected layer in double precision.
pub type Fc = simshare::TinyFc<f64>;
