//! Collision-rate estimators for `n` uniformly distributed identifiers spread
//! over `m` buckets.
//!
//! The exact expectation is available in a cancellation-free floating-point
//! form and in exact rational arithmetic. Three approximations (exponential,
//! truncated alternating series, linear) come with certified error bounds, and
//! two independent oracles (exhaustive enumeration and Monte Carlo) plus a
//! high-precision fixed-point evaluator back the verification suites.
//!
//! Floating-point routines are generic over [`Scalar`] (`f32`/`f64`); the
//! polynomial pieces are generic over [`Field`], which also admits
//! [`Rational`] for exact evaluation.

pub mod approx;
pub mod config;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod monte_carlo;
pub mod reference;
pub mod scalar;
pub mod sizing;

pub use approx::{
    approx_exponential, approx_linear, approx_series, delta_lower_bound, remainder_bound,
    relative_remainder_r1, series_partial_sum, DEFAULT_SERIES_ORDER,
};
pub use config::BucketConfig;
pub use error::{CollisionError, Result};
pub use estimate::{Method, RateEstimate};
pub use exact::{
    brute_force_expected_collisions, collision_rate, exact_collision_rate,
    exact_collision_rate_rational, ExactRational, ENUMERATION_LIMIT,
};
pub use monte_carlo::{
    monte_carlo_rate, monte_carlo_rate_with, MonteCarloEstimate, OccupancyCounter,
    DEFAULT_DRAW_BUDGET,
};
pub use scalar::{Field, Scalar};
pub use sizing::min_buckets;

/// Arbitrary-precision rational used for exact evaluation.
pub type Rational = num_rational::BigRational;

/// Double-precision estimate.
pub type RateEstimate64 = RateEstimate<f64>;
/// Single-precision estimate.
pub type RateEstimate32 = RateEstimate<f32>;
