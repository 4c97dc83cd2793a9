//! Approximations of the collision rate valid for `n >= 2` and `alpha <= 1`,
//! together with their certified error bounds.

use crate::config::BucketConfig;
use crate::error::{CollisionError, Result};
use crate::estimate::{Method, RateEstimate};
use crate::exact::exp_neg_excess;
use crate::scalar::{Field, Scalar};

/// Series order used when none is requested. `alpha^8 / 9!` is below `f64`
/// rounding for every `alpha <= 1`.
pub const DEFAULT_SERIES_ORDER: u32 = 8;

fn check_alpha<T: Field>(alpha: &T) -> Result<()> {
    if *alpha > T::zero() && *alpha <= T::one() {
        Ok(())
    } else {
        Err(CollisionError::AlphaOutOfRange(format!("{alpha:?}")))
    }
}

fn check_order(order: u32) -> Result<()> {
    if order < 2 {
        Err(CollisionError::SeriesOrder(order))
    } else {
        Ok(())
    }
}

/// Partial sum `sum_{k=1}^{order-1} (-1)^{k+1} alpha^k / (k+1)!`.
///
/// Terms come from the recurrence `t_{k+1} = -t_k * alpha / (k + 2)` starting at
/// `t_1 = alpha / 2`, so no factorial is ever formed. Terms are added smallest
/// first. No domain check: callers that need one go through [`approx_series`].
pub fn series_partial_sum<T: Field>(alpha: &T, order: u32) -> T {
    let mut terms = Vec::with_capacity(order.saturating_sub(1) as usize);
    let mut term = alpha.clone() / T::from_u32(2).unwrap();
    for k in 1..order {
        terms.push(term.clone());
        term = T::zero() - term * alpha.clone() / T::from_u32(k + 2).unwrap();
    }
    terms.into_iter().rev().fold(T::zero(), |acc, t| acc + t)
}

/// Bound `alpha^K / (K+1)!` on the series truncation error.
pub fn remainder_bound<T: Field>(alpha: T, order: u32) -> Result<T> {
    check_alpha(&alpha)?;
    check_order(order)?;
    let mut bound = T::one();
    for j in 1..=order {
        bound = bound * alpha.clone() / T::from_u32(j + 1).unwrap();
    }
    Ok(bound)
}

/// Relative error bound `alpha / 3` of the linear estimate `alpha / 2`.
pub fn relative_remainder_r1<T: Field>(alpha: T) -> Result<T> {
    check_alpha(&alpha)?;
    Ok(alpha / T::from_u32(3).unwrap())
}

/// Lower bound on the (non-positive) error of replacing `(1 - alpha/n)^n` by
/// `exp(-alpha)`: `-sqrt(alpha^2 / (n^2 - alpha^2) * (pi^2/6 - 1))`.
pub fn delta_lower_bound<T: Scalar>(cfg: &BucketConfig) -> Result<T> {
    cfg.check_approximable()?;
    let alpha: T = cfg.alpha();
    let n = T::from_count(cfg.inserts() as u128);
    let zeta_excess = T::PI() * T::PI() / T::from_u32(6).unwrap() - T::one();
    // alpha / sqrt((n - alpha)(n + alpha)) keeps alpha^2 out of the way of underflow.
    let spread = ((n - alpha) * (n + alpha)).sqrt();
    Ok(-(alpha / spread) * zeta_excess.sqrt())
}

/// `1 - (1 - exp(-alpha)) / alpha`, evaluated as `(exp(-alpha) - 1 + alpha) / alpha`
/// with the numerator computed free of cancellation.
pub fn approx_exponential<T: Scalar>(cfg: &BucketConfig) -> Result<RateEstimate<T>> {
    let delta_lo = delta_lower_bound(cfg)?;
    let alpha: T = cfg.alpha();
    Ok(RateEstimate {
        value: exp_neg_excess(alpha) / alpha,
        delta_lo,
        remainder_abs: T::zero(),
        method: Method::Exponential,
    })
}

/// Truncated alternating series of order `order >= 2`.
pub fn approx_series<T: Scalar>(cfg: &BucketConfig, order: u32) -> Result<RateEstimate<T>> {
    check_order(order)?;
    let delta_lo = delta_lower_bound(cfg)?;
    let alpha: T = cfg.alpha();
    Ok(RateEstimate {
        value: series_partial_sum(&alpha, order),
        delta_lo,
        remainder_abs: remainder_bound(alpha, order)?,
        method: Method::Series(order),
    })
}

/// Linear estimate `alpha / 2`.
pub fn approx_linear<T: Scalar>(cfg: &BucketConfig) -> Result<RateEstimate<T>> {
    let delta_lo = delta_lower_bound(cfg)?;
    let alpha: T = cfg.alpha();
    Ok(RateEstimate {
        value: alpha / T::from_u32(2).unwrap(),
        delta_lo,
        remainder_abs: remainder_bound(alpha, 2)?,
        method: Method::Linear,
    })
}
