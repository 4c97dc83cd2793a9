//! Exact collision rate `E[Y]/n = 1 - (m/n)(1 - ((m-1)/m)^n)` and its
//! verification oracles.

use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::approx::{approx_series, DEFAULT_SERIES_ORDER};
use crate::config::BucketConfig;
use crate::error::{CollisionError, Result};
use crate::estimate::{Method, RateEstimate};
use crate::scalar::Scalar;
use crate::Rational;

/// Upper bound on `m^n` for exhaustive enumeration.
pub const ENUMERATION_LIMIT: u128 = 100_000_000;

/// Largest `n * log2(m)` (in bits) accepted by exact rational evaluation.
const RATIONAL_BIT_LIMIT: u128 = 1 << 23;

/// Below this load factor the series estimate is the default public estimate.
const SERIES_REGIME_ALPHA_RECIPROCAL: u128 = 1000;

/// A collision rate held as an exact, reduced fraction in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExactRational(Rational);

impl ExactRational {
    fn new(r: Rational) -> Self {
        debug_assert!(r >= Rational::zero() && r < Rational::one());
        Self(r)
    }

    pub fn numerator(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denominator(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn as_rational(&self) -> &Rational {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl fmt::Display for ExactRational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

/// `exp(-x) - 1 + x` for `x >= 0` without cancellation near zero.
pub(crate) fn exp_neg_excess<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5).unwrap();
    if x >= half {
        return x.neg().exp_m1() + x;
    }
    // sum_{k>=2} (-x)^k / k!
    let mut term = x * x * half;
    let mut sum = T::zero();
    let mut k = 2u32;
    while term.abs() > T::epsilon() * sum.abs() * half && k < 64 {
        sum = sum + term;
        k += 1;
        term = -term * x / T::from_u32(k).unwrap();
    }
    sum
}

/// `u + ln(1 - u)` for `u` in `(0, 1)`; always `<= 0`.
pub(crate) fn log1m_excess<T: Scalar>(u: T) -> T {
    let quarter = T::from_f64(0.25).unwrap();
    if u >= quarter {
        return u + (-u).ln_1p();
    }
    // -sum_{k>=2} u^k / k
    let mut power = u * u;
    let mut sum = T::zero();
    let mut k = 2u32;
    loop {
        let term = power / T::from_u32(k).unwrap();
        if term <= T::epsilon() * sum.abs() * T::from_f64(0.5).unwrap() || k >= 256 {
            break;
        }
        sum = sum - term;
        power = power * u;
        k += 1;
    }
    sum
}

/// Exact collision rate in floating point.
///
/// With `u = 1/m`, `beta = -n ln(1 - u)` and `alpha = n/m`, the rate equals
/// `(n (u + ln(1 - u)) + exp(-beta) - 1 + beta) / alpha`; both pieces are
/// evaluated through `ln_1p`/`exp_m1` or their series, so no step subtracts
/// nearly equal quantities even when `m` is close to `2^64`.
pub fn exact_collision_rate<T: Scalar>(cfg: &BucketConfig) -> RateEstimate<T> {
    let n = cfg.inserts();
    let m = cfg.buckets();
    let value = if n == 1 {
        T::zero()
    } else if m == 1 {
        T::one() - T::one() / T::from_count(n as u128)
    } else {
        let n_t = T::from_count(n as u128);
        let m_t = T::from_count(m);
        let alpha = n_t / m_t;
        let u = T::one() / m_t;
        let psi = log1m_excess(u);
        let beta = alpha - n_t * psi;
        let raw = (n_t * psi + exp_neg_excess(beta)) / alpha;
        raw.max(T::zero())
    };
    RateEstimate {
        value,
        delta_lo: T::zero(),
        remainder_abs: T::zero(),
        method: Method::Exact,
    }
}

/// Default public estimate: the order-8 series when `alpha < 1e-3` (where its
/// error certificate is far below rounding), the exact form otherwise.
pub fn collision_rate<T: Scalar>(cfg: &BucketConfig) -> RateEstimate<T> {
    let n = cfg.inserts() as u128;
    if n >= 2 && n.saturating_mul(SERIES_REGIME_ALPHA_RECIPROCAL) < cfg.buckets() {
        if let Ok(est) = approx_series(cfg, DEFAULT_SERIES_ORDER) {
            return est;
        }
    }
    exact_collision_rate(cfg)
}

/// The closed form evaluated in exact rational arithmetic.
pub fn exact_collision_rate_rational(cfg: &BucketConfig) -> Result<ExactRational> {
    let n = cfg.inserts();
    let m = cfg.buckets();
    let bits = 128 - m.leading_zeros() as u128;
    if (n as u128).saturating_mul(bits) > RATIONAL_BIT_LIMIT {
        return Err(CollisionError::RationalTooLarge { n, m });
    }
    let exp = u32::try_from(n).map_err(|_| CollisionError::RationalTooLarge { n, m })?;
    let m_big = BigInt::from(m);
    let n_big = BigInt::from(n);
    let empty_prob = Rational::new(
        num_traits::pow::pow(&m_big - BigInt::one(), exp as usize),
        num_traits::pow::pow(m_big.clone(), exp as usize),
    );
    let occupied_share = Rational::new(m_big, n_big) * (Rational::one() - empty_prob);
    Ok(ExactRational::new(Rational::one() - occupied_share))
}

/// Expected collisions divided by `n`, by enumerating all `m^n` equally likely
/// assignments of inserts to buckets.
pub fn brute_force_expected_collisions(cfg: &BucketConfig) -> Result<ExactRational> {
    let n = cfg.inserts();
    let m = cfg.buckets();
    let too_large = CollisionError::EnumerationTooLarge { n, m, limit: ENUMERATION_LIMIT };
    let exp = u32::try_from(n).map_err(|_| too_large.clone())?;
    let total = m.checked_pow(exp).filter(|t| *t <= ENUMERATION_LIMIT).ok_or(too_large)?;

    let n = n as usize;
    let mut assignment = vec![0u128; n];
    let mut scratch = Vec::with_capacity(n);
    let mut collisions: u128 = 0;
    for _ in 0..total {
        scratch.clear();
        scratch.extend_from_slice(&assignment);
        scratch.sort_unstable();
        scratch.dedup();
        collisions += (n - scratch.len()) as u128;

        for digit in assignment.iter_mut() {
            *digit += 1;
            if *digit < m {
                break;
            }
            *digit = 0;
        }
    }
    Ok(ExactRational::new(Rational::new(
        BigInt::from(collisions),
        BigInt::from(total) * BigInt::from(n),
    )))
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;

    fn cfg(n: u64, m: u128) -> BucketConfig {
        BucketConfig::new(n, m).unwrap()
    }

    fn ratio(a: i64, b: i64) -> Rational {
        Rational::new(a.into(), b.into())
    }

    #[test]
    fn single_insert_never_collides() {
        let est = exact_collision_rate::<f64>(&cfg(1, 1 << 64));
        assert_eq!(est.value, 0.0);
        assert_eq!(est.method, Method::Exact);
        assert_eq!(est.delta_lo, 0.0);
        assert_eq!(est.remainder_abs, 0.0);
    }

    #[test]
    fn two_into_two() {
        assert!((exact_collision_rate::<f64>(&cfg(2, 2)).value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn thousand_into_1024_matches_high_precision() {
        // 60-digit evaluation of the closed form.
        let expected = 0.361457969210085412324188965662476719;
        let got = exact_collision_rate::<f64>(&cfg(1000, 1024)).value;
        assert!((got - expected).abs() < 1e-14, "{got}");
    }

    #[test]
    fn operating_point_is_stable() {
        // 60-digit evaluation: 2.71050516016272817e-13.
        let got = exact_collision_rate::<f64>(&cfg(10_000_000, 1 << 64)).value;
        assert!((got / 2.710_505_160_162_728e-13 - 1.0).abs() < 1e-12, "{got}");
        assert!((got.log10() + 12.5).abs() <= 0.1);
        let got32 = exact_collision_rate::<f32>(&cfg(10_000_000, 1 << 64)).value;
        assert!((got32 / 2.710_505e-13 - 1.0).abs() < 1e-5, "{got32}");
    }

    #[test]
    fn single_bucket() {
        assert_eq!(exact_collision_rate::<f64>(&cfg(4, 1)).value, 0.75);
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_expected_collisions(&cfg(2, 2)).unwrap().as_rational(), &ratio(1, 4));
        assert_eq!(brute_force_expected_collisions(&cfg(3, 2)).unwrap().as_rational(), &ratio(5, 12));
        let single = brute_force_expected_collisions(&cfg(1, 5)).unwrap();
        assert!(single.numerator().is_zero());
        assert_eq!(single.to_string(), "0/1");
    }

    #[test]
    fn brute_force_guard() {
        assert!(matches!(
            brute_force_expected_collisions(&cfg(9, 10)),
            Err(CollisionError::EnumerationTooLarge { .. })
        ));
        assert!(matches!(
            brute_force_expected_collisions(&cfg(1, ENUMERATION_LIMIT + 1)),
            Err(CollisionError::EnumerationTooLarge { .. })
        ));
        assert!(brute_force_expected_collisions(&cfg(5, 10)).is_ok());
    }

    #[test]
    fn rational_closed_form() {
        assert_eq!(exact_collision_rate_rational(&cfg(3, 2)).unwrap().as_rational(), &ratio(5, 12));
        assert_eq!(exact_collision_rate_rational(&cfg(2, 2)).unwrap().as_rational(), &ratio(1, 4));
        let big = exact_collision_rate_rational(&cfg(1000, 1024)).unwrap();
        assert!((big.to_f64() - 0.361457969210085412).abs() < 1e-16);
        assert!(exact_collision_rate_rational(&cfg(10_000_000, 1 << 64)).is_err());
    }

    #[test]
    fn default_estimate_switches_to_series_for_tiny_load() {
        assert_eq!(collision_rate::<f64>(&cfg(10, 1_000_000)).method, Method::Series(8));
        assert_eq!(collision_rate::<f64>(&cfg(10, 100)).method, Method::Exact);
        assert_eq!(collision_rate::<f64>(&cfg(1, 1_000_000)).method, Method::Exact);
    }

    #[test]
    fn helpers_match_direct_forms_away_from_zero() {
        for &x in &[0.49f64, 0.3, 0.1, 0.01] {
            let direct = (-x).exp_m1() + x;
            assert!((exp_neg_excess(x) / direct - 1.0).abs() < 1e-12);
        }
        for &u in &[0.24f64, 0.1, 0.01] {
            let direct = u + (-u).ln_1p();
            assert!((log1m_excess(u) / direct - 1.0).abs() < 1e-12);
        }
    }
}
