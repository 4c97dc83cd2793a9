use crate::approx::{approx_series, DEFAULT_SERIES_ORDER};
use crate::config::BucketConfig;
use crate::error::{CollisionError, Result};
use crate::scalar::Scalar;

const MAX_LOG2_BUCKETS: u32 = 127;

/// Smallest power-of-two bucket count whose certified collision rate
/// (order-8 series value plus remainder and `|delta|` bounds) is at most
/// `target`.
///
/// Walks down from `2^127`; the certified rate is monotone in `m`, so the walk
/// stops at the first power of two that no longer meets the target.
pub fn min_buckets<T: Scalar>(n: u64, target: T) -> Result<u128> {
    let target_f64 = target.to_f64().unwrap_or(f64::NAN);
    if !(target > T::zero() && target < T::one()) {
        return Err(CollisionError::TargetOutOfRange(target_f64));
    }
    if n == 0 {
        return Err(CollisionError::ZeroInserts);
    }
    if n == 1 {
        return Ok(1);
    }
    let meets = |log2: u32| -> bool {
        let m = 1u128 << log2;
        BucketConfig::new(n, m)
            .and_then(|cfg| approx_series::<T>(&cfg, DEFAULT_SERIES_ORDER))
            .map(|est| est.certified_upper() <= target)
            .unwrap_or(false)
    };
    let mut log2 = MAX_LOG2_BUCKETS;
    if !meets(log2) {
        return Err(CollisionError::Unsatisfiable { n, target: target_f64, max_log2: log2 });
    }
    while log2 > 0 && meets(log2 - 1) {
        log2 -= 1;
    }
    Ok(1u128 << log2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_million_at_one_in_a_billion() {
        assert_eq!(min_buckets(10_000_000, 1e-9f64).unwrap(), 1u128 << 53);
        let certified = |m: u128| {
            approx_series::<f64>(&BucketConfig::new(10_000_000, m).unwrap(), 8)
                .unwrap()
                .certified_upper()
        };
        assert!(certified(1 << 52) > 1e-9);
        assert!(certified(1 << 53) <= 1e-9);
        assert!(certified(1 << 64) <= 1e-9);
    }

    #[test]
    fn single_insert() {
        assert_eq!(min_buckets(1, 1e-9f64).unwrap(), 1);
        assert_eq!(min_buckets(1, 0.5f32).unwrap(), 1);
    }

    #[test]
    fn tighter_target() {
        let m = min_buckets(10_000_000, 1e-12f64).unwrap();
        assert!(m.is_power_of_two());
        let est = approx_series::<f64>(&BucketConfig::new(10_000_000, m).unwrap(), 8).unwrap();
        assert!(est.certified_upper() <= 1e-12);
        let half = approx_series::<f64>(&BucketConfig::new(10_000_000, m / 2).unwrap(), 8).unwrap();
        assert!(half.certified_upper() > 1e-12);
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(matches!(min_buckets(10, 0.0f64), Err(CollisionError::TargetOutOfRange(_))));
        assert!(matches!(min_buckets(10, 1.0f64), Err(CollisionError::TargetOutOfRange(_))));
        assert!(matches!(min_buckets(2, 1e-40f64), Err(CollisionError::Unsatisfiable { .. })));
    }

    #[test]
    fn never_returns_overloaded_table() {
        // a loose target would be met below m = n, but alpha must stay <= 1
        let m = min_buckets(1000, 0.9f64).unwrap();
        assert!(m >= 1000 && m.is_power_of_two());
    }
}
