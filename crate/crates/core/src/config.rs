use std::fmt;

use num_bigint::BigInt;

use crate::error::{CollisionError, Result};
use crate::scalar::Scalar;
use crate::Rational;

/// `n` inserts into `m` buckets. The load factor `n / m` is always derived.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BucketConfig {
    n: u64,
    m: u128,
}

impl BucketConfig {
    pub fn new(n: u64, m: u128) -> Result<Self> {
        if n == 0 {
            return Err(CollisionError::ZeroInserts);
        }
        if m == 0 {
            return Err(CollisionError::ZeroBuckets);
        }
        Ok(Self { n, m })
    }

    pub fn inserts(&self) -> u64 {
        self.n
    }

    pub fn buckets(&self) -> u128 {
        self.m
    }

    /// Load factor `n / m` in the requested scalar type.
    pub fn alpha<T: Scalar>(&self) -> T {
        T::from_count(self.n as u128) / T::from_count(self.m)
    }

    /// Load factor as an exact reduced fraction.
    pub fn alpha_exact(&self) -> Rational {
        Rational::new(BigInt::from(self.n), BigInt::from(self.m))
    }

    /// Checks the hypotheses of the approximation theorems: `n >= 2`, `n <= m`.
    pub(crate) fn check_approximable(&self) -> Result<()> {
        if self.n < 2 {
            return Err(CollisionError::TooFewInserts(self.n));
        }
        if (self.n as u128) > self.m {
            return Err(CollisionError::LoadFactorAboveOne { n: self.n, m: self.m });
        }
        Ok(())
    }
}

impl fmt::Display for BucketConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n={}, m={}", self.n, self.m)
    }
}
