use std::fmt;

use crate::scalar::Scalar;

/// Which formula produced a [`RateEstimate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Exact,
    Exponential,
    /// Truncated alternating series of order `K` (terms `k = 1..K-1`).
    Series(u32),
    Linear,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Exact => write!(f, "exact"),
            Method::Exponential => write!(f, "exponential"),
            Method::Series(k) => write!(f, "series(K={k})"),
            Method::Linear => write!(f, "linear"),
        }
    }
}

/// A collision-rate value with its certified error terms.
///
/// `delta_lo <= 0` bounds the one-sided error of replacing `(1 - a/n)^n` by
/// `exp(-a)`; `remainder_abs` bounds the truncation error of the series. The
/// true rate lies in `[lower(), upper()]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RateEstimate<T> {
    pub value: T,
    pub delta_lo: T,
    pub remainder_abs: T,
    pub method: Method,
}

impl<T: Scalar> RateEstimate<T> {
    pub fn lower(&self) -> T {
        self.value + self.delta_lo - self.remainder_abs
    }

    pub fn upper(&self) -> T {
        self.value + self.remainder_abs
    }

    /// Conservative two-sided bound `value + remainder + |delta|`.
    pub fn certified_upper(&self) -> T {
        self.value + self.remainder_abs + self.delta_lo.abs()
    }
}

impl<T: Scalar> fmt::Display for RateEstimate<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:e} [{}] interval [{:e}, {:e}] (delta >= {:e}, |R| <= {:e})",
            self.value,
            self.method,
            self.lower(),
            self.upper(),
            self.delta_lo,
            self.remainder_abs
        )
    }
}
