//! High-precision fixed-point evaluation of the closed forms, used as a
//! reference when checking the floating-point estimators.
//!
//! Values are big integers scaled by `2^PRECISION_BITS` (about 96 decimal
//! digits). Only `ln(1 - u)` and `exp(x)` are needed; both use plain Taylor
//! series, with argument halving for `exp`. Nothing here shares code with the
//! floating-point paths.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::Rational;

pub const PRECISION_BITS: usize = 320;

/// Fixed-point real with [`PRECISION_BITS`] fractional bits.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Precise {
    raw: BigInt,
}

impl Precise {
    fn from_raw(raw: BigInt) -> Self {
        Self { raw }
    }

    pub fn zero() -> Self {
        Self::from_raw(BigInt::zero())
    }

    pub fn one() -> Self {
        Self::from_raw(BigInt::one() << PRECISION_BITS)
    }

    pub fn from_integer(v: impl Into<BigInt>) -> Self {
        Self::from_raw(v.into() << PRECISION_BITS)
    }

    pub fn from_ratio(num: impl Into<BigInt>, den: impl Into<BigInt>) -> Self {
        Self::from_raw((num.into() << PRECISION_BITS).div_floor(&den.into()))
    }

    pub fn from_rational(r: &Rational) -> Self {
        Self::from_ratio(r.numer().clone(), r.denom().clone())
    }

    pub fn div(&self, other: &Precise) -> Precise {
        Self::from_raw((&self.raw << PRECISION_BITS).div_floor(&other.raw))
    }

    fn halve(&self, times: u32) -> Precise {
        Self::from_raw(&self.raw >> times as usize)
    }

    pub fn abs(&self) -> Precise {
        Self::from_raw(self.raw.abs())
    }

    pub fn is_zero(&self) -> bool {
        self.raw.is_zero()
    }

    pub fn to_rational(&self) -> Rational {
        Rational::new(self.raw.clone(), BigInt::one() << PRECISION_BITS)
    }

    pub fn to_f64(&self) -> f64 {
        self.to_rational().to_f64().unwrap_or(f64::NAN)
    }

    /// Decimal rendering truncated to `digits` fractional digits.
    pub fn to_decimal(&self, digits: usize) -> String {
        let scaled = (self.raw.abs() * num_traits::pow(BigInt::from(10), digits)) >> PRECISION_BITS;
        let s = format!("{:0>width$}", scaled.to_string(), width = digits + 1);
        let (int, frac) = s.split_at(s.len() - digits);
        let sign = if self.raw.is_negative() { "-" } else { "" };
        format!("{sign}{int}.{frac}")
    }

    /// `ln(1 - u)` for `0 <= u <= 1/2`.
    pub fn ln_one_minus(u: &Precise) -> Precise {
        assert!(u.raw >= BigInt::zero() && *u <= Precise::from_ratio(1, 2), "argument outside [0, 1/2]");
        let mut sum = Precise::zero();
        let mut power = u.clone();
        let mut k = 1u64;
        loop {
            let term = Precise::from_raw(&power.raw / k);
            if term.is_zero() {
                break;
            }
            sum = sum - term;
            power = &power * u;
            k += 1;
        }
        sum
    }

    /// `exp(x)`: halve until `|x| < 1/2`, sum the Taylor series, square back.
    pub fn exp(x: &Precise) -> Precise {
        let half = Precise::from_ratio(1, 2);
        let mut halvings = 0u32;
        let mut reduced = x.clone();
        while reduced.abs() >= half {
            reduced = reduced.halve(1);
            halvings += 1;
        }
        let mut sum = Precise::one();
        let mut term = Precise::one();
        let mut k = 1u64;
        loop {
            term = Precise::from_raw((&term * &reduced).raw / k);
            if term.is_zero() {
                break;
            }
            sum = sum + term.clone();
            k += 1;
        }
        for _ in 0..halvings {
            sum = &sum * &sum;
        }
        sum
    }
}

impl Add for Precise {
    type Output = Precise;
    fn add(self, rhs: Precise) -> Precise {
        Precise::from_raw(self.raw + rhs.raw)
    }
}

impl Sub for Precise {
    type Output = Precise;
    fn sub(self, rhs: Precise) -> Precise {
        Precise::from_raw(self.raw - rhs.raw)
    }
}

impl Neg for Precise {
    type Output = Precise;
    fn neg(self) -> Precise {
        Precise::from_raw(-self.raw)
    }
}

impl Mul for &Precise {
    type Output = Precise;
    fn mul(self, rhs: &Precise) -> Precise {
        Precise::from_raw((&self.raw * &rhs.raw) >> PRECISION_BITS)
    }
}

impl PartialEq<f64> for Precise {
    fn eq(&self, other: &f64) -> bool {
        self.partial_cmp(other) == Some(Ordering::Equal)
    }
}

impl PartialOrd<f64> for Precise {
    fn partial_cmp(&self, other: &f64) -> Option<Ordering> {
        Rational::from_float(*other).map(|o| self.to_rational().cmp(&o))
    }
}

impl fmt::Display for Precise {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal(60))
    }
}

/// `1 - (m/n) (1 - (1 - 1/m)^n)` to roughly 90 significant digits.
pub fn collision_rate(n: u64, m: u128) -> Precise {
    assert!(n >= 1 && m >= 1, "collision rate needs n, m >= 1");
    if n == 1 {
        return Precise::zero();
    }
    if m == 1 {
        return Precise::from_ratio(n - 1, n);
    }
    let log_keep = Precise::ln_one_minus(&Precise::from_ratio(1, m));
    let empty_prob = Precise::exp(&(&Precise::from_integer(n) * &log_keep));
    let occupied_share = (Precise::one() - empty_prob).div(&Precise::from_ratio(n, m));
    Precise::one() - occupied_share
}

/// `1 - (1 - exp(-alpha)) / alpha` for a rational load factor.
pub fn exponential_rate(alpha: &Rational) -> Precise {
    let a = Precise::from_rational(alpha);
    let decay = Precise::exp(&-a.clone());
    Precise::one() - (Precise::one() - decay).div(&a)
}
