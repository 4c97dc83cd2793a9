//! Self-check suites for the collision-rate estimators. Every suite compares
//! against an independent oracle: exhaustive enumeration, the high-precision
//! reference, or seeded Monte Carlo.

use std::fmt;
use std::str::FromStr;

use anyhow::{bail, Result};
use num_traits::ToPrimitive;
use probeanon_core::reference::{self, Precise};
use probeanon_core::{
    approx_exponential, approx_linear, approx_series, brute_force_expected_collisions, delta_lower_bound,
    exact_collision_rate, exact_collision_rate_rational, monte_carlo_rate, remainder_bound, series_partial_sum,
    BucketConfig, Rational,
};
use serde::Serialize;

/// Deliberate defects used to prove that the suites can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    /// Flips the sign of the last kept series term.
    SeriesSign,
    /// Evaluates the closed form with one extra bucket.
    ClosedFormBuckets,
}

impl FromStr for Fault {
    type Err = anyhow::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "series-sign" => Ok(Fault::SeriesSign),
            "closed-form-buckets" => Ok(Fault::ClosedFormBuckets),
            _ => bail!("unknown fault {s:?}; expected series-sign or closed-form-buckets"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteResult {
    pub name: String,
    pub cases: usize,
    pub failures: Vec<String>,
}

impl SuiteResult {
    fn new(name: &str) -> Self {
        Self { name: name.to_string(), cases: 0, failures: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok {
            self.failures.push(what());
        }
    }

    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

impl fmt::Display for SuiteResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {:<12} {} cases, {} failures", self.name, self.cases, self.failures.len())?;
        for msg in self.failures.iter().take(5) {
            write!(f, "\n     {msg}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub suites: Vec<SuiteResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOptions {
    pub seed: u64,
    pub monte_carlo_trials: u64,
    pub fault: Option<Fault>,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self { seed: 20_240_601, monte_carlo_trials: 1000, fault: None }
    }
}

/// `(n, m)` pairs with load factors 1e-6, 1e-4, 1e-2, 0.1, 0.5 and 1 for
/// n in {2, 10, 1e3, 1e7}.
pub fn alpha_grid() -> Vec<(u64, u128)> {
    let inverse_alphas: [u128; 6] = [1_000_000, 10_000, 100, 10, 2, 1];
    [2u64, 10, 1000, 10_000_000]
        .iter()
        .flat_map(|&n| inverse_alphas.iter().map(move |&inv| (n, n as u128 * inv)))
        .collect()
}

fn cfg(n: u64, m: u128) -> BucketConfig {
    BucketConfig::new(n, m).expect("grid points are valid")
}

fn series_under_test(alpha: &Rational, order: u32, fault: Option<Fault>) -> Rational {
    let sum = series_partial_sum(alpha, order);
    if fault != Some(Fault::SeriesSign) {
        return sum;
    }
    // Last kept term: (-1)^K alpha^(K-1) / K!
    let k = order as i64;
    let mut term = Rational::from_integer(1.into());
    for j in 1..k {
        term = term * alpha.clone() / Rational::from_integer((j + 1).into());
    }
    if k % 2 == 1 {
        term = -term;
    }
    sum - term.clone() - term
}

/// Exhaustive enumeration against the rational closed form for every
/// `1 <= n <= max_n`, `1 <= m <= max_m`.
pub fn check_enumeration(max_n: u64, max_m: u128, fault: Option<Fault>) -> SuiteResult {
    let mut suite = SuiteResult::new("enumeration");
    for n in 1..=max_n {
        for m in 1..=max_m {
            let c = cfg(n, m);
            let closed_cfg = if fault == Some(Fault::ClosedFormBuckets) { cfg(n, m + 1) } else { c };
            match (brute_force_expected_collisions(&c), exact_collision_rate_rational(&closed_cfg)) {
                (Ok(brute), Ok(closed)) => {
                    suite.check(brute == closed, || format!("n={n} m={m}: enumeration {brute}, closed form {closed}"));
                    let float = exact_collision_rate::<f64>(&c).value;
                    suite.check((float - brute.to_f64()).abs() <= 1e-12, || {
                        format!("n={n} m={m}: float {float} vs {brute}")
                    });
                }
                (a, b) => suite.check(false, || format!("n={n} m={m}: {a:?} / {b:?}")),
            }
        }
    }
    suite
}

/// `delta_lo - 1e-15 <= exact - exponential <= 1e-15`, with the exact and
/// exponential forms from the high-precision reference and from `f64`.
pub fn check_sandwich(grid: &[(u64, u128)]) -> SuiteResult {
    let mut suite = SuiteResult::new("sandwich");
    for &(n, m) in grid {
        let c = cfg(n, m);
        let Ok(delta_lo) = delta_lower_bound::<f64>(&c) else {
            suite.check(false, || format!("n={n} m={m}: no delta bound"));
            continue;
        };
        let exact = reference::collision_rate(n, m);
        let expo = reference::exponential_rate(&c.alpha_exact());
        let gap = (exact - expo).to_f64();
        suite.check(gap <= 1e-15 && gap >= delta_lo - 1e-15, || {
            format!("n={n} m={m}: reference gap {gap:e} outside [{delta_lo:e}, 0]")
        });
        let float_gap = exact_collision_rate::<f64>(&c).value - approx_exponential::<f64>(&c).map_or(f64::NAN, |e| e.value);
        suite.check(float_gap <= 1e-15 && float_gap >= delta_lo - 1e-15, || {
            format!("n={n} m={m}: f64 gap {float_gap:e} outside [{delta_lo:e}, 0]")
        });
    }
    suite
}

/// `|series(K) - exponential| <= alpha^K / (K+1)!` for every order, in
/// rational arithmetic against the reference, and for the `f64` estimator
/// with a four-ulp allowance for its own rounding.
pub fn check_remainder(grid: &[(u64, u128)], orders: std::ops::RangeInclusive<u32>, fault: Option<Fault>) -> SuiteResult {
    let mut suite = SuiteResult::new("remainder");
    for &(n, m) in grid {
        let c = cfg(n, m);
        let alpha = c.alpha_exact();
        let expo = reference::exponential_rate(&alpha);
        let expo_f = approx_exponential::<f64>(&c).map_or(f64::NAN, |e| e.value);
        for order in orders.clone() {
            let Ok(bound) = remainder_bound(alpha.clone(), order) else {
                suite.check(false, || format!("n={n} m={m} K={order}: no bound"));
                continue;
            };
            let series = Precise::from_rational(&series_under_test(&alpha, order, fault));
            let err = (series - expo.clone()).abs();
            suite.check(err <= Precise::from_rational(&bound), || {
                format!("n={n} m={m} K={order}: |error| {:e} > bound {:e}", err.to_f64(), bound.to_f64().unwrap_or(f64::NAN))
            });
            if fault.is_none() {
                let float = approx_series::<f64>(&c, order).map_or(f64::NAN, |e| e.value);
                let slack = 4.0 * f64::EPSILON * expo_f;
                let bound_f = bound.to_f64().unwrap_or(f64::NAN);
                suite.check((float - expo_f).abs() <= bound_f + slack, || {
                    format!("n={n} m={m} K={order}: f64 error {:e} > bound {bound_f:e}", (float - expo_f).abs())
                });
            }
        }
    }
    suite
}

/// `|linear - exponential| / (alpha/2) <= alpha/3`.
pub fn check_linear(grid: &[(u64, u128)]) -> SuiteResult {
    let mut suite = SuiteResult::new("linear");
    for &(n, m) in grid {
        let c = cfg(n, m);
        let alpha = c.alpha_exact();
        let expo = reference::exponential_rate(&alpha);
        let half = Precise::from_rational(&(alpha.clone() / Rational::from_integer(2.into())));
        let rel = (half.clone() - expo).abs().div(&half);
        let third = Precise::from_rational(&(alpha.clone() / Rational::from_integer(3.into())));
        suite.check(rel <= third, || format!("n={n} m={m}: relative error {:e}", rel.to_f64()));
        let lin = approx_linear::<f64>(&c).map_or(f64::NAN, |e| e.value);
        let a = alpha.to_f64().unwrap_or(f64::NAN);
        let expo_f = approx_exponential::<f64>(&c).map_or(f64::NAN, |e| e.value);
        suite.check((lin - expo_f).abs() / (a / 2.0) <= a / 3.0 * (1.0 + 1e-9), || {
            format!("n={n} m={m}: f64 relative error {:e}", (lin - expo_f).abs() / (a / 2.0))
        });
    }
    suite
}

/// Seeded Monte Carlo mean within three standard errors of the exact rate.
pub fn check_monte_carlo(cases: &[(u64, u128)], trials: u64, seed: u64) -> SuiteResult {
    let mut suite = SuiteResult::new("monte_carlo");
    for &(n, m) in cases {
        let c = cfg(n, m);
        let exact = exact_collision_rate::<f64>(&c).value;
        match monte_carlo_rate(&c, trials, seed) {
            Ok(mc) => suite.check((mc.mean - exact).abs() <= 3.0 * mc.std_error, || {
                format!("n={n} m={m}: mean {} vs exact {exact} (se {})", mc.mean, mc.std_error)
            }),
            Err(e) => suite.check(false, || format!("n={n} m={m}: {e}")),
        }
    }
    suite
}

pub fn monte_carlo_cases() -> Vec<(u64, u128)> {
    vec![(1000, 1024), (100, 1000), (50, 50), (10_000, 1 << 20)]
}

/// Runs every suite. The report is a pure function of the options.
pub fn run(opts: &VerifyOptions) -> VerifyReport {
    let grid = alpha_grid();
    let suites = vec![
        check_enumeration(6, 8, opts.fault),
        check_sandwich(&grid),
        check_remainder(&grid, 2..=12, opts.fault),
        check_linear(&grid),
        check_monte_carlo(&monte_carlo_cases(), opts.monte_carlo_trials, opts.seed),
    ];
    let passed = suites.iter().all(SuiteResult::passed);
    VerifyReport { suites, passed }
}
