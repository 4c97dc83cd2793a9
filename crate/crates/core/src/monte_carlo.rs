//! Seeded Monte Carlo estimate of the collision rate.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::BucketConfig;
use crate::error::{CollisionError, Result};

/// Default cap on `n * trials`.
pub const DEFAULT_DRAW_BUDGET: u128 = 1_000_000_000;

const DENSE_BUCKET_LIMIT: u128 = 1 << 20;
const SORTED_INSERT_LIMIT: u64 = 1 << 16;

/// How distinct buckets are counted within one trial. All strategies return
/// identical counts for identical draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OccupancyCounter {
    /// Bitmap over all buckets; only for small `m`.
    Dense,
    /// Sort the draws and count runs.
    Sorted,
    /// Hash-set insertion.
    Hashed,
}

impl OccupancyCounter {
    pub fn choose(cfg: &BucketConfig) -> Self {
        if cfg.buckets() <= DENSE_BUCKET_LIMIT {
            OccupancyCounter::Dense
        } else if cfg.inserts() <= SORTED_INSERT_LIMIT {
            OccupancyCounter::Sorted
        } else {
            OccupancyCounter::Hashed
        }
    }

    /// Number of distinct values among `draws`. May reorder `draws`.
    pub fn count_distinct(&self, draws: &mut [u128], buckets: u128) -> usize {
        self.count_distinct_reusing(draws, buckets, &mut Vec::new())
    }

    fn count_distinct_reusing(&self, draws: &mut [u128], buckets: u128, seen: &mut Vec<bool>) -> usize {
        match self {
            OccupancyCounter::Dense => {
                assert!(buckets <= DENSE_BUCKET_LIMIT, "dense counting needs a small table");
                seen.resize(buckets as usize, false);
                let distinct =
                    draws.iter().filter(|&&d| !std::mem::replace(&mut seen[d as usize], true)).count();
                for &d in draws.iter() {
                    seen[d as usize] = false;
                }
                distinct
            }
            OccupancyCounter::Sorted => {
                draws.sort_unstable();
                draws.iter().enumerate().filter(|(i, d)| *i == 0 || draws[i - 1] != **d).count()
            }
            OccupancyCounter::Hashed => draws.iter().collect::<HashSet<_>>().len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Sample standard deviation over trials divided by `sqrt(trials)`; zero
    /// for a single trial.
    pub std_error: f64,
    pub trials: u64,
}

/// Monte Carlo rate with the default budget and counting strategy.
pub fn monte_carlo_rate(cfg: &BucketConfig, trials: u64, seed: u64) -> Result<MonteCarloEstimate> {
    monte_carlo_rate_with(cfg, trials, seed, DEFAULT_DRAW_BUDGET, OccupancyCounter::choose(cfg))
}

/// Draws `n` uniform bucket indices per trial from a ChaCha8 stream seeded with
/// `seed` and averages `(n - occupied) / n`. Pure in `(cfg, trials, seed)`.
pub fn monte_carlo_rate_with(
    cfg: &BucketConfig,
    trials: u64,
    seed: u64,
    budget: u128,
    counter: OccupancyCounter,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(CollisionError::ZeroTrials);
    }
    let n = cfg.inserts();
    let m = cfg.buckets();
    let requested = n as u128 * trials as u128;
    if requested > budget {
        return Err(CollisionError::BudgetExceeded { requested, budget });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![0u128; n as usize];
    let mut seen = Vec::new();
    // Welford accumulation
    let mut mean = 0.0f64;
    let mut m2 = 0.0f64;
    for t in 1..=trials {
        for d in draws.iter_mut() {
            *d = rng.gen_range(0..m);
        }
        let occupied = counter.count_distinct_reusing(&mut draws, m, &mut seen);
        let rate = (n as usize - occupied) as f64 / n as f64;
        let delta = rate - mean;
        mean += delta / t as f64;
        m2 += delta * (rate - mean);
    }
    let std_error = if trials > 1 {
        (m2 / (trials - 1) as f64).sqrt() / (trials as f64).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate { mean, std_error, trials })
}
