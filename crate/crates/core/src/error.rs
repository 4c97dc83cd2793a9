use thiserror::Error;

pub type Result<T> = std::result::Result<T, CollisionError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CollisionError {
    #[error("number of inserts must be at least 1")]
    ZeroInserts,
    #[error("number of buckets must be at least 1")]
    ZeroBuckets,
    #[error("approximation requires at least 2 inserts, got {0}")]
    TooFewInserts(u64),
    #[error("approximation requires load factor <= 1, got n={n}, m={m}")]
    LoadFactorAboveOne { n: u64, m: u128 },
    #[error("load factor must lie in (0, 1], got {0}")]
    AlphaOutOfRange(String),
    #[error("series order must be at least 2, got {0}")]
    SeriesOrder(u32),
    #[error("enumeration of {m}^{n} assignments exceeds the limit of {limit}")]
    EnumerationTooLarge { n: u64, m: u128, limit: u128 },
    #[error("exact rational evaluation too large for n={n}, m={m}")]
    RationalTooLarge { n: u64, m: u128 },
    #[error("Monte Carlo budget exceeded: {requested} draws requested, budget {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },
    #[error("trial count must be at least 1")]
    ZeroTrials,
    #[error("target rate must lie in (0, 1), got {0}")]
    TargetOutOfRange(f64),
    #[error("no power-of-two bucket count up to 2^{max_log2} reaches target {target} for n={n}")]
    Unsatisfiable { n: u64, target: f64, max_log2: u32 },
}
