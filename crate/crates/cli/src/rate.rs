use anyhow::{anyhow, Result};
use clap::ValueEnum;
use probeanon_core::{
    approx_exponential, approx_linear, approx_series, collision_rate, exact_collision_rate, min_buckets,
    BucketConfig, RateEstimate64,
};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    /// Series below alpha = 1e-3, exact form otherwise.
    Auto,
    Exact,
    Exponential,
    Series,
    Linear,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub n: u64,
    pub m: String,
    pub alpha: f64,
    pub method: String,
    pub value: f64,
    pub log10_value: f64,
    pub lower: f64,
    pub upper: f64,
    pub delta_lo: f64,
    pub remainder_abs: f64,
}

impl RateReport {
    fn new(cfg: &BucketConfig, est: RateEstimate64) -> Self {
        Self {
            n: cfg.inserts(),
            m: cfg.buckets().to_string(),
            alpha: cfg.alpha(),
            method: est.method.to_string(),
            value: est.value,
            log10_value: est.value.log10(),
            lower: est.lower(),
            upper: est.upper(),
            delta_lo: est.delta_lo,
            remainder_abs: est.remainder_abs,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "n          {}\nm          {}\nalpha      {:e}\nmethod     {}\nrate       {:e}\nlog10      {:.4}\ninterval   [{:e}, {:e}]\ndelta >=   {:e}\n|R| <=     {:e}\n",
            self.n, self.m, self.alpha, self.method, self.value, self.log10_value, self.lower, self.upper,
            self.delta_lo, self.remainder_abs
        )
    }
}

pub fn cmd_rate(n: u64, m: u128, method: MethodArg, order: u32) -> Result<RateReport> {
    let cfg = BucketConfig::new(n, m)?;
    let est = match method {
        MethodArg::Auto => collision_rate(&cfg),
        MethodArg::Exact => exact_collision_rate(&cfg),
        MethodArg::Exponential => approx_exponential(&cfg)?,
        MethodArg::Series => approx_series(&cfg, order)?,
        MethodArg::Linear => approx_linear(&cfg)?,
    };
    Ok(RateReport::new(&cfg, est))
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeReport {
    pub n: u64,
    pub target: f64,
    pub buckets: String,
    pub log2_buckets: u32,
    pub certified_rate: Option<f64>,
}

impl SizeReport {
    pub fn render(&self) -> String {
        let cert = self.certified_rate.map(|r| format!("{r:e}")).unwrap_or_else(|| "0".into());
        format!(
            "n          {}\ntarget     {:e}\nbuckets    2^{} = {}\ncertified  {}\n",
            self.n, self.target, self.log2_buckets, self.buckets, cert
        )
    }
}

pub fn cmd_size(n: u64, target: f64) -> Result<SizeReport> {
    let m = min_buckets(n, target)?;
    let certified_rate = if n >= 2 {
        let cfg = BucketConfig::new(n, m)?;
        Some(approx_series::<f64>(&cfg, 8)?.certified_upper())
    } else {
        None
    };
    Ok(SizeReport {
        n,
        target,
        buckets: m.to_string(),
        log2_buckets: m.trailing_zeros(),
        certified_rate,
    })
    .and_then(|r| if m.is_power_of_two() { Ok(r) } else { Err(anyhow!("sizing returned {m}")) })
}
