//! Grid of log10 collision rates over (n, m), written as CSV `n,m,log10_rate`.

use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use probeanon_core::{approx_series, BucketConfig, DEFAULT_SERIES_ORDER};
use serde::{Deserialize, Serialize};

/// Marker in the `log10_rate` column for cells with `n > m`.
pub const OUT_OF_DOMAIN: &str = "out_of_domain";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub n_min: u64,
    pub n_max: u64,
    pub n_points: usize,
    pub log2_m_min: u32,
    pub log2_m_max: u32,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_min: 100, n_max: 100_000_000, n_points: 50, log2_m_min: 10, log2_m_max: 64 }
    }
}

impl GridSpec {
    /// Log-spaced insert counts, rounded and deduplicated.
    pub fn n_axis(&self) -> Vec<u64> {
        let (lo, hi) = ((self.n_min as f64).ln(), (self.n_max as f64).ln());
        let k = self.n_points.max(1);
        let mut out: Vec<u64> = (0..k)
            .map(|i| {
                let t = if k == 1 { 0.0 } else { i as f64 / (k - 1) as f64 };
                (lo + t * (hi - lo)).exp().round() as u64
            })
            .collect();
        out.dedup();
        out
    }

    pub fn m_axis(&self) -> Vec<u128> {
        (self.log2_m_min..=self.log2_m_max).map(|e| 1u128 << e).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: u64,
    pub m: u128,
    /// `None` when `n > m`.
    pub log10_rate: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    n: u64,
    m: String,
    log10_rate: String,
}

pub fn compute(grid: &GridSpec) -> Result<Vec<Cell>> {
    if grid.n_min < 2 || grid.n_min > grid.n_max || grid.log2_m_min > grid.log2_m_max || grid.log2_m_max > 127 {
        bail!("invalid grid {grid:?}");
    }
    let mut cells = Vec::new();
    for n in grid.n_axis() {
        for m in grid.m_axis() {
            let log10_rate = if (n as u128) > m {
                None
            } else {
                let cfg = BucketConfig::new(n, m)?;
                Some(approx_series::<f64>(&cfg, DEFAULT_SERIES_ORDER)?.value.log10())
            };
            cells.push(Cell { n, m, log10_rate });
        }
    }
    Ok(cells)
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn write_csv<W: Write>(cells: &[Cell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in cells {
        w.serialize(Row {
            n: c.n,
            m: c.m.to_string(),
            log10_rate: c.log10_rate.map_or_else(|| OUT_OF_DOMAIN.to_string(), |v| v.to_string()),
        })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<Cell>> {
    let mut r = csv::Reader::from_reader(input);
    let mut cells = Vec::new();
    for row in r.deserialize() {
        let row: Row = row?;
        let log10_rate = if row.log10_rate == OUT_OF_DOMAIN {
            None
        } else {
            Some(row.log10_rate.parse().with_context(|| format!("bad value {:?}", row.log10_rate))?)
        };
        cells.push(Cell { n: row.n, m: row.m.parse().context("bad bucket count")?, log10_rate });
    }
    Ok(cells)
}
