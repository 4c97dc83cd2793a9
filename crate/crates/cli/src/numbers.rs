use anyhow::{bail, Context, Result};

/// Parses counts written as `10000000`, `10_000_000`, `1e7` or `2^64`.
pub fn parse_count(s: &str) -> Result<u128> {
    let s = s.trim().replace('_', "");
    if let Some((base, exp)) = s.split_once('^') {
        let base: u128 = base.parse().with_context(|| format!("bad base in {s:?}"))?;
        let exp: u32 = exp.parse().with_context(|| format!("bad exponent in {s:?}"))?;
        return base.checked_pow(exp).with_context(|| format!("{s} overflows 128 bits"));
    }
    if let Ok(v) = s.parse::<u128>() {
        return Ok(v);
    }
    let f: f64 = s.parse().with_context(|| format!("not a count: {s:?}"))?;
    if !(f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(128)) {
        bail!("not a non-negative integer: {s:?}");
    }
    Ok(f as u128)
}

pub fn parse_inserts(s: &str) -> Result<u64> {
    u64::try_from(parse_count(s)?).context("insert count exceeds 64 bits")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forms() {
        assert_eq!(parse_count("1e7").unwrap(), 10_000_000);
        assert_eq!(parse_count("2^64").unwrap(), 1 << 64);
        assert_eq!(parse_count("1_024").unwrap(), 1024);
        assert_eq!(parse_count("18446744073709551616").unwrap(), 1 << 64);
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
        assert!(parse_count("2^200").is_err());
        assert!(parse_inserts("2^64").is_err());
    }
}
