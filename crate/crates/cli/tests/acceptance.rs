//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::sync::Arc;
use std::time::{Duration, Instant};

use probeanon_cli::simulation::{run_simulation, SimulationConfig, SimulationReport};
use probeanon_cli::verify::{alpha_grid, check_enumeration, check_linear, check_remainder, check_sandwich, SuiteResult};
use probeanon_core::reference;
use probeanon_core::{
    approx_series, delta_lower_bound, exact_collision_rate, monte_carlo_rate, BucketConfig, DEFAULT_SERIES_ORDER,
};
use probeanon_pipeline::pepper_service::{PepperService, SeededEntropy, DEFAULT_CLUSTER};
use probeanon_pipeline::sensor_agent::{AgentConfig, Dropped, ProbeRecord, SensorAgent};
use probeanon_pipeline::wire::{PepperWindowPayload, UploadPayload, UploadRecord, WINDOW_LEN};
use probeanon_pipeline::{
    anonymize, build_global_pepper, Clock, FrameIndex, MacAddress, ManualClock, SensorPepper, ServerPepper,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn suites(list: &[SuiteResult]) -> Outcome {
    let failures: Vec<String> = list.iter().flat_map(|s| s.failures.iter().cloned()).collect();
    let cases: usize = list.iter().map(|s| s.cases).sum();
    let mut detail = format!("{cases} checks, {} failures", failures.len());
    if let Some(first) = failures.first() {
        detail.push_str(&format!("; first: {first}"));
    }
    outcome(failures.is_empty(), detail)
}

fn operating_point() -> Outcome {
    let cfg = BucketConfig::new(10_000_000, 1 << 64).unwrap();
    let est = approx_series::<f64>(&cfg, DEFAULT_SERIES_ORDER).unwrap();
    let log10 = est.value.log10();
    let reference = reference::collision_rate(10_000_000, 1 << 64);
    let contains = reference >= est.lower() && reference <= est.upper();
    outcome(
        (log10 + 12.5).abs() <= 0.1 && contains,
        format!("log10 rate {log10:.5}, certified interval contains the 96-digit reference: {contains}"),
    )
}

fn certificates() -> Outcome {
    let grid = alpha_grid();
    suites(&[check_sandwich(&grid), check_remainder(&grid, 2..=12, None), check_linear(&grid)])
}

fn delta_magnitude() -> Outcome {
    let big = delta_lower_bound::<f64>(&BucketConfig::new(10_000_000, 1 << 64).unwrap()).unwrap();
    let small = delta_lower_bound::<f64>(&BucketConfig::new(2, 2).unwrap()).unwrap();
    outcome(
        big.abs() <= 5e-20 && (small + 0.4637).abs() <= 1e-4,
        format!("|delta_lo(1e7, 2^64)| = {:.4e}, delta_lo(2, alpha=1) = {small:.6}", big.abs()),
    )
}

fn enumeration() -> Outcome {
    suites(&[check_enumeration(6, 8, None)])
}

fn monte_carlo() -> Outcome {
    let cfg = BucketConfig::new(1000, 1024).unwrap();
    let exact = exact_collision_rate::<f64>(&cfg).value;
    let mc = monte_carlo_rate(&cfg, 1000, 7).unwrap();
    let z = (mc.mean - exact) / mc.std_error;
    outcome(
        z.abs() <= 3.0 && (exact - 0.36146).abs() < 1e-5,
        format!("mean {:.6} vs exact {exact:.6}, {z:+.2} standard errors", mc.mean),
    )
}

fn system_scale(zero: &SimulationReport, skewed: &SimulationReport) -> Outcome {
    let exact_counts = zero.frames.iter().all(|f| f.unique_ids == 1000 && f.ground_truth == 1000);
    let agreement = zero.agreement.fraction == 1.0 && zero.agreement.shared_observations == 2000;
    let b = skewed.boundary.as_ref().expect("boundary experiment ran");
    let mismatch_ok = b.events >= 100_000 && (b.fraction - 0.00033).abs() <= 0.0002;
    let counts: Vec<u64> = zero.frames.iter().map(|f| f.unique_ids).collect();
    outcome(
        exact_counts && agreement && mismatch_ok,
        format!(
            "unique per frame {counts:?}, agreement {}/{}, skewed boundary mismatch {:.4}% over {} events (expected {:.4}%)",
            zero.agreement.agreeing,
            zero.agreement.shared_observations,
            100.0 * b.fraction,
            b.events,
            100.0 * b.expected_fraction
        ),
    )
}

/// Mean fraction of identifier bits that change when one random bit of the
/// server pepper is flipped.
fn avalanche(pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flipped = 0u64;
    for _ in 0..pairs {
        let sensor = SensorPepper::new(rng.gen());
        let mac = MacAddress::new(rng.gen());
        let a: [u8; 16] = rng.gen();
        let mut b = a;
        let bit = rng.gen_range(0..128);
        b[bit / 8] ^= 1 << (bit % 8);
        let id_a = anonymize(&build_global_pepper(&ServerPepper::new(FrameIndex(0), a), &sensor), &mac);
        let id_b = anonymize(&build_global_pepper(&ServerPepper::new(FrameIndex(0), b), &sensor), &mac);
        flipped += u64::from((id_a.0 ^ id_b.0).count_ones());
    }
    flipped as f64 / (64 * pairs) as f64
}

fn unlinkability(zero: &SimulationReport) -> Outcome {
    let mean = avalanche(1000, 11);
    let intersections = &zero.linkage.consecutive_intersections;
    outcome(
        intersections.iter().all(|&x| x == 0) && zero.linkage.linked == 0 && (0.45..=0.55).contains(&mean),
        format!(
            "frame intersection {intersections:?} (chance {:.1e}), devices linked {}/{}, avalanche mean {mean:.4}",
            zero.linkage.expected_chance_intersections.first().copied().unwrap_or(0.0),
            zero.linkage.linked,
            zero.linkage.compared
        ),
    )
}

fn keys(v: &Value) -> Vec<String> {
    let mut k: Vec<String> = v.as_object().map(|o| o.keys().cloned().collect()).unwrap_or_default();
    k.sort();
    k
}

/// Wire formats carry no sensor pepper: exact key sets, and uploads with
/// extra fields are refused.
fn schema_check() -> Result<(), String> {
    let service = PepperService::new(Box::new(SeededEntropy::new(3)));
    service.rotate(FrameIndex(100)).map_err(|e| e.to_string())?;
    let window = service.window(DEFAULT_CLUSTER).map_err(|e| e.to_string())?;
    let pepper_json = serde_json::to_value(window.to_payload(6000)).map_err(|e| e.to_string())?;
    if keys(&pepper_json) != ["generated_at", "peppers"] || keys(&pepper_json["peppers"][0]) != ["frame", "pepper_hex"] {
        return Err(format!("pepper window keys {:?}", keys(&pepper_json)));
    }
    serde_json::from_value::<PepperWindowPayload>(pepper_json).map_err(|e| e.to_string())?;

    let upload = UploadPayload {
        sensor_id: "s1".into(),
        records: vec![UploadRecord { frame: 100, id_hex: "0123456789abcdef".into(), rssi: -50 }],
    };
    let mut upload_json = serde_json::to_value(&upload).map_err(|e| e.to_string())?;
    if keys(&upload_json) != ["records", "sensor_id"] || keys(&upload_json["records"][0]) != ["frame", "id_hex", "rssi"] {
        return Err(format!("upload keys {:?}", keys(&upload_json)));
    }
    upload_json["sensor_pepper"] = Value::String("00".repeat(16));
    if UploadPayload::parse(upload_json.to_string().as_bytes()).is_ok() {
        return Err("upload with a sensor_pepper field was accepted".into());
    }
    Ok(())
}

fn privacy(run: &SimulationReport) -> Outcome {
    let p = &run.privacy;
    let scanned = p.upload_bytes > 0 && p.snapshot_bytes > 0 && p.log_bytes > 0 && p.pepper_response_bytes > 0;
    let schema = schema_check();
    outcome(
        p.violations.is_empty() && scanned && schema.is_ok(),
        format!(
            "{} MACs scanned over {} upload, {} snapshot, {} log, {} pepper-response bytes; violations {:?}; schema {}",
            p.macs,
            p.upload_bytes,
            p.snapshot_bytes,
            p.log_bytes,
            p.pepper_response_bytes,
            p.violations,
            schema.err().unwrap_or_else(|| "ok".into())
        ),
    )
}

fn lifecycle() -> Outcome {
    let service = PepperService::new(Box::new(SeededEntropy::new(5)));
    let mut problems = Vec::new();
    for f in [1000u64, 1001, 1007, 1030, 1031] {
        service.rotate(FrameIndex(f)).unwrap();
        let window = service.window(DEFAULT_CLUSTER).unwrap();
        let frames: Vec<u64> = window.peppers().iter().map(|p| p.frame.value()).collect();
        if frames != (f..f + WINDOW_LEN as u64).collect::<Vec<_>>() {
            problems.push(format!("window after rotating to {f} is {:?}..", frames.first()));
        }
        for old in [f.saturating_sub(25), f - 1] {
            if service.pepper(DEFAULT_CLUSTER, FrameIndex(old)).unwrap().is_some() {
                problems.push(format!("service still serves frame {old} after rotating to {f}"));
            }
        }
    }

    let clock = Arc::new(ManualClock::at_seconds(2000 * 60));
    let agent = SensorAgent::new(AgentConfig::new("s1"), SensorPepper::new([1; 16]), clock.clone()).unwrap();
    service.rotate(FrameIndex(2000)).unwrap();
    agent.install_window(service.window(DEFAULT_CLUSTER).unwrap().to_payload(clock.now_seconds())).unwrap();
    clock.set_millis(2003 * 60_000);
    let cache = agent.cache();
    if cache.frames().iter().any(|f| f.value() < 2003) || cache.len() != WINDOW_LEN - 3 {
        problems.push(format!("agent cache after advancing holds {:?}", cache.frames().first()));
    }
    let stale = ProbeRecord::new(2002 * 60 + 30, -50, MacAddress::new([2; 6])).unwrap();
    if agent.identify(&stale) != Err(Dropped::MissingPepper(FrameIndex(2002))) {
        problems.push("agent anonymized a record from an expired frame".into());
    }
    let current = ProbeRecord::new(2003 * 60 + 1, -50, MacAddress::new([2; 6])).unwrap();
    if agent.identify(&current).is_err() {
        problems.push("agent dropped a record from the current frame".into());
    }
    outcome(problems.is_empty(), if problems.is_empty() { "service and agent cache reject expired frames; windows are 20 consecutive frames".into() } else { problems.join("; ") })
}

/// Aggregator collision counts under truncated identifiers match the exact
/// collision rate: every frame is an independent trial.
fn bridge() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for (bits, devices) in [(10u32, 500usize), (16, 2000)] {
        let cfg = SimulationConfig { sensors: 1, devices, frames: 40, dedup_bits: bits, seed: 99, ..SimulationConfig::default() };
        let report = run_simulation(&cfg).unwrap();
        let rates: Vec<f64> = report
            .frames
            .iter()
            .map(|f| (f.ground_truth - f.unique_ids) as f64 / f.ground_truth as f64)
            .collect();
        let t = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / t;
        let var = rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (t - 1.0);
        let se = (var / t).sqrt();
        let exact = exact_collision_rate::<f64>(&BucketConfig::new(devices as u64, 1 << bits).unwrap()).value;
        let z = (mean - exact) / se;
        ok &= z.abs() <= 3.0 && report.privacy_ok();
        details.push(format!("2^{bits}: {mean:.5} vs {exact:.5} ({z:+.2} se)"));
    }
    outcome(ok, details.join(", "))
}

fn main() {
    let mut failed = 0;
    let mut report = |label: &str, limit: Option<Duration>, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let out = f();
        let elapsed = start.elapsed();
        let in_time = limit.is_none_or(|l| elapsed <= l);
        let passed = out.passed && in_time;
        if !passed {
            failed += 1;
        }
        let budget = limit.map_or(String::new(), |l| format!(" / {:?}", l));
        println!(
            "{} {label}: {} [{:.2?}{budget}]",
            if passed { "PASS" } else { "FAIL" },
            out.detail,
            elapsed
        );
    };

    report("criterion 1 operating point", Some(Duration::from_secs(1)), &mut operating_point);
    report("criterion 2 error-bound certificates", Some(Duration::from_secs(30)), &mut certificates);
    report("criterion 3 delta-bound magnitude", None, &mut delta_magnitude);
    report("criterion 4 enumeration oracle", Some(Duration::from_secs(10)), &mut enumeration);
    report("criterion 5 Monte Carlo agreement", Some(Duration::from_secs(30)), &mut monte_carlo);

    let mut runs: Option<(SimulationReport, SimulationReport)> = None;
    report("criterion 6 cross-sensor agreement", Some(Duration::from_secs(120)), &mut || {
        let zero = run_simulation(&SimulationConfig::default()).expect("zero-skew simulation");
        let skewed = run_simulation(&SimulationConfig {
            clock_skew_ms: 10,
            boundary_events: 1_000_000,
            seed: 2,
            ..SimulationConfig::default()
        })
        .expect("skewed simulation");
        let out = system_scale(&zero, &skewed);
        runs = Some((zero, skewed));
        out
    });
    let (zero, skewed) = runs.expect("simulations ran");
    report("criterion 7 cross-frame unlinkability", None, &mut || unlinkability(&zero));
    report("criterion 8 privacy invariant", None, &mut || privacy(&skewed));
    report("criterion 9 pepper lifecycle", None, &mut lifecycle);
    report("aggregator bridge", None, &mut bridge);

    if failed > 0 {
        println!("{failed} acceptance check(s) failed");
        std::process::exit(1);
    }
}
