//! End-to-end simulation: a pepper service, an aggregator and several sensor
//! agents talk over loopback HTTP while a manual clock drives time. The
//! report compares what the aggregator saw with ground truth and scans every
//! byte that left a sensor for raw MAC addresses.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::{Arc, Mutex};

use anyhow::{bail, Context, Result};
use probeanon_core::{exact_collision_rate, BucketConfig};
use probeanon_pipeline::aggregator::{self, Aggregator, AggregatorApi, AggregatorConfig};
use probeanon_pipeline::anonymizer::{PepperBytes, FRAME_SECONDS};
use probeanon_pipeline::http::spawn_server;
use probeanon_pipeline::pepper_service::{self, PepperApi, PepperService, SeededEntropy};
use probeanon_pipeline::sensor_agent::{AgentConfig, HttpPepperClient, HttpRecordSink, ProbeRecord, SensorAgent};
use probeanon_pipeline::{Clock, FrameIndex, MacAddress, ManualClock, OffsetClock, SaIdentifier, SensorPepper};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

const FRAME_MILLIS: u64 = FRAME_SECONDS * 1000;
const TOKEN: &str = "simulation-token";
const UPLOAD_BATCH: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub sensors: usize,
    pub devices: usize,
    pub frames: u64,
    /// Probability that a sensor hears a given device. Every device is heard
    /// by at least one sensor.
    pub overlap: f64,
    /// Sensor clock offsets are spread evenly over `[-skew, +skew]`.
    pub clock_skew_ms: u64,
    /// Events in the frame-boundary experiment; zero skips it.
    pub boundary_events: u64,
    /// Identifier bits the aggregator uses for uniqueness.
    pub dedup_bits: u32,
    pub seed: u64,
    pub start_frame: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            sensors: 3,
            devices: 1000,
            frames: 2,
            overlap: 1.0,
            clock_skew_ms: 0,
            boundary_events: 0,
            dedup_bits: 64,
            seed: 1,
            start_frame: 28_333_333,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameReport {
    pub frame: u64,
    pub ground_truth: u64,
    pub unique_ids: u64,
    pub total_records: u64,
    /// Expected identifiers lost to truncated-hash collisions.
    pub expected_collisions: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    /// Probe requests heard by at least two sensors.
    pub shared_observations: u64,
    pub agreeing: u64,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinkageReport {
    /// Devices whose identifier is equal in consecutive frames.
    pub linked: u64,
    pub compared: u64,
    /// Size of the identifier-set intersection of each stored frame with the
    /// next, read back from the aggregator snapshots.
    pub consecutive_intersections: Vec<u64>,
    pub expected_chance_intersections: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub events: u64,
    pub mismatches: u64,
    pub fraction: f64,
    /// Spread of sensor clock offsets over the frame length.
    pub expected_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrivacyReport {
    pub macs: usize,
    pub upload_bytes: u64,
    pub snapshot_bytes: u64,
    pub log_bytes: u64,
    pub pepper_response_bytes: u64,
    /// Empty when nothing leaked. Never contains the leaked value.
    pub violations: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub missing_pepper: u64,
    pub overflow: u64,
    pub upload_failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub frames: Vec<FrameReport>,
    pub agreement: AgreementReport,
    pub linkage: LinkageReport,
    pub boundary: Option<BoundaryReport>,
    pub privacy: PrivacyReport,
    pub drops: DropCounts,
}

impl SimulationReport {
    pub fn privacy_ok(&self) -> bool {
        self.privacy.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str("frame        truth   unique   records  expected-collisions\n");
        for f in &self.frames {
            s.push_str(&format!(
                "{:<12} {:>6} {:>8} {:>9}  {:.3e}\n",
                f.frame, f.ground_truth, f.unique_ids, f.total_records, f.expected_collisions
            ));
        }
        let a = &self.agreement;
        s.push_str(&format!("cross-sensor agreement  {}/{} ({:.4}%)\n", a.agreeing, a.shared_observations, 100.0 * a.fraction));
        let l = &self.linkage;
        s.push_str(&format!("cross-frame linkage     {}/{} devices\n", l.linked, l.compared));
        s.push_str(&format!("frame intersections     {:?}\n", l.consecutive_intersections));
        if let Some(b) = &self.boundary {
            s.push_str(&format!(
                "boundary mismatches     {}/{} ({:.4}%, expected {:.4}%)\n",
                b.mismatches, b.events, 100.0 * b.fraction, 100.0 * b.expected_fraction
            ));
        }
        let p = &self.privacy;
        s.push_str(&format!(
            "privacy scan            {} MACs over {} upload, {} snapshot, {} log, {} pepper bytes: {}\n",
            p.macs,
            p.upload_bytes,
            p.snapshot_bytes,
            p.log_bytes,
            p.pepper_response_bytes,
            if p.violations.is_empty() { "clean".to_string() } else { p.violations.join("; ") }
        ));
        s
    }
}

#[derive(Clone, Default)]
struct ByteLog(Arc<Mutex<Vec<u8>>>);

impl ByteLog {
    fn append(&self, bytes: &[u8]) {
        self.0.lock().expect("capture lock poisoned").extend_from_slice(bytes);
    }

    fn take(&self) -> Vec<u8> {
        std::mem::take(&mut *self.0.lock().expect("capture lock poisoned"))
    }
}

impl Write for ByteLog {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.append(buf);
        Ok(buf.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

struct Device {
    mac: MacAddress,
    heard_by: Vec<usize>,
}

fn sensor_offsets(sensors: usize, skew_ms: u64) -> Vec<i64> {
    if sensors < 2 {
        return vec![0; sensors];
    }
    let skew = skew_ms as f64;
    (0..sensors).map(|i| (-skew + 2.0 * skew * i as f64 / (sensors - 1) as f64).round() as i64).collect()
}

fn make_devices(cfg: &SimulationConfig, rng: &mut ChaCha8Rng) -> Vec<Device> {
    let mut seen = HashSet::new();
    let mut devices = Vec::with_capacity(cfg.devices);
    while devices.len() < cfg.devices {
        let mac: [u8; 6] = rng.gen();
        if !seen.insert(mac) {
            continue;
        }
        let mut heard_by: Vec<usize> = (0..cfg.sensors).filter(|_| rng.gen_bool(cfg.overlap.clamp(0.0, 1.0))).collect();
        if heard_by.is_empty() {
            heard_by.push(rng.gen_range(0..cfg.sensors));
        }
        devices.push(Device { mac: MacAddress::new(mac), heard_by });
    }
    devices
}

fn probe(mac: MacAddress, true_millis: u64, offset: i64, rssi: i32) -> Result<ProbeRecord> {
    let local = true_millis.checked_add_signed(offset).context("clock offset underflow")?;
    Ok(ProbeRecord::new(local / 1000, rssi, mac)?)
}

/// Runs the whole pipeline in-process. Deterministic in `cfg`.
pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationReport> {
    if cfg.sensors == 0 || cfg.devices == 0 || cfg.frames == 0 {
        bail!("sensors, devices and frames must be positive");
    }
    if !(0.0..=1.0).contains(&cfg.overlap) {
        bail!("overlap must lie in [0, 1]");
    }
    if cfg.clock_skew_ms >= FRAME_MILLIS / 2 {
        bail!("clock skew must be well below a frame");
    }
    let logs = ByteLog::default();
    let sink = logs.clone();
    let subscriber = tracing_subscriber::fmt()
        .with_max_level(tracing::Level::DEBUG)
        .with_ansi(false)
        .with_writer(move || sink.clone())
        .finish();
    let _guard = tracing::subscriber::set_default(subscriber);
    let runtime = tokio::runtime::Builder::new_current_thread().enable_all().build()?;
    runtime.block_on(simulate(cfg, logs))
}

struct Taps {
    uploads: ByteLog,
    peppers: ByteLog,
}

async fn simulate(cfg: &SimulationConfig, logs: ByteLog) -> Result<SimulationReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let devices = make_devices(cfg, &mut rng);
    let offsets = sensor_offsets(cfg.sensors, cfg.clock_skew_ms);
    let sensor_pepper_bytes: [u8; 16] = rng.gen();

    let clock = Arc::new(ManualClock::new(cfg.start_frame * FRAME_MILLIS));
    let base: Arc<dyn Clock> = clock.clone();
    let service = Arc::new(PepperService::new(Box::new(SeededEntropy::new(cfg.seed))));
    let snapshot_dir = tempfile::tempdir()?;
    let aggregator = Arc::new(Aggregator::new(AggregatorConfig {
        dedup_bits: cfg.dedup_bits,
        snapshot_dir: Some(snapshot_dir.path().to_path_buf()),
        ..AggregatorConfig::default()
    })?);
    let loopback: SocketAddr = "127.0.0.1:0".parse()?;
    let (pepper_addr, pepper_task) = spawn_server(
        loopback,
        pepper_service::router(PepperApi { service: service.clone(), clock: base.clone(), token: TOKEN.into() }),
    )
    .await?;
    let (agg_addr, agg_task) =
        spawn_server(loopback, aggregator::router(AggregatorApi { aggregator: aggregator.clone(), token: TOKEN.into() }))
            .await?;

    let taps = Taps { uploads: ByteLog::default(), peppers: ByteLog::default() };
    let pepper_tap = taps.peppers.clone();
    let pepper_client =
        HttpPepperClient::new(&format!("http://{pepper_addr}"), TOKEN).with_tap(move |b| pepper_tap.append(b));
    let upload_tap = taps.uploads.clone();
    let record_sink =
        HttpRecordSink::new(&format!("http://{agg_addr}"), TOKEN).with_tap(move |b| upload_tap.append(b));

    let agents: Vec<SensorAgent> = offsets
        .iter()
        .enumerate()
        .map(|(i, &off)| {
            let agent_clock: Arc<dyn Clock> = Arc::new(OffsetClock::new(base.clone(), off));
            SensorAgent::new(AgentConfig::new(&format!("sensor-{i}")), SensorPepper::new(sensor_pepper_bytes), agent_clock)
        })
        .collect::<Result<_, _>>()?;

    // Main phase: every device emits one probe request per frame.
    let mut per_device: Vec<BTreeMap<u64, SaIdentifier>> = vec![BTreeMap::new(); devices.len()];
    let mut shared = 0u64;
    let mut agreeing = 0u64;
    for f in cfg.start_frame..cfg.start_frame + cfg.frames {
        clock.set_millis(f * FRAME_MILLIS);
        service.rotate(FrameIndex(f))?;
        for agent in &agents {
            agent.refresh_peppers(&pepper_client).await?;
        }
        let mut events: Vec<(u64, usize)> =
            (0..devices.len()).map(|d| (f * FRAME_MILLIS + rng.gen_range(0..FRAME_MILLIS), d)).collect();
        events.sort_unstable();
        for (t, d) in events {
            clock.set_millis(t);
            let rssi = rng.gen_range(-90..=-30);
            let mut ids = Vec::with_capacity(devices[d].heard_by.len());
            for &s in &devices[d].heard_by {
                ids.push(agents[s].ingest_probe(probe(devices[d].mac, t, offsets[s], rssi)?).ok().map(|a| a.identifier));
            }
            if let Some(Some(id)) = ids.first() {
                per_device[d].insert(f, *id);
            }
            if ids.len() >= 2 {
                shared += 1;
                if ids[0].is_some() && ids.iter().all(|x| *x == ids[0]) {
                    agreeing += 1;
                }
            }
        }
        for agent in &agents {
            agent.flush_all(&record_sink, UPLOAD_BATCH).await?;
        }
        tracing::info!(frame = f, "frame uploaded");
    }

    let boundary = if cfg.boundary_events > 0 && cfg.sensors >= 2 {
        Some(boundary_experiment(cfg, &clock, &service, &agents, &pepper_client, &devices, &offsets, &mut rng).await?)
    } else {
        None
    };

    let frames = (cfg.start_frame..cfg.start_frame + cfg.frames)
        .map(|f| {
            let stats = aggregator.frame_stats(FrameIndex(f));
            let truth = devices.len() as u64;
            let expected = BucketConfig::new(truth, 1u128 << cfg.dedup_bits)
                .map(|c| truth as f64 * exact_collision_rate::<f64>(&c).value)
                .unwrap_or(0.0);
            FrameReport {
                frame: f,
                ground_truth: truth,
                unique_ids: stats.unique_ids,
                total_records: stats.total_records,
                expected_collisions: expected,
            }
        })
        .collect::<Vec<_>>();

    let mut linked = 0;
    let mut compared = 0;
    for ids in &per_device {
        for (f, id) in ids {
            if let Some(next) = ids.get(&(f + 1)) {
                compared += 1;
                linked += u64::from(next == id);
            }
        }
    }

    pepper_task.abort();
    agg_task.abort();
    drop(pepper_client);
    drop(record_sink);

    let stored = read_snapshots(snapshot_dir.path())?;
    let snapshot_bytes: u64 = stored.values().map(|(_, bytes)| *bytes).sum();
    let mut consecutive_intersections = Vec::new();
    let mut expected_chance_intersections = Vec::new();
    for f in cfg.start_frame..cfg.start_frame + cfg.frames - 1 {
        let empty = (HashSet::new(), 0);
        let a = &stored.get(&f).unwrap_or(&empty).0;
        let b = &stored.get(&(f + 1)).unwrap_or(&empty).0;
        consecutive_intersections.push(a.intersection(b).count() as u64);
        expected_chance_intersections.push(a.len() as f64 * b.len() as f64 / 2f64.powi(64));
    }

    let snapshot_text = concat_files(snapshot_dir.path())?;
    let uploads = taps.uploads.take();
    let peppers = taps.peppers.take();
    let log_text = logs.take();
    let scanner = LeakScanner::new(devices.iter().map(|d| d.mac), &sensor_pepper_bytes);
    let mut violations = Vec::new();
    for (label, bytes) in [("upload", &uploads), ("snapshot", &snapshot_text), ("log", &log_text), ("pepper response", &peppers)] {
        violations.extend(scanner.scan(bytes).into_iter().map(|kind| format!("{label} contains {kind}")));
    }

    let mut drops = DropCounts { missing_pepper: 0, overflow: 0, upload_failures: 0 };
    for agent in &agents {
        let m = agent.metrics();
        drops.missing_pepper += m.dropped_missing_pepper;
        drops.overflow += m.dropped_overflow;
        drops.upload_failures += m.upload_failures;
    }

    Ok(SimulationReport {
        config: cfg.clone(),
        frames,
        agreement: AgreementReport {
            shared_observations: shared,
            agreeing,
            fraction: if shared == 0 { 1.0 } else { agreeing as f64 / shared as f64 },
        },
        linkage: LinkageReport { linked, compared, consecutive_intersections, expected_chance_intersections },
        boundary,
        privacy: PrivacyReport {
            macs: devices.len(),
            upload_bytes: uploads.len() as u64,
            snapshot_bytes,
            log_bytes: log_text.len() as u64,
            pepper_response_bytes: peppers.len() as u64,
            violations,
        },
        drops,
    })
}

/// Every sensor hears the same probe request; the request time is uniform
/// over 19 frames so each boundary is crossed equally often. A mismatch is
/// any disagreement between sensors, including a dropped record.
#[allow(clippy::too_many_arguments)]
async fn boundary_experiment(
    cfg: &SimulationConfig,
    clock: &ManualClock,
    service: &PepperService,
    agents: &[SensorAgent],
    pepper_client: &HttpPepperClient,
    devices: &[Device],
    offsets: &[i64],
    rng: &mut ChaCha8Rng,
) -> Result<BoundaryReport> {
    let start = cfg.start_frame + cfg.frames + 1;
    let span_frames = 19;
    clock.set_millis(start * FRAME_MILLIS);
    service.rotate(FrameIndex(start))?;
    for agent in agents {
        agent.refresh_peppers(pepper_client).await?;
    }
    let mut mismatches = 0u64;
    for _ in 0..cfg.boundary_events {
        let t = start * FRAME_MILLIS + rng.gen_range(0..span_frames * FRAME_MILLIS);
        let mac = devices.choose(rng).expect("at least one device").mac;
        let mut first = None;
        let mut agree = true;
        for (agent, &off) in agents.iter().zip(offsets) {
            let id = agent.identify(&probe(mac, t, off, -60)?).ok().map(|a| a.identifier);
            match (&first, id) {
                (_, None) => agree = false,
                (None, Some(id)) => first = Some(id),
                (Some(f), Some(id)) => agree &= *f == id,
            }
        }
        mismatches += u64::from(!agree);
    }
    let spread = (offsets.iter().max().unwrap_or(&0) - offsets.iter().min().unwrap_or(&0)) as f64;
    Ok(BoundaryReport {
        events: cfg.boundary_events,
        mismatches,
        fraction: mismatches as f64 / cfg.boundary_events as f64,
        expected_fraction: spread / FRAME_MILLIS as f64,
    })
}

/// Identifier sets per frame from `<frame>.log` snapshot lines, plus the
/// byte size of each file.
fn read_snapshots(dir: &Path) -> Result<HashMap<u64, (HashSet<u64>, u64)>> {
    let mut out: HashMap<u64, (HashSet<u64>, u64)> = HashMap::new();
    for entry in std::fs::read_dir(dir)? {
        let path = entry?.path();
        let text = std::fs::read_to_string(&path)?;
        let slot = out.entry(frame_of(&path)?).or_default();
        slot.1 += text.len() as u64;
        for line in text.lines() {
            let id = line.split(' ').nth(1).context("malformed snapshot line")?;
            slot.0.insert(SaIdentifier::from_hex(id)?.0);
        }
    }
    Ok(out)
}

fn frame_of(path: &Path) -> Result<u64> {
    path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()).context("unexpected snapshot file")
}

fn concat_files(dir: &Path) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        out.extend(std::fs::read(entry?.path())?);
    }
    Ok(out)
}

/// Looks for MACs (raw bytes and common text forms) and the sensor pepper
/// (raw and hex) in arbitrary byte streams.
pub struct LeakScanner {
    raw: HashSet<[u8; 6]>,
    hex: HashSet<[u8; 12]>,
    separated: HashSet<[u8; 17]>,
    pepper_raw: [u8; 16],
    pepper_hex: [u8; 32],
}

impl LeakScanner {
    pub fn new(macs: impl IntoIterator<Item = MacAddress>, sensor_pepper: &[u8; 16]) -> Self {
        let mut s = Self {
            raw: HashSet::new(),
            hex: HashSet::new(),
            separated: HashSet::new(),
            pepper_raw: *sensor_pepper,
            pepper_hex: [0; 32],
        };
        for mac in macs {
            let octets = *mac.octets();
            s.raw.insert(octets);
            let h = mac.to_hex();
            s.hex.insert(h.as_bytes().try_into().expect("12 hex digits"));
            let colon = octets.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(":");
            s.separated.insert(colon.as_bytes().try_into().expect("17 chars"));
            s.separated.insert(colon.replace(':', "-").as_bytes().try_into().expect("17 chars"));
        }
        s.pepper_hex.copy_from_slice(PepperBytes::new(*sensor_pepper).to_hex().as_bytes());
        s
    }

    /// Kinds of leak found, deduplicated. Text forms match in either case.
    pub fn scan(&self, bytes: &[u8]) -> Vec<&'static str> {
        let lower = bytes.to_ascii_lowercase();
        let mut found = Vec::new();
        if bytes.windows(6).any(|w| self.raw.contains(w)) {
            found.push("raw MAC bytes");
        }
        if lower.windows(12).any(|w| self.hex.contains(w)) {
            found.push("hex MAC");
        }
        if lower.windows(17).any(|w| self.separated.contains(w)) {
            found.push("separated MAC");
        }
        if bytes.windows(16).any(|w| w == self.pepper_raw) {
            found.push("raw sensor pepper");
        }
        if lower.windows(32).any(|w| w == self.pepper_hex) {
            found.push("hex sensor pepper");
        }
        found
    }
}
