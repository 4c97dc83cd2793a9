//! Sensor-side pipeline: probe record in, anonymized record out, batched
//! upload with a bounded retry queue.

use std::collections::{BTreeMap, VecDeque};
use std::future::Future;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use rand::Rng;
use serde::Deserialize;
use thiserror::Error;

use crate::anonymizer::{
    anonymize, build_global_pepper, frame_index, FrameIndex, MacAddress, ParseError, PepperBytes, SaIdentifier,
    SensorPepper, ServerPepper,
};
use crate::clock::Clock;
use crate::wire::{check_rssi, check_sensor_id, PepperWindowPayload, UploadPayload, UploadRecord, WireError};

#[derive(Debug, Error)]
pub enum AgentError {
    /// Carries only the failing field's name; input lines may contain MACs.
    #[error("malformed probe record line: bad {0}")]
    BadLine(&'static str),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("pepper fetch failed: {0}")]
    Fetch(TransportError),
    #[error("upload failed: {0}")]
    Upload(TransportError),
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid agent configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("http error: {0}")]
    Http(String),
    #[error("unexpected status {0}")]
    Status(u16),
    #[error("undecodable response: {0}")]
    Decode(String),
}

/// A captured probe request. Only lives until it is anonymized.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeRecord {
    pub timestamp: u64,
    pub rssi: i32,
    pub source_mac: MacAddress,
}

impl ProbeRecord {
    pub fn new(timestamp: u64, rssi: i32, source_mac: MacAddress) -> Result<Self, AgentError> {
        Ok(Self { timestamp, rssi: check_rssi(rssi)?, source_mac })
    }

    /// Parses `<unix_seconds> <rssi> <mac as 12 hex chars>`.
    pub fn parse_line(line: &str) -> Result<Self, AgentError> {
        let mut fields = line.split_whitespace();
        let (Some(ts), Some(rssi), Some(mac), None) = (fields.next(), fields.next(), fields.next(), fields.next())
        else {
            return Err(AgentError::BadLine("field count"));
        };
        if mac.len() != 12 {
            return Err(AgentError::BadLine("mac"));
        }
        let mac = mac.parse().map_err(|_| AgentError::BadLine("mac"))?;
        let timestamp = ts.parse().map_err(|_| AgentError::BadLine("timestamp"))?;
        let rssi = rssi.parse().map_err(|_| AgentError::BadLine("rssi"))?;
        Self::new(timestamp, rssi, mac)
    }
}

/// What leaves the sensor: frame, identifier, signal strength. No MAC bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonRecord {
    pub frame: FrameIndex,
    pub identifier: SaIdentifier,
    pub rssi: i32,
    pub sensor_id: Arc<str>,
}

impl AnonRecord {
    pub fn to_upload(&self) -> UploadRecord {
        UploadRecord { frame: self.frame.value(), id_hex: self.identifier.to_hex(), rssi: self.rssi }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dropped {
    MissingPepper(FrameIndex),
}

/// Server peppers the sensor currently holds, keyed by frame.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PepperCache {
    entries: BTreeMap<FrameIndex, PepperBytes>,
}

impl PepperCache {
    fn from_peppers(peppers: Vec<ServerPepper>, oldest_allowed: FrameIndex) -> Self {
        let entries =
            peppers.into_iter().filter(|p| p.frame >= oldest_allowed).map(|p| (p.frame, p.bytes)).collect();
        Self { entries }
    }

    pub fn get(&self, frame: FrameIndex) -> Option<ServerPepper> {
        self.entries.get(&frame).map(|b| ServerPepper { frame, bytes: b.clone() })
    }

    pub fn frames(&self) -> Vec<FrameIndex> {
        self.entries.keys().copied().collect()
    }

    pub fn oldest(&self) -> Option<FrameIndex> {
        self.entries.keys().next().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Fetches the current pepper window from the pepper service.
pub trait PepperSource {
    fn fetch_window(&self) -> impl Future<Output = Result<PepperWindowPayload, TransportError>> + Send;
}

/// Delivers a batch to the aggregator.
pub trait RecordSink {
    fn upload(&self, payload: &UploadPayload) -> impl Future<Output = Result<(), TransportError>> + Send;
}

fn transport(e: reqwest::Error) -> TransportError {
    TransportError::Http(e.to_string())
}

type BodyTap = Arc<dyn Fn(&[u8]) + Send + Sync>;

#[derive(Clone)]
pub struct HttpPepperClient {
    client: reqwest::Client,
    url: String,
    token: String,
    cluster: Option<String>,
    tap: Option<BodyTap>,
}

impl HttpPepperClient {
    pub fn new(base_url: &str, token: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!("{}/v1/peppers", base_url.trim_end_matches('/')),
            token: token.to_string(),
            cluster: None,
            tap: None,
        }
    }

    pub fn with_cluster(mut self, cluster: &str) -> Self {
        self.cluster = Some(cluster.to_string());
        self
    }

    /// Observes every successful response body as received.
    pub fn with_tap(mut self, tap: impl Fn(&[u8]) + Send + Sync + 'static) -> Self {
        self.tap = Some(Arc::new(tap));
        self
    }
}

impl PepperSource for HttpPepperClient {
    async fn fetch_window(&self) -> Result<PepperWindowPayload, TransportError> {
        let mut req = self.client.get(&self.url).bearer_auth(&self.token);
        if let Some(c) = &self.cluster {
            req = req.query(&[("cluster", c)]);
        }
        let resp = req.send().await.map_err(transport)?;
        if resp.status() != reqwest::StatusCode::OK {
            return Err(TransportError::Status(resp.status().as_u16()));
        }
        let body = resp.bytes().await.map_err(transport)?;
        if let Some(tap) = &self.tap {
            tap(&body);
        }
        serde_json::from_slice(&body).map_err(|e| TransportError::Decode(e.to_string()))
    }
}

#[derive(Clone)]
pub struct HttpRecordSink {
    client: reqwest::Client,
    url: String,
    token: String,
    tap: Option<BodyTap>,
}

impl HttpRecordSink {
    pub fn new(base_url: &str, token: &str) -> Self {
        Self {
            client: reqwest::Client::new(),
            url: format!("{}/v1/records", base_url.trim_end_matches('/')),
            token: token.to_string(),
            tap: None,
        }
    }

    /// Observes every request body exactly as sent.
    pub fn with_tap(mut self, tap: impl Fn(&[u8]) + Send + Sync + 'static) -> Self {
        self.tap = Some(Arc::new(tap));
        self
    }
}

impl RecordSink for HttpRecordSink {
    async fn upload(&self, payload: &UploadPayload) -> Result<(), TransportError> {
        let body = serde_json::to_vec(payload).map_err(|e| TransportError::Decode(e.to_string()))?;
        if let Some(tap) = &self.tap {
            tap(&body);
        }
        let resp = self
            .client
            .post(&self.url)
            .bearer_auth(&self.token)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body)
            .send()
            .await
            .map_err(transport)?;
        if resp.status().is_success() {
            Ok(())
        } else {
            Err(TransportError::Status(resp.status().as_u16()))
        }
    }
}

#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub sensor_id: String,
    pub queue_capacity: usize,
    pub refresh_every: Duration,
    pub refresh_jitter: Duration,
}

impl AgentConfig {
    pub fn new(sensor_id: &str) -> Self {
        Self {
            sensor_id: sensor_id.to_string(),
            queue_capacity: 100_000,
            refresh_every: Duration::from_secs(60),
            refresh_jitter: Duration::from_secs(5),
        }
    }
}

#[derive(Debug, Default)]
struct Metrics {
    anonymized: AtomicU64,
    dropped_missing_pepper: AtomicU64,
    dropped_overflow: AtomicU64,
    uploaded: AtomicU64,
    upload_failures: AtomicU64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AgentMetrics {
    pub anonymized: u64,
    pub dropped_missing_pepper: u64,
    pub dropped_overflow: u64,
    pub uploaded: u64,
    pub upload_failures: u64,
}

pub struct SensorAgent {
    config: AgentConfig,
    sensor_id: Arc<str>,
    sensor_pepper: SensorPepper,
    clock: Arc<dyn Clock>,
    cache: RwLock<Arc<PepperCache>>,
    queue: Mutex<VecDeque<AnonRecord>>,
    flushing: tokio::sync::Mutex<()>,
    metrics: Metrics,
}

impl SensorAgent {
    pub fn new(config: AgentConfig, sensor_pepper: SensorPepper, clock: Arc<dyn Clock>) -> Result<Self, AgentError> {
        check_sensor_id(&config.sensor_id)?;
        if config.queue_capacity == 0 {
            return Err(AgentError::Config("queue capacity must be positive".into()));
        }
        Ok(Self {
            sensor_id: Arc::from(config.sensor_id.as_str()),
            config,
            sensor_pepper,
            clock,
            cache: RwLock::new(Arc::new(PepperCache::default())),
            queue: Mutex::new(VecDeque::new()),
            flushing: tokio::sync::Mutex::new(()),
            metrics: Metrics::default(),
        })
    }

    pub fn sensor_id(&self) -> &str {
        &self.sensor_id
    }

    /// Snapshot of the cache after dropping frames older than the clock's.
    pub fn cache(&self) -> Arc<PepperCache> {
        self.purge_expired();
        self.cache.read().expect("cache lock poisoned").clone()
    }

    /// Removes peppers for frames before the current one.
    pub fn purge_expired(&self) {
        let now = self.clock.current_frame();
        let stale = { self.cache.read().expect("cache lock poisoned").oldest().is_some_and(|f| f < now) };
        if stale {
            let mut guard = self.cache.write().expect("cache lock poisoned");
            let kept = PepperCache {
                entries: guard.entries.iter().filter(|(f, _)| **f >= now).map(|(f, b)| (*f, b.clone())).collect(),
            };
            *guard = Arc::new(kept);
        }
    }

    /// Anonymizes without queueing.
    pub fn identify(&self, rec: &ProbeRecord) -> Result<AnonRecord, Dropped> {
        let frame = frame_index(rec.timestamp);
        let Some(server) = self.cache().get(frame) else {
            self.metrics.dropped_missing_pepper.fetch_add(1, Ordering::Relaxed);
            tracing::debug!(frame = frame.value(), sensor = %self.sensor_id, "no server pepper for frame; record dropped");
            return Err(Dropped::MissingPepper(frame));
        };
        let global = build_global_pepper(&server, &self.sensor_pepper);
        self.metrics.anonymized.fetch_add(1, Ordering::Relaxed);
        Ok(AnonRecord {
            frame,
            identifier: anonymize(&global, &rec.source_mac),
            rssi: rec.rssi,
            sensor_id: self.sensor_id.clone(),
        })
    }

    /// Anonymizes and queues for upload. The probe record (and its MAC) is
    /// consumed.
    pub fn ingest_probe(&self, rec: ProbeRecord) -> Result<AnonRecord, Dropped> {
        let anon = self.identify(&rec)?;
        let mut queue = self.queue.lock().expect("queue lock poisoned");
        queue.push_back(anon.clone());
        self.enforce_capacity(&mut queue);
        Ok(anon)
    }

    fn enforce_capacity(&self, queue: &mut VecDeque<AnonRecord>) {
        while queue.len() > self.config.queue_capacity {
            queue.pop_front();
            self.metrics.dropped_overflow.fetch_add(1, Ordering::Relaxed);
        }
    }

    /// Replaces the cache with a fetched window. Frames before the current
    /// one are never installed.
    pub fn install_window(&self, payload: PepperWindowPayload) -> Result<usize, AgentError> {
        let peppers = payload.into_peppers()?;
        let fresh = Arc::new(PepperCache::from_peppers(peppers, self.clock.current_frame()));
        let count = fresh.len();
        let previous = std::mem::replace(&mut *self.cache.write().expect("cache lock poisoned"), fresh);
        drop(previous);
        tracing::debug!(sensor = %self.sensor_id, frames = count, "pepper cache refreshed");
        Ok(count)
    }

    /// Fetches and installs a new window. On failure the old cache is kept.
    pub async fn refresh_peppers<S: PepperSource>(&self, source: &S) -> Result<usize, AgentError> {
        match source.fetch_window().await {
            Ok(payload) => self.install_window(payload),
            Err(e) => {
                tracing::warn!(sensor = %self.sensor_id, error = %e, "pepper refresh failed; keeping cache");
                Err(AgentError::Fetch(e))
            }
        }
    }

    /// Delay until the next refresh: the configured cadence plus uniform jitter.
    pub fn next_refresh_delay<R: Rng>(&self, rng: &mut R) -> Duration {
        let jitter = self.config.refresh_jitter.as_millis() as i64;
        let base = self.config.refresh_every.as_millis() as i64;
        let offset = if jitter > 0 { rng.gen_range(-jitter..=jitter) } else { 0 };
        Duration::from_millis((base + offset).max(0) as u64)
    }

    pub fn pending(&self) -> usize {
        self.queue.lock().expect("queue lock poisoned").len()
    }

    /// Uploads up to `max_batch` queued records. On failure the records go
    /// back to the head of the queue in their original order.
    pub async fn flush_batch<K: RecordSink>(&self, sink: &K, max_batch: usize) -> Result<usize, AgentError> {
        let _single_consumer = self.flushing.lock().await;
        let batch: Vec<AnonRecord> = {
            let mut queue = self.queue.lock().expect("queue lock poisoned");
            let take = max_batch.min(queue.len());
            queue.drain(..take).collect()
        };
        if batch.is_empty() {
            return Ok(0);
        }
        let payload = UploadPayload {
            sensor_id: self.sensor_id.to_string(),
            records: batch.iter().map(AnonRecord::to_upload).collect(),
        };
        match sink.upload(&payload).await {
            Ok(()) => {
                self.metrics.uploaded.fetch_add(batch.len() as u64, Ordering::Relaxed);
                Ok(batch.len())
            }
            Err(e) => {
                let mut queue = self.queue.lock().expect("queue lock poisoned");
                for rec in batch.into_iter().rev() {
                    queue.push_front(rec);
                }
                self.enforce_capacity(&mut queue);
                self.metrics.upload_failures.fetch_add(1, Ordering::Relaxed);
                tracing::warn!(sensor = %self.sensor_id, error = %e, "upload failed; records kept for retry");
                Err(AgentError::Upload(e))
            }
        }
    }

    /// Flushes until the queue is empty or an upload fails.
    pub async fn flush_all<K: RecordSink>(&self, sink: &K, max_batch: usize) -> Result<usize, AgentError> {
        let mut sent = 0;
        while self.pending() > 0 {
            sent += self.flush_batch(sink, max_batch).await?;
        }
        Ok(sent)
    }

    pub fn metrics(&self) -> AgentMetrics {
        AgentMetrics {
            anonymized: self.metrics.anonymized.load(Ordering::Relaxed),
            dropped_missing_pepper: self.metrics.dropped_missing_pepper.load(Ordering::Relaxed),
            dropped_overflow: self.metrics.dropped_overflow.load(Ordering::Relaxed),
            uploaded: self.metrics.uploaded.load(Ordering::Relaxed),
            upload_failures: self.metrics.upload_failures.load(Ordering::Relaxed),
        }
    }
}

/// Agent deployment settings (TOML).
#[derive(Debug, Clone, Deserialize)]
pub struct AgentSettings {
    pub sensor_id: String,
    pub pepper_url: String,
    pub aggregator_url: String,
    pub token: String,
    pub sensor_pepper_file: String,
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_refresh")]
    pub refresh_seconds: u64,
}

fn default_batch() -> usize {
    500
}

fn default_refresh() -> u64 {
    60
}

impl AgentSettings {
    pub fn from_toml(text: &str) -> Result<Self, AgentError> {
        toml::from_str(text).map_err(|e| AgentError::Config(e.to_string()))
    }

    pub fn agent_config(&self) -> AgentConfig {
        AgentConfig { refresh_every: Duration::from_secs(self.refresh_seconds), ..AgentConfig::new(&self.sensor_id) }
    }
}

/// Reads a sensor pepper stored as 32 hex digits.
pub fn load_sensor_pepper(path: &Path) -> Result<SensorPepper, AgentError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| AgentError::Io { path: path.display().to_string(), source })?;
    Ok(SensorPepper::from_hex(&text.to_ascii_lowercase())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::wire::{PepperEntry, WINDOW_LEN};
    use rand::SeedableRng;
    use std::sync::atomic::AtomicBool;

    fn window(start: u64) -> PepperWindowPayload {
        PepperWindowPayload {
            generated_at: start * 60,
            peppers: (0..WINDOW_LEN as u64)
                .map(|i| PepperEntry { frame: start + i, pepper_hex: format!("{:032x}", (start + i) * 7919) })
                .collect(),
        }
    }

    fn agent(id: &str, clock: Arc<ManualClock>) -> SensorAgent {
        SensorAgent::new(AgentConfig::new(id), SensorPepper::new([0x5a; 16]), clock).unwrap()
    }

    fn mac(last: u8) -> MacAddress {
        MacAddress::new([0x02, 0, 0, 0, 0, last])
    }

    struct FixedSource(Mutex<Option<PepperWindowPayload>>);

    impl PepperSource for FixedSource {
        async fn fetch_window(&self) -> Result<PepperWindowPayload, TransportError> {
            self.0.lock().unwrap().clone().ok_or(TransportError::Status(503))
        }
    }

    #[derive(Default)]
    struct MemorySink {
        fail: AtomicBool,
        batches: Mutex<Vec<UploadPayload>>,
    }

    impl RecordSink for MemorySink {
        async fn upload(&self, payload: &UploadPayload) -> Result<(), TransportError> {
            if self.fail.load(Ordering::SeqCst) {
                return Err(TransportError::Status(500));
            }
            self.batches.lock().unwrap().push(payload.clone());
            Ok(())
        }
    }

    #[test]
    fn parses_record_lines() {
        let rec = ProbeRecord::parse_line("1700000000 -67 a45e60010203").unwrap();
        assert_eq!(rec.timestamp, 1_700_000_000);
        assert_eq!(rec.rssi, -67);
        assert_eq!(rec.source_mac.to_hex(), "a45e60010203");
        assert!(ProbeRecord::parse_line("1700000000 -67").is_err());
        assert!(ProbeRecord::parse_line("1700000000 -67 a4:5e:60:01:02:03").is_err());
        assert!(ProbeRecord::parse_line("1700000000 12 a45e60010203").is_err());
        assert!(ProbeRecord::parse_line("x -67 a45e60010203").is_err());
        let err = ProbeRecord::parse_line("x -67 a45e6001020z").unwrap_err().to_string();
        assert!(!err.contains("a45e"), "{err}");
    }

    #[test]
    fn ingest_uses_frame_pepper() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock.clone());
        a.install_window(window(10)).unwrap();
        let rec = ProbeRecord::new(10 * 60 + 30, -50, mac(1)).unwrap();
        let anon = a.ingest_probe(rec.clone()).unwrap();
        assert_eq!(anon.frame, FrameIndex(10));
        assert_eq!(a.pending(), 1);

        let b = agent("s2", clock);
        b.install_window(window(10)).unwrap();
        assert_eq!(b.identify(&rec).unwrap().identifier, anon.identifier);
    }

    #[test]
    fn missing_pepper_drops_record() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock);
        let rec = ProbeRecord::new(600, -50, mac(1)).unwrap();
        assert_eq!(a.ingest_probe(rec.clone()), Err(Dropped::MissingPepper(FrameIndex(10))));
        a.install_window(window(10)).unwrap();
        let far = ProbeRecord::new(60 * 40, -50, mac(1)).unwrap();
        assert_eq!(a.ingest_probe(far), Err(Dropped::MissingPepper(FrameIndex(40))));
        assert_eq!(a.metrics().dropped_missing_pepper, 2);
        assert_eq!(a.pending(), 0);
    }

    #[test]
    fn frame_boundary_switches_pepper() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock);
        a.install_window(window(10)).unwrap();
        let before = a.identify(&ProbeRecord::new(11 * 60 - 1, -50, mac(1)).unwrap()).unwrap();
        let after = a.identify(&ProbeRecord::new(11 * 60, -50, mac(1)).unwrap()).unwrap();
        assert_eq!((before.frame, after.frame), (FrameIndex(10), FrameIndex(11)));
        assert_ne!(before.identifier, after.identifier);
    }

    #[tokio::test]
    async fn refresh_replaces_and_purges() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock.clone());
        let source = FixedSource(Mutex::new(Some(window(9))));
        a.refresh_peppers(&source).await.unwrap();
        // frame 9 is already in the past at t = 600 s
        assert_eq!(a.cache().frames().first(), Some(&FrameIndex(10)));

        *source.0.lock().unwrap() = Some(window(10));
        a.refresh_peppers(&source).await.unwrap();
        let frames = a.cache().frames();
        assert_eq!(frames.len(), WINDOW_LEN);
        assert_eq!(frames[0], FrameIndex(10));
        assert_eq!(frames[WINDOW_LEN - 1], FrameIndex(29));

        *source.0.lock().unwrap() = None;
        assert!(a.refresh_peppers(&source).await.is_err());
        assert_eq!(a.cache().frames(), frames);

        clock.set_millis(11 * 60 * 1000);
        assert!(a.cache().frames().iter().all(|f| *f >= FrameIndex(11)));
        assert!(a.cache().get(FrameIndex(10)).is_none());
    }

    #[tokio::test]
    async fn flush_and_retry() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock);
        a.install_window(window(10)).unwrap();
        for i in 0..3 {
            a.ingest_probe(ProbeRecord::new(600, -40, mac(i)).unwrap()).unwrap();
        }
        let sink = MemorySink::default();
        sink.fail.store(true, Ordering::SeqCst);
        assert!(a.flush_batch(&sink, 10).await.is_err());
        assert_eq!(a.pending(), 3);

        sink.fail.store(false, Ordering::SeqCst);
        assert_eq!(a.flush_batch(&sink, 10).await.unwrap(), 3);
        assert_eq!(a.pending(), 0);
        let batches = sink.batches.lock().unwrap();
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].records.len(), 3);
        assert_eq!(batches[0].sensor_id, "s1");
    }

    #[tokio::test]
    async fn failed_flush_preserves_order() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let a = agent("s1", clock);
        a.install_window(window(10)).unwrap();
        let ids: Vec<_> =
            (0..5).map(|i| a.ingest_probe(ProbeRecord::new(600, -40, mac(i)).unwrap()).unwrap().identifier).collect();
        let sink = MemorySink::default();
        sink.fail.store(true, Ordering::SeqCst);
        let _ = a.flush_batch(&sink, 2).await;
        sink.fail.store(false, Ordering::SeqCst);
        a.flush_all(&sink, 2).await.unwrap();
        let sent: Vec<_> = sink
            .batches
            .lock()
            .unwrap()
            .iter()
            .flat_map(|b| b.records.iter().map(|r| SaIdentifier::from_hex(&r.id_hex).unwrap()))
            .collect();
        assert_eq!(sent, ids);
    }

    #[test]
    fn bounded_queue_drops_oldest() {
        let clock = Arc::new(ManualClock::at_seconds(600));
        let config = AgentConfig { queue_capacity: 2, ..AgentConfig::new("s1") };
        let a = SensorAgent::new(config, SensorPepper::new([1; 16]), clock).unwrap();
        a.install_window(window(10)).unwrap();
        for i in 0..3 {
            a.ingest_probe(ProbeRecord::new(600, -40, mac(i)).unwrap()).unwrap();
        }
        assert_eq!(a.pending(), 2);
        assert_eq!(a.metrics().dropped_overflow, 1);
    }

    #[test]
    fn refresh_delay_has_bounded_jitter() {
        let a = agent("s1", Arc::new(ManualClock::at_seconds(0)));
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = a.next_refresh_delay(&mut rng);
            assert!(d >= Duration::from_secs(55) && d <= Duration::from_secs(65));
        }
    }

    #[test]
    fn settings_and_pepper_file() {
        let s = AgentSettings::from_toml(
            "sensor_id = \"s1\"\npepper_url = \"http://a\"\naggregator_url = \"http://b\"\ntoken = \"t\"\nsensor_pepper_file = \"/x\"\n",
        )
        .unwrap();
        assert_eq!(s.batch_size, 500);
        assert_eq!(s.agent_config().refresh_every, Duration::from_secs(60));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pepper");
        std::fs::write(&path, format!("{}\n", "AB".repeat(16))).unwrap();
        assert_eq!(load_sensor_pepper(&path).unwrap(), SensorPepper::new([0xab; 16]));
        std::fs::write(&path, "abcd").unwrap();
        assert!(load_sensor_pepper(&path).is_err());
    }

    #[test]
    fn rejects_bad_sensor_id() {
        let clock = Arc::new(ManualClock::at_seconds(0));
        assert!(SensorAgent::new(AgentConfig::new("has space"), SensorPepper::new([0; 16]), clock).is_err());
    }
}
