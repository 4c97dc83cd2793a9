//! Central ingestion of anonymized records and per-frame counting.

use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use thiserror::Error;

use crate::anonymizer::{FrameIndex, SaIdentifier};
use crate::http::bearer_matches;
use crate::wire::{FrameStatsPayload, UploadPayload, ValidRecord, WireError};

pub const DEFAULT_RETENTION_FRAMES: u64 = 120;

#[derive(Debug, Error)]
pub enum AggregatorError {
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("dedup width must be within 8..=64 bits, got {0}")]
    DedupBits(u32),
    #[error("snapshot write failed: {0}")]
    Snapshot(#[from] std::io::Error),
}

#[derive(Debug, Clone)]
pub struct AggregatorConfig {
    /// Frames older than `newest - retention_frames` are forgotten.
    pub retention_frames: u64,
    /// Identifier bits used for uniqueness. Below 64 only in tests that need
    /// observable collisions.
    pub dedup_bits: u32,
    /// Directory receiving one append-only `<frame>.log` per frame.
    pub snapshot_dir: Option<PathBuf>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self { retention_frames: DEFAULT_RETENTION_FRAMES, dedup_bits: 64, snapshot_dir: None }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameStats {
    pub frame: FrameIndex,
    pub unique_ids: u64,
    pub total_records: u64,
    pub per_sensor_counts: BTreeMap<String, u64>,
}

impl FrameStats {
    pub fn to_payload(&self) -> FrameStatsPayload {
        FrameStatsPayload {
            frame: self.frame.value(),
            unique_ids: self.unique_ids,
            total_records: self.total_records,
            per_sensor: self.per_sensor_counts.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct FrameState {
    ids: HashSet<u64>,
    total: u64,
    per_sensor: BTreeMap<String, u64>,
}

#[derive(Debug, Default)]
struct Frames {
    by_frame: BTreeMap<FrameIndex, FrameState>,
    newest: Option<FrameIndex>,
}

pub struct Aggregator {
    config: AggregatorConfig,
    frames: Mutex<Frames>,
    snapshots: Mutex<BTreeMap<FrameIndex, File>>,
}

impl Aggregator {
    pub fn new(config: AggregatorConfig) -> Result<Self, AggregatorError> {
        if !(8..=64).contains(&config.dedup_bits) {
            return Err(AggregatorError::DedupBits(config.dedup_bits));
        }
        if let Some(dir) = &config.snapshot_dir {
            std::fs::create_dir_all(dir)?;
        }
        Ok(Self { config, frames: Mutex::new(Frames::default()), snapshots: Mutex::new(BTreeMap::new()) })
    }

    fn dedup_key(&self, id: SaIdentifier) -> u64 {
        if self.config.dedup_bits == 64 {
            id.0
        } else {
            id.0 >> (64 - self.config.dedup_bits)
        }
    }

    /// Validates and applies one upload. Invalid payloads change nothing.
    pub fn accept_batch(&self, payload: &UploadPayload) -> Result<usize, AggregatorError> {
        let records = payload.validate()?;
        if records.is_empty() {
            return Ok(0);
        }
        if self.config.snapshot_dir.is_some() {
            self.append_snapshot(&payload.sensor_id, &records)?;
        }
        let mut frames = self.frames.lock().expect("frame lock poisoned");
        for rec in &records {
            let state = frames.by_frame.entry(rec.frame).or_default();
            state.ids.insert(self.dedup_key(rec.identifier));
            state.total += 1;
            *state.per_sensor.entry(payload.sensor_id.clone()).or_default() += 1;
        }
        let batch_newest = records.iter().map(|r| r.frame).max();
        frames.newest = frames.newest.max(batch_newest);
        if let Some(newest) = frames.newest {
            let horizon = FrameIndex(newest.value().saturating_sub(self.config.retention_frames));
            frames.by_frame = frames.by_frame.split_off(&horizon);
            self.snapshots.lock().expect("snapshot lock poisoned").retain(|f, _| *f >= horizon);
        }
        tracing::debug!(sensor = %payload.sensor_id, records = records.len(), "batch accepted");
        Ok(records.len())
    }

    fn append_snapshot(&self, sensor_id: &str, records: &[ValidRecord]) -> Result<(), AggregatorError> {
        let dir = self.config.snapshot_dir.as_ref().expect("snapshot dir configured");
        let mut files = self.snapshots.lock().expect("snapshot lock poisoned");
        for rec in records {
            let file = match files.entry(rec.frame) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => e.insert(
                    OpenOptions::new().create(true).append(true).open(dir.join(format!("{}.log", rec.frame)))?,
                ),
            };
            writeln!(file, "{} {} {} {}", rec.frame, rec.identifier.to_hex(), sensor_id, rec.rssi)?;
        }
        Ok(())
    }

    /// Current counts for `frame`; zeros for frames never seen or expired.
    pub fn frame_stats(&self, frame: FrameIndex) -> FrameStats {
        let frames = self.frames.lock().expect("frame lock poisoned");
        match frames.by_frame.get(&frame) {
            None => FrameStats { frame, ..FrameStats::default() },
            Some(s) => FrameStats {
                frame,
                unique_ids: s.ids.len() as u64,
                total_records: s.total,
                per_sensor_counts: s.per_sensor.clone(),
            },
        }
    }

    pub fn frames(&self) -> Vec<FrameIndex> {
        self.frames.lock().expect("frame lock poisoned").by_frame.keys().copied().collect()
    }
}

#[derive(Clone)]
pub struct AggregatorApi {
    pub aggregator: Arc<Aggregator>,
    pub token: Arc<str>,
}

async fn post_records(State(api): State<AggregatorApi>, headers: HeaderMap, body: Bytes) -> Response {
    if !bearer_matches(&headers, &api.token) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let payload = match UploadPayload::parse(&body) {
        Ok(p) => p,
        Err(e) => return (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    };
    match api.aggregator.accept_batch(&payload) {
        Ok(_) => StatusCode::NO_CONTENT.into_response(),
        Err(AggregatorError::Wire(e)) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
        Err(e) => {
            tracing::error!(error = %e, "failed to store batch");
            StatusCode::INTERNAL_SERVER_ERROR.into_response()
        }
    }
}

async fn get_frame(State(api): State<AggregatorApi>, Path(frame): Path<u64>) -> Json<FrameStatsPayload> {
    Json(api.aggregator.frame_stats(FrameIndex(frame)).to_payload())
}

/// `POST /v1/records` and `GET /v1/frames/<frame>`.
pub fn router(api: AggregatorApi) -> Router {
    Router::new()
        .route("/v1/records", post(post_records))
        .route("/v1/frames/:frame", get(get_frame))
        .with_state(api)
}
