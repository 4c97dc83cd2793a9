//! JSON bodies exchanged between sensors, the pepper service and the
//! aggregator. None of these carries a MAC address or a sensor pepper.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anonymizer::{FrameIndex, ParseError, PepperBytes, SaIdentifier, ServerPepper};

pub const WINDOW_LEN: usize = 20;
pub const RSSI_MIN: i32 = -120;
pub const RSSI_MAX: i32 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("expected {expected} peppers, got {got}")]
    WindowLength { expected: usize, got: usize },
    #[error("pepper frames are not consecutive at position {0}")]
    NonConsecutive(usize),
    #[error("bad hex field: {0}")]
    Hex(#[from] ParseError),
    #[error("rssi {0} outside [-120, 0]")]
    Rssi(i32),
    #[error("invalid sensor id {0:?}")]
    SensorId(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepperEntry {
    pub frame: u64,
    pub pepper_hex: String,
}

/// Body of `GET /v1/peppers`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PepperWindowPayload {
    pub generated_at: u64,
    pub peppers: Vec<PepperEntry>,
}

impl PepperWindowPayload {
    /// Decodes and checks the 20-consecutive-frames shape.
    pub fn into_peppers(self) -> Result<Vec<ServerPepper>, WireError> {
        if self.peppers.len() != WINDOW_LEN {
            return Err(WireError::WindowLength { expected: WINDOW_LEN, got: self.peppers.len() });
        }
        let start = self.peppers[0].frame;
        self.peppers
            .iter()
            .enumerate()
            .map(|(i, e)| {
                if e.frame != start + i as u64 {
                    return Err(WireError::NonConsecutive(i));
                }
                Ok(ServerPepper { frame: FrameIndex(e.frame), bytes: PepperBytes::from_hex(&e.pepper_hex)? })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadRecord {
    pub frame: u64,
    pub id_hex: String,
    pub rssi: i32,
}

/// Body of `POST /v1/records`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UploadPayload {
    pub sensor_id: String,
    pub records: Vec<UploadRecord>,
}

/// A validated upload record.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidRecord {
    pub frame: FrameIndex,
    pub identifier: SaIdentifier,
    pub rssi: i32,
}

pub fn check_rssi(rssi: i32) -> Result<i32, WireError> {
    if (RSSI_MIN..=RSSI_MAX).contains(&rssi) {
        Ok(rssi)
    } else {
        Err(WireError::Rssi(rssi))
    }
}

/// Sensor ids are non-empty printable ASCII without whitespace, at most 64 bytes.
pub fn check_sensor_id(id: &str) -> Result<(), WireError> {
    let ok = !id.is_empty() && id.len() <= 64 && id.bytes().all(|b| b.is_ascii_graphic());
    if ok {
        Ok(())
    } else {
        Err(WireError::SensorId(id.to_string()))
    }
}

impl UploadPayload {
    pub fn parse(body: &[u8]) -> Result<Self, WireError> {
        serde_json::from_slice(body).map_err(|e| WireError::Json(e.to_string()))
    }

    pub fn validate(&self) -> Result<Vec<ValidRecord>, WireError> {
        check_sensor_id(&self.sensor_id)?;
        self.records
            .iter()
            .map(|r| {
                Ok(ValidRecord {
                    frame: FrameIndex(r.frame),
                    identifier: SaIdentifier::from_hex(&r.id_hex)?,
                    rssi: check_rssi(r.rssi)?,
                })
            })
            .collect()
    }
}

/// Body of `GET /v1/frames/<frame>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameStatsPayload {
    pub frame: u64,
    pub unique_ids: u64,
    pub total_records: u64,
    pub per_sensor: BTreeMap<String, u64>,
}
