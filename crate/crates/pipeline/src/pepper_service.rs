//! Central service holding the rolling window of per-frame server peppers.
//!
//! The window always covers `[now, now + 19]`. Rotation keeps peppers that are
//! still inside the new window, draws the missing ones, and drops the rest;
//! pepper buffers are wiped when their last holder releases them. Readers get
//! an `Arc` snapshot of a whole rotation epoch, so they never observe a mix of
//! two windows.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use rand::rngs::OsRng;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Deserialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::task::JoinHandle;

use crate::anonymizer::{FrameIndex, ServerPepper, PEPPER_LEN};
use crate::clock::Clock;
use crate::http::bearer_matches;
use crate::wire::{PepperEntry, PepperWindowPayload, WINDOW_LEN};

pub const DEFAULT_CLUSTER: &str = "default";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ServiceError {
    #[error("entropy source failed: {0}")]
    Entropy(String),
    #[error("pepper service has not rotated yet")]
    Uninitialized,
    #[error("unknown cluster {0:?}")]
    UnknownCluster(String),
    #[error("rotation to frame {requested} would go back from frame {current}")]
    StaleRotation { requested: FrameIndex, current: FrameIndex },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Where fresh server peppers come from.
pub trait EntropySource: Send {
    fn server_pepper(&mut self, cluster: &str, frame: FrameIndex) -> Result<[u8; PEPPER_LEN], ServiceError>;
}

/// Operating-system randomness.
#[derive(Debug, Default)]
pub struct OsEntropy;

impl EntropySource for OsEntropy {
    fn server_pepper(&mut self, _cluster: &str, _frame: FrameIndex) -> Result<[u8; PEPPER_LEN], ServiceError> {
        let mut out = [0u8; PEPPER_LEN];
        OsRng.try_fill_bytes(&mut out).map_err(|e| ServiceError::Entropy(e.to_string()))?;
        Ok(out)
    }
}

/// Simulation-only source: the pepper of `(cluster, frame)` is a pure function
/// of the seed, independent of the order in which frames are requested.
#[derive(Debug, Clone)]
pub struct SeededEntropy {
    seed: u64,
}

impl SeededEntropy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl EntropySource for SeededEntropy {
    fn server_pepper(&mut self, cluster: &str, frame: FrameIndex) -> Result<[u8; PEPPER_LEN], ServiceError> {
        let key: [u8; 32] = Sha256::new()
            .chain_update(self.seed.to_le_bytes())
            .chain_update(cluster.as_bytes())
            .finalize()
            .into();
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(frame.value());
        let mut out = [0u8; PEPPER_LEN];
        rng.fill_bytes(&mut out);
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntropyMode {
    OsRandom,
    SeededTest(u64),
}

impl EntropyMode {
    pub fn source(&self) -> Box<dyn EntropySource> {
        match self {
            EntropyMode::OsRandom => Box::new(OsEntropy),
            EntropyMode::SeededTest(seed) => Box::new(SeededEntropy::new(*seed)),
        }
    }
}

/// `os` or `seed:<u64>`.
impl FromStr for EntropyMode {
    type Err = ServiceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "os" => Ok(EntropyMode::OsRandom),
            Some(("seed", v)) => v
                .parse()
                .map(EntropyMode::SeededTest)
                .map_err(|_| ServiceError::Config(format!("bad seed {v:?}"))),
            _ => Err(ServiceError::Config(format!("unknown entropy mode {s:?}"))),
        }
    }
}

/// Exactly [`WINDOW_LEN`] peppers for consecutive frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PepperWindow {
    peppers: Vec<ServerPepper>,
}

impl PepperWindow {
    fn new(peppers: Vec<ServerPepper>) -> Self {
        debug_assert_eq!(peppers.len(), WINDOW_LEN);
        debug_assert!(peppers.windows(2).all(|w| w[1].frame == w[0].frame.next()));
        Self { peppers }
    }

    pub fn start(&self) -> FrameIndex {
        self.peppers[0].frame
    }

    pub fn peppers(&self) -> &[ServerPepper] {
        &self.peppers
    }

    pub fn get(&self, frame: FrameIndex) -> Option<&ServerPepper> {
        let offset = frame.value().checked_sub(self.start().value())?;
        self.peppers.get(offset as usize)
    }

    pub fn to_payload(&self, generated_at: u64) -> PepperWindowPayload {
        PepperWindowPayload {
            generated_at,
            peppers: self
                .peppers
                .iter()
                .map(|p| PepperEntry { frame: p.frame.value(), pepper_hex: p.bytes.to_hex() })
                .collect(),
        }
    }
}

struct Epoch {
    frame: FrameIndex,
    windows: BTreeMap<String, Arc<PepperWindow>>,
}

pub struct PepperService {
    clusters: Vec<String>,
    // Held for the whole rotation, so rotations are serialized.
    entropy: Mutex<Box<dyn EntropySource>>,
    current: RwLock<Option<Arc<Epoch>>>,
}

impl PepperService {
    pub fn new(entropy: Box<dyn EntropySource>) -> Self {
        Self::with_clusters(entropy, vec![DEFAULT_CLUSTER.to_string()])
    }

    pub fn with_clusters(entropy: Box<dyn EntropySource>, clusters: Vec<String>) -> Self {
        Self { clusters, entropy: Mutex::new(entropy), current: RwLock::new(None) }
    }

    pub fn clusters(&self) -> &[String] {
        &self.clusters
    }

    fn epoch(&self) -> Option<Arc<Epoch>> {
        self.current.read().expect("epoch lock poisoned").clone()
    }

    pub fn current_frame(&self) -> Option<FrameIndex> {
        self.epoch().map(|e| e.frame)
    }

    /// Slides every cluster's window to `[now, now + 19]`. On entropy failure
    /// the previous window stays published.
    pub fn rotate(&self, now: FrameIndex) -> Result<(), ServiceError> {
        let mut entropy = self.entropy.lock().expect("entropy lock poisoned");
        let previous = self.epoch();
        if let Some(prev) = &previous {
            if now == prev.frame {
                return Ok(());
            }
            if now < prev.frame {
                return Err(ServiceError::StaleRotation { requested: now, current: prev.frame });
            }
        }
        let mut windows = BTreeMap::new();
        for cluster in &self.clusters {
            let old = previous.as_ref().and_then(|p| p.windows.get(cluster));
            let mut peppers = Vec::with_capacity(WINDOW_LEN);
            for offset in 0..WINDOW_LEN as u64 {
                let frame = FrameIndex(now.value() + offset);
                let pepper = match old.and_then(|w| w.get(frame)) {
                    Some(kept) => kept.clone(),
                    None => ServerPepper::new(frame, entropy.server_pepper(cluster, frame)?),
                };
                peppers.push(pepper);
            }
            windows.insert(cluster.clone(), Arc::new(PepperWindow::new(peppers)));
        }
        *self.current.write().expect("epoch lock poisoned") = Some(Arc::new(Epoch { frame: now, windows }));
        drop(previous);
        tracing::info!(frame = now.value(), "rotated server pepper window");
        Ok(())
    }

    pub fn window(&self, cluster: &str) -> Result<Arc<PepperWindow>, ServiceError> {
        let epoch = self.epoch().ok_or(ServiceError::Uninitialized)?;
        epoch.windows.get(cluster).cloned().ok_or_else(|| ServiceError::UnknownCluster(cluster.to_string()))
    }

    /// Pepper for one frame; `None` once the frame has left the window.
    pub fn pepper(&self, cluster: &str, frame: FrameIndex) -> Result<Option<ServerPepper>, ServiceError> {
        Ok(self.window(cluster)?.get(frame).cloned())
    }
}

#[derive(Clone)]
pub struct PepperApi {
    pub service: Arc<PepperService>,
    pub clock: Arc<dyn Clock>,
    pub token: Arc<str>,
}

#[derive(Debug, Deserialize)]
struct ClusterQuery {
    cluster: Option<String>,
}

async fn get_peppers(State(api): State<PepperApi>, headers: HeaderMap, Query(q): Query<ClusterQuery>) -> Response {
    if !bearer_matches(&headers, &api.token) {
        return StatusCode::UNAUTHORIZED.into_response();
    }
    let now = api.clock.now_seconds();
    let frame = api.clock.current_frame();
    match api.service.current_frame() {
        None => return StatusCode::SERVICE_UNAVAILABLE.into_response(),
        Some(current) if current < frame => {
            if let Err(e) = api.service.rotate(frame) {
                tracing::error!(error = %e, "catch-up rotation failed");
                return StatusCode::SERVICE_UNAVAILABLE.into_response();
            }
        }
        Some(_) => {}
    }
    let cluster = q.cluster.as_deref().unwrap_or(DEFAULT_CLUSTER);
    match api.service.window(cluster) {
        Ok(window) => Json(window.to_payload(now)).into_response(),
        Err(ServiceError::UnknownCluster(_)) => StatusCode::NOT_FOUND.into_response(),
        Err(_) => StatusCode::SERVICE_UNAVAILABLE.into_response(),
    }
}

/// `GET /v1/peppers[?cluster=ID]`.
pub fn router(api: PepperApi) -> Router {
    Router::new().route("/v1/peppers", get(get_peppers)).with_state(api)
}

/// Rotates to the clock's current frame every `tick`.
pub fn spawn_rotator(service: Arc<PepperService>, clock: Arc<dyn Clock>, tick: Duration) -> JoinHandle<()> {
    tokio::spawn(async move {
        let mut interval = tokio::time::interval(tick);
        loop {
            interval.tick().await;
            if let Err(e) = service.rotate(clock.current_frame()) {
                tracing::warn!(error = %e, "scheduled rotation failed");
            }
        }
    })
}

/// Deployment settings, read from `PEPPER_*` environment variables or a TOML
/// file with the same keys in lowercase.
#[derive(Debug, Clone, Deserialize)]
pub struct ServiceConfig {
    pub listen: SocketAddr,
    pub token: String,
    #[serde(default = "default_entropy")]
    pub entropy: String,
    #[serde(default = "default_clusters")]
    pub clusters: Vec<String>,
}

fn default_entropy() -> String {
    "os".to_string()
}

fn default_clusters() -> Vec<String> {
    vec![DEFAULT_CLUSTER.to_string()]
}

impl ServiceConfig {
    pub fn from_toml(text: &str) -> Result<Self, ServiceError> {
        toml::from_str(text).map_err(|e| ServiceError::Config(e.to_string()))
    }

    pub fn from_env() -> Result<Self, ServiceError> {
        let var = |k: &str| std::env::var(k).map_err(|_| ServiceError::Config(format!("{k} is not set")));
        Ok(Self {
            listen: var("PEPPER_LISTEN")?.parse().map_err(|e| ServiceError::Config(format!("PEPPER_LISTEN: {e}")))?,
            token: var("PEPPER_TOKEN")?,
            entropy: std::env::var("PEPPER_ENTROPY").unwrap_or_else(|_| default_entropy()),
            clusters: std::env::var("PEPPER_CLUSTERS")
                .map(|v| v.split(',').map(|c| c.trim().to_string()).filter(|c| !c.is_empty()).collect())
                .unwrap_or_else(|_| default_clusters()),
        })
    }

    pub fn entropy_mode(&self) -> Result<EntropyMode, ServiceError> {
        self.entropy.parse()
    }
}
