//! Long-running processes: pepper service, aggregator and sensor agent.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use probeanon_pipeline::aggregator::{self, Aggregator, AggregatorApi, AggregatorConfig};
use probeanon_pipeline::http::spawn_server;
use probeanon_pipeline::pepper_service::{self, spawn_rotator, PepperApi, PepperService, ServiceConfig};
use probeanon_pipeline::sensor_agent::{
    load_sensor_pepper, AgentSettings, HttpPepperClient, HttpRecordSink, ProbeRecord, SensorAgent,
};
use probeanon_pipeline::{Clock, SystemClock};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tokio::io::{AsyncBufReadExt, BufReader};

async fn until_shutdown(task: tokio::task::JoinHandle<()>) -> Result<()> {
    tokio::select! {
        r = task => r.context("server task failed"),
        r = tokio::signal::ctrl_c() => r.context("signal handler failed"),
    }
}

pub async fn pepper_server(config: ServiceConfig) -> Result<()> {
    let clock: Arc<dyn Clock> = Arc::new(SystemClock);
    let service = Arc::new(PepperService::with_clusters(config.entropy_mode()?.source(), config.clusters.clone()));
    service.rotate(clock.current_frame())?;
    let _rotator = spawn_rotator(service.clone(), clock.clone(), Duration::from_secs(1));
    let api = PepperApi { service, clock, token: config.token.as_str().into() };
    let (addr, task) = spawn_server(config.listen, pepper_service::router(api)).await?;
    tracing::info!(%addr, "pepper service listening");
    until_shutdown(task).await
}

pub async fn aggregator_server(
    listen: SocketAddr,
    token: String,
    snapshot_dir: Option<PathBuf>,
    retention_frames: u64,
) -> Result<()> {
    let aggregator = Arc::new(Aggregator::new(AggregatorConfig {
        retention_frames,
        snapshot_dir,
        ..AggregatorConfig::default()
    })?);
    let (addr, task) =
        spawn_server(listen, aggregator::router(AggregatorApi { aggregator, token: token.into() })).await?;
    tracing::info!(%addr, "aggregator listening");
    until_shutdown(task).await
}

/// Reads `<unix_seconds> <rssi> <mac>` lines from stdin until EOF, refreshing
/// peppers on a jittered cadence and uploading once per second.
pub async fn run_agent(settings: AgentSettings) -> Result<()> {
    let pepper = load_sensor_pepper(std::path::Path::new(&settings.sensor_pepper_file))?;
    let agent = Arc::new(SensorAgent::new(settings.agent_config(), pepper, Arc::new(SystemClock))?);
    let mut source = HttpPepperClient::new(&settings.pepper_url, &settings.token);
    if let Some(c) = &settings.cluster {
        source = source.with_cluster(c);
    }
    let sink = HttpRecordSink::new(&settings.aggregator_url, &settings.token);
    if let Err(e) = agent.refresh_peppers(&source).await {
        tracing::warn!(error = %e, "initial pepper fetch failed");
    }

    let refresher = {
        let agent = agent.clone();
        tokio::spawn(async move {
            let mut rng = ChaCha8Rng::from_entropy();
            loop {
                tokio::time::sleep(agent.next_refresh_delay(&mut rng)).await;
                let _ = agent.refresh_peppers(&source).await;
            }
        })
    };
    let uploader = {
        let (agent, sink) = (agent.clone(), sink.clone());
        let batch = settings.batch_size;
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(Duration::from_secs(1));
            loop {
                tick.tick().await;
                let _ = agent.flush_all(&sink, batch).await;
            }
        })
    };

    let mut lines = BufReader::new(tokio::io::stdin()).lines();
    while let Some(line) = lines.next_line().await? {
        if line.trim().is_empty() {
            continue;
        }
        match ProbeRecord::parse_line(&line) {
            Ok(rec) => {
                let _ = agent.ingest_probe(rec);
            }
            Err(e) => tracing::warn!(error = %e, "skipping malformed input line"),
        }
    }
    refresher.abort();
    uploader.abort();
    agent.flush_all(&sink, settings.batch_size).await?;
    Ok(())
}
