use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use probeanon_cli::levelset::{self, GridSpec};
use probeanon_cli::numbers::{parse_count, parse_inserts};
use probeanon_cli::rate::{cmd_rate, cmd_size, MethodArg};
use probeanon_cli::simulation::{run_simulation, SimulationConfig};
use probeanon_cli::verify::{self, Fault, VerifyOptions};
use probeanon_cli::serve;
use probeanon_pipeline::pepper_service::ServiceConfig;
use probeanon_pipeline::sensor_agent::AgentSettings;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "probeanon", version, about = "Collision-rate tooling and probe-request anonymization pipeline")]
struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expected collision rate for n identifiers over m buckets.
    Rate {
        /// Inserts, e.g. 1e7.
        #[arg(long)]
        n: String,
        /// Buckets, e.g. 2^64.
        #[arg(long)]
        m: String,
        #[arg(long, value_enum, default_value = "auto")]
        method: MethodArg,
        /// Series order K.
        #[arg(long, default_value_t = 8)]
        k: u32,
    },
    /// Smallest power-of-two bucket count keeping the certified rate below a target.
    Size {
        #[arg(long)]
        n: String,
        #[arg(long)]
        target: f64,
    },
    /// Writes a CSV grid of log10 collision rates.
    Levelset {
        #[arg(long, default_value = "levelset.csv")]
        out: PathBuf,
        #[arg(long, default_value = "1e2")]
        n_min: String,
        #[arg(long, default_value = "1e8")]
        n_max: String,
        #[arg(long, default_value_t = 50)]
        n_points: usize,
        #[arg(long, default_value_t = 10)]
        log2_m_min: u32,
        #[arg(long, default_value_t = 64)]
        log2_m_max: u32,
    },
    /// Runs the estimator self-checks; exits non-zero on any failure.
    Verify {
        #[arg(long, default_value_t = VerifyOptions::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = 1000)]
        trials: u64,
        /// Deliberately break an estimator: series-sign or closed-form-buckets.
        #[arg(long)]
        inject_fault: Option<Fault>,
    },
    /// Runs pepper service, aggregator and sensors in-process over loopback HTTP.
    Simulate {
        #[arg(long, default_value_t = 3)]
        sensors: usize,
        #[arg(long, default_value_t = 1000)]
        devices: usize,
        #[arg(long, default_value_t = 2)]
        frames: u64,
        #[arg(long, default_value_t = 1.0)]
        overlap: f64,
        #[arg(long, default_value_t = 0)]
        clock_skew_ms: u64,
        #[arg(long, default_value_t = 0)]
        boundary_events: u64,
        #[arg(long, default_value_t = 64)]
        dedup_bits: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Serves rolling server peppers. Reads a TOML file or PEPPER_* variables.
    PepperServer {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Receives identifier uploads and counts unique devices per frame.
    Aggregator {
        #[arg(long, default_value = "127.0.0.1:8081")]
        listen: SocketAddr,
        #[arg(long, env = "AGGREGATOR_TOKEN")]
        token: String,
        #[arg(long)]
        snapshot_dir: Option<PathBuf>,
        #[arg(long, default_value_t = probeanon_pipeline::aggregator::DEFAULT_RETENTION_FRAMES)]
        retention_frames: u64,
    },
    /// Anonymizes probe-request lines from stdin and uploads identifiers.
    Agent {
        #[arg(long)]
        config: PathBuf,
    },
}

fn emit<T: Serialize>(json: bool, value: &T, text: impl FnOnce(&T) -> String) -> Result<()> {
    let mut out = io::stdout().lock();
    if json {
        serde_json::to_writer_pretty(&mut out, value)?;
        writeln!(out)?;
    } else {
        write!(out, "{}", text(value))?;
    }
    Ok(())
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    Ok(tokio::runtime::Builder::new_multi_thread().enable_all().build()?)
}

fn run(cli: Cli) -> Result<bool> {
    let json = cli.json;
    match cli.command {
        Command::Rate { n, m, method, k } => {
            let report = cmd_rate(parse_inserts(&n)?, parse_count(&m)?, method, k)?;
            emit(json, &report, |r| r.render())?;
        }
        Command::Size { n, target } => {
            let report = cmd_size(parse_inserts(&n)?, target)?;
            emit(json, &report, |r| r.render())?;
        }
        Command::Levelset { out, n_min, n_max, n_points, log2_m_min, log2_m_max } => {
            let grid = GridSpec {
                n_min: parse_inserts(&n_min)?,
                n_max: parse_inserts(&n_max)?,
                n_points,
                log2_m_min,
                log2_m_max,
            };
            let cells = levelset::compute(&grid)?;
            let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            levelset::write_csv(&cells, BufWriter::new(file))?;
            #[derive(Serialize)]
            struct Written<'a> {
                path: String,
                cells: usize,
                grid: &'a GridSpec,
            }
            let w = Written { path: out.display().to_string(), cells: cells.len(), grid: &grid };
            emit(json, &w, |w| format!("wrote {} cells to {}\n", w.cells, w.path))?;
        }
        Command::Verify { seed, trials, inject_fault } => {
            let report = verify::run(&VerifyOptions { seed, monte_carlo_trials: trials, fault: inject_fault });
            emit(json, &report, |r| r.suites.iter().map(|s| format!("{s}\n")).collect())?;
            return Ok(report.passed);
        }
        Command::Simulate { sensors, devices, frames, overlap, clock_skew_ms, boundary_events, dedup_bits, seed } => {
            let cfg = SimulationConfig {
                sensors,
                devices,
                frames,
                overlap,
                clock_skew_ms,
                boundary_events,
                dedup_bits,
                seed,
                ..SimulationConfig::default()
            };
            let report = run_simulation(&cfg)?;
            emit(json, &report, |r| r.render())?;
            return Ok(report.privacy_ok());
        }
        Command::PepperServer { config } => {
            init_logging();
            let cfg = match config {
                Some(path) => ServiceConfig::from_toml(&std::fs::read_to_string(&path)?)?,
                None => ServiceConfig::from_env()?,
            };
            runtime()?.block_on(serve::pepper_server(cfg))?;
        }
        Command::Aggregator { listen, token, snapshot_dir, retention_frames } => {
            init_logging();
            runtime()?.block_on(serve::aggregator_server(listen, token, snapshot_dir, retention_frames))?;
        }
        Command::Agent { config } => {
            init_logging();
            let settings = AgentSettings::from_toml(&std::fs::read_to_string(&config)?)?;
            runtime()?.block_on(serve::run_agent(settings))?;
        }
    }
    Ok(true)
}

fn init_logging() {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env().add_directive("info".parse().expect("static directive")))
        .with_writer(io::stderr)
        .init();
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
