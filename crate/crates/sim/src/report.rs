//! Run orchestration from files, and the report/metrics/trace writers.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use structride_core::roadnet::{secs_to_ms, Router};
use thiserror::Error;

use crate::config::SimConfig;
use crate::engine::{random_fleet, simulate, RunOutput, Summary, SPEED_PERCENTILE};
use crate::io::{build_requests, load_network, load_vehicles, read_request_rows, InputError};

pub const REPORT_SCHEMA: &str = "structride-report/1";

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Serialize)]
pub struct InputHashes {
    pub nodes_sha256: String,
    pub edges_sha256: String,
    pub requests_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vehicles_sha256: Option<String>,
}

/// Contents of `report.json`. Wall-clock figures live in `timing.json` so
/// that identical runs produce identical reports.
#[derive(Debug, Serialize)]
pub struct Report<'c> {
    pub schema: &'static str,
    pub config: &'c SimConfig,
    pub inputs: InputHashes,
    pub network: NetworkInfo,
    pub vehicles: usize,
    pub summary: Summary,
}

#[derive(Debug, Serialize)]
pub struct NetworkInfo {
    pub nodes: usize,
    pub edges: usize,
    /// Straight-line speed bound used for pruning and search radii.
    pub speed_mps: f64,
}

#[derive(Debug, Serialize)]
pub struct Timing {
    pub load_ms: f64,
    pub simulate_ms: f64,
    pub batch_wall_ms_total: f64,
    pub batch_wall_ms_max: f64,
}

fn sha256_file(path: &Path) -> Result<String, InputError> {
    let bytes = fs::read(path).map_err(|source| InputError::Open {
        path: path.to_owned(),
        source,
    })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

/// Loads every input named by `cfg`, runs the simulation and writes
/// `report.json`, `metrics.csv`, `timing.json` and optionally
/// `trace.jsonl` into the output directory.
pub fn run(cfg: &SimConfig) -> Result<(Summary, PathBuf), RunError> {
    let t0 = Instant::now();
    let net = load_network(&cfg.paths.network)?;
    let router = Router::new(&net, cfg.cache_capacity);
    let rows = read_request_rows(&cfg.paths.requests)?;
    let requests = build_requests(
        &cfg.paths.requests,
        &rows,
        &router,
        cfg.gamma,
        secs_to_ms(cfg.max_wait_s),
    )?;
    let vehicles = match &cfg.paths.vehicles {
        Some(p) => load_vehicles(p, &net)?,
        None => random_fleet(&net, cfg.fleet, cfg.capacity, cfg.seed),
    };
    let inputs = InputHashes {
        nodes_sha256: sha256_file(&cfg.paths.network.join("nodes.csv"))?,
        edges_sha256: sha256_file(&cfg.paths.network.join("edges.csv"))?,
        requests_sha256: sha256_file(&cfg.paths.requests)?,
        vehicles_sha256: cfg.paths.vehicles.as_deref().map(sha256_file).transpose()?,
    };
    let fleet = vehicles.len();
    let load_ms = t0.elapsed().as_secs_f64() * 1000.0;

    let t1 = Instant::now();
    let out = simulate(&router, cfg, requests, vehicles);
    let simulate_ms = t1.elapsed().as_secs_f64() * 1000.0;

    let report = Report {
        schema: REPORT_SCHEMA,
        config: cfg,
        inputs,
        network: NetworkInfo {
            nodes: net.node_count(),
            edges: net.edge_count(),
            speed_mps: net.speed_percentile(SPEED_PERCENTILE),
        },
        vehicles: fleet,
        summary: out.summary.clone(),
    };
    let timing = Timing {
        load_ms,
        simulate_ms,
        batch_wall_ms_total: out.metrics.iter().map(|m| m.wall_ms).sum(),
        batch_wall_ms_max: out.metrics.iter().map(|m| m.wall_ms).fold(0.0, f64::max),
    };
    let dir = &cfg.paths.output;
    write_outputs(dir, &report, &timing, &out, cfg.paths.trace)?;
    Ok((out.summary, dir.clone()))
}

fn write_outputs(
    dir: &Path,
    report: &Report<'_>,
    timing: &Timing,
    out: &RunOutput,
    trace: bool,
) -> Result<(), RunError> {
    let werr = |path: PathBuf| move |source: std::io::Error| RunError::Write { path, source };
    fs::create_dir_all(dir).map_err(werr(dir.to_owned()))?;

    let path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(report).expect("report serializes");
    text.push('\n');
    fs::write(&path, text).map_err(werr(path.clone()))?;

    let path = dir.join("timing.json");
    let text = serde_json::to_string_pretty(timing).expect("timing serializes");
    fs::write(&path, text + "\n").map_err(werr(path.clone()))?;

    let path = dir.join("metrics.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| RunError::Write {
        path: path.clone(),
        source: e.into(),
    })?;
    for m in &out.metrics {
        w.serialize(m).map_err(|e| RunError::Write {
            path: path.clone(),
            source: e.into(),
        })?;
    }
    w.flush().map_err(werr(path.clone()))?;

    if trace {
        let path = dir.join("trace.jsonl");
        let mut f = fs::File::create(&path).map_err(werr(path.clone()))?;
        for line in &out.trace {
            writeln!(f, "{line}").map_err(werr(path.clone()))?;
        }
    }
    Ok(())
}
