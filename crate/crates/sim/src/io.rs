//! CSV inputs: network directory, request trace and optional fleet file.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structride_core::model::{ModelError, Request, RequestId, Vehicle, VehicleId};
use structride_core::roadnet::{secs_to_ms, Millis, NetworkError, NodeId, RoadNetwork, Router};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InputError {
    #[error("{path}: {source}")]
    Open { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Network { path: PathBuf, source: NetworkError },
    #[error("{path}, line {line}: {msg}")]
    Row { path: PathBuf, line: u64, msg: String },
    #[error("{path}, line {line}: {source}")]
    Model {
        path: PathBuf,
        line: u64,
        source: ModelError,
    },
}

/// One line of `requests.csv`. `deadline_s` is optional; when absent the
/// deadline follows from the detour ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestRow {
    pub id: u32,
    pub src_node: NodeId,
    pub dst_node: NodeId,
    pub riders: u32,
    pub release_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRow {
    pub id: u32,
    pub start_node: NodeId,
    pub capacity: u32,
}

fn open(path: &Path) -> Result<File, InputError> {
    File::open(path).map_err(|source| InputError::Open {
        path: path.to_owned(),
        source,
    })
}

/// Loads `nodes.csv` and `edges.csv` from `dir`.
pub fn load_network(dir: &Path) -> Result<RoadNetwork, InputError> {
    let nodes = dir.join("nodes.csv");
    let edges = dir.join("edges.csv");
    RoadNetwork::load(open(&nodes)?, open(&edges)?).map_err(|source| InputError::Network {
        path: dir.to_owned(),
        source,
    })
}

fn rows<T: for<'de> Deserialize<'de>>(path: &Path, reader: impl Read) -> Result<Vec<(u64, T)>, InputError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let err = |line: u64, e: csv::Error| InputError::Row {
        path: path.to_owned(),
        line,
        msg: e.to_string(),
    };
    let headers = rdr.headers().map_err(|e| err(1, e))?.clone();
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row: T = rec.deserialize(Some(&headers)).map_err(|e| err(line, e))?;
        out.push((line, row));
    }
    Ok(out)
}

pub fn read_request_rows(path: &Path) -> Result<Vec<(u64, RequestRow)>, InputError> {
    rows(path, open(path)?)
}

/// Parses request rows into requests, in file order.
pub fn build_requests(
    path: &Path,
    rows: &[(u64, RequestRow)],
    router: &Router<'_>,
    gamma: f64,
    max_wait: Millis,
) -> Result<Vec<Request>, InputError> {
    let net = router.network();
    let mut seen = std::collections::BTreeSet::new();
    rows.iter()
        .map(|(line, row)| {
            let row_err = |msg: String| InputError::Row {
                path: path.to_owned(),
                line: *line,
                msg,
            };
            for node in [row.src_node, row.dst_node] {
                if !net.contains(node) {
                    return Err(row_err(format!("unknown node {node}")));
                }
            }
            if !seen.insert(row.id) {
                return Err(row_err(format!("duplicate request id {}", row.id)));
            }
            if row.release_s.is_nan() || row.release_s < 0.0 {
                return Err(row_err(format!("release time {} is negative", row.release_s)));
            }
            let id = RequestId(row.id);
            let release = secs_to_ms(row.release_s);
            let built = match row.deadline_s {
                Some(d) => Request::with_deadline(
                    id,
                    row.src_node,
                    row.dst_node,
                    row.riders,
                    release,
                    secs_to_ms(d),
                    max_wait,
                    router,
                ),
                None => Request::new(
                    id,
                    row.src_node,
                    row.dst_node,
                    row.riders,
                    release,
                    gamma,
                    max_wait,
                    router,
                ),
            };
            built.map_err(|source| InputError::Model {
                path: path.to_owned(),
                line: *line,
                source,
            })
        })
        .collect()
}

/// Loads `vehicles.csv`; ids must be `0..n` in any order.
pub fn load_vehicles(path: &Path, net: &RoadNetwork) -> Result<Vec<Vehicle>, InputError> {
    let rows: Vec<(u64, VehicleRow)> = rows(path, open(path)?)?;
    let n = rows.len();
    let mut out: Vec<Option<Vehicle>> = vec![None; n];
    for (line, row) in rows {
        let row_err = |msg: String| InputError::Row {
            path: path.to_owned(),
            line,
            msg,
        };
        if !net.contains(row.start_node) {
            return Err(row_err(format!("unknown node {}", row.start_node)));
        }
        if row.capacity < 1 {
            return Err(row_err("capacity must be at least 1".into()));
        }
        let slot = out
            .get_mut(row.id as usize)
            .ok_or_else(|| row_err(format!("vehicle id {} outside 0..{n}", row.id)))?;
        if slot.is_some() {
            return Err(row_err(format!("duplicate vehicle id {}", row.id)));
        }
        *slot = Some(Vehicle::new(VehicleId(row.id), row.start_node, row.capacity, 0));
    }
    Ok(out.into_iter().map(|v| v.expect("every id filled")).collect())
}

pub fn write_request_rows<W: Write>(out: W, rows: &[RequestRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_network(dir: &Path, net: &RoadNetwork) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut nodes = csv::Writer::from_path(dir.join("nodes.csv"))?;
    nodes.write_record(["node_id", "lon", "lat"])?;
    for v in 0..net.node_count() as NodeId {
        let (lon, lat) = net.lon_lat(v);
        nodes.write_record([v.to_string(), format!("{lon:.6}"), format!("{lat:.6}")])?;
    }
    nodes.flush()?;
    let mut edges = csv::Writer::from_path(dir.join("edges.csv"))?;
    edges.write_record(["from", "to", "travel_time_s"])?;
    for (u, v, ms) in net.edges() {
        edges.write_record([u.to_string(), v.to_string(), format!("{:.3}", ms as f64 / 1000.0)])?;
    }
    edges.flush()?;
    Ok(())
}
