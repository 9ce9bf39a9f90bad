use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use structride_core::dispatch::Algorithm;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{path}: invalid value for `{field}`: {msg}")]
    Invalid {
        path: PathBuf,
        field: &'static str,
        msg: String,
    },
}

/// Simulation parameters. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Detour ratio: deadline = release + gamma * trip time.
    pub gamma: f64,
    /// Penalty per second of unserved trip time.
    pub penalty: f64,
    /// Weight of driven time.
    pub alpha: f64,
    pub batch_s: f64,
    pub capacity: u32,
    /// Fleet size when no vehicle file is given.
    pub fleet: u32,
    /// Angle threshold in radians.
    pub angle: f64,
    pub max_wait_s: f64,
    pub grid_n: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    /// Count the drive to the first pickup in schedule cost.
    pub include_deadhead: bool,
    pub parallel: bool,
    pub cache_capacity: usize,
    /// Compare the pruned graph against all-pairs checks every batch.
    pub edge_recall: bool,
    pub paths: Paths,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Directory holding `nodes.csv` and `edges.csv`.
    pub network: PathBuf,
    pub requests: PathBuf,
    pub vehicles: Option<PathBuf>,
    pub output: PathBuf,
    /// Write a JSON-lines round trace next to the report.
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            gamma: 1.5,
            penalty: 10.0,
            alpha: 1.0,
            batch_s: 5.0,
            capacity: 4,
            fleet: 50,
            angle: PI,
            max_wait_s: 300.0,
            grid_n: 128,
            seed: 1,
            algorithm: Algorithm::Sard,
            include_deadhead: true,
            parallel: false,
            cache_capacity: structride_core::roadnet::DEFAULT_CACHE_CAPACITY,
            edge_recall: false,
            paths: Paths::default(),
        }
    }
}

impl SimConfig {
    /// Reads a TOML file; relative paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        let mut cfg: SimConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })?;
        cfg.validate().map_err(|(field, msg)| ConfigError::Invalid {
            path: path.to_owned(),
            field,
            msg,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve(base);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), (&'static str, String)> {
        let bad = |field, msg: &str| Err((field, msg.to_string()));
        if self.gamma.is_nan() || self.gamma <= 1.0 {
            return bad("gamma", "must exceed 1");
        }
        if self.batch_s.is_nan() || self.batch_s <= 0.0 {
            return bad("batch_s", "must be positive");
        }
        if self.penalty.is_nan() || self.penalty < 0.0 {
            return bad("penalty", "must be non-negative");
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return bad("alpha", "must be non-negative");
        }
        if self.capacity < 1 {
            return bad("capacity", "must be at least 1");
        }
        if self.angle.is_nan() || self.angle < 0.0 {
            return bad("angle", "must be non-negative");
        }
        if self.max_wait_s.is_nan() || self.max_wait_s < 0.0 {
            return bad("max_wait_s", "must be non-negative");
        }
        if self.grid_n < 1 {
            return bad("grid_n", "must be at least 1");
        }
        Ok(())
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.network);
        fix(&mut self.requests);
        fix(&mut self.output);
        if let Some(v) = self.vehicles.as_mut() {
            fix(v);
        }
    }
}
