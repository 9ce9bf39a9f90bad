#![allow(dead_code)]

use std::path::{Path, PathBuf};

use structride_core::model::{Request, Vehicle};
use structride_core::roadnet::{secs_to_ms, RoadNetwork, Router};
use structride_sim::config::SimConfig;
use structride_sim::io::{build_requests, load_network, load_vehicles, read_request_rows, RequestRow};
use structride_sim::workload::{generate, synthetic_grid, GridSpec, WorkloadSpec};

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Everything a run needs, loaded from a config file.
pub struct Case {
    pub cfg: SimConfig,
    pub net: RoadNetwork,
    pub rows: Vec<(u64, RequestRow)>,
    pub vehicles: Vec<Vehicle>,
}

impl Case {
    pub fn load(config: &Path) -> Self {
        let cfg = SimConfig::load(config).unwrap();
        let net = load_network(&cfg.paths.network).unwrap();
        let rows = read_request_rows(&cfg.paths.requests).unwrap();
        let vehicles = load_vehicles(cfg.paths.vehicles.as_ref().unwrap(), &net).unwrap();
        Self {
            cfg,
            net,
            rows,
            vehicles,
        }
    }

    pub fn requests(&self, router: &Router<'_>) -> Vec<Request> {
        build_requests(
            &self.cfg.paths.requests,
            &self.rows,
            router,
            self.cfg.gamma,
            secs_to_ms(self.cfg.max_wait_s),
        )
        .unwrap()
    }
}

/// The compact synthetic city used for end-to-end checks: a 12 x 12
/// street grid at 300 m spacing.
pub fn desk_network() -> RoadNetwork {
    synthetic_grid(&GridSpec {
        side: 12,
        ..GridSpec::default()
    })
}

/// 1,000 requests, three hotspots, log-normal trips around 150 s.
pub fn desk_spec(seed: u64) -> WorkloadSpec {
    WorkloadSpec {
        count: 1000,
        seed,
        rate_per_s: 0.1,
        trip_mu: 150f64.ln(),
        trip_sigma: 0.5,
        hotspot_count: 3,
        hotspot_sigma_m: 1000.0,
        background: 0.3,
        ..WorkloadSpec::default()
    }
}

pub fn desk_rows(net: &RoadNetwork, seed: u64) -> Vec<(u64, RequestRow)> {
    let rows = generate(net, &desk_spec(seed)).unwrap();
    rows.into_iter().enumerate().map(|(i, r)| (i as u64 + 2, r)).collect()
}

pub fn desk_requests(router: &Router<'_>, seed: u64, gamma: f64) -> Vec<Request> {
    let rows = desk_rows(router.network(), seed);
    build_requests(Path::new("generated"), &rows, router, gamma, secs_to_ms(300.0)).unwrap()
}
