use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use structride_core::roadnet::{secs_to_ms, Router, DEFAULT_CACHE_CAPACITY};
use structride_sim::config::SimConfig;
use structride_sim::io::{build_requests, load_network, read_request_rows, write_network, write_request_rows};
use structride_sim::report::run;
use structride_sim::stats::{graph_stats, StatsParams};
use structride_sim::workload::{generate, synthetic_grid, GridSpec, WorkloadSpec};

#[derive(Parser)]
#[command(name = "structride", version, about = "Batch ridesharing dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a simulation described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate a request trace from a workload spec.
    Gen {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic street grid (nodes.csv, edges.csv).
    Net {
        #[arg(long, default_value_t = 32)]
        side: usize,
        #[arg(long, default_value_t = 300.0)]
        spacing_m: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Shareability graph diagnostics per release window.
    GraphStats {
        #[arg(long)]
        requests: PathBuf,
        #[arg(long)]
        net: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        window_s: f64,
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        #[arg(long, default_value_t = 4)]
        capacity: u32,
        #[arg(long, default_value_t = PI)]
        angle: f64,
        #[arg(long, default_value_t = 300.0)]
        max_wait_s: f64,
        #[arg(long, default_value_t = 128)]
        grid_n: usize,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { config } => {
            let cfg = SimConfig::load(&config)?;
            let (summary, dir) = run(&cfg)?;
            println!(
                "served {}/{} ({:.1}%), unified cost {:.1} s, outputs in {}",
                summary.served,
                summary.requests,
                summary.service_rate * 100.0,
                summary.unified_cost_s,
                dir.display()
            );
        }
        Cmd::Gen { spec, out } => {
            let spec = WorkloadSpec::load(&spec)?;
            let net = load_network(&spec.network)?;
            let rows = generate(&net, &spec)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            write_request_rows(BufWriter::new(f), &rows).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} requests to {}", rows.len(), out.display());
        }
        Cmd::Net {
            side,
            spacing_m,
            seed,
            out,
        } => {
            let spec = GridSpec {
                side,
                spacing_m,
                seed,
                ..GridSpec::default()
            };
            let net = synthetic_grid(&spec);
            write_network(&out, &net).with_context(|| format!("writing {}", out.display()))?;
            println!(
                "wrote {} nodes, {} edges to {}",
                net.node_count(),
                net.edge_count(),
                out.display()
            );
        }
        Cmd::GraphStats {
            requests,
            net,
            window_s,
            gamma,
            capacity,
            angle,
            max_wait_s,
            grid_n,
        } => {
            let net = load_network(&net)?;
            let router = Router::new(&net, DEFAULT_CACHE_CAPACITY);
            let rows = read_request_rows(&requests)?;
            let reqs = build_requests(&requests, &rows, &router, gamma, secs_to_ms(max_wait_s))?;
            let params = StatsParams {
                window_ms: secs_to_ms(window_s),
                capacity,
                angle,
                grid_n,
                gamma,
            };
            let report = graph_stats(&router, &reqs, params)?;
            let mut out = std::io::stdout().lock();
            match serde_json::to_writer_pretty(&mut out, &report).map_err(std::io::Error::from) {
                // a closed pipe (`| head`) is not an error
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => {}
                r => {
                    r?;
                    writeln!(out).ok();
                }
            }
        }
    }
    Ok(())
}
