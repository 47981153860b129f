//! `bench-bp`: wall-clock timing of message-passing runs over a size grid.

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;
use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};

use crbm_bp::inference::bp_run;
use crbm_bp::rng::{stream_rng, DOMAIN_BENCH};
use crbm_bp::{BpMode, BpOptions, RbmParams, Result};

use crate::config::{resolve, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated `VxH` sizes, e.g. `1000x500,200x100`.
    #[arg(long)]
    sizes: Option<String>,
    /// Sweep budget per run.
    #[arg(long)]
    sweeps: Option<usize>,
    /// Message schedule: sum, mixed, or max.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let sizes_raw = resolve(
        args.sizes,
        file.take("sizes"),
        "100x50,1000x500".to_string(),
    );
    let sweeps = resolve(args.sweeps, file.take_parsed("sweeps")?, 10);
    let mode_raw = resolve(args.mode, file.take("mode"), "sum".to_string());
    let tolerance = resolve(args.tolerance, file.take_parsed("tolerance")?, 1e-3);
    let seed = resolve(args.seed, file.take_parsed("seed")?, 0);
    file.reject_unknown()?;

    let mode = match mode_raw.as_str() {
        "sum" => BpMode::Sum,
        "mixed" => BpMode::Mixed,
        "max" => BpMode::Max,
        other => {
            return Err(crbm_bp::Error::Config(format!(
                "unknown mode '{other}' (expected sum, mixed, or max)"
            )))
        }
    };

    println!("n_visible\tn_hidden\tsweeps\twall_ms\tconverged\tfinal_delta");
    for (index, size) in sizes_raw.split(',').enumerate() {
        let (nv, nh) = super::parse_size(size)?;
        let mut rng = stream_rng(seed, DOMAIN_BENCH, index as u64);
        let weights_dist = Normal::new(0.0, 0.05).unwrap();
        let bias_dist = Normal::new(0.0, 0.1).unwrap();
        let p = RbmParams {
            weights: Array2::from_shape_fn((nv, nh), |_| weights_dist.sample(&mut rng)),
            visible_bias: Array1::from_shape_fn(nv, |_| bias_dist.sample(&mut rng)),
            hidden_bias: Array1::from_shape_fn(nh, |_| bias_dist.sample(&mut rng)),
        };
        let opts = BpOptions {
            max_iters: sweeps,
            tolerance,
            mode,
            damping: 0.0,
            track_deltas: false,
        };
        let started = Instant::now();
        let (_, _, report) = bp_run(&p, &opts)?;
        let wall_ms = started.elapsed().as_secs_f64() * 1e3;
        println!(
            "{nv}\t{nh}\t{}\t{wall_ms:.3}\t{}\t{:.3e}",
            report.iters_used, report.converged, report.final_delta
        );
    }
    Ok(())
}
