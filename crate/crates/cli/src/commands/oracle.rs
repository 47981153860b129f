//! `oracle-check`: run the numerical self-check battery and report each
//! check with its tolerance. Exits nonzero if anything fails.

use std::path::PathBuf;

use clap::Parser;
use crbm_bp::oracle::{run_all, OracleOptions};
use crbm_bp::{Error, Result};

use crate::config::{resolve, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Test hook: perturb one analytic gradient entry by this amount so
    /// the finite-difference check must fail (negative control).
    #[arg(long)]
    inject_fd_error: Option<f64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let seed = resolve(args.seed, file.take_parsed("seed")?, 0);
    let inject = resolve(args.inject_fd_error, file.take_parsed("inject_fd_error")?, 0.0);
    file.reject_unknown()?;

    let reports = run_all(&OracleOptions {
        seed,
        inject_gradient_error: inject,
    })?;
    let mut failed = 0usize;
    for r in &reports {
        println!(
            "{} {:<28} observed={:<12.3e} tolerance={:<12.3e} {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.observed,
            r.tolerance,
            r.detail
        );
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        return Err(Error::Numerical {
            iteration: 0,
            message: format!("{failed} of {} oracle checks failed", reports.len()),
        });
    }
    println!("all {} oracle checks passed", reports.len());
    Ok(())
}
