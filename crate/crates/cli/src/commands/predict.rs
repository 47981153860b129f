//! `predict`: decode corrupted observations with a trained model.

use std::path::PathBuf;

use clap::Parser;
use crbm_bp::data::{load_binmat, save_binmat, write_pgm_grid, BinaryImages};
use crbm_bp::learning::{predict_features, DecodeFamily, DecodeSpec, Sidecar};
use crbm_bp::model::load_model;
use crbm_bp::{BpOptions, FeatureVector, Result};

use crate::config::{resolve, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model checkpoint.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Corrupted observations, raw matrix container with 0/1 pixels.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Decode family; defaults to the family the model was trained for.
    #[arg(long)]
    decode: Option<String>,
    /// Message-passing sweep budget; defaults to the trained budget.
    #[arg(long)]
    bp_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    /// Predictions output, raw matrix container.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also render the predictions as a PGM image grid.
    #[arg(long)]
    pgm: Option<PathBuf>,
    /// Tiles per row of the PGM grid.
    #[arg(long)]
    pgm_cols: Option<usize>,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let model_path = crate::config::resolve_required(
        args.model,
        file.take("model").map(PathBuf::from),
        "model",
    )?;
    let input = crate::config::resolve_required(
        args.input,
        file.take("input").map(PathBuf::from),
        "input",
    )?;
    let out = crate::config::resolve_required(args.out, file.take("out").map(PathBuf::from), "out")?;
    let decode_flag = args.decode.or(file.take("decode"));
    let bp_iters = args.bp_iters.or(file.take_parsed("bp_iters")?);
    let tolerance = args.tolerance.or(file.take_parsed("tolerance")?);
    let pgm = args.pgm.or(file.take("pgm").map(PathBuf::from));
    let pgm_cols = resolve(args.pgm_cols, file.take_parsed("pgm_cols")?, 10);
    file.reject_unknown()?;

    let params = load_model(&model_path)?;
    let sidecar = Sidecar::from_text(&std::fs::read_to_string(super::train::sidecar_path(
        &model_path,
    ))?)?;
    let family = match decode_flag {
        Some(name) => DecodeFamily::parse(&name)?,
        None => sidecar.config.algo.matched_decode(),
    };
    let spec = DecodeSpec {
        family,
        bp: BpOptions {
            max_iters: bp_iters
                .unwrap_or_else(|| sidecar.config.bp_iters_at(sidecar.best_epoch)),
            tolerance: tolerance.unwrap_or(sidecar.config.tolerance),
            ..BpOptions::default()
        },
    };

    let observations = load_binmat(&input)?;
    let features: Vec<FeatureVector> = (0..observations.pixels.nrows())
        .map(|i| {
            FeatureVector::new(
                observations
                    .pixels
                    .row(i)
                    .mapv(|p| if p > 0 { 1.0 } else { 0.0 }),
            )
        })
        .collect::<Result<_>>()?;

    let (predictions, stats) = predict_features(&params, &features, &spec)?;
    let images = BinaryImages::from_vectors(&predictions, observations.height, observations.width)?;
    save_binmat(&images, &out)?;
    if let Some(pgm_path) = pgm {
        write_pgm_grid(&images, pgm_cols, &pgm_path)?;
    }
    println!(
        "{} predictions written to {} (decode {}, {:.0}% converged, {:.1} mean sweeps)",
        predictions.len(),
        out.display(),
        spec.family.name(),
        100.0 * stats.converged_frac,
        stats.mean_sweeps
    );
    Ok(())
}
