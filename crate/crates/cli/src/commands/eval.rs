//! `eval`: score a model (or a precomputed prediction file) against the
//! clean targets of a dataset split, printing the error table as TSV.
//!
//! Evaluation defaults to the inference family and sweep budget the model
//! was trained with; picking a different family is possible but must be
//! acknowledged with `--allow-mismatch`, since mismatched train/test
//! inference is a known way to get misleading numbers.

use std::path::PathBuf;

use clap::Parser;
use crbm_bp::data::{error_metrics, load_binmat};
use crbm_bp::learning::{evaluate, DecodeFamily, DecodeSpec, Sidecar};
use crbm_bp::model::load_model;
use crbm_bp::{BinaryVector, BpOptions, Error, Result};

use crate::config::RunConfig;

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by make-dataset.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Which split to score: train, val, or test.
    #[arg(long)]
    split: Option<String>,
    /// Trained model checkpoint (mutually exclusive with --predictions).
    #[arg(long)]
    model: Option<PathBuf>,
    /// Precomputed predictions in the raw matrix container.
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Decode family override; requires --allow-mismatch when it differs
    /// from the training family.
    #[arg(long)]
    decode: Option<String>,
    /// Acknowledge a train/test inference mismatch.
    #[arg(long)]
    allow_mismatch: bool,
    /// Message-passing sweep budget; defaults to the trained budget.
    #[arg(long)]
    bp_iters: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let data_dir = crate::config::resolve_required(
        args.data_dir,
        file.take("data_dir").map(PathBuf::from),
        "data_dir",
    )?;
    let split = args
        .split
        .or(file.take("split"))
        .unwrap_or_else(|| "test".to_string());
    let model_path = args.model.or(file.take("model").map(PathBuf::from));
    let predictions_path = args.predictions.or(file.take("predictions").map(PathBuf::from));
    let decode_flag = args.decode.or(file.take("decode"));
    let allow_mismatch = args.allow_mismatch || file.take_parsed("allow_mismatch")?.unwrap_or(false);
    let bp_iters = args.bp_iters.or(file.take_parsed("bp_iters")?);
    let tolerance = args.tolerance.or(file.take_parsed("tolerance")?);
    file.reject_unknown()?;

    let pairs = super::load_split(&data_dir, &split)?;
    let dataset_label = format!(
        "{}/{split}",
        data_dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| data_dir.display().to_string())
    );

    let (method, metrics) = match (model_path, predictions_path) {
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--model and --predictions are mutually exclusive".into(),
            ))
        }
        (None, None) => {
            return Err(Error::Config("either --model or --predictions is required".into()))
        }
        (None, Some(path)) => {
            let images = load_binmat(&path)?;
            if images.pixels.nrows() != pairs.len() {
                return Err(Error::DimensionMismatch(format!(
                    "{} predictions for {} instances",
                    images.pixels.nrows(),
                    pairs.len()
                )));
            }
            let predictions: Vec<BinaryVector> = (0..pairs.len())
                .map(|i| {
                    BinaryVector::from_bytes(
                        images
                            .pixels
                            .row(i)
                            .mapv(|p| u8::from(p > 0))
                            .as_slice()
                            .expect("row-major"),
                    )
                })
                .collect::<Result<_>>()?;
            ("predictions".to_string(), error_metrics(&predictions, &pairs)?)
        }
        (Some(model_path), None) => {
            let params = load_model(&model_path)?;
            let sidecar = Sidecar::from_text(&std::fs::read_to_string(
                super::train::sidecar_path(&model_path),
            )?)?;
            let matched = sidecar.config.algo.matched_decode();
            let family = match decode_flag {
                Some(name) => {
                    let requested = DecodeFamily::parse(&name)?;
                    if requested != matched && !allow_mismatch {
                        return Err(Error::Config(format!(
                            "model was trained for '{}' decoding but '{}' was requested; \
                             pass --allow-mismatch to evaluate anyway",
                            matched.name(),
                            requested.name()
                        )));
                    }
                    requested
                }
                None => matched,
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
            let (metrics, _) = evaluate(&params, &pairs, &spec)?;
            (sidecar.config.algo.name().to_string(), metrics)
        }
    };

    println!("method\tdataset\tall_err\tchanged_err\tn_instances");
    println!(
        "{method}\t{dataset_label}\t{:.6}\t{:.6}\t{}",
        metrics.all_err, metrics.changed_err, metrics.n_instances
    );
    Ok(())
}
