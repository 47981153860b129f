//! `train`: fit a model on a dataset directory, optionally grid-searching
//! the learning rate and minibatch size on the validation split.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use crbm_bp::learning::{sgd_train, Algo, CdInit, Sidecar, TrainConfig, TrainHistory};
use crbm_bp::model::save_model;
use crbm_bp::{CrbmParams, Error, Result};

use crate::config::{resolve, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory produced by make-dataset.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Training algorithm: mle-bp, mle-mf, cd-k, pcd, mssvm, lssvm, or lr.
    #[arg(long)]
    algo: Option<String>,
    /// Hidden units.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    minibatch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Gibbs steps per contrastive update.
    #[arg(long)]
    gibbs_steps: Option<usize>,
    /// Message-passing budget at epoch 0; grows by one per epoch.
    #[arg(long)]
    bp_iters_base: Option<usize>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Early-stopping patience, in epochs without validation improvement.
    #[arg(long)]
    patience: Option<usize>,
    /// Chain initialization for contrastive updates: data or random.
    #[arg(long)]
    cd_init: Option<String>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    /// Try every learning-rate/minibatch combination from the grids and
    /// keep the model with the best validation error.
    #[arg(long)]
    grid_search: bool,
    /// Learning-rate grid for --grid-search, comma separated.
    #[arg(long)]
    lr_grid: Option<String>,
    /// Minibatch grid for --grid-search, comma separated.
    #[arg(long)]
    minibatch_grid: Option<String>,
    /// Checkpoint path; the sidecar lands next to it with `.cfg` appended.
    #[arg(long)]
    out: Option<PathBuf>,
    /// History TSV path (default: checkpoint path + `.history.tsv`).
    #[arg(long)]
    history: Option<PathBuf>,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let data_dir = crate::config::resolve_required(
        args.data_dir,
        file.take("data_dir").map(PathBuf::from),
        "data_dir",
    )?;
    let out = crate::config::resolve_required(args.out, file.take("out").map(PathBuf::from), "out")?;
    let history_path = args
        .history
        .or(file.take("history").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(format!("{}.history.tsv", out.display())));

    let defaults = TrainConfig::default();
    let algo = match args.algo.or(file.take("algo")) {
        Some(name) => Algo::parse(&name)?,
        None => defaults.algo,
    };
    let cd_init = match args.cd_init.or(file.take("cd_init")) {
        Some(name) => CdInit::parse(&name)?,
        None => defaults.cd_init,
    };
    let config = TrainConfig {
        algo,
        hidden: resolve(args.hidden, file.take_parsed("hidden")?, defaults.hidden),
        learning_rate: resolve(
            args.learning_rate,
            file.take_parsed("learning_rate")?,
            defaults.learning_rate,
        ),
        minibatch: resolve(args.minibatch, file.take_parsed("minibatch")?, defaults.minibatch),
        epochs: resolve(args.epochs, file.take_parsed("epochs")?, defaults.epochs),
        gibbs_steps: resolve(
            args.gibbs_steps,
            file.take_parsed("gibbs_steps")?,
            defaults.gibbs_steps,
        ),
        bp_iters_base: resolve(
            args.bp_iters_base,
            file.take_parsed("bp_iters_base")?,
            defaults.bp_iters_base,
        ),
        tolerance: resolve(args.tolerance, file.take_parsed("tolerance")?, defaults.tolerance),
        seed: resolve(args.seed, file.take_parsed("seed")?, defaults.seed),
        patience: resolve(args.patience, file.take_parsed("patience")?, defaults.patience),
        cd_init,
        damping: resolve(args.damping, file.take_parsed("damping")?, defaults.damping),
        threads: resolve(args.threads, file.take_parsed("threads")?, defaults.threads),
    };
    let grid_search = args.grid_search || file.take_parsed("grid_search")?.unwrap_or(false);
    let lr_grid = parse_f64_list(
        args.lr_grid.or(file.take("lr_grid")),
        &TrainConfig::LEARNING_RATE_GRID,
    )?;
    let minibatch_grid = parse_usize_list(
        args.minibatch_grid.or(file.take("minibatch_grid")),
        &TrainConfig::MINIBATCH_GRID,
    )?;
    file.reject_unknown()?;

    let train = super::load_split(&data_dir, "train")?;
    let val = if super::split_exists(&data_dir, "val") {
        super::load_split(&data_dir, "val")?
    } else {
        Vec::new()
    };

    let (final_config, params, history) = if grid_search {
        if val.is_empty() {
            return Err(Error::Config(
                "grid search needs a validation split in the dataset".into(),
            ));
        }
        let mut best: Option<(f64, TrainConfig, CrbmParams, TrainHistory)> = None;
        println!("learning_rate\tminibatch\tval_all_err");
        for &lr in &lr_grid {
            for &mb in &minibatch_grid {
                let candidate = TrainConfig {
                    learning_rate: lr,
                    minibatch: mb,
                    ..config.clone()
                };
                let (params, history) = sgd_train(&train, &val, &candidate)?;
                let err = history
                    .records
                    .iter()
                    .map(|r| r.val_all_err)
                    .fold(f64::INFINITY, f64::min);
                println!("{lr}\t{mb}\t{err:.6}");
                if best.as_ref().is_none_or(|(e, _, _, _)| err < *e) {
                    best = Some((err, candidate, params, history));
                }
            }
        }
        let (_, cfg, params, history) = best.expect("grids are non-empty");
        (cfg, params, history)
    } else {
        let (params, history) = sgd_train(&train, &val, &config)?;
        (config, params, history)
    };

    save_model(&params, &out)?;
    let sidecar = Sidecar {
        best_epoch: history.best_epoch(),
        trained_epochs: history.records.len(),
        config: final_config,
    };
    fs::write(sidecar_path(&out), sidecar.to_text())?;
    fs::write(&history_path, history.to_tsv())?;
    println!(
        "model written to {} ({} epochs, best epoch {})",
        out.display(),
        sidecar.trained_epochs,
        sidecar.best_epoch
    );
    Ok(())
}

pub fn sidecar_path(model: &std::path::Path) -> PathBuf {
    PathBuf::from(format!("{}.cfg", model.display()))
}

fn parse_f64_list(raw: Option<String>, default: &[f64]) -> Result<Vec<f64>> {
    match raw {
        None => Ok(default.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad grid entry '{s}': {e}")))
            })
            .collect(),
    }
}

fn parse_usize_list(raw: Option<String>, default: &[usize]) -> Result<Vec<usize>> {
    match raw {
        None => Ok(default.to_vec()),
        Some(list) => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::Config(format!("bad grid entry '{s}': {e}")))
            })
            .collect(),
    }
}
