//! Stochastic-gradient training, evaluation, and the epoch history.
//!
//! The protocol: shuffled minibatches per epoch, a message-passing budget
//! that grows by one sweep per epoch (`T = base + epoch`, because later
//! epochs carry larger weights and need more sweeps), early stopping on the
//! validation error over all pixels, and evaluation with the same inference
//! family and budget that training used.

use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::{error_metrics, Metrics, StructuredPair};
use crate::error::{Error, Result};
use crate::inference::{mean_field_with, threshold_beliefs, BpEngine, BpMode, BpOptions};
use crate::learning::{
    lssvm_gradient_with_engine, mle_gradient, mle_gradient_with_engine,
    mssvm_gradient_with_engine, GradientBlocks, GibbsStart, NegativePhase,
};
use crate::math::logistic;
use crate::model::{BinaryVector, CrbmParams, FeatureVector};
use crate::rng::{stream_rng, DOMAIN_GRADIENT, DOMAIN_INIT, DOMAIN_SHUFFLE};

/// Training objectives and negative-phase choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algo {
    /// Maximum likelihood with sum-product message passing.
    MleBp,
    /// Maximum likelihood with mean-field marginals.
    MleMf,
    /// Contrastive updates from a k-step Gibbs chain.
    CdK,
    /// Contrastive updates from per-instance persistent chains.
    Pcd,
    /// Max-margin objective with hidden units marginalized (mixed-product
    /// decoding).
    Mssvm,
    /// Max-margin objective with hidden units maximized (max-product
    /// decoding).
    Lssvm,
    /// Logistic-regression baseline: only the visible-feature couplings and
    /// visible biases are trained; inference is exact because the model
    /// stays factorized.
    Lr,
}

impl Algo {
    pub fn parse(s: &str) -> Result<Algo> {
        match s {
            "mle-bp" => Ok(Algo::MleBp),
            "mle-mf" => Ok(Algo::MleMf),
            "cd-k" => Ok(Algo::CdK),
            "pcd" => Ok(Algo::Pcd),
            "mssvm" => Ok(Algo::Mssvm),
            "lssvm" => Ok(Algo::Lssvm),
            "lr" => Ok(Algo::Lr),
            other => Err(Error::Config(format!(
                "unknown algorithm '{other}' (expected mle-bp, mle-mf, cd-k, pcd, mssvm, lssvm, or lr)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Algo::MleBp => "mle-bp",
            Algo::MleMf => "mle-mf",
            Algo::CdK => "cd-k",
            Algo::Pcd => "pcd",
            Algo::Mssvm => "mssvm",
            Algo::Lssvm => "lssvm",
            Algo::Lr => "lr",
        }
    }

    /// Margin objectives descend their loss; likelihood objectives ascend.
    pub fn is_margin(&self) -> bool {
        matches!(self, Algo::Mssvm | Algo::Lssvm)
    }

    /// The inference family that matches how the model was trained. Gibbs
    /// and mean-field trained models are decoded with mean field.
    pub fn matched_decode(&self) -> DecodeFamily {
        match self {
            Algo::MleBp => DecodeFamily::SumBp,
            Algo::MleMf | Algo::CdK | Algo::Pcd => DecodeFamily::MeanField,
            Algo::Mssvm => DecodeFamily::MixedBp,
            Algo::Lssvm => DecodeFamily::MaxBp,
            Algo::Lr => DecodeFamily::Factorized,
        }
    }
}

/// Where contrastive chains start.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdInit {
    Data,
    Random,
}

impl CdInit {
    pub fn parse(s: &str) -> Result<CdInit> {
        match s {
            "data" => Ok(CdInit::Data),
            "random" => Ok(CdInit::Random),
            other => Err(Error::Config(format!(
                "unknown chain initialization '{other}' (expected data or random)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CdInit::Data => "data",
            CdInit::Random => "random",
        }
    }
}

/// All training knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub algo: Algo,
    /// Hidden layer width of the model to train.
    pub hidden: usize,
    pub learning_rate: f64,
    pub minibatch: usize,
    pub epochs: usize,
    /// Gibbs steps per contrastive update.
    pub gibbs_steps: usize,
    /// Message-passing budget at epoch 0; epoch `e` uses `base + e` sweeps.
    pub bp_iters_base: usize,
    /// Convergence tolerance of the iterative inference.
    pub tolerance: f64,
    pub seed: u64,
    /// Epochs without validation improvement before training stops.
    pub patience: usize,
    pub cd_init: CdInit,
    /// Message damping knob, off by default.
    pub damping: f64,
    /// Gradient workers per minibatch. Results do not depend on this.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            algo: Algo::MleBp,
            hidden: 64,
            learning_rate: 0.01,
            minibatch: 20,
            epochs: 15,
            gibbs_steps: 1,
            bp_iters_base: 7,
            tolerance: 1e-3,
            seed: 0,
            patience: 5,
            cd_init: CdInit::Random,
            damping: 0.0,
            threads: 1,
        }
    }
}

impl TrainConfig {
    /// Learning-rate grid used by the grid-search mode.
    pub const LEARNING_RATE_GRID: [f64; 4] = [0.05, 0.02, 0.01, 0.005];
    /// Minibatch grid used by the grid-search mode.
    pub const MINIBATCH_GRID: [usize; 5] = [10, 20, 40, 80, 160];

    pub fn validate(&self) -> Result<()> {
        // A zero learning rate is allowed for diagnostics (history without
        // movement); negative rates are not.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden layer needs at least one unit".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch size must be >= 1".into()));
        }
        if self.gibbs_steps == 0 {
            return Err(Error::Config("gibbs_steps must be >= 1".into()));
        }
        if self.bp_iters_base == 0 {
            return Err(Error::Config("bp_iters_base must be >= 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config("damping must lie in [0, 1)".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    /// Sweep budget for one epoch.
    pub fn bp_iters_at(&self, epoch: usize) -> usize {
        self.bp_iters_base + epoch
    }

    fn bp_options_at(&self, epoch: usize) -> BpOptions {
        BpOptions {
            max_iters: self.bp_iters_at(epoch),
            tolerance: self.tolerance,
            mode: BpMode::Sum,
            damping: self.damping,
            track_deltas: false,
        }
    }

    /// Serializes as `key = value` lines.
    pub fn to_kv_text(&self) -> String {
        format!(
            "algo = {}\nhidden = {}\nlearning_rate = {}\nminibatch = {}\nepochs = {}\n\
             gibbs_steps = {}\nbp_iters_base = {}\ntolerance = {}\nseed = {}\npatience = {}\n\
             cd_init = {}\ndamping = {}\nthreads = {}\n",
            self.algo.name(),
            self.hidden,
            self.learning_rate,
            self.minibatch,
            self.epochs,
            self.gibbs_steps,
            self.bp_iters_base,
            self.tolerance,
            self.seed,
            self.patience,
            self.cd_init.name(),
            self.damping,
            self.threads,
        )
    }
}

/// Checkpoint sidecar: the exact configuration a model was trained with
/// plus where early stopping landed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sidecar {
    pub config: TrainConfig,
    /// Epoch whose parameters the checkpoint holds.
    pub best_epoch: usize,
    /// Epochs actually run (early stopping may cut this short).
    pub trained_epochs: usize,
}

impl Sidecar {
    pub fn to_text(&self) -> String {
        format!(
            "{}best_epoch = {}\ntrained_epochs = {}\n",
            self.config.to_kv_text(),
            self.best_epoch,
            self.trained_epochs
        )
    }

    pub fn from_text(text: &str) -> Result<Sidecar> {
        let mut config = TrainConfig::default();
        let mut best_epoch = 0usize;
        let mut trained_epochs = 0usize;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("sidecar line {} is not 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
            };
            let parse_f64 = |v: &str| {
                v.parse::<f64>()
                    .map_err(|e| Error::Config(format!("bad value for {key}: {e}")))
            };
            match key {
                "algo" => config.algo = Algo::parse(value)?,
                "hidden" => config.hidden = parse_usize(value)?,
                "learning_rate" => config.learning_rate = parse_f64(value)?,
                "minibatch" => config.minibatch = parse_usize(value)?,
                "epochs" => config.epochs = parse_usize(value)?,
                "gibbs_steps" => config.gibbs_steps = parse_usize(value)?,
                "bp_iters_base" => config.bp_iters_base = parse_usize(value)?,
                "tolerance" => config.tolerance = parse_f64(value)?,
                "seed" => {
                    config.seed = value
                        .parse::<u64>()
                        .map_err(|e| Error::Config(format!("bad value for seed: {e}")))?
                }
                "patience" => config.patience = parse_usize(value)?,
                "cd_init" => config.cd_init = CdInit::parse(value)?,
                "damping" => config.damping = parse_f64(value)?,
                "threads" => config.threads = parse_usize(value)?,
                "best_epoch" => best_epoch = parse_usize(value)?,
                "trained_epochs" => trained_epochs = parse_usize(value)?,
                other => {
                    return Err(Error::Config(format!("unknown sidecar key '{other}'")));
                }
            }
        }
        config.validate()?;
        Ok(Sidecar {
            config,
            best_epoch,
            trained_epochs,
        })
    }
}

/// Families a trained model can be decoded with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeFamily {
    /// Sum-product beliefs, thresholded (marginal-mode prediction).
    SumBp,
    /// Mean-field beliefs, thresholded.
    MeanField,
    /// Mixed-product marginal-MAP decoding.
    MixedBp,
    /// Max-product joint-MAP decoding.
    MaxBp,
    /// Closed form for factorized models (the LR baseline).
    Factorized,
}

impl DecodeFamily {
    pub fn parse(s: &str) -> Result<DecodeFamily> {
        match s {
            "sum-bp" => Ok(DecodeFamily::SumBp),
            "mean-field" => Ok(DecodeFamily::MeanField),
            "mixed-bp" => Ok(DecodeFamily::MixedBp),
            "max-bp" => Ok(DecodeFamily::MaxBp),
            "factorized" => Ok(DecodeFamily::Factorized),
            other => Err(Error::Config(format!(
                "unknown decode family '{other}' (expected sum-bp, mean-field, mixed-bp, max-bp, or factorized)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DecodeFamily::SumBp => "sum-bp",
            DecodeFamily::MeanField => "mean-field",
            DecodeFamily::MixedBp => "mixed-bp",
            DecodeFamily::MaxBp => "max-bp",
            DecodeFamily::Factorized => "factorized",
        }
    }
}

/// Inference family plus budget for prediction and evaluation.
#[derive(Debug, Clone)]
pub struct DecodeSpec {
    pub family: DecodeFamily,
    pub bp: BpOptions,
}

impl DecodeSpec {
    /// The specification that matches a training configuration at a given
    /// epoch: same family, same sweep budget, same tolerance.
    pub fn matched(config: &TrainConfig, epoch: usize) -> DecodeSpec {
        DecodeSpec {
            family: config.algo.matched_decode(),
            bp: config.bp_options_at(epoch),
        }
    }
}

/// Aggregate inference behaviour over an evaluation or an epoch.
#[derive(Debug, Clone, Copy)]
pub struct EvalStats {
    /// Fraction of iterative inference runs that converged; 1.0 when the
    /// family has nothing to iterate (factorized decoding).
    pub converged_frac: f64,
    /// Mean sweeps used by the iterative runs (0.0 when none ran).
    pub mean_sweeps: f64,
}

/// Decodes every instance and pools the error metrics.
pub fn evaluate(
    p: &CrbmParams,
    pairs: &[StructuredPair],
    spec: &DecodeSpec,
) -> Result<(Metrics, EvalStats)> {
    let (predictions, stats) = predict(p, pairs, spec)?;
    let metrics = error_metrics(&predictions, pairs)?;
    Ok((metrics, stats))
}

/// Decodes every instance with the given family and budget.
pub fn predict(
    p: &CrbmParams,
    pairs: &[StructuredPair],
    spec: &DecodeSpec,
) -> Result<(Vec<BinaryVector>, EvalStats)> {
    let features: Vec<FeatureVector> = pairs.iter().map(|pair| pair.corrupted.clone()).collect();
    predict_features(p, &features, spec)
}

/// Decodes raw observations (no targets needed).
pub fn predict_features(
    p: &CrbmParams,
    features: &[FeatureVector],
    spec: &DecodeSpec,
) -> Result<(Vec<BinaryVector>, EvalStats)> {
    let mut engine = match spec.family {
        DecodeFamily::SumBp | DecodeFamily::MixedBp | DecodeFamily::MaxBp => {
            Some(BpEngine::new(&p.w_vh))
        }
        DecodeFamily::MeanField | DecodeFamily::Factorized => None,
    };
    let mut predictions = Vec::with_capacity(features.len());
    let mut converged = 0usize;
    let mut runs = 0usize;
    let mut sweeps = 0usize;
    for x in features {
        let (b1, b2) = p.conditioned_biases(x)?;
        let decoded = match spec.family {
            DecodeFamily::SumBp | DecodeFamily::MixedBp | DecodeFamily::MaxBp => {
                let mode = match spec.family {
                    DecodeFamily::SumBp => BpMode::Sum,
                    DecodeFamily::MixedBp => BpMode::Mixed,
                    _ => BpMode::Max,
                };
                let opts = spec.bp.clone().with_mode(mode);
                let (beliefs, _, report) =
                    engine.as_mut().expect("engine present").run(&b1, &b2, &opts)?;
                runs += 1;
                converged += usize::from(report.converged);
                sweeps += report.iters_used;
                threshold_beliefs(&beliefs.visible)
            }
            DecodeFamily::MeanField => {
                let (beliefs, report) = mean_field_with(&p.w_vh, &b1, &b2, &spec.bp)?;
                runs += 1;
                converged += usize::from(report.converged);
                sweeps += report.iters_used;
                threshold_beliefs(&beliefs.visible)
            }
            DecodeFamily::Factorized => threshold_beliefs(&b1.mapv(logistic)),
        };
        predictions.push(decoded);
    }
    let stats = EvalStats {
        converged_frac: if runs == 0 {
            1.0
        } else {
            converged as f64 / runs as f64
        },
        mean_sweeps: if runs == 0 {
            0.0
        } else {
            sweeps as f64 / runs as f64
        },
    };
    Ok((predictions, stats))
}

/// One epoch of the training history.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub val_all_err: f64,
    pub val_changed_err: f64,
    /// Fraction of the epoch's negative-phase inference runs that
    /// converged; 1.0 when the algorithm runs no iterative inference.
    pub bp_converged_frac: f64,
    /// Mean inference iterations per gradient (message-passing sweeps, or
    /// Gibbs steps for contrastive algorithms).
    pub mean_sweeps: f64,
    pub wall_s: f64,
    /// Sweep budget this epoch ran under.
    pub bp_iters_budget: usize,
    /// Persistent chains created this epoch (first touch of an instance).
    pub chains_initialized: usize,
}

/// Per-epoch training history.
#[derive(Debug, Clone, Default)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
}

impl TrainHistory {
    /// Epoch whose parameters a checkpoint holds: the first epoch with the
    /// lowest validation error, or the last epoch when validation was not
    /// tracked.
    pub fn best_epoch(&self) -> usize {
        let mut best: Option<(f64, usize)> = None;
        for r in &self.records {
            if r.val_all_err.is_finite() && best.is_none_or(|(err, _)| r.val_all_err < err) {
                best = Some((r.val_all_err, r.epoch));
            }
        }
        match best {
            Some((_, epoch)) => epoch,
            None => self.records.len().saturating_sub(1),
        }
    }

    /// The tab-separated interchange format, one row per epoch. Note the
    /// wall-clock column is inherently not reproducible across runs.
    pub fn to_tsv(&self) -> String {
        let mut out =
            String::from("epoch\tval_all_err\tval_changed_err\tbp_converged_frac\tmean_sweeps\twall_s\n");
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.3}\t{:.3}\n",
                r.epoch, r.val_all_err, r.val_changed_err, r.bp_converged_frac, r.mean_sweeps, r.wall_s
            ));
        }
        out
    }
}

struct InstanceGrad {
    blocks: GradientBlocks,
    converged: Option<bool>,
    iters: usize,
    chain_end: Option<BinaryVector>,
    chain_was_fresh: bool,
}

/// Trains a conditional model with shuffled-minibatch SGD.
///
/// Parameters start at small Gaussian weights with zero biases (the LR
/// baseline starts at zero and only ever updates its two live blocks).
/// When a validation set is present, the best-validation parameters are
/// returned and training stops after `patience` epochs without improvement;
/// otherwise the final parameters are returned.
pub fn sgd_train(
    train: &[StructuredPair],
    val: &[StructuredPair],
    config: &TrainConfig,
) -> Result<(CrbmParams, TrainHistory)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::InvalidValue("training set is empty".into()));
    }
    let nv = train[0].clean.len();
    let nx = train[0].corrupted.len();
    for pair in train.iter().chain(val.iter()) {
        pair.validate()?;
        if pair.clean.len() != nv || pair.corrupted.len() != nx {
            return Err(Error::dim("instances disagree on dimensions"));
        }
    }

    let mut params = if config.algo == Algo::Lr {
        CrbmParams::zeros(nv, config.hidden, nx)
    } else {
        CrbmParams::init_random(
            nv,
            config.hidden,
            nx,
            &mut stream_rng(config.seed, DOMAIN_INIT, 0),
        )
    };

    let mut chains: Vec<Option<BinaryVector>> = vec![None; train.len()];
    let mut history = TrainHistory::default();
    let mut best: Option<(f64, CrbmParams)> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..config.epochs {
        let started = Instant::now();
        let bp_opts = config.bp_options_at(epoch);

        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream_rng(config.seed, DOMAIN_SHUFFLE, epoch as u64));

        let mut converged_runs = 0usize;
        let mut iterative_runs = 0usize;
        let mut total_iters = 0usize;
        let mut grad_count = 0usize;
        let mut chains_initialized = 0usize;

        for (batch_no, batch) in order.chunks(config.minibatch).enumerate() {
            let grads = batch_gradients(&params, train, &chains, batch, config, &bp_opts, epoch)?;

            let mut mean = GradientBlocks::zeros_like(&params);
            for g in &grads {
                mean.axpy(1.0, &g.blocks);
            }
            mean.scale(1.0 / grads.len() as f64);
            if config.algo == Algo::Lr {
                // Only the visible-feature couplings and visible biases are
                // live in the baseline.
                mean.d_w_vh.fill(0.0);
                mean.d_w_hx.fill(0.0);
                mean.d_b_h.fill(0.0);
            }

            let step = if config.algo.is_margin() {
                -config.learning_rate
            } else {
                config.learning_rate
            };
            params.w_vh.scaled_add(step, &mean.d_w_vh);
            params.w_vx.scaled_add(step, &mean.d_w_vx);
            params.w_hx.scaled_add(step, &mean.d_w_hx);
            params.b_v.scaled_add(step, &mean.d_b_v);
            params.b_h.scaled_add(step, &mean.d_b_h);
            if params.check_finite().is_err() {
                return Err(Error::TrainingAborted {
                    epoch,
                    batch: batch_no,
                    message: "parameters became non-finite after the update".into(),
                });
            }

            for (grad, &idx) in grads.iter().zip(batch) {
                if let Some(state) = &grad.chain_end {
                    chains[idx] = Some(state.clone());
                }
                chains_initialized += usize::from(grad.chain_was_fresh);
                if let Some(converged) = grad.converged {
                    iterative_runs += 1;
                    converged_runs += usize::from(converged);
                }
                total_iters += grad.iters;
                grad_count += 1;
            }
        }

        let (val_all, val_changed) = if val.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            let spec = DecodeSpec::matched(config, epoch);
            let (metrics, _) = evaluate(&params, val, &spec)?;
            (metrics.all_err, metrics.changed_err)
        };

        history.records.push(EpochRecord {
            epoch,
            val_all_err: val_all,
            val_changed_err: val_changed,
            bp_converged_frac: if iterative_runs == 0 {
                1.0
            } else {
                converged_runs as f64 / iterative_runs as f64
            },
            mean_sweeps: if grad_count == 0 {
                0.0
            } else {
                total_iters as f64 / grad_count as f64
            },
            wall_s: started.elapsed().as_secs_f64(),
            bp_iters_budget: config.bp_iters_at(epoch),
            chains_initialized,
        });
        if !val.is_empty() {
            let improved = best.as_ref().is_none_or(|(err, _)| val_all < *err);
            if improved {
                best = Some((val_all, params.clone()));
                epochs_since_improvement = 0;
            } else {
                epochs_since_improvement += 1;
                if epochs_since_improvement >= config.patience {
                    break;
                }
            }
        }
    }

    let final_params = match best {
        Some((_, snapshot)) => snapshot,
        None => params,
    };
    Ok((final_params, history))
}

/// Computes the gradients of one minibatch, optionally on several worker
/// threads. Instance `idx` always draws from the stream
/// `(seed, epoch << 32 | idx)`, so the result is identical for any worker
/// count, and the returned vector is ordered like `batch`.
fn batch_gradients(
    params: &CrbmParams,
    train: &[StructuredPair],
    chains: &[Option<BinaryVector>],
    batch: &[usize],
    config: &TrainConfig,
    bp_opts: &BpOptions,
    epoch: usize,
) -> Result<Vec<InstanceGrad>> {
    let workers = config.threads.min(batch.len()).max(1);
    if workers == 1 {
        let mut engine = needs_engine(config.algo).then(|| BpEngine::new(&params.w_vh));
        return batch
            .iter()
            .map(|&idx| instance_gradient(params, train, chains, idx, config, bp_opts, epoch, engine.as_mut()))
            .collect();
    }

    let chunk = batch.len().div_ceil(workers);
    let mut results: Vec<Option<Result<Vec<InstanceGrad>>>> = Vec::new();
    results.resize_with(workers, || None);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for (w, ids) in batch.chunks(chunk).enumerate() {
            handles.push((
                w,
                scope.spawn(move || {
                    let mut engine = needs_engine(config.algo).then(|| BpEngine::new(&params.w_vh));
                    ids.iter()
                        .map(|&idx| {
                            instance_gradient(
                                params,
                                train,
                                chains,
                                idx,
                                config,
                                bp_opts,
                                epoch,
                                engine.as_mut(),
                            )
                        })
                        .collect::<Result<Vec<_>>>()
                }),
            ));
        }
        for (w, handle) in handles {
            results[w] = Some(handle.join().expect("gradient worker panicked"));
        }
    });
    let mut ordered = Vec::with_capacity(batch.len());
    for slot in results.into_iter().flatten() {
        ordered.extend(slot?);
    }
    Ok(ordered)
}

fn needs_engine(algo: Algo) -> bool {
    matches!(algo, Algo::MleBp | Algo::Mssvm | Algo::Lssvm)
}

#[allow(clippy::too_many_arguments)]
fn instance_gradient(
    params: &CrbmParams,
    train: &[StructuredPair],
    chains: &[Option<BinaryVector>],
    idx: usize,
    config: &TrainConfig,
    bp_opts: &BpOptions,
    epoch: usize,
    engine: Option<&mut BpEngine>,
) -> Result<InstanceGrad> {
    let pair = &train[idx];
    let v = &pair.clean;
    let x = &pair.corrupted;
    let mut rng = stream_rng(
        config.seed,
        DOMAIN_GRADIENT,
        ((epoch as u64) << 32) | idx as u64,
    );

    match config.algo {
        Algo::MleBp => {
            let engine = engine.expect("engine required");
            let out = mle_gradient_with_engine(
                engine,
                params,
                v,
                x,
                NegativePhase::BeliefProp(bp_opts),
                &mut rng,
            )?;
            let report = out.report.expect("iterative phase reports");
            Ok(InstanceGrad {
                blocks: out.blocks,
                converged: Some(report.converged),
                iters: report.iters_used,
                chain_end: None,
                chain_was_fresh: false,
            })
        }
        Algo::MleMf => {
            let out = mle_gradient(params, v, x, NegativePhase::MeanField(bp_opts), &mut rng)?;
            let report = out.report.expect("iterative phase reports");
            Ok(InstanceGrad {
                blocks: out.blocks,
                converged: Some(report.converged),
                iters: report.iters_used,
                chain_end: None,
                chain_was_fresh: false,
            })
        }
        Algo::CdK | Algo::Pcd => {
            let mut fresh = false;
            let start = if config.algo == Algo::Pcd {
                match &chains[idx] {
                    Some(state) => GibbsStart::Chain(state),
                    None => {
                        fresh = true;
                        match config.cd_init {
                            CdInit::Data => GibbsStart::Data,
                            CdInit::Random => GibbsStart::Random,
                        }
                    }
                }
            } else {
                match config.cd_init {
                    CdInit::Data => GibbsStart::Data,
                    CdInit::Random => GibbsStart::Random,
                }
            };
            let out = mle_gradient(
                params,
                v,
                x,
                NegativePhase::Gibbs {
                    start,
                    steps: config.gibbs_steps,
                },
                &mut rng,
            )?;
            Ok(InstanceGrad {
                blocks: out.blocks,
                converged: None,
                iters: config.gibbs_steps,
                chain_end: if config.algo == Algo::Pcd {
                    out.chain_end
                } else {
                    None
                },
                chain_was_fresh: fresh,
            })
        }
        Algo::Mssvm => {
            let engine = engine.expect("engine required");
            let (blocks, report) = mssvm_gradient_with_engine(engine, params, v, x, bp_opts)?;
            Ok(InstanceGrad {
                blocks,
                converged: Some(report.converged),
                iters: report.iters_used,
                chain_end: None,
                chain_was_fresh: false,
            })
        }
        Algo::Lssvm => {
            let engine = engine.expect("engine required");
            let (blocks, report) = lssvm_gradient_with_engine(engine, params, v, x, bp_opts)?;
            Ok(InstanceGrad {
                blocks,
                converged: Some(report.converged),
                iters: report.iters_used,
                chain_end: None,
                chain_was_fresh: false,
            })
        }
        Algo::Lr => {
            // Factorized model: the likelihood gradient of the two live
            // blocks is exact in closed form.
            let (b1, _) = params.conditioned_biases(x)?;
            let tau_v = b1.mapv(logistic);
            let residual = v.as_array() - &tau_v;
            let mut blocks = GradientBlocks::zeros_like(params);
            blocks.d_w_vx = crate::inference::outer(&residual, x.as_array());
            blocks.d_b_v = residual;
            Ok(InstanceGrad {
                blocks,
                converged: None,
                iters: 0,
                chain_end: None,
                chain_was_fresh: false,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{corrupt_images, synthetic_images, Corruption, CorruptionSpec};
    use crate::model::{conditional_log_likelihood, ENUMERATION_LIMIT};

    fn toy_pairs(n: usize, h: usize, w: usize, seed: u64) -> Vec<StructuredPair> {
        let images = synthetic_images(n, h, w, 4, seed).unwrap();
        corrupt_images(
            &images,
            &CorruptionSpec {
                kind: Corruption::Flip { prob: 0.1 },
                seed,
            },
        )
        .unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_at_initialization() {
        let pairs = toy_pairs(8, 3, 3, 1);
        let config = TrainConfig {
            learning_rate: 0.0,
            hidden: 4,
            epochs: 3,
            minibatch: 4,
            ..TrainConfig::default()
        };
        let (params, history) = sgd_train(&pairs[..6], &pairs[6..], &config).unwrap();
        let initial =
            CrbmParams::init_random(9, 4, 9, &mut stream_rng(config.seed, DOMAIN_INIT, 0));
        assert_eq!(params, initial);
        assert_eq!(history.records.len(), 3);
        for (e, r) in history.records.iter().enumerate() {
            assert_eq!(r.epoch, e);
            assert!(r.val_all_err.is_finite());
        }
    }

    #[test]
    fn training_is_deterministic_for_a_fixed_seed() {
        let pairs = toy_pairs(10, 3, 3, 2);
        for algo in [Algo::MleBp, Algo::CdK, Algo::Mssvm, Algo::Lr] {
            let config = TrainConfig {
                algo,
                hidden: 3,
                epochs: 2,
                minibatch: 3,
                seed: 77,
                ..TrainConfig::default()
            };
            let (a, _) = sgd_train(&pairs[..8], &pairs[8..], &config).unwrap();
            let (b, _) = sgd_train(&pairs[..8], &pairs[8..], &config).unwrap();
            assert_eq!(a, b, "{} diverged across identical runs", algo.name());
        }
    }

    #[test]
    fn worker_count_does_not_change_the_result() {
        let pairs = toy_pairs(9, 3, 3, 3);
        let base = TrainConfig {
            algo: Algo::CdK,
            hidden: 3,
            epochs: 2,
            minibatch: 9,
            seed: 5,
            ..TrainConfig::default()
        };
        let threaded = TrainConfig {
            threads: 3,
            ..base.clone()
        };
        let (a, _) = sgd_train(&pairs, &[], &base).unwrap();
        let (b, _) = sgd_train(&pairs, &[], &threaded).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn likelihood_training_is_monotone_on_small_models() {
        // Exact likelihood by enumeration after each epoch; the deterministic
        // gradient estimate should push it up essentially every step.
        let mut monotone_seeds = 0;
        let seeds = 10u64;
        for seed in 0..seeds {
            let pairs = toy_pairs(10, 2, 2, 400 + seed);
            let log_likelihood = |p: &CrbmParams| -> f64 {
                pairs
                    .iter()
                    .map(|pair| {
                        conditional_log_likelihood(
                            p,
                            &pair.clean,
                            &pair.corrupted,
                            ENUMERATION_LIMIT,
                        )
                        .unwrap()
                    })
                    .sum()
            };
            let mut values = Vec::new();
            for epochs in 1..=20 {
                let config = TrainConfig {
                    algo: Algo::MleBp,
                    hidden: 3,
                    learning_rate: 0.005,
                    minibatch: 5,
                    epochs,
                    seed: 400 + seed,
                    ..TrainConfig::default()
                };
                let (params, _) = sgd_train(&pairs, &[], &config).unwrap();
                values.push(log_likelihood(&params));
            }
            let monotone = values.windows(2).all(|w| w[1] >= w[0] - 1e-9);
            monotone_seeds += usize::from(monotone);
        }
        assert!(
            monotone_seeds >= 9,
            "likelihood rose monotonically on only {monotone_seeds}/{seeds} seeds"
        );
    }

    #[test]
    fn persistent_chains_are_isolated_per_instance() {
        let pairs = toy_pairs(6, 3, 3, 4);
        let config = TrainConfig {
            algo: Algo::Pcd,
            hidden: 3,
            gibbs_steps: 2,
            seed: 9,
            ..TrainConfig::default()
        };
        let params =
            CrbmParams::init_random(9, 3, 9, &mut stream_rng(1, DOMAIN_INIT, 0));
        let mut chains: Vec<Option<BinaryVector>> = vec![None; 6];
        chains[2] = Some(pairs[2].clean.clone());
        chains[4] = Some(pairs[4].clean.clone());
        let bp = config.bp_options_at(0);

        let forward =
            batch_gradients(&params, &pairs, &chains, &[0, 1, 2, 3, 4, 5], &config, &bp, 0)
                .unwrap();
        let permuted_order = [5usize, 3, 1, 0, 4, 2];
        let permuted =
            batch_gradients(&params, &pairs, &chains, &permuted_order, &config, &bp, 0).unwrap();
        for (pos, &idx) in permuted_order.iter().enumerate() {
            assert_eq!(
                forward[idx].blocks, permuted[pos].blocks,
                "instance {idx} gradient depends on batch order"
            );
            assert_eq!(forward[idx].chain_end, permuted[pos].chain_end);
            assert_eq!(forward[idx].chain_was_fresh, permuted[pos].chain_was_fresh);
        }
        // Chains that already existed are not re-initialized.
        assert!(!forward[2].chain_was_fresh);
        assert!(forward[0].chain_was_fresh);
    }

    #[test]
    fn sidecar_round_trips_and_rejects_unknown_keys() {
        let sidecar = Sidecar {
            config: TrainConfig {
                algo: Algo::Mssvm,
                hidden: 12,
                learning_rate: 0.02,
                minibatch: 40,
                epochs: 9,
                gibbs_steps: 3,
                bp_iters_base: 7,
                tolerance: 1e-3,
                seed: 123,
                patience: 4,
                cd_init: CdInit::Data,
                damping: 0.0,
                threads: 2,
            },
            best_epoch: 6,
            trained_epochs: 9,
        };
        let parsed = Sidecar::from_text(&sidecar.to_text()).unwrap();
        assert_eq!(parsed, sidecar);
        assert!(Sidecar::from_text("algo = mle-bp\nbogus_key = 3\n").is_err());
        assert!(Sidecar::from_text("algo mle-bp\n").is_err());
    }

    #[test]
    fn history_tsv_has_the_interchange_columns() {
        let pairs = toy_pairs(6, 3, 3, 5);
        let config = TrainConfig {
            algo: Algo::MleBp,
            hidden: 3,
            epochs: 2,
            minibatch: 3,
            ..TrainConfig::default()
        };
        let (_, history) = sgd_train(&pairs[..4], &pairs[4..], &config).unwrap();
        let tsv = history.to_tsv();
        let mut lines = tsv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch\tval_all_err\tval_changed_err\tbp_converged_frac\tmean_sweeps\twall_s"
        );
        for line in lines {
            assert_eq!(line.split('\t').count(), 6);
        }
        for (e, r) in history.records.iter().enumerate() {
            assert_eq!(r.bp_iters_budget, config.bp_iters_base + e);
            assert!((0.0..=1.0).contains(&r.bp_converged_frac));
        }
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let ok = TrainConfig::default();
        assert!(ok.validate().is_ok());
        assert!(TrainConfig {
            learning_rate: -0.1,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            minibatch: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            hidden: 0,
            ..ok.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            tolerance: 0.0,
            ..ok
        }
        .validate()
        .is_err());
    }

    #[test]
    fn factorized_decode_thresholds_the_conditioned_bias() {
        let mut p = CrbmParams::zeros(2, 2, 2);
        p.w_vx[[0, 0]] = 4.0;
        p.w_vx[[1, 1]] = -4.0;
        // Observation [1, 1] against target [1, 0]: pixel 1 was changed.
        let pairs = vec![StructuredPair {
            clean: BinaryVector::from_bools(&[true, false]),
            corrupted: crate::model::FeatureVector::new(ndarray::arr1(&[1.0, 1.0])).unwrap(),
            changed: BinaryVector::from_bools(&[false, true]),
        }];
        pairs[0].validate().unwrap();
        let spec = DecodeSpec {
            family: DecodeFamily::Factorized,
            bp: BpOptions::default(),
        };
        let (metrics, stats) = evaluate(&p, &pairs, &spec).unwrap();
        assert_eq!(metrics.all_err, 0.0);
        assert_eq!(metrics.changed_err, 0.0);
        assert_eq!(stats.converged_frac, 1.0);
    }
}
