//! Gradient statistics and training objectives for conditional models.
//!
//! Maximum-likelihood gradients decompose into a data-dependent positive
//! part, which is exact, and a model-expectation negative part, which is
//! intractable and gets approximated by message passing, mean field, exact
//! enumeration (small models), or Gibbs sampling (contrastive updates with
//! either fresh or persistent chains). The two max-margin objectives reuse
//! the same statistics at loss-augmented decodes instead of expectations.

mod train;

pub use train::{
    evaluate, predict, predict_features, sgd_train, Algo, CdInit, DecodeFamily, DecodeSpec,
    EpochRecord, EvalStats, Sidecar, TrainConfig, TrainHistory,
};

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::inference::{
    self, mean_field, threshold_beliefs, Beliefs, BpEngine, BpMode, BpOptions, ConvergenceReport,
};
use crate::model::{BinaryVector, CrbmParams, ExactSummary, FeatureVector, RbmParams};

/// Per-block gradient accumulator mirroring the five parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBlocks {
    pub d_w_vh: Array2<f64>,
    pub d_w_vx: Array2<f64>,
    pub d_w_hx: Array2<f64>,
    pub d_b_v: Array1<f64>,
    pub d_b_h: Array1<f64>,
}

impl GradientBlocks {
    pub fn zeros_like(p: &CrbmParams) -> Self {
        GradientBlocks {
            d_w_vh: Array2::zeros(p.w_vh.dim()),
            d_w_vx: Array2::zeros(p.w_vx.dim()),
            d_w_hx: Array2::zeros(p.w_hx.dim()),
            d_b_v: Array1::zeros(p.b_v.len()),
            d_b_h: Array1::zeros(p.b_h.len()),
        }
    }

    /// `self += a * other`, blockwise.
    pub fn axpy(&mut self, a: f64, other: &GradientBlocks) {
        self.d_w_vh.scaled_add(a, &other.d_w_vh);
        self.d_w_vx.scaled_add(a, &other.d_w_vx);
        self.d_w_hx.scaled_add(a, &other.d_w_hx);
        self.d_b_v.scaled_add(a, &other.d_b_v);
        self.d_b_h.scaled_add(a, &other.d_b_h);
    }

    pub fn scale(&mut self, s: f64) {
        self.d_w_vh *= s;
        self.d_w_vx *= s;
        self.d_w_hx *= s;
        self.d_b_v *= s;
        self.d_b_h *= s;
    }

    pub fn max_abs(&self) -> f64 {
        self.d_w_vh
            .iter()
            .chain(self.d_w_vx.iter())
            .chain(self.d_w_hx.iter())
            .chain(self.d_b_v.iter())
            .chain(self.d_b_h.iter())
            .fold(0.0f64, |m, &x| m.max(x.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.d_w_vh.iter().all(|x| x.is_finite())
            && self.d_w_vx.iter().all(|x| x.is_finite())
            && self.d_w_hx.iter().all(|x| x.is_finite())
            && self.d_b_v.iter().all(|x| x.is_finite())
            && self.d_b_h.iter().all(|x| x.is_finite())
    }
}

/// Moment statistics at explicit layer states: `h` may be a hard 0/1 vector
/// or a mean activation.
fn stats_at(v: &Array1<f64>, h: &Array1<f64>, x: &Array1<f64>) -> GradientBlocks {
    GradientBlocks {
        d_w_vh: inference::outer(v, h),
        d_w_vx: inference::outer(v, x),
        d_w_hx: inference::outer(h, x),
        d_b_v: v.clone(),
        d_b_h: h.clone(),
    }
}

/// Data-dependent statistics of one instance: the exact positive part of
/// the log-likelihood gradient, plus the mean hidden activation it uses.
pub fn positive_stats(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
) -> Result<(Array1<f64>, GradientBlocks)> {
    let mu = p.hidden_mean(v, x)?;
    let blocks = stats_at(v.as_array(), &mu, x.as_array());
    Ok((mu, blocks))
}

/// Model-expectation statistics assembled from (pseudo-)marginals: the
/// pairwise beliefs stand in for `E[v h']`, the singleton beliefs for
/// `E[v]` and `E[h]`.
pub fn stats_from_beliefs(beliefs: &Beliefs, x: &FeatureVector) -> GradientBlocks {
    GradientBlocks {
        d_w_vh: beliefs.pairwise.clone(),
        d_w_vx: inference::outer(&beliefs.visible, x.as_array()),
        d_w_hx: inference::outer(&beliefs.hidden, x.as_array()),
        d_b_v: beliefs.visible.clone(),
        d_b_h: beliefs.hidden.clone(),
    }
}

impl From<ExactSummary> for Beliefs {
    fn from(s: ExactSummary) -> Beliefs {
        Beliefs {
            visible: s.tau_v,
            hidden: s.tau_h,
            pairwise: s.gamma,
        }
    }
}

/// How the negative phase of a likelihood gradient is approximated.
#[derive(Debug, Clone, Copy)]
pub enum NegativePhase<'a> {
    /// Sum-product message passing on the conditioned model.
    BeliefProp(&'a BpOptions),
    /// Mean-field coordinate updates.
    MeanField(&'a BpOptions),
    /// Exact enumeration; only viable on small models.
    Exact { limit: usize },
    /// A `steps`-long blocked Gibbs chain; the final visible sample and its
    /// mean hidden activation provide the moments.
    Gibbs { start: GibbsStart<'a>, steps: usize },
}

/// Where a Gibbs negative chain starts.
#[derive(Debug, Clone, Copy)]
pub enum GibbsStart<'a> {
    /// At the training instance itself (the classic contrastive start).
    Data,
    /// At a uniformly random state; works better conditionally.
    Random,
    /// At a persistent chain carried over from the previous update.
    Chain(&'a BinaryVector),
}

/// A likelihood gradient plus whatever the negative phase produced along
/// the way.
#[derive(Debug, Clone)]
pub struct MleGradient {
    /// Ascent direction of the conditional log-likelihood.
    pub blocks: GradientBlocks,
    /// Convergence report of the iterative negative phase, when one ran.
    pub report: Option<ConvergenceReport>,
    /// Final visible state of the Gibbs chain, for persistence.
    pub chain_end: Option<BinaryVector>,
}

/// Stochastic log-likelihood gradient of one instance: exact positive
/// statistics minus approximate negative statistics on the conditioned
/// model. The returned blocks point in the ascent direction.
pub fn mle_gradient(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    phase: NegativePhase,
    rng: &mut impl Rng,
) -> Result<MleGradient> {
    mle_gradient_impl(None, p, v, x, phase, rng)
}

/// Same as [`mle_gradient`] with a caller-provided engine for the
/// message-passing negative phase; the engine must have been built from
/// `p.w_vh`.
pub fn mle_gradient_with_engine(
    engine: &mut BpEngine,
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    phase: NegativePhase,
    rng: &mut impl Rng,
) -> Result<MleGradient> {
    mle_gradient_impl(Some(engine), p, v, x, phase, rng)
}

fn mle_gradient_impl(
    engine: Option<&mut BpEngine>,
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    phase: NegativePhase,
    rng: &mut impl Rng,
) -> Result<MleGradient> {
    let (_, positive) = positive_stats(p, v, x)?;
    let (b1, b2) = p.conditioned_biases(x)?;

    let mut report = None;
    let mut chain_end = None;
    let negative = match phase {
        NegativePhase::BeliefProp(opts) => {
            let opts = opts.clone().with_mode(BpMode::Sum);
            let (beliefs, _, rep) = match engine {
                Some(engine) => engine.run(&b1, &b2, &opts)?,
                None => BpEngine::new(&p.w_vh).run(&b1, &b2, &opts)?,
            };
            report = Some(rep);
            stats_from_beliefs(&beliefs, x)
        }
        NegativePhase::MeanField(opts) => {
            let cond = RbmParams {
                weights: p.w_vh.clone(),
                visible_bias: b1,
                hidden_bias: b2,
            };
            let (beliefs, rep) = mean_field(&cond, opts)?;
            report = Some(rep);
            stats_from_beliefs(&beliefs, x)
        }
        NegativePhase::Exact { limit } => {
            let cond = RbmParams {
                weights: p.w_vh.clone(),
                visible_bias: b1,
                hidden_bias: b2,
            };
            let beliefs: Beliefs = cond.exact_summary(limit)?.into();
            stats_from_beliefs(&beliefs, x)
        }
        NegativePhase::Gibbs { start, steps } => {
            if steps == 0 {
                return Err(Error::Config("Gibbs negative phase needs steps >= 1".into()));
            }
            let cond = RbmParams {
                weights: p.w_vh.clone(),
                visible_bias: b1,
                hidden_bias: b2,
            };
            let mut state = match start {
                GibbsStart::Data => v.clone(),
                GibbsStart::Random => BinaryVector::from_bools(
                    &(0..p.n_visible())
                        .map(|_| rng.random::<bool>())
                        .collect::<Vec<_>>(),
                ),
                GibbsStart::Chain(chain) => chain.clone(),
            };
            for _ in 0..steps {
                state = inference::gibbs_step(&cond, &state, rng).0;
            }
            let mu = cond.conditional_h_given_v(&state);
            let blocks = stats_at(state.as_array(), &mu, x.as_array());
            chain_end = Some(state);
            blocks
        }
    };

    let mut blocks = positive;
    blocks.axpy(-1.0, &negative);
    Ok(MleGradient {
        blocks,
        report,
        chain_end,
    })
}

/// Folds a decomposable per-pixel disagreement loss into the visible
/// biases: each visible unit gains `1 - 2 * truth_i`, which scores every
/// assignment by its Hamming distance to the truth up to a constant.
pub fn loss_augment(cond: &RbmParams, truth: &BinaryVector) -> RbmParams {
    assert_eq!(truth.len(), cond.n_visible(), "truth length mismatch");
    RbmParams {
        weights: cond.weights.clone(),
        visible_bias: &cond.visible_bias + &loss_bias(truth),
        hidden_bias: cond.hidden_bias.clone(),
    }
}

fn loss_bias(truth: &BinaryVector) -> Array1<f64> {
    truth.as_array().mapv(|t| 1.0 - 2.0 * t)
}

/// Margin-violation gradient of the marginal objective: the loss-augmented
/// marginal-MAP decode supplies the violating assignment, and the gradient
/// is the statistics gap between that decode and the truth. Returns the
/// *descent* direction; it is exactly zero when the decode returns the
/// truth.
pub fn mssvm_gradient(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    opts: &BpOptions,
) -> Result<(GradientBlocks, ConvergenceReport)> {
    let mut engine = BpEngine::new(&p.w_vh);
    mssvm_gradient_with_engine(&mut engine, p, v, x, opts)
}

/// Engine-reusing variant of [`mssvm_gradient`]; the engine must have been
/// built from `p.w_vh`.
pub fn mssvm_gradient_with_engine(
    engine: &mut BpEngine,
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    opts: &BpOptions,
) -> Result<(GradientBlocks, ConvergenceReport)> {
    let (b1, b2) = p.conditioned_biases(x)?;
    let b1_aug = &b1 + &loss_bias(v);
    let opts = opts.clone().with_mode(BpMode::Mixed);
    let (beliefs, _, report) = engine.run(&b1_aug, &b2, &opts)?;
    let v_hat = threshold_beliefs(&beliefs.visible);

    let mu_hat = p.hidden_mean(&v_hat, x)?;
    let mu_truth = p.hidden_mean(v, x)?;
    let mut blocks = stats_at(v_hat.as_array(), &mu_hat, x.as_array());
    blocks.axpy(-1.0, &stats_at(v.as_array(), &mu_truth, x.as_array()));
    Ok((blocks, report))
}

/// Exact per-instance value of the marginal max-margin objective by
/// enumeration of the visible layer: the best loss-augmented marginal score
/// minus the truth's marginal score. Only viable on small models.
pub fn mssvm_objective_exact(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    limit: usize,
) -> Result<f64> {
    let cond = p.condition(x)?;
    let nv = cond.n_visible();
    if nv > limit {
        return Err(Error::ModelTooLarge { smaller: nv, limit });
    }
    let truth_score = -cond.free_energy(v);
    let mut best = f64::NEG_INFINITY;
    for state in 0..(1usize << nv) {
        let candidate = BinaryVector::from_index(state, nv);
        let loss = candidate.hamming(v) as f64;
        best = best.max(loss - cond.free_energy(&candidate));
    }
    Ok(best - truth_score)
}

/// Exact per-instance value of the joint max-margin objective by
/// enumeration of both layers: the best loss-augmented joint score minus
/// the truth's best joint score over hidden states.
pub fn lssvm_objective_exact(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    limit: usize,
) -> Result<f64> {
    let cond = p.condition(x)?;
    let nv = cond.n_visible();
    let nh = cond.n_hidden();
    if nv + nh > limit {
        return Err(Error::ModelTooLarge {
            smaller: nv + nh,
            limit,
        });
    }
    let mut best = f64::NEG_INFINITY;
    let mut truth_best = f64::NEG_INFINITY;
    for sh in 0..(1usize << nh) {
        let h = BinaryVector::from_index(sh, nh);
        truth_best = truth_best.max(-cond.energy(v, &h)?);
        for sv in 0..(1usize << nv) {
            let candidate = BinaryVector::from_index(sv, nv);
            let loss = candidate.hamming(v) as f64;
            best = best.max(loss - cond.energy(&candidate, &h)?);
        }
    }
    Ok(best - truth_best)
}

/// Margin-violation gradient of the joint-MAP objective. Both sides use
/// hard hidden states: the violating side comes from a max-product decode
/// of the loss-augmented model, the truth side from clamping the visible
/// layer to the truth (which reduces the constrained decode to independent
/// thresholding). Returns the descent direction.
pub fn lssvm_gradient(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    opts: &BpOptions,
) -> Result<(GradientBlocks, ConvergenceReport)> {
    let mut engine = BpEngine::new(&p.w_vh);
    lssvm_gradient_with_engine(&mut engine, p, v, x, opts)
}

/// Engine-reusing variant of [`lssvm_gradient`]; the engine must have been
/// built from `p.w_vh`.
pub fn lssvm_gradient_with_engine(
    engine: &mut BpEngine,
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    opts: &BpOptions,
) -> Result<(GradientBlocks, ConvergenceReport)> {
    let (b1, b2) = p.conditioned_biases(x)?;
    let b1_aug = &b1 + &loss_bias(v);
    let opts = opts.clone().with_mode(BpMode::Max);
    let (beliefs, _, report) = engine.run(&b1_aug, &b2, &opts)?;
    let v_hat = threshold_beliefs(&beliefs.visible);
    let h_hat = threshold_beliefs(&beliefs.hidden);

    // Truth-side hidden decode with v clamped to the truth.
    let act = p.w_vh.t().dot(v.as_array()) + &b2;
    let h_plus = threshold_beliefs(&act.mapv(crate::math::logistic));

    let mut blocks = stats_at(v_hat.as_array(), h_hat.as_array(), x.as_array());
    blocks.axpy(
        -1.0,
        &stats_at(v.as_array(), h_plus.as_array(), x.as_array()),
    );
    Ok((blocks, report))
}
