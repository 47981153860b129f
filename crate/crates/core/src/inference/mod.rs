//! Approximate inference on conditioned models.
//!
//! The message-passing state of a bipartite model fits in two dense
//! matrices, one per direction, so a full sweep is a handful of elementwise
//! passes plus row reductions. No per-edge objects, no pointer chasing.
//! [`BpEngine`] precomputes the coupling transforms once and can then be
//! driven with many different bias vectors, which is exactly the shape of
//! the conditional workload: one weight matrix, one bias pair per instance.
//!
//! Three message schedules are supported: sum-product (marginals),
//! mixed-product (max over visible, sum over hidden), and max-product
//! (joint modes). The scalar reference in [`scalar`] implements the same
//! schedules edge by edge and exists to keep the matrix kernels honest.

pub mod kernels;
pub mod scalar;

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::math::{binary_entropy, clamp_unit, logistic, xlnx};
use crate::model::{BinaryVector, RbmParams};

/// Message schedule selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BpMode {
    /// Sum-product: approximates marginal probabilities.
    Sum,
    /// Mixed-product: visible units decode to their belief modes mid-sweep;
    /// used for marginal-MAP prediction.
    Mixed,
    /// Max-product: both message directions use the tropical update; used
    /// for joint MAP prediction.
    Max,
}

/// Knobs for one belief-propagation run.
#[derive(Debug, Clone)]
pub struct BpOptions {
    /// Sweep budget `T`.
    pub max_iters: usize,
    /// Early-stopping tolerance on the max-norm message change per sweep.
    pub tolerance: f64,
    pub mode: BpMode,
    /// Blend factor towards the previous messages; 0.0 (off) is the
    /// default and the recommended setting, the knob exists for
    /// experimentation.
    pub damping: f64,
    /// Record the per-sweep message deltas in the convergence report.
    pub track_deltas: bool,
}

impl BpOptions {
    pub fn new(max_iters: usize, tolerance: f64, mode: BpMode) -> Self {
        BpOptions {
            max_iters,
            tolerance,
            mode,
            damping: 0.0,
            track_deltas: false,
        }
    }

    pub fn sum(max_iters: usize, tolerance: f64) -> Self {
        Self::new(max_iters, tolerance, BpMode::Sum)
    }

    pub fn with_mode(mut self, mode: BpMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("sweep budget must be at least 1".into()));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config("damping must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

impl Default for BpOptions {
    fn default() -> Self {
        // The protocol default: tolerance 1e-3; a generous sweep budget.
        BpOptions::new(50, 1e-3, BpMode::Sum)
    }
}

/// Both normalized message matrices, the whole BP state.
#[derive(Debug, Clone)]
pub struct Messages {
    /// Hidden-to-visible messages; entry `(i, j)` is the probability the
    /// receiving visible unit `i` equals one according to hidden unit `j`.
    pub to_visible: Array2<f64>,
    /// Visible-to-hidden messages, `(j, i)` indexed, same convention.
    pub to_hidden: Array2<f64>,
}

/// Singleton and pairwise pseudo-marginals produced by a run.
#[derive(Debug, Clone)]
pub struct Beliefs {
    /// `P(v_i = 1)` estimates.
    pub visible: Array1<f64>,
    /// `P(h_j = 1)` estimates.
    pub hidden: Array1<f64>,
    /// `P(v_i = 1, h_j = 1)` estimates, `(|v|, |h|)`.
    pub pairwise: Array2<f64>,
}

impl Beliefs {
    /// The full joint table over `(v_i, h_j)` implied by the free beliefs,
    /// ordered `[p00, p01, p10, p11]`.
    pub fn pairwise_table(&self, i: usize, j: usize) -> [f64; 4] {
        let tv = self.visible[i];
        let th = self.hidden[j];
        let g = self.pairwise[[i, j]];
        [1.0 + g - tv - th, th - g, tv - g, g]
    }
}

/// Outcome of an iterative run.
#[derive(Debug, Clone)]
pub struct ConvergenceReport {
    /// True exactly when `final_delta < tolerance`.
    pub converged: bool,
    pub iters_used: usize,
    /// Max absolute message change in the last sweep.
    pub final_delta: f64,
    /// Per-sweep deltas; populated only when tracking was requested.
    pub sweep_deltas: Vec<f64>,
}

/// Reusable BP state for one weight matrix.
///
/// Conditioning a CRBM never touches the couplings, so the exponential and
/// logistic transforms are computed once here and shared across every
/// instance in a batch.
pub struct BpEngine {
    nv: usize,
    nh: usize,
    exp_w: Array2<f64>,
    exp_w_t: Array2<f64>,
    sig_w_t: Array2<f64>,
    m_vh: Array2<f64>,
    m_hv: Array2<f64>,
    tau_v: Array1<f64>,
    tau_h: Array1<f64>,
    v_tilde: Vec<bool>,
}

impl BpEngine {
    pub fn new(weights: &Array2<f64>) -> Self {
        let (nv, nh) = weights.dim();
        BpEngine {
            nv,
            nh,
            exp_w: weights.mapv(f64::exp),
            exp_w_t: weights.t().mapv(f64::exp),
            sig_w_t: weights.t().mapv(logistic),
            m_vh: Array2::zeros((nv, nh)),
            m_hv: Array2::zeros((nh, nv)),
            tau_v: Array1::zeros(nv),
            tau_h: Array1::zeros(nh),
            v_tilde: vec![false; nv],
        }
    }

    pub fn n_visible(&self) -> usize {
        self.nv
    }

    pub fn n_hidden(&self) -> usize {
        self.nh
    }

    /// Runs message passing with the given bias vectors.
    ///
    /// Messages start uniform, beliefs at the bias-only values. Each sweep
    /// sends all hidden-to-visible messages, refreshes the visible beliefs,
    /// sends all visible-to-hidden messages (per the selected mode), and
    /// refreshes the hidden beliefs; the bipartite structure makes these
    /// effectively sequential updates. The sweep loop stops early once the
    /// max-norm message change drops below the tolerance, and the pairwise
    /// beliefs are assembled at the end.
    pub fn run(
        &mut self,
        visible_bias: &Array1<f64>,
        hidden_bias: &Array1<f64>,
        opts: &BpOptions,
    ) -> Result<(Beliefs, Messages, ConvergenceReport)> {
        opts.validate()?;
        if visible_bias.len() != self.nv || hidden_bias.len() != self.nh {
            return Err(Error::dim(format!(
                "engine is {}x{} but biases have lengths {} and {}",
                self.nv,
                self.nh,
                visible_bias.len(),
                hidden_bias.len()
            )));
        }

        self.m_vh.fill(0.5);
        self.m_hv.fill(0.5);
        self.tau_v = visible_bias.mapv(|b| clamp_unit(logistic(b)));
        self.tau_h = hidden_bias.mapv(|b| clamp_unit(logistic(b)));

        let tropical = opts.mode == BpMode::Max;
        let mut sweep_deltas = Vec::new();
        let mut final_delta = f64::INFINITY;
        let mut iters_used = 0;

        for sweep in 1..=opts.max_iters {
            let d_visible = kernels::update_messages_to_visible(
                &self.exp_w,
                &mut self.m_vh,
                &self.m_hv,
                &self.tau_h,
                tropical,
                opts.damping,
            );
            kernels::update_singleton_beliefs(visible_bias, &self.m_vh, &mut self.tau_v);
            let d_hidden = match opts.mode {
                BpMode::Sum | BpMode::Max => kernels::update_messages_to_hidden_sum(
                    &self.exp_w_t,
                    &mut self.m_hv,
                    &self.m_vh,
                    &self.tau_v,
                    tropical,
                    opts.damping,
                ),
                BpMode::Mixed => {
                    for (flag, &t) in self.v_tilde.iter_mut().zip(self.tau_v.iter()) {
                        *flag = t >= 0.5;
                    }
                    kernels::update_messages_to_hidden_mixed(
                        &self.sig_w_t,
                        &mut self.m_hv,
                        &self.v_tilde,
                        opts.damping,
                    )
                }
            };
            kernels::update_singleton_beliefs(hidden_bias, &self.m_hv, &mut self.tau_h);

            final_delta = d_visible.max(d_hidden);
            iters_used = sweep;
            self.check_finite(sweep)?;
            if opts.track_deltas {
                sweep_deltas.push(final_delta);
            }
            if final_delta < opts.tolerance {
                break;
            }
        }

        let pairwise = kernels::pairwise_beliefs(
            &self.exp_w,
            &self.m_vh,
            &self.m_hv,
            &self.tau_v,
            &self.tau_h,
        )
        .map_err(|e| match e {
            Error::Numerical { message, .. } => Error::Numerical {
                iteration: iters_used,
                message,
            },
            other => other,
        })?;

        Ok((
            Beliefs {
                visible: self.tau_v.clone(),
                hidden: self.tau_h.clone(),
                pairwise,
            },
            Messages {
                to_visible: self.m_vh.clone(),
                to_hidden: self.m_hv.clone(),
            },
            ConvergenceReport {
                converged: final_delta < opts.tolerance,
                iters_used,
                final_delta,
                sweep_deltas,
            },
        ))
    }

    fn check_finite(&self, sweep: usize) -> Result<()> {
        let ok = self.m_vh.iter().all(|x| x.is_finite())
            && self.m_hv.iter().all(|x| x.is_finite())
            && self.tau_v.iter().all(|x| x.is_finite())
            && self.tau_h.iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Numerical {
                iteration: sweep,
                message: "message or belief became non-finite".into(),
            })
        }
    }
}

/// Belief propagation on one model: convenience wrapper that builds a fresh
/// [`BpEngine`].
pub fn bp_run(p: &RbmParams, opts: &BpOptions) -> Result<(Beliefs, Messages, ConvergenceReport)> {
    BpEngine::new(&p.weights).run(&p.visible_bias, &p.hidden_bias, opts)
}

/// Naive mean field: coordinate updates of the two belief vectors until the
/// max-norm change drops below the tolerance. Pairwise beliefs are the
/// outer product, consistent with the fully factorized posterior.
pub fn mean_field(p: &RbmParams, opts: &BpOptions) -> Result<(Beliefs, ConvergenceReport)> {
    mean_field_with(&p.weights, &p.visible_bias, &p.hidden_bias, opts)
}

/// [`mean_field`] on explicit weight and bias views, for callers that hold
/// a conditioned bias pair without materializing a full parameter set.
pub fn mean_field_with(
    weights: &Array2<f64>,
    visible_bias: &Array1<f64>,
    hidden_bias: &Array1<f64>,
    opts: &BpOptions,
) -> Result<(Beliefs, ConvergenceReport)> {
    opts.validate()?;
    let mut tau_v = visible_bias.mapv(|b| clamp_unit(logistic(b)));
    let mut tau_h = hidden_bias.mapv(|b| clamp_unit(logistic(b)));
    let mut final_delta = f64::INFINITY;
    let mut iters_used = 0;
    let mut sweep_deltas = Vec::new();
    for sweep in 1..=opts.max_iters {
        let act_h = weights.t().dot(&tau_v) + hidden_bias;
        let new_h = act_h.mapv(|u| clamp_unit(logistic(u)));
        let d_h = max_abs_diff_vec(&new_h, &tau_h);
        tau_h = new_h;

        let act_v = weights.dot(&tau_h) + visible_bias;
        let new_v = act_v.mapv(|u| clamp_unit(logistic(u)));
        let d_v = max_abs_diff_vec(&new_v, &tau_v);
        tau_v = new_v;

        final_delta = d_h.max(d_v);
        iters_used = sweep;
        if opts.track_deltas {
            sweep_deltas.push(final_delta);
        }
        if final_delta < opts.tolerance {
            break;
        }
    }
    let pairwise = outer(&tau_v, &tau_h);
    Ok((
        Beliefs {
            visible: tau_v,
            hidden: tau_h,
            pairwise,
        },
        ConvergenceReport {
            converged: final_delta < opts.tolerance,
            iters_used,
            final_delta,
            sweep_deltas,
        },
    ))
}

/// One blocked Gibbs transition: sample the hidden layer given `v`, then the
/// visible layer given that sample. Both conditionals factorize, so each
/// layer is drawn unit by unit in index order.
pub fn gibbs_step(
    p: &RbmParams,
    v: &BinaryVector,
    rng: &mut impl Rng,
) -> (BinaryVector, BinaryVector) {
    let probs_h = p.conditional_h_given_v(v);
    let h = sample_bernoulli(&probs_h, rng);
    let probs_v = p.conditional_v_given_h(&h);
    let v_next = sample_bernoulli(&probs_v, rng);
    (v_next, h)
}

fn sample_bernoulli(probs: &Array1<f64>, rng: &mut impl Rng) -> BinaryVector {
    BinaryVector::from_bools(
        &probs
            .iter()
            .map(|&q| rng.random::<f64>() < q)
            .collect::<Vec<_>>(),
    )
}

/// Thresholds a belief vector at one half; ties go to one.
pub fn threshold_beliefs(beliefs: &Array1<f64>) -> BinaryVector {
    BinaryVector::from_bools(&beliefs.iter().map(|&b| b >= 0.5).collect::<Vec<_>>())
}

/// Marginal-mode prediction: the mode of each singleton visible belief.
pub fn decode_marginal_mode(beliefs: &Beliefs) -> BinaryVector {
    threshold_beliefs(&beliefs.visible)
}

/// Joint MAP prediction via max-product message passing; returns the decoded
/// states of both layers.
pub fn decode_joint_map(
    p: &RbmParams,
    opts: &BpOptions,
) -> Result<(BinaryVector, BinaryVector)> {
    let opts = opts.clone().with_mode(BpMode::Max);
    let (beliefs, _, _) = bp_run(p, &opts)?;
    Ok((
        threshold_beliefs(&beliefs.visible),
        threshold_beliefs(&beliefs.hidden),
    ))
}

/// Marginal-MAP prediction of the visible layer via mixed-product message
/// passing: the hidden layer stays marginalized, the visible layer is
/// maximized.
pub fn decode_marginal_map(p: &RbmParams, opts: &BpOptions) -> Result<BinaryVector> {
    let opts = opts.clone().with_mode(BpMode::Mixed);
    let (beliefs, _, _) = bp_run(p, &opts)?;
    Ok(threshold_beliefs(&beliefs.visible))
}

/// Variational log-partition estimate assembled from the beliefs: average
/// energy under the pairwise tables plus the entropy of the belief
/// approximation, with singleton entropies counted once per node. Exact on
/// trees and for decoupled models.
pub fn bethe_log_z(p: &RbmParams, beliefs: &Beliefs) -> f64 {
    let nv = p.n_visible();
    let nh = p.n_hidden();
    let mut value = 0.0;
    for i in 0..nv {
        value += p.visible_bias[i] * beliefs.visible[i];
    }
    for j in 0..nh {
        value += p.hidden_bias[j] * beliefs.hidden[j];
    }
    for i in 0..nv {
        for j in 0..nh {
            value += p.weights[[i, j]] * beliefs.pairwise[[i, j]];
            for q in beliefs.pairwise_table(i, j) {
                value += xlnx(q);
            }
        }
    }
    for i in 0..nv {
        value -= (nh as f64 - 1.0) * binary_entropy(beliefs.visible[i]);
    }
    for j in 0..nh {
        value -= (nv as f64 - 1.0) * binary_entropy(beliefs.hidden[j]);
    }
    value
}

fn max_abs_diff_vec(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub(crate) fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    Array2::from_shape_fn((a.len(), b.len()), |(i, j)| a[i] * b[j])
}
