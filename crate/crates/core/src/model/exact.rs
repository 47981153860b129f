//! Exact partition functions and marginals for small models.
//!
//! The joint state space is exponential, but one layer can always be
//! marginalized in closed form, so enumerating the *smaller* layer costs
//! `2^min(|v|,|h|)` instead of `2^(|v|+|h|)`. That keeps 20-unit layers
//! within reach and gives the rest of the crate a trustworthy oracle.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, logistic, softplus};
use crate::model::{BinaryVector, CrbmParams, FeatureVector, RbmParams};

/// Default cap on the enumerated layer size.
pub const ENUMERATION_LIMIT: usize = 20;

/// Exact log-partition function and marginals of a small RBM.
#[derive(Debug, Clone)]
pub struct ExactSummary {
    pub log_z: f64,
    /// `P(v_i = 1)`, length `|v|`.
    pub tau_v: Array1<f64>,
    /// `P(h_j = 1)`, length `|h|`.
    pub tau_h: Array1<f64>,
    /// `P(v_i = 1, h_j = 1)`, shape `|v| x |h|`.
    pub gamma: Array2<f64>,
}

impl RbmParams {
    /// Exact log-partition function, singleton marginals, and pairwise
    /// marginals, obtained by enumerating whichever layer is smaller.
    ///
    /// Refuses models with `min(|v|, |h|) > limit` rather than truncating.
    pub fn exact_summary(&self, limit: usize) -> Result<ExactSummary> {
        let smaller = self.n_visible().min(self.n_hidden());
        if smaller > limit {
            return Err(Error::ModelTooLarge { smaller, limit });
        }
        if self.n_hidden() <= self.n_visible() {
            enumerate_hidden(self)
        } else {
            let flipped = RbmParams {
                weights: self.weights.t().to_owned(),
                visible_bias: self.hidden_bias.clone(),
                hidden_bias: self.visible_bias.clone(),
            };
            let s = enumerate_hidden(&flipped)?;
            Ok(ExactSummary {
                log_z: s.log_z,
                tau_v: s.tau_h,
                tau_h: s.tau_v,
                gamma: s.gamma.t().to_owned(),
            })
        }
    }

    /// Exact `log Z` alone; same enumeration strategy and limit rule.
    pub fn exact_log_z(&self, limit: usize) -> Result<f64> {
        let smaller = self.n_visible().min(self.n_hidden());
        if smaller > limit {
            return Err(Error::ModelTooLarge { smaller, limit });
        }
        let (weights, b_enum, b_other) = if self.n_hidden() <= self.n_visible() {
            (self.weights.clone(), &self.hidden_bias, &self.visible_bias)
        } else {
            (
                self.weights.t().to_owned(),
                &self.visible_bias,
                &self.hidden_bias,
            )
        };
        let k = b_enum.len();
        let mut logws = Vec::with_capacity(1 << k);
        for state in 0..(1usize << k) {
            logws.push(log_weight(&weights, b_other, b_enum, state));
        }
        Ok(log_sum_exp(&logws))
    }
}

/// Unnormalized log-weight of one hidden configuration with the visible
/// layer marginalized in closed form; the building block of the
/// enumeration oracles and the exact synthetic sampler.
pub fn hidden_state_log_weight(p: &RbmParams, state: usize) -> f64 {
    log_weight(&p.weights, &p.visible_bias, &p.hidden_bias, state)
}

/// Unnormalized log-weight of one enumerated state: the enumerated layer's
/// bias terms plus the closed-form marginalization of the other layer.
fn log_weight(weights: &Array2<f64>, b_other: &Array1<f64>, b_enum: &Array1<f64>, state: usize) -> f64 {
    let mut logw = 0.0;
    for (j, &b) in b_enum.iter().enumerate() {
        if state >> j & 1 == 1 {
            logw += b;
        }
    }
    for (i, &b) in b_other.iter().enumerate() {
        let mut act = b;
        for j in 0..b_enum.len() {
            if state >> j & 1 == 1 {
                act += weights[[i, j]];
            }
        }
        logw += softplus(act);
    }
    logw
}

fn enumerate_hidden(p: &RbmParams) -> Result<ExactSummary> {
    let nv = p.n_visible();
    let nh = p.n_hidden();
    let n_states = 1usize << nh;

    // Pass 1: log-weights of every hidden state, for a stable shift.
    let mut logws = Vec::with_capacity(n_states);
    for state in 0..n_states {
        logws.push(log_weight(&p.weights, &p.visible_bias, &p.hidden_bias, state));
    }
    let shift = logws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    // Pass 2: accumulate the normalizer and the marginal sums.
    let mut z = 0.0;
    let mut tau_v = Array1::<f64>::zeros(nv);
    let mut tau_h = Array1::<f64>::zeros(nh);
    let mut gamma = Array2::<f64>::zeros((nv, nh));
    let mut act = Array1::<f64>::zeros(nv);
    for (state, &logw) in logws.iter().enumerate() {
        let w = (logw - shift).exp();
        z += w;
        act.assign(&p.visible_bias);
        for j in 0..nh {
            if state >> j & 1 == 1 {
                tau_h[j] += w;
                for i in 0..nv {
                    act[i] += p.weights[[i, j]];
                }
            }
        }
        // P(v_i = 1 | h) is factorized, so visible sums come for free.
        for i in 0..nv {
            let pv = logistic(act[i]);
            tau_v[i] += w * pv;
            for j in 0..nh {
                if state >> j & 1 == 1 {
                    gamma[[i, j]] += w * pv;
                }
            }
        }
    }

    tau_v /= z;
    tau_h /= z;
    gamma /= z;
    Ok(ExactSummary {
        log_z: shift + z.ln(),
        tau_v,
        tau_h,
        gamma,
    })
}

/// Exact `log p(v | x)` of a conditional model by enumeration of the
/// conditioned RBM. Subject to the same size limit as `exact_summary`.
pub fn conditional_log_likelihood(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    limit: usize,
) -> Result<f64> {
    let cond = p.condition(x)?;
    if v.len() != cond.n_visible() {
        return Err(Error::dim(format!(
            "model has {} visible units, state has {}",
            cond.n_visible(),
            v.len()
        )));
    }
    Ok(-cond.free_energy(v) - cond.exact_log_z(limit)?)
}
