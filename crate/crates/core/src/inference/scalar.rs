//! Literal per-edge reference implementation of the message updates.
//!
//! Every message is kept as its own normalized scalar and every update
//! recomputes the textbook two-state ratio, including the division by the
//! reverse message. This is deliberately the *slow* formulation: it shares
//! no intermediate algebra with the matrix kernels, so agreement between
//! the two is strong evidence that both are right.
//!
//! Intended for small models only (advisory limit `|v| * |h| <= 10^4`);
//! the belief products are formed directly rather than in log space.

use ndarray::{Array1, Array2};

use crate::error::Result;
use crate::math::clamp_unit;
use crate::model::RbmParams;

use super::{Beliefs, BpMode, BpOptions, ConvergenceReport, Messages};

/// Runs per-edge message passing with the same schedule, initialization,
/// clamping, and stopping rule as the matrix implementation.
pub fn scalar_bp_reference(
    p: &RbmParams,
    opts: &BpOptions,
) -> Result<(Beliefs, Messages, ConvergenceReport)> {
    opts.validate()?;
    let nv = p.n_visible();
    let nh = p.n_hidden();
    let w = &p.weights;
    let b1 = &p.visible_bias;
    let b2 = &p.hidden_bias;

    let mut m_vh = vec![vec![0.5f64; nh]; nv];
    let mut m_hv = vec![vec![0.5f64; nv]; nh];
    let mut tau_v: Vec<f64> = b1.iter().map(|&b| clamp_unit(sigma(b))).collect();
    let mut tau_h: Vec<f64> = b2.iter().map(|&b| clamp_unit(sigma(b))).collect();

    let mut final_delta = f64::INFINITY;
    let mut iters_used = 0;
    let mut sweep_deltas = Vec::new();
    let tropical = opts.mode == BpMode::Max;

    for sweep in 1..=opts.max_iters {
        let mut delta = 0.0f64;

        // Messages from every hidden unit to every visible unit. The
        // sender's belief is divided by the reverse message, then the two
        // sender states are combined.
        for i in 0..nv {
            for j in 0..nh {
                let ratio1 = tau_h[j] / m_hv[j][i];
                let ratio0 = (1.0 - tau_h[j]) / (1.0 - m_hv[j][i]);
                let coupled = w[[i, j]].exp() * ratio1;
                let (m1, m0) = if tropical {
                    (coupled.max(ratio0), ratio1.max(ratio0))
                } else {
                    (coupled + ratio0, ratio1 + ratio0)
                };
                let new = clamp_unit(damp(m_vh[i][j], m1 / (m0 + m1), opts.damping));
                delta = delta.max((new - m_vh[i][j]).abs());
                m_vh[i][j] = new;
            }
        }

        // Visible beliefs: bias factor times the product of incoming
        // messages, one product per state.
        for i in 0..nv {
            let mut p1 = b1[i].exp();
            let mut p0 = 1.0;
            for &m in &m_vh[i] {
                p1 *= m;
                p0 *= 1.0 - m;
            }
            tau_v[i] = clamp_unit(p1 / (p0 + p1));
        }

        // Messages from every visible unit to every hidden unit.
        match opts.mode {
            BpMode::Sum | BpMode::Max => {
                for j in 0..nh {
                    for i in 0..nv {
                        let ratio1 = tau_v[i] / m_vh[i][j];
                        let ratio0 = (1.0 - tau_v[i]) / (1.0 - m_vh[i][j]);
                        let coupled = w[[i, j]].exp() * ratio1;
                        let (m1, m0) = if tropical {
                            (coupled.max(ratio0), ratio1.max(ratio0))
                        } else {
                            (coupled + ratio0, ratio1 + ratio0)
                        };
                        let new = clamp_unit(damp(m_hv[j][i], m1 / (m0 + m1), opts.damping));
                        delta = delta.max((new - m_hv[j][i]).abs());
                        m_hv[j][i] = new;
                    }
                }
            }
            BpMode::Mixed => {
                // Each sender is pinned to the mode of its belief; only the
                // pinned state's factor survives and cancels in the
                // normalization except through the coupling.
                for j in 0..nh {
                    for i in 0..nv {
                        let pinned_one = tau_v[i] >= 0.5;
                        let carry = if pinned_one {
                            tau_v[i] / m_vh[i][j]
                        } else {
                            (1.0 - tau_v[i]) / (1.0 - m_vh[i][j])
                        };
                        let m1 = if pinned_one {
                            w[[i, j]].exp() * carry
                        } else {
                            carry
                        };
                        let m0 = carry;
                        let new = clamp_unit(damp(m_hv[j][i], m1 / (m0 + m1), opts.damping));
                        delta = delta.max((new - m_hv[j][i]).abs());
                        m_hv[j][i] = new;
                    }
                }
            }
        }

        // Hidden beliefs.
        for j in 0..nh {
            let mut p1 = b2[j].exp();
            let mut p0 = 1.0;
            for &m in &m_hv[j] {
                p1 *= m;
                p0 *= 1.0 - m;
            }
            tau_h[j] = clamp_unit(p1 / (p0 + p1));
        }

        final_delta = delta;
        iters_used = sweep;
        if opts.track_deltas {
            sweep_deltas.push(delta);
        }
        if delta < opts.tolerance {
            break;
        }
    }

    // Pairwise beliefs straight from the per-edge definition.
    let mut pairwise = Array2::<f64>::zeros((nv, nh));
    for i in 0..nv {
        for j in 0..nh {
            let r_v1 = tau_v[i] / m_vh[i][j];
            let r_v0 = (1.0 - tau_v[i]) / (1.0 - m_vh[i][j]);
            let r_h1 = tau_h[j] / m_hv[j][i];
            let r_h0 = (1.0 - tau_h[j]) / (1.0 - m_hv[j][i]);
            let q11 = w[[i, j]].exp() * r_v1 * r_h1;
            let q01 = r_v0 * r_h1;
            let q10 = r_v1 * r_h0;
            let q00 = r_v0 * r_h0;
            pairwise[[i, j]] = q11 / (q11 + q01 + q10 + q00);
        }
    }

    let to_visible = Array2::from_shape_fn((nv, nh), |(i, j)| m_vh[i][j]);
    let to_hidden = Array2::from_shape_fn((nh, nv), |(j, i)| m_hv[j][i]);
    Ok((
        Beliefs {
            visible: Array1::from_vec(tau_v),
            hidden: Array1::from_vec(tau_h),
            pairwise,
        },
        Messages {
            to_visible,
            to_hidden,
        },
        ConvergenceReport {
            converged: final_delta < opts.tolerance,
            iters_used,
            final_delta,
            sweep_deltas,
        },
    ))
}

/// Single-edge oracles for the kernel unit tests: the normalized update of
/// one message given the reverse message and the sender belief.
pub fn single_message_update(w: f64, reverse: f64, sender_belief: f64, mode: BpMode) -> f64 {
    let ratio1 = sender_belief / reverse;
    let ratio0 = (1.0 - sender_belief) / (1.0 - reverse);
    match mode {
        BpMode::Sum => {
            let m1 = w.exp() * ratio1 + ratio0;
            let m0 = ratio1 + ratio0;
            m1 / (m0 + m1)
        }
        BpMode::Max => {
            let m1 = (w.exp() * ratio1).max(ratio0);
            let m0 = ratio1.max(ratio0);
            m1 / (m0 + m1)
        }
        BpMode::Mixed => {
            let pinned_one = sender_belief >= 0.5;
            let carry = if pinned_one { ratio1 } else { ratio0 };
            let m1 = if pinned_one { w.exp() * carry } else { carry };
            m1 / (carry + m1)
        }
    }
}

fn sigma(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn damp(old: f64, new: f64, damping: f64) -> f64 {
    if damping == 0.0 {
        new
    } else {
        damping * old + (1.0 - damping) * new
    }
}
