//! Elementwise message and belief updates for bipartite models.
//!
//! Every kernel is a dense pass over one message matrix. For a receiving
//! unit `r` and sending unit `s`, the two-state message ratio depends only
//! on the coupling, the sender's current belief `t`, and the reverse
//! message `m`:
//!
//! ```text
//! lambda_1 = (1 - m) * t        # sender state 1, reverse message removed
//! lambda_2 = m * (1 - t)        # sender state 0
//! new = (e^w * lambda_1 + lambda_2) / (e^w * lambda_1 + lambda_2 + lambda_1 + lambda_2)
//! ```
//!
//! which is the normalized form of the classic sum-product update. The
//! max-product variant replaces each two-term sum with a max. All outputs
//! are clamped inside the open unit interval before anyone takes a log.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::math::{clamp_unit, logistic, logit};

/// Normalized message from the two unnormalized state scores, written to
/// dodge `inf/inf`: `num/(num + den)` computed as `1/(1 + den/num)`.
#[inline]
fn normalize(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        1.0 / (1.0 + den / num)
    }
}

#[inline]
fn blend(old: f64, new: f64, damping: f64) -> f64 {
    if damping == 0.0 {
        new
    } else {
        damping * old + (1.0 - damping) * new
    }
}

/// One full update of the hidden-to-visible message matrix, in place.
/// Returns the largest absolute entry change.
///
/// `exp_w` is the elementwise exponential of the couplings, `(|v|, |h|)`.
/// `tropical` switches the inner sum over sender states to a max.
pub fn update_messages_to_visible(
    exp_w: &Array2<f64>,
    m_vh: &mut Array2<f64>,
    m_hv: &Array2<f64>,
    tau_h: &Array1<f64>,
    tropical: bool,
    damping: f64,
) -> f64 {
    let (nv, nh) = m_vh.dim();
    let mut delta = 0.0f64;
    for i in 0..nv {
        for j in 0..nh {
            let m = m_hv[[j, i]];
            let t = tau_h[j];
            let l1 = (1.0 - m) * t;
            let l2 = m * (1.0 - t);
            let scaled = exp_w[[i, j]] * l1;
            let (num, den) = if tropical {
                (scaled.max(l2), l1.max(l2))
            } else {
                (scaled + l2, l1 + l2)
            };
            let old = m_vh[[i, j]];
            let new = clamp_unit(blend(old, normalize(num, den), damping));
            delta = delta.max((new - old).abs());
            m_vh[[i, j]] = new;
        }
    }
    delta
}

/// One full sum-product (or max-product) update of the visible-to-hidden
/// message matrix, in place. `exp_w_t` is `exp(W)` transposed, `(|h|, |v|)`.
pub fn update_messages_to_hidden_sum(
    exp_w_t: &Array2<f64>,
    m_hv: &mut Array2<f64>,
    m_vh: &Array2<f64>,
    tau_v: &Array1<f64>,
    tropical: bool,
    damping: f64,
) -> f64 {
    let (nh, nv) = m_hv.dim();
    let mut delta = 0.0f64;
    for j in 0..nh {
        for i in 0..nv {
            let m = m_vh[[i, j]];
            let t = tau_v[i];
            let l1 = (1.0 - m) * t;
            let l2 = m * (1.0 - t);
            let scaled = exp_w_t[[j, i]] * l1;
            let (num, den) = if tropical {
                (scaled.max(l2), l1.max(l2))
            } else {
                (scaled + l2, l1 + l2)
            };
            let old = m_hv[[j, i]];
            let new = clamp_unit(blend(old, normalize(num, den), damping));
            delta = delta.max((new - old).abs());
            m_hv[[j, i]] = new;
        }
    }
    delta
}

/// Mixed-product update of the visible-to-hidden messages: each visible unit
/// is pinned to the mode of its current belief, which collapses the message
/// to `sigma(w * v_tilde)`. `sig_w_t` is the elementwise logistic of the
/// transposed couplings; columns with `v_tilde = 0` become exactly 0.5.
pub fn update_messages_to_hidden_mixed(
    sig_w_t: &Array2<f64>,
    m_hv: &mut Array2<f64>,
    v_tilde: &[bool],
    damping: f64,
) -> f64 {
    let (nh, nv) = m_hv.dim();
    let mut delta = 0.0f64;
    for j in 0..nh {
        for i in 0..nv {
            let value = if v_tilde[i] { sig_w_t[[j, i]] } else { 0.5 };
            let old = m_hv[[j, i]];
            let new = clamp_unit(blend(old, value, damping));
            delta = delta.max((new - old).abs());
            m_hv[[j, i]] = new;
        }
    }
    delta
}

/// Singleton beliefs of one layer from its bias and the incoming message
/// matrix (one row of messages per receiving unit):
/// `tau_r = sigma(b_r + sum_s logit(m_{s->r}))`.
pub fn update_singleton_beliefs(bias: &Array1<f64>, incoming: &Array2<f64>, out: &mut Array1<f64>) {
    for (r, b) in bias.iter().enumerate() {
        let mut s = *b;
        for m in incoming.row(r) {
            s += logit(*m);
        }
        out[r] = clamp_unit(logistic(s));
    }
}

/// Pairwise beliefs `P(v_i = 1, h_j = 1)` from converged messages and
/// singleton beliefs, via the four joint-state scores
///
/// ```text
/// g11 = e^w . tv       . th       . (1 - m_vh) . (1 - m_hv)
/// g01 = (1 - tv) . th       . m_vh       . (1 - m_hv)
/// g10 = tv       . (1 - th) . (1 - m_vh) . m_hv
/// g00 = (1 - tv) . (1 - th) . m_vh       . m_hv
/// ```
///
/// An all-zero denominator means the clamping contract was breached and is
/// reported as a hard failure rather than patched over.
pub fn pairwise_beliefs(
    exp_w: &Array2<f64>,
    m_vh: &Array2<f64>,
    m_hv: &Array2<f64>,
    tau_v: &Array1<f64>,
    tau_h: &Array1<f64>,
) -> Result<Array2<f64>> {
    let (nv, nh) = m_vh.dim();
    let mut gamma = Array2::<f64>::zeros((nv, nh));
    for i in 0..nv {
        let tv = tau_v[i];
        for j in 0..nh {
            let th = tau_h[j];
            let mvh = m_vh[[i, j]];
            let mhv = m_hv[[j, i]];
            let g11 = exp_w[[i, j]] * tv * th * (1.0 - mvh) * (1.0 - mhv);
            let g01 = (1.0 - tv) * th * mvh * (1.0 - mhv);
            let g10 = tv * (1.0 - th) * (1.0 - mvh) * mhv;
            let g00 = (1.0 - tv) * (1.0 - th) * mvh * mhv;
            let rest = g01 + g10 + g00;
            if g11 == 0.0 && rest == 0.0 {
                return Err(Error::Numerical {
                    iteration: 0,
                    message: format!(
                        "pairwise belief ({i}, {j}) has an all-zero denominator"
                    ),
                });
            }
            gamma[[i, j]] = if g11 == 0.0 {
                0.0
            } else {
                1.0 / (1.0 + rest / g11)
            };
        }
    }
    Ok(gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::logistic;
    use ndarray::arr1;

    #[test]
    fn zero_couplings_keep_messages_uniform() {
        let exp_w = Array2::from_elem((3, 2), 1.0);
        let mut m_vh = Array2::from_elem((3, 2), 0.5);
        let m_hv = Array2::from_shape_fn((2, 3), |(j, i)| 0.1 + 0.1 * (j + i) as f64);
        let tau_h = arr1(&[0.3, 0.8]);
        let delta = update_messages_to_visible(&exp_w, &mut m_vh, &m_hv, &tau_h, false, 0.0);
        assert_eq!(delta, 0.0);
        assert!(m_vh.iter().all(|&m| m == 0.5));
    }

    #[test]
    fn single_edge_update_matches_hand_substitution() {
        // One visible, one hidden, reverse message and belief both 0.5:
        // both lambdas are 0.25, so the update is (e^w + 1) / (e^w + 3),
        // i.e. sigma(log((e^w + 1) / 2)).
        let w = 1.3f64;
        let exp_w = Array2::from_elem((1, 1), w.exp());
        let mut m_vh = Array2::from_elem((1, 1), 0.5);
        let m_hv = Array2::from_elem((1, 1), 0.5);
        let tau_h = arr1(&[0.5]);
        update_messages_to_visible(&exp_w, &mut m_vh, &m_hv, &tau_h, false, 0.0);
        let expect = logistic(((w.exp() + 1.0) / 2.0).ln());
        assert!((m_vh[[0, 0]] - expect).abs() < 1e-15);
    }

    #[test]
    fn mixed_update_with_all_modes_on_is_sigma_of_couplings() {
        let w = Array2::from_shape_fn((2, 3), |(i, j)| 0.2 * (i as f64 + 1.0) - 0.3 * j as f64);
        let sig_w_t = w.t().mapv(logistic);
        let mut m_hv = Array2::from_elem((3, 2), 0.5);
        update_messages_to_hidden_mixed(&sig_w_t, &mut m_hv, &[true, true], 0.0);
        for j in 0..3 {
            for i in 0..2 {
                assert!((m_hv[[j, i]] - logistic(w[[i, j]])).abs() < 1e-15);
            }
        }
        // All modes off: the exponent vanishes, every message is 0.5.
        update_messages_to_hidden_mixed(&sig_w_t, &mut m_hv, &[false, false], 0.0);
        assert!(m_hv.iter().all(|&m| m == 0.5));
    }

    #[test]
    fn beliefs_with_uniform_messages_are_sigma_of_bias() {
        let bias = arr1(&[0.7, -2.0]);
        let incoming = Array2::from_elem((2, 4), 0.5);
        let mut out = Array1::zeros(2);
        update_singleton_beliefs(&bias, &incoming, &mut out);
        assert!((out[0] - logistic(0.7)).abs() < 1e-15);
        assert!((out[1] - logistic(-2.0)).abs() < 1e-15);
    }

    #[test]
    fn beliefs_are_monotone_in_message_strength() {
        let bias = arr1(&[0.0]);
        let mut previous = 0.0;
        for &m in &[0.5, 0.7, 0.9, 0.99, 0.999999] {
            let incoming = Array2::from_elem((1, 3), m);
            let mut out = Array1::zeros(1);
            update_singleton_beliefs(&bias, &incoming, &mut out);
            assert!(out[0] > previous);
            previous = out[0];
        }
        assert!(previous > 1.0 - 1e-6);
    }

    #[test]
    fn pairwise_factorizes_for_zero_couplings() {
        let exp_w = Array2::from_elem((2, 2), 1.0);
        let m_vh = Array2::from_elem((2, 2), 0.5);
        let m_hv = Array2::from_elem((2, 2), 0.5);
        let tau_v = arr1(&[0.3, 0.9]);
        let tau_h = arr1(&[0.2, 0.6]);
        let gamma = pairwise_beliefs(&exp_w, &m_vh, &m_hv, &tau_v, &tau_h).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((gamma[[i, j]] - tau_v[i] * tau_h[j]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn huge_couplings_saturate_without_nan() {
        let exp_w = Array2::from_elem((1, 1), f64::INFINITY);
        let mut m_vh = Array2::from_elem((1, 1), 0.5);
        let m_hv = Array2::from_elem((1, 1), 0.5);
        let tau_h = arr1(&[0.5]);
        update_messages_to_visible(&exp_w, &mut m_vh, &m_hv, &tau_h, false, 0.0);
        assert!(m_vh[[0, 0]].is_finite());
        assert!(m_vh[[0, 0]] > 1.0 - 1e-9);
        let gamma = pairwise_beliefs(
            &exp_w,
            &m_vh,
            &m_hv,
            &arr1(&[0.5]),
            &arr1(&[0.5]),
        )
        .unwrap();
        assert!((gamma[[0, 0]] - 1.0).abs() < 1e-9);
    }
}
