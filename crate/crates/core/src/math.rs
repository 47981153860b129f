//! Overflow-safe scalar primitives used throughout the crate.
//!
//! Every probability-producing routine funnels through [`logistic`] and
//! [`softplus`]; both are written so that no finite input can overflow.

/// Messages and beliefs are kept inside `[CLAMP, 1 - CLAMP]` before any
/// logarithm or ratio is taken.
pub const CLAMP: f64 = 1e-12;

/// Logistic function `1 / (1 + exp(-u))`, evaluated on the branch that
/// never exponentiates a positive argument.
#[inline]
pub fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(u))` as `max(u, 0) + log1p(exp(-|u|))`.
#[inline]
pub fn softplus(u: f64) -> f64 {
    u.max(0.0) + (-u.abs()).exp().ln_1p()
}

/// Log-odds `log(p / (1 - p))`. Callers clamp `p` first.
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Restrict a probability to the open unit interval.
#[inline]
pub fn clamp_unit(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

/// Binary entropy in nats; zero at both endpoints.
#[inline]
pub fn binary_entropy(p: f64) -> f64 {
    xlnx(p) + xlnx(1.0 - p)
}

/// `-x ln x` with the `x = 0` limit handled.
#[inline]
pub fn xlnx(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -x * x.ln()
    }
}

/// `log(sum(exp(xs)))` shifted by the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}
