//! Self-check battery: fast, deterministic cross-validations of the
//! numerical core, wired into the CLI so a build can prove itself on the
//! machine it runs on.
//!
//! Four families of checks: the matrix message passing against the scalar
//! reference, tree models against exact enumeration, analytic gradients
//! against centered finite differences of the exact conditional
//! log-likelihood, and the blocked Gibbs sampler against exact moments.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::inference::{bethe_log_z, bp_run, gibbs_step, scalar::scalar_bp_reference, BpMode, BpOptions};
use crate::learning::{mle_gradient, GradientBlocks, NegativePhase};
use crate::model::{
    conditional_log_likelihood, BinaryVector, CrbmParams, FeatureVector, RbmParams,
    ENUMERATION_LIMIT,
};
use crate::rng::{stream_rng, DOMAIN_INIT};

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    /// Worst observed deviation, in the check's own units.
    pub observed: f64,
    /// The bound the deviation is held to.
    pub tolerance: f64,
    pub detail: String,
}

/// Battery configuration.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    pub seed: u64,
    /// Test hook: adds this value to one analytic gradient entry before the
    /// finite-difference comparison, so the check must fail. Zero disables.
    pub inject_gradient_error: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            seed: 0,
            inject_gradient_error: 0.0,
        }
    }
}

/// Runs the whole battery.
pub fn run_all(opts: &OracleOptions) -> Result<Vec<CheckReport>> {
    Ok(vec![
        check_matrix_scalar_equivalence(opts)?,
        check_tree_exactness(opts)?,
        check_gradient_finite_difference(opts)?,
        check_gibbs_long_run(opts)?,
    ])
}

fn random_rbm(nv: usize, nh: usize, rng: &mut impl Rng) -> RbmParams {
    let dist = Normal::new(0.0, 1.0).unwrap();
    RbmParams {
        weights: Array2::from_shape_fn((nv, nh), |_| dist.sample(rng)),
        visible_bias: Array1::from_shape_fn(nv, |_| dist.sample(rng)),
        hidden_bias: Array1::from_shape_fn(nh, |_| dist.sample(rng)),
    }
}

fn random_crbm(nv: usize, nh: usize, nx: usize, rng: &mut impl Rng) -> CrbmParams {
    let dist = Normal::new(0.0, 0.8).unwrap();
    CrbmParams {
        w_vh: Array2::from_shape_fn((nv, nh), |_| dist.sample(rng)),
        w_vx: Array2::from_shape_fn((nv, nx), |_| dist.sample(rng)),
        w_hx: Array2::from_shape_fn((nh, nx), |_| dist.sample(rng)),
        b_v: Array1::from_shape_fn(nv, |_| dist.sample(rng)),
        b_h: Array1::from_shape_fn(nh, |_| dist.sample(rng)),
    }
}

/// Matrix kernels against the per-edge reference: identical messages and
/// beliefs after identical sweep counts, sum and mixed schedules.
pub fn check_matrix_scalar_equivalence(opts: &OracleOptions) -> Result<CheckReport> {
    let tolerance = 1e-10;
    let mut worst = 0.0f64;
    let mut rng = stream_rng(opts.seed, DOMAIN_INIT, 100);
    for trial in 0..10 {
        let nv = 1 + (trial % 8);
        let nh = 1 + ((trial * 3 + 2) % 8);
        let p = random_rbm(nv, nh, &mut rng);
        for mode in [BpMode::Sum, BpMode::Mixed] {
            let run_opts = BpOptions {
                max_iters: 15,
                tolerance: 1e-300,
                mode,
                damping: 0.0,
                track_deltas: false,
            };
            let (mb, mm, _) = bp_run(&p, &run_opts)?;
            let (sb, sm, _) = scalar_bp_reference(&p, &run_opts)?;
            for (a, b) in [
                (&mm.to_visible, &sm.to_visible),
                (&mm.to_hidden, &sm.to_hidden),
                (&mb.pairwise, &sb.pairwise),
            ] {
                worst = worst.max(max_diff2(a, b));
            }
            worst = worst.max(max_diff1(&mb.visible, &sb.visible));
            worst = worst.max(max_diff1(&mb.hidden, &sb.hidden));
        }
    }
    Ok(CheckReport {
        name: "matrix-scalar-equivalence",
        passed: worst < tolerance,
        observed: worst,
        tolerance,
        detail: "10 models, sum+mixed, 15 sweeps".into(),
    })
}

/// Converged sum-product on single-hidden or single-visible models against
/// exact enumeration, including the variational log-partition estimate.
pub fn check_tree_exactness(opts: &OracleOptions) -> Result<CheckReport> {
    let tolerance = 1e-8;
    let bethe_tolerance = 1e-6;
    let mut worst_belief = 0.0f64;
    let mut worst_bethe = 0.0f64;
    let mut rng = stream_rng(opts.seed, DOMAIN_INIT, 101);
    let run_opts = BpOptions {
        max_iters: 300,
        tolerance: 1e-13,
        mode: BpMode::Sum,
        damping: 0.0,
        track_deltas: false,
    };
    for trial in 0..10 {
        let wide = 2 + (trial % 6);
        let p = if trial % 2 == 0 {
            random_rbm(wide, 1, &mut rng)
        } else {
            random_rbm(1, wide, &mut rng)
        };
        let (beliefs, _, _) = bp_run(&p, &run_opts)?;
        let exact = p.exact_summary(ENUMERATION_LIMIT)?;
        worst_belief = worst_belief
            .max(max_diff1(&beliefs.visible, &exact.tau_v))
            .max(max_diff1(&beliefs.hidden, &exact.tau_h))
            .max(max_diff2(&beliefs.pairwise, &exact.gamma));
        worst_bethe = worst_bethe.max((bethe_log_z(&p, &beliefs) - exact.log_z).abs());
    }
    let passed = worst_belief < tolerance && worst_bethe < bethe_tolerance;
    Ok(CheckReport {
        name: "tree-exactness",
        passed,
        observed: worst_belief.max(worst_bethe),
        tolerance,
        detail: format!(
            "beliefs {worst_belief:.2e} (tol 1e-8), log-partition {worst_bethe:.2e} (tol 1e-6)"
        ),
    })
}

/// Centered finite differences of the exact conditional log-likelihood.
pub fn finite_difference_gradient(
    p: &CrbmParams,
    v: &BinaryVector,
    x: &FeatureVector,
    step: f64,
    limit: usize,
) -> Result<GradientBlocks> {
    let mut fd = GradientBlocks::zeros_like(p);
    let probe = |plus: &CrbmParams, minus: &CrbmParams| -> Result<f64> {
        let up = conditional_log_likelihood(plus, v, x, limit)?;
        let down = conditional_log_likelihood(minus, v, x, limit)?;
        Ok((up - down) / (2.0 * step))
    };
    for r in 0..p.w_vh.nrows() {
        for c in 0..p.w_vh.ncols() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.w_vh[[r, c]] += step;
            minus.w_vh[[r, c]] -= step;
            fd.d_w_vh[[r, c]] = probe(&plus, &minus)?;
        }
    }
    for r in 0..p.w_vx.nrows() {
        for c in 0..p.w_vx.ncols() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.w_vx[[r, c]] += step;
            minus.w_vx[[r, c]] -= step;
            fd.d_w_vx[[r, c]] = probe(&plus, &minus)?;
        }
    }
    for r in 0..p.w_hx.nrows() {
        for c in 0..p.w_hx.ncols() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.w_hx[[r, c]] += step;
            minus.w_hx[[r, c]] -= step;
            fd.d_w_hx[[r, c]] = probe(&plus, &minus)?;
        }
    }
    for i in 0..p.b_v.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus.b_v[i] += step;
        minus.b_v[i] -= step;
        fd.d_b_v[i] = probe(&plus, &minus)?;
    }
    for j in 0..p.b_h.len() {
        let mut plus = p.clone();
        let mut minus = p.clone();
        plus.b_h[j] += step;
        minus.b_h[j] -= step;
        fd.d_b_h[j] = probe(&plus, &minus)?;
    }
    Ok(fd)
}

/// Worst per-block relative max-norm deviation between two gradients.
pub fn gradient_relative_error(reference: &GradientBlocks, candidate: &GradientBlocks) -> f64 {
    let block = |a: &[f64], b: &[f64]| -> f64 {
        let diff = a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        let scale = a.iter().map(|x| x.abs()).fold(0.0f64, f64::max).max(1e-8);
        diff / scale
    };
    let mut worst = 0.0f64;
    for (a, b) in [
        (&reference.d_w_vh, &candidate.d_w_vh),
        (&reference.d_w_vx, &candidate.d_w_vx),
        (&reference.d_w_hx, &candidate.d_w_hx),
    ] {
        worst = worst.max(block(a.as_slice().unwrap(), b.as_slice().unwrap()));
    }
    for (a, b) in [
        (&reference.d_b_v, &candidate.d_b_v),
        (&reference.d_b_h, &candidate.d_b_h),
    ] {
        worst = worst.max(block(a.as_slice().unwrap(), b.as_slice().unwrap()));
    }
    worst
}

/// Exact-inference likelihood gradients against finite differences on
/// random small conditional models.
pub fn check_gradient_finite_difference(opts: &OracleOptions) -> Result<CheckReport> {
    let tolerance = 1e-5;
    let step = 1e-5;
    let mut worst = 0.0f64;
    let mut rng = stream_rng(opts.seed, DOMAIN_INIT, 102);
    for trial in 0..5 {
        let nv = 2 + (trial % 4);
        let nh = 2 + ((trial + 1) % 4);
        let nx = 1 + (trial % 3);
        let p = random_crbm(nv, nh, nx, &mut rng);
        let v = BinaryVector::from_bools(&(0..nv).map(|_| rng.random()).collect::<Vec<_>>());
        let x = FeatureVector::new(Array1::from_shape_fn(nx, |_| rng.random::<f64>() - 0.5))?;
        let mut analytic = mle_gradient(
            &p,
            &v,
            &x,
            NegativePhase::Exact {
                limit: ENUMERATION_LIMIT,
            },
            &mut rng,
        )?
        .blocks;
        if opts.inject_gradient_error != 0.0 {
            analytic.d_w_vh[[0, 0]] += opts.inject_gradient_error;
        }
        let fd = finite_difference_gradient(&p, &v, &x, step, ENUMERATION_LIMIT)?;
        worst = worst.max(gradient_relative_error(&fd, &analytic));
    }
    Ok(CheckReport {
        name: "gradient-finite-difference",
        passed: worst < tolerance,
        observed: worst,
        tolerance,
        detail: "5 conditional models, all five blocks, step 1e-5".into(),
    })
}

/// Long-run blocked Gibbs moments against exact enumeration on a 3x2
/// model: every singleton and pairwise moment within three binomial
/// standard errors.
pub fn check_gibbs_long_run(opts: &OracleOptions) -> Result<CheckReport> {
    let sweeps = 1_000_000usize;
    let burn_in = 1_000usize;
    let mut rng = stream_rng(opts.seed, DOMAIN_INIT, 103);
    let dist = Normal::new(0.0, 0.5).unwrap();
    let p = RbmParams {
        weights: Array2::from_shape_fn((3, 2), |_| dist.sample(&mut rng)),
        visible_bias: Array1::from_shape_fn(3, |_| dist.sample(&mut rng)),
        hidden_bias: Array1::from_shape_fn(2, |_| dist.sample(&mut rng)),
    };
    let exact = p.exact_summary(ENUMERATION_LIMIT)?;

    let mut v = BinaryVector::zeros(3);
    let mut sum_v = Array1::<f64>::zeros(3);
    let mut sum_h = Array1::<f64>::zeros(2);
    let mut sum_vh = Array2::<f64>::zeros((3, 2));
    for sweep in 0..burn_in + sweeps {
        let (v_next, h) = gibbs_step(&p, &v, &mut rng);
        v = v_next;
        if sweep >= burn_in {
            for i in 0..3 {
                let vi = v.as_array()[i];
                sum_v[i] += vi;
                for j in 0..2 {
                    sum_vh[[i, j]] += vi * h.as_array()[j];
                }
            }
            for j in 0..2 {
                sum_h[j] += h.as_array()[j];
            }
        }
    }

    let n = sweeps as f64;
    let mut worst_z = 0.0f64;
    let mut z_of = |empirical: f64, exact_m: f64| {
        let sigma = (exact_m * (1.0 - exact_m) / n).sqrt().max(1e-12);
        let z = (empirical - exact_m).abs() / sigma;
        worst_z = worst_z.max(z);
    };
    for i in 0..3 {
        z_of(sum_v[i] / n, exact.tau_v[i]);
    }
    for j in 0..2 {
        z_of(sum_h[j] / n, exact.tau_h[j]);
    }
    for i in 0..3 {
        for j in 0..2 {
            z_of(sum_vh[[i, j]] / n, exact.gamma[[i, j]]);
        }
    }
    Ok(CheckReport {
        name: "gibbs-long-run",
        passed: worst_z < 3.0,
        observed: worst_z,
        tolerance: 3.0,
        detail: format!("{sweeps} sweeps, worst moment deviation in binomial sigmas"),
    })
}

fn max_diff1(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn max_diff2(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
