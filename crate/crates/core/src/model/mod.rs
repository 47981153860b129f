//! Model parameterizations and exact small-model computations.
//!
//! An RBM couples a layer of binary visible units to a layer of binary
//! hidden units through a dense weight matrix plus per-unit biases. The
//! conditional variant (CRBM) adds an observed real-valued feature vector
//! that feeds additive terms into both layers; conditioning on a feature
//! vector folds those terms into the biases and returns a plain RBM.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! many threads at once.

mod exact;
mod io;

pub use exact::{conditional_log_likelihood, hidden_state_log_weight, ExactSummary, ENUMERATION_LIMIT};
pub use io::{load_model, save_model, MODEL_MAGIC};

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::{logistic, softplus};

/// Standard deviation used for fresh weight initialization; biases start at
/// zero.
pub const INIT_WEIGHT_STD: f64 = 0.01;

/// A vector whose entries are exactly 0.0 or 1.0.
///
/// Stored as `f64` so it can enter dot products directly.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryVector(Array1<f64>);

impl BinaryVector {
    /// Validates that every entry is exactly zero or one.
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|&x| x != 0.0 && x != 1.0) {
            return Err(Error::InvalidValue(format!(
                "entry {pos} of a binary vector is {}, expected 0 or 1",
                values[pos]
            )));
        }
        Ok(BinaryVector(values))
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        BinaryVector(bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect())
    }

    pub fn from_bytes(bits: &[u8]) -> Result<Self> {
        if let Some(pos) = bits.iter().position(|&b| b > 1) {
            return Err(Error::InvalidValue(format!(
                "byte {pos} is {}, expected 0 or 1",
                bits[pos]
            )));
        }
        Ok(BinaryVector(bits.iter().map(|&b| f64::from(b)).collect()))
    }

    pub fn zeros(len: usize) -> Self {
        BinaryVector(Array1::zeros(len))
    }

    pub fn ones(len: usize) -> Self {
        BinaryVector(Array1::ones(len))
    }

    /// The i-th unit as an index pattern: state `k` of `len` units has unit
    /// `i` on iff bit `i` of `k` is set. Used by the enumeration oracles.
    pub fn from_index(state: usize, len: usize) -> Self {
        BinaryVector(Array1::from_shape_fn(len, |i| {
            if state >> i & 1 == 1 {
                1.0
            } else {
                0.0
            }
        }))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.0[i] == 1.0
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.0.iter().map(|&x| x as u8).collect()
    }

    /// Number of positions where two vectors disagree.
    pub fn hamming(&self, other: &BinaryVector) -> usize {
        self.0
            .iter()
            .zip(other.0.iter())
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// A finite real-valued feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Array1<f64>);

impl FeatureVector {
    pub fn new(values: Array1<f64>) -> Result<Self> {
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidValue(format!(
                "entry {pos} of a feature vector is not finite"
            )));
        }
        Ok(FeatureVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        FeatureVector(Array1::zeros(len))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }
}

impl From<BinaryVector> for FeatureVector {
    fn from(v: BinaryVector) -> Self {
        FeatureVector(v.0)
    }
}

/// Parameters of an unconditioned RBM: pairwise weights and the two bias
/// vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// Couplings, `|v| x |h|`.
    pub weights: Array2<f64>,
    /// Visible biases, length `|v|`.
    pub visible_bias: Array1<f64>,
    /// Hidden biases, length `|h|`.
    pub hidden_bias: Array1<f64>,
}

impl RbmParams {
    pub fn new(
        weights: Array2<f64>,
        visible_bias: Array1<f64>,
        hidden_bias: Array1<f64>,
    ) -> Result<Self> {
        let (nv, nh) = weights.dim();
        if nv == 0 || nh == 0 {
            return Err(Error::dim("RBM needs at least one unit in each layer"));
        }
        if visible_bias.len() != nv || hidden_bias.len() != nh {
            return Err(Error::dim(format!(
                "weights are {nv}x{nh} but biases have lengths {} and {}",
                visible_bias.len(),
                hidden_bias.len()
            )));
        }
        let p = RbmParams {
            weights,
            visible_bias,
            hidden_bias,
        };
        p.check_finite()?;
        Ok(p)
    }

    pub fn zeros(nv: usize, nh: usize) -> Self {
        RbmParams {
            weights: Array2::zeros((nv, nh)),
            visible_bias: Array1::zeros(nv),
            hidden_bias: Array1::zeros(nh),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.weights.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.weights.ncols()
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.weights.iter().all(|x| x.is_finite())
            && self.visible_bias.iter().all(|x| x.is_finite())
            && self.hidden_bias.iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(
                "RBM parameters contain a non-finite entry".into(),
            ))
        }
    }

    fn check_states(&self, v: &BinaryVector, h: &BinaryVector) -> Result<()> {
        if v.len() != self.n_visible() || h.len() != self.n_hidden() {
            return Err(Error::dim(format!(
                "model is {}x{} but states have lengths {} and {}",
                self.n_visible(),
                self.n_hidden(),
                v.len(),
                h.len()
            )));
        }
        Ok(())
    }

    /// Energy `-v'Wh - v'b1 - h'b2` of a joint state.
    pub fn energy(&self, v: &BinaryVector, h: &BinaryVector) -> Result<f64> {
        self.check_states(v, h)?;
        let va = v.as_array();
        let ha = h.as_array();
        Ok(-va.dot(&self.weights.dot(ha)) - va.dot(&self.visible_bias) - ha.dot(&self.hidden_bias))
    }

    /// Free energy of a visible state: the hidden layer marginalized in
    /// closed form, `F(v) = -sum_j softplus(v'W_j + b2_j) - v'b1`.
    pub fn free_energy(&self, v: &BinaryVector) -> f64 {
        assert_eq!(v.len(), self.n_visible(), "visible state length mismatch");
        let act = self.weights.t().dot(v.as_array()) + &self.hidden_bias;
        -act.iter().map(|&u| softplus(u)).sum::<f64>() - v.as_array().dot(&self.visible_bias)
    }

    /// `P(h_j = 1 | v)` for every hidden unit; strictly inside (0, 1) for
    /// finite parameters.
    pub fn conditional_h_given_v(&self, v: &BinaryVector) -> Array1<f64> {
        assert_eq!(v.len(), self.n_visible(), "visible state length mismatch");
        let act = self.weights.t().dot(v.as_array()) + &self.hidden_bias;
        act.mapv(logistic)
    }

    /// `P(v_i = 1 | h)` for every visible unit.
    pub fn conditional_v_given_h(&self, h: &BinaryVector) -> Array1<f64> {
        assert_eq!(h.len(), self.n_hidden(), "hidden state length mismatch");
        let act = self.weights.dot(h.as_array()) + &self.visible_bias;
        act.mapv(logistic)
    }
}

/// Parameters of a conditional RBM: the five blocks coupling visible units,
/// hidden units, and observed features.
#[derive(Debug, Clone, PartialEq)]
pub struct CrbmParams {
    /// Visible-hidden couplings, `|v| x |h|`.
    pub w_vh: Array2<f64>,
    /// Visible-feature couplings, `|v| x |x|`.
    pub w_vx: Array2<f64>,
    /// Hidden-feature couplings, `|h| x |x|`.
    pub w_hx: Array2<f64>,
    /// Visible biases, length `|v|`.
    pub b_v: Array1<f64>,
    /// Hidden biases, length `|h|`.
    pub b_h: Array1<f64>,
}

impl CrbmParams {
    pub fn new(
        w_vh: Array2<f64>,
        w_vx: Array2<f64>,
        w_hx: Array2<f64>,
        b_v: Array1<f64>,
        b_h: Array1<f64>,
    ) -> Result<Self> {
        let (nv, nh) = w_vh.dim();
        if nv == 0 || nh == 0 {
            return Err(Error::dim("CRBM needs at least one unit in each layer"));
        }
        let nx = w_vx.ncols();
        if w_vx.nrows() != nv || w_hx.dim() != (nh, nx) {
            return Err(Error::dim(format!(
                "feature blocks {}x{} and {}x{} disagree with w_vh {nv}x{nh}",
                w_vx.nrows(),
                w_vx.ncols(),
                w_hx.nrows(),
                w_hx.ncols()
            )));
        }
        if b_v.len() != nv || b_h.len() != nh {
            return Err(Error::dim(format!(
                "bias lengths {} and {} disagree with w_vh {nv}x{nh}",
                b_v.len(),
                b_h.len()
            )));
        }
        let p = CrbmParams {
            w_vh,
            w_vx,
            w_hx,
            b_v,
            b_h,
        };
        p.check_finite()?;
        Ok(p)
    }

    pub fn zeros(nv: usize, nh: usize, nx: usize) -> Self {
        CrbmParams {
            w_vh: Array2::zeros((nv, nh)),
            w_vx: Array2::zeros((nv, nx)),
            w_hx: Array2::zeros((nh, nx)),
            b_v: Array1::zeros(nv),
            b_h: Array1::zeros(nh),
        }
    }

    /// Fresh model: weights i.i.d. N(0, `INIT_WEIGHT_STD`^2), biases zero.
    pub fn init_random(nv: usize, nh: usize, nx: usize, rng: &mut impl Rng) -> Self {
        let normal = Normal::new(0.0, INIT_WEIGHT_STD).expect("valid std");
        let mut draw = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(rng));
        // Row-major fill order, one block at a time, so a fixed seed gives a
        // fixed model.
        let w_vh = draw(nv, nh);
        let w_vx = draw(nv, nx);
        let w_hx = draw(nh, nx);
        CrbmParams {
            w_vh,
            w_vx,
            w_hx,
            b_v: Array1::zeros(nv),
            b_h: Array1::zeros(nh),
        }
    }

    pub fn n_visible(&self) -> usize {
        self.w_vh.nrows()
    }

    pub fn n_hidden(&self) -> usize {
        self.w_vh.ncols()
    }

    pub fn n_features(&self) -> usize {
        self.w_vx.ncols()
    }

    pub fn check_finite(&self) -> Result<()> {
        let ok = self.w_vh.iter().all(|x| x.is_finite())
            && self.w_vx.iter().all(|x| x.is_finite())
            && self.w_hx.iter().all(|x| x.is_finite())
            && self.b_v.iter().all(|x| x.is_finite())
            && self.b_h.iter().all(|x| x.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidValue(
                "CRBM parameters contain a non-finite entry".into(),
            ))
        }
    }

    fn check_features(&self, x: &FeatureVector) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::dim(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Energy `-v'W^{vh}h - v'W^{vx}x - h'W^{hx}x - v'b^v - h'b^h`.
    pub fn energy(&self, v: &BinaryVector, h: &BinaryVector, x: &FeatureVector) -> Result<f64> {
        if v.len() != self.n_visible() || h.len() != self.n_hidden() {
            return Err(Error::dim(format!(
                "model is {}x{} but states have lengths {} and {}",
                self.n_visible(),
                self.n_hidden(),
                v.len(),
                h.len()
            )));
        }
        self.check_features(x)?;
        let va = v.as_array();
        let ha = h.as_array();
        let xa = x.as_array();
        Ok(-va.dot(&self.w_vh.dot(ha))
            - va.dot(&self.w_vx.dot(xa))
            - ha.dot(&self.w_hx.dot(xa))
            - va.dot(&self.b_v)
            - ha.dot(&self.b_h))
    }

    /// Folds the feature terms into the biases, yielding the feature-dependent
    /// RBM with `b1 = b^v + W^{vx}x` and `b2 = b^h + W^{hx}x`.
    pub fn condition(&self, x: &FeatureVector) -> Result<RbmParams> {
        let (b1, b2) = self.conditioned_biases(x)?;
        Ok(RbmParams {
            weights: self.w_vh.clone(),
            visible_bias: b1,
            hidden_bias: b2,
        })
    }

    /// The conditioned biases alone. The weight matrix is unaffected by
    /// conditioning, so hot paths reuse it instead of cloning.
    pub fn conditioned_biases(&self, x: &FeatureVector) -> Result<(Array1<f64>, Array1<f64>)> {
        self.check_features(x)?;
        let b1 = &self.b_v + &self.w_vx.dot(x.as_array());
        let b2 = &self.b_h + &self.w_hx.dot(x.as_array());
        Ok((b1, b2))
    }

    /// Mean hidden activation given a clamped visible state,
    /// `sigma(W^{vh}'v + W^{hx}x + b^h)`.
    pub fn hidden_mean(&self, v: &BinaryVector, x: &FeatureVector) -> Result<Array1<f64>> {
        if v.len() != self.n_visible() {
            return Err(Error::dim(format!(
                "model has {} visible units, state has {}",
                self.n_visible(),
                v.len()
            )));
        }
        self.check_features(x)?;
        let act = self.w_vh.t().dot(v.as_array()) + &self.w_hx.dot(x.as_array()) + &self.b_h;
        Ok(act.mapv(logistic))
    }
}

impl From<RbmParams> for CrbmParams {
    /// Embeds an RBM as a CRBM with zero features.
    fn from(p: RbmParams) -> Self {
        let nv = p.n_visible();
        let nh = p.n_hidden();
        CrbmParams {
            w_vh: p.weights,
            w_vx: Array2::zeros((nv, 0)),
            w_hx: Array2::zeros((nh, 0)),
            b_v: p.visible_bias,
            b_h: p.hidden_bias,
        }
    }
}

impl TryFrom<CrbmParams> for RbmParams {
    type Error = Error;

    /// Succeeds only when the model has no feature couplings.
    fn try_from(p: CrbmParams) -> Result<RbmParams> {
        if p.n_features() != 0 {
            return Err(Error::dim(format!(
                "CRBM has {} feature dimensions, expected 0",
                p.n_features()
            )));
        }
        Ok(RbmParams {
            weights: p.w_vh,
            visible_bias: p.b_v,
            hidden_bias: p.b_h,
        })
    }
}
