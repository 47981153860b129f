//! Image datasets, corruption processes, and error metrics.
//!
//! The structured-prediction tasks pair a clean binary image (the target)
//! with a corrupted copy (the observed features) and a mask of the pixels
//! the corruption touched. Corruption of instance `i` draws from its own
//! RNG stream derived from `(seed, i)`, so datasets are reproducible and
//! instances can be generated in parallel or out of order.

mod io;

pub use io::{
    load_binmat, load_idx, load_pairs, save_binmat, save_pairs, write_pgm_grid, BINMAT_MAGIC,
};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{BinaryVector, FeatureVector, RbmParams};
use crate::rng::{stream_rng, DOMAIN_CORRUPTION, DOMAIN_SPLIT, DOMAIN_SYNTH};

/// Default binarization threshold for 8-bit grayscale input.
pub const BINARIZE_THRESHOLD: u8 = 127;

/// Grayscale images, one row per image, row-major pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImages {
    pub pixels: Array2<u8>,
    pub height: usize,
    pub width: usize,
}

/// Binary images; every pixel is 0 or 1.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImages {
    pub pixels: Array2<u8>,
    pub height: usize,
    pub width: usize,
}

impl BinaryImages {
    pub fn new(pixels: Array2<u8>, height: usize, width: usize) -> Result<Self> {
        if pixels.ncols() != height * width {
            return Err(Error::dim(format!(
                "images have {} pixels but dimensions say {height}x{width}",
                pixels.ncols()
            )));
        }
        if pixels.nrows() == 0 {
            return Err(Error::InvalidValue("image set is empty".into()));
        }
        if pixels.iter().any(|&p| p > 1) {
            return Err(Error::InvalidValue(
                "binary images must contain only 0/1 pixels".into(),
            ));
        }
        Ok(BinaryImages {
            pixels,
            height,
            width,
        })
    }

    pub fn from_vectors(images: &[BinaryVector], height: usize, width: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidValue("image set is empty".into()));
        }
        let cols = height * width;
        let mut pixels = Array2::<u8>::zeros((images.len(), cols));
        for (r, img) in images.iter().enumerate() {
            if img.len() != cols {
                return Err(Error::dim(format!(
                    "image {r} has {} pixels, expected {cols}",
                    img.len()
                )));
            }
            for (c, &x) in img.as_array().iter().enumerate() {
                pixels[[r, c]] = x as u8;
            }
        }
        Ok(BinaryImages {
            pixels,
            height,
            width,
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.nrows() == 0
    }

    pub fn image(&self, index: usize) -> BinaryVector {
        BinaryVector::from_bytes(self.pixels.row(index).as_slice().unwrap())
            .expect("stored pixels are binary")
    }

    fn select(&self, indices: &[usize]) -> BinaryImages {
        let mut pixels = Array2::<u8>::zeros((indices.len(), self.pixels.ncols()));
        for (r, &idx) in indices.iter().enumerate() {
            pixels.row_mut(r).assign(&self.pixels.row(idx));
        }
        BinaryImages {
            pixels,
            height: self.height,
            width: self.width,
        }
    }

    /// The images at the given indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<BinaryImages> {
        if indices.is_empty() {
            return Err(Error::InvalidValue("subset selects no images".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.len()) {
            return Err(Error::InvalidValue(format!(
                "subset index {bad} out of range for {} images",
                self.len()
            )));
        }
        Ok(self.select(indices))
    }
}

/// The seeded permutation that [`split`] slices into parts; exposed so
/// callers building custom splits stay consistent with it.
pub fn split_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream_rng(seed, DOMAIN_SPLIT, 0));
    order
}

/// Thresholds grayscale images: a pixel becomes one iff its value is
/// strictly greater than `threshold`.
pub fn binarize(images: &GrayImages, threshold: u8) -> BinaryImages {
    BinaryImages {
        pixels: images.pixels.mapv(|p| u8::from(p > threshold)),
        height: images.height,
        width: images.width,
    }
}

/// The corruption processes used by the denoising and completion tasks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Corruption {
    /// Flip each pixel independently with the given probability.
    Flip { prob: f64 },
    /// Overwrite a uniformly placed patch with a constant fill value.
    Occlude {
        patch_h: usize,
        patch_w: usize,
        fill: u8,
    },
}

/// A corruption process plus the seed its per-instance streams derive from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorruptionSpec {
    pub kind: Corruption,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        match self.kind {
            Corruption::Flip { prob } => {
                if !(0.0..=1.0).contains(&prob) {
                    return Err(Error::Config(format!(
                        "flip probability {prob} outside [0, 1]"
                    )));
                }
            }
            Corruption::Occlude {
                patch_h,
                patch_w,
                fill,
            } => {
                if patch_h == 0 || patch_w == 0 || patch_h > height || patch_w > width {
                    return Err(Error::Config(format!(
                        "occlusion patch {patch_h}x{patch_w} does not fit in {height}x{width}"
                    )));
                }
                if fill > 1 {
                    return Err(Error::Config(format!("fill value {fill} must be 0 or 1")));
                }
            }
        }
        Ok(())
    }
}

/// One structured-prediction instance: the clean target, the corrupted
/// observation presented to the model as real-valued features, and the mask
/// of pixels whose value the corruption actually changed.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredPair {
    pub clean: BinaryVector,
    pub corrupted: FeatureVector,
    pub changed: BinaryVector,
}

impl StructuredPair {
    /// The mask marks exactly the positions where target and observation
    /// disagree; anything else is corrupt data.
    pub fn validate(&self) -> Result<()> {
        if self.clean.len() != self.corrupted.len() || self.clean.len() != self.changed.len() {
            return Err(Error::dim(format!(
                "pair components disagree: {} / {} / {}",
                self.clean.len(),
                self.corrupted.len(),
                self.changed.len()
            )));
        }
        for i in 0..self.clean.len() {
            let x = self.corrupted.as_array()[i];
            if x != 0.0 && x != 1.0 {
                return Err(Error::InvalidValue(format!(
                    "corrupted pixel {i} is {x}, expected 0 or 1"
                )));
            }
            let differs = self.clean.as_array()[i] != x;
            if differs != self.changed.bit(i) {
                return Err(Error::InvalidValue(format!(
                    "changed mask disagrees with the pixel difference at {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Independent pixel flips; the mask records the flipped positions.
pub fn corrupt_flip(v: &BinaryVector, prob: f64, rng: &mut impl Rng) -> StructuredPair {
    let n = v.len();
    let mut corrupted = Array1::<f64>::zeros(n);
    let mut changed = vec![false; n];
    for i in 0..n {
        let flip = rng.random::<f64>() < prob;
        let bit = v.as_array()[i];
        corrupted[i] = if flip { 1.0 - bit } else { bit };
        changed[i] = flip && prob > 0.0;
    }
    StructuredPair {
        clean: v.clone(),
        corrupted: FeatureVector::new(corrupted).expect("binary values are finite"),
        changed: BinaryVector::from_bools(&changed),
    }
}

/// Constant-fill occlusion at a uniformly random position such that the
/// patch lies fully inside the image. The mask marks only pixels whose
/// value the fill actually changed.
pub fn corrupt_occlude(
    v: &BinaryVector,
    height: usize,
    width: usize,
    patch_h: usize,
    patch_w: usize,
    fill: u8,
    rng: &mut impl Rng,
) -> Result<StructuredPair> {
    if v.len() != height * width {
        return Err(Error::dim(format!(
            "image has {} pixels, dimensions say {height}x{width}",
            v.len()
        )));
    }
    CorruptionSpec {
        kind: Corruption::Occlude {
            patch_h,
            patch_w,
            fill,
        },
        seed: 0,
    }
    .validate(height, width)?;
    let top = rng.random_range(0..=height - patch_h);
    let left = rng.random_range(0..=width - patch_w);
    let fill = f64::from(fill);
    let mut corrupted = v.as_array().clone();
    let mut changed = vec![false; v.len()];
    for r in top..top + patch_h {
        for c in left..left + patch_w {
            let i = r * width + c;
            if corrupted[i] != fill {
                changed[i] = true;
            }
            corrupted[i] = fill;
        }
    }
    Ok(StructuredPair {
        clean: v.clone(),
        corrupted: FeatureVector::new(corrupted).expect("binary values are finite"),
        changed: BinaryVector::from_bools(&changed),
    })
}

/// Corrupts a whole image set. Instance `i` uses the RNG stream
/// `(spec.seed, i)`, independent of every other instance.
pub fn corrupt_images(images: &BinaryImages, spec: &CorruptionSpec) -> Result<Vec<StructuredPair>> {
    spec.validate(images.height, images.width)?;
    let mut pairs = Vec::with_capacity(images.len());
    for idx in 0..images.len() {
        let mut rng = stream_rng(spec.seed, DOMAIN_CORRUPTION, idx as u64);
        let v = images.image(idx);
        let pair = match spec.kind {
            Corruption::Flip { prob } => corrupt_flip(&v, prob, &mut rng),
            Corruption::Occlude {
                patch_h,
                patch_w,
                fill,
            } => corrupt_occlude(
                &v,
                images.height,
                images.width,
                patch_h,
                patch_w,
                fill,
                &mut rng,
            )?,
        };
        pairs.push(pair);
    }
    Ok(pairs)
}

/// Pixel error rates, pooled over all pixels of all instances (one global
/// ratio, not a mean of per-instance ratios).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    /// Percentage of wrong pixels among all pixels.
    pub all_err: f64,
    /// Percentage of wrong pixels among the pixels the corruption changed;
    /// NaN when the evaluation contains no changed pixel at all.
    pub changed_err: f64,
    pub n_instances: usize,
}

/// Compares predictions against the clean targets, pooling counts over all
/// pixels and all instances.
pub fn error_metrics(predictions: &[BinaryVector], pairs: &[StructuredPair]) -> Result<Metrics> {
    if predictions.len() != pairs.len() {
        return Err(Error::dim(format!(
            "{} predictions for {} instances",
            predictions.len(),
            pairs.len()
        )));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidValue("nothing to evaluate".into()));
    }
    let mut wrong_all = 0usize;
    let mut total_all = 0usize;
    let mut wrong_changed = 0usize;
    let mut total_changed = 0usize;
    for (pred, pair) in predictions.iter().zip(pairs) {
        if pred.len() != pair.clean.len() {
            return Err(Error::dim(format!(
                "prediction has {} pixels, target has {}",
                pred.len(),
                pair.clean.len()
            )));
        }
        for i in 0..pred.len() {
            let wrong = pred.as_array()[i] != pair.clean.as_array()[i];
            total_all += 1;
            wrong_all += usize::from(wrong);
            if pair.changed.bit(i) {
                total_changed += 1;
                wrong_changed += usize::from(wrong);
            }
        }
    }
    let changed_err = if total_changed == 0 {
        f64::NAN
    } else {
        100.0 * wrong_changed as f64 / total_changed as f64
    };
    Ok(Metrics {
        all_err: 100.0 * wrong_all as f64 / total_all as f64,
        changed_err,
        n_instances: pairs.len(),
    })
}

/// Seeded permutation split into train/validation/test. The sizes must use
/// up the whole set; the same seed always produces the same split.
pub fn split(
    images: &BinaryImages,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<(BinaryImages, BinaryImages, BinaryImages)> {
    let (n_train, n_val, n_test) = sizes;
    let total = n_train + n_val + n_test;
    if total != images.len() {
        return Err(Error::Config(format!(
            "split sizes {n_train}+{n_val}+{n_test} do not add up to {} images",
            images.len()
        )));
    }
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config("every split part needs at least one image".into()));
    }
    let order = split_order(images.len(), seed);
    Ok((
        images.select(&order[..n_train]),
        images.select(&order[n_train..n_train + n_val]),
        images.select(&order[n_train + n_val..]),
    ))
}

/// Samples a synthetic structured image set from a seeded ground-truth RBM
/// whose hidden units carry localized rectangular receptive fields, so the
/// images are unions of crisp blobs over light speckle; that higher-order
/// structure is exactly what a pixelwise predictor cannot capture.
///
/// Sampling is exact, not a Markov chain: with at most [`SYNTH_MAX_HIDDEN`]
/// hidden units the hidden marginal is enumerable, so each image draws a
/// hidden state from its true distribution and then the factorized visible
/// conditional. Used by the CLI's synthetic dataset mode and the
/// desk-scale experiments.
pub fn synthetic_images(
    n: usize,
    height: usize,
    width: usize,
    n_hidden: usize,
    seed: u64,
) -> Result<BinaryImages> {
    if n == 0 || height == 0 || width == 0 || n_hidden == 0 {
        return Err(Error::Config("synthetic set needs positive dimensions".into()));
    }
    if n_hidden > SYNTH_MAX_HIDDEN {
        return Err(Error::Config(format!(
            "synthetic generator enumerates the hidden marginal; {n_hidden} units exceed the limit of {SYNTH_MAX_HIDDEN}"
        )));
    }
    let nv = height * width;
    let mut rng = stream_rng(seed, DOMAIN_SYNTH, 0);

    // One rectangular receptive field per hidden unit. An active unit
    // paints its patch at sigma(coupling + background); the background
    // speckles at sigma(background). The hidden bias cancels the
    // free-energy reward of lighting the patch (per-pixel gain times area)
    // and then handicaps each unit so only a few fire per image. Patches
    // are placed disjointly where possible: overlaps would earn a large
    // shared-pixel reward and push the marginal towards dense unions.
    let coupling = 8.0;
    let background = -4.0;
    let per_pixel_gain =
        crate::math::softplus(coupling + background) - crate::math::softplus(background);
    let handicap = -0.7;
    let mut weights = Array2::<f64>::zeros((nv, n_hidden));
    let mut hidden_bias = Array1::<f64>::zeros(n_hidden);
    let mut occupied = vec![false; nv];
    for j in 0..n_hidden {
        let mut rect = (0, 0, 0, 0);
        for _attempt in 0..64 {
            let ph = rng.random_range(height.min(3)..=height.min(5));
            let pw = rng.random_range(width.min(3)..=width.min(5));
            let top = rng.random_range(0..=height - ph);
            let left = rng.random_range(0..=width - pw);
            rect = (top, left, ph, pw);
            let free = (top..top + ph)
                .all(|r| (left..left + pw).all(|c| !occupied[r * width + c]));
            if free {
                break;
            }
        }
        let (top, left, ph, pw) = rect;
        for r in top..top + ph {
            for c in left..left + pw {
                weights[[r * width + c, j]] = coupling;
                occupied[r * width + c] = true;
            }
        }
        hidden_bias[j] = -per_pixel_gain * (ph * pw) as f64 + handicap;
    }
    let p = RbmParams::new(weights, Array1::from_elem(nv, background), hidden_bias)?;

    // Exact hidden marginal: cumulative weights over all 2^k states.
    let n_states = 1usize << n_hidden;
    let mut logws = Vec::with_capacity(n_states);
    for state in 0..n_states {
        logws.push(crate::model::hidden_state_log_weight(&p, state));
    }
    let shift = logws.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cumulative = Vec::with_capacity(n_states);
    let mut total = 0.0;
    for &lw in &logws {
        total += (lw - shift).exp();
        cumulative.push(total);
    }

    let mut images = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.random::<f64>() * total;
        let state = cumulative.partition_point(|&c| c < u).min(n_states - 1);
        let h = BinaryVector::from_index(state, n_hidden);
        let probs = p.conditional_v_given_h(&h);
        images.push(BinaryVector::from_bools(
            &probs
                .iter()
                .map(|&q| rng.random::<f64>() < q)
                .collect::<Vec<_>>(),
        ));
    }
    BinaryImages::from_vectors(&images, height, width)
}

/// Hidden-layer cap of the exact synthetic sampler.
pub const SYNTH_MAX_HIDDEN: usize = 16;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::DOMAIN_INIT;

    fn checkerboard(n: usize, h: usize, w: usize) -> BinaryImages {
        let pixels = Array2::from_shape_fn((n, h * w), |(r, c)| ((r + c) % 2) as u8);
        BinaryImages::new(pixels, h, w).unwrap()
    }

    #[test]
    fn binarize_boundary_is_strict() {
        let g = GrayImages {
            pixels: ndarray::arr2(&[[126, 127, 128, 255, 0]]),
            height: 1,
            width: 5,
        };
        let b = binarize(&g, BINARIZE_THRESHOLD);
        assert_eq!(b.pixels.row(0).to_vec(), vec![0, 0, 1, 1, 0]);
        let all_zero = GrayImages {
            pixels: Array2::zeros((2, 5)),
            height: 1,
            width: 5,
        };
        assert!(binarize(&all_zero, 127).pixels.iter().all(|&p| p == 0));
        let all_max = GrayImages {
            pixels: Array2::from_elem((2, 5), 255),
            height: 1,
            width: 5,
        };
        assert!(binarize(&all_max, 127).pixels.iter().all(|&p| p == 1));
    }

    #[test]
    fn flip_zero_probability_is_identity() {
        let v = BinaryVector::from_bools(&[true, false, true, true]);
        let mut rng = stream_rng(0, DOMAIN_INIT, 40);
        let pair = corrupt_flip(&v, 0.0, &mut rng);
        assert_eq!(pair.corrupted.as_array(), v.as_array());
        assert_eq!(pair.changed, BinaryVector::zeros(4));
        pair.validate().unwrap();
    }

    #[test]
    fn flip_probability_one_inverts_everything() {
        let v = BinaryVector::from_bools(&[true, false, true]);
        let mut rng = stream_rng(0, DOMAIN_INIT, 41);
        let pair = corrupt_flip(&v, 1.0, &mut rng);
        for i in 0..3 {
            assert_eq!(pair.corrupted.as_array()[i], 1.0 - v.as_array()[i]);
        }
        assert_eq!(pair.changed, BinaryVector::ones(3));
        pair.validate().unwrap();
    }

    #[test]
    fn flip_counts_follow_binomial_statistics() {
        let n_pixels = 784;
        let trials = 10_000usize;
        let p = 0.2;
        let v = BinaryVector::zeros(n_pixels);
        let mut total_flips = 0usize;
        for t in 0..trials {
            let mut rng = stream_rng(99, DOMAIN_CORRUPTION, t as u64);
            let pair = corrupt_flip(&v, p, &mut rng);
            total_flips += pair.changed.as_array().iter().filter(|&&b| b == 1.0).count();
        }
        let mean = total_flips as f64 / trials as f64;
        let sigma = (n_pixels as f64 * p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (mean - 156.8).abs() < 3.0 * sigma,
            "mean flips {mean} vs expected 156.8 +- {:.3}",
            3.0 * sigma
        );
    }

    #[test]
    fn flip_round_trip_via_mask() {
        let images = checkerboard(5, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.3 },
            seed: 7,
        };
        let pairs = corrupt_images(&images, &spec).unwrap();
        for pair in &pairs {
            pair.validate().unwrap();
            for i in 0..pair.clean.len() {
                let recovered = if pair.changed.bit(i) {
                    1.0 - pair.corrupted.as_array()[i]
                } else {
                    pair.corrupted.as_array()[i]
                };
                assert_eq!(recovered, pair.clean.as_array()[i]);
            }
        }
    }

    #[test]
    fn corruption_is_reproducible_and_per_instance_independent() {
        let images = checkerboard(6, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.4 },
            seed: 21,
        };
        let a = corrupt_images(&images, &spec).unwrap();
        let b = corrupt_images(&images, &spec).unwrap();
        assert_eq!(a, b);
        // Dropping the first image must not change how the others corrupt
        // if instance streams really are independent... but indices shift,
        // so instead check: corrupting a subset by index matches.
        let sub = images.select(&[2, 3]);
        let c = corrupt_images(&sub, &spec).unwrap();
        // Instance 0 of `sub` uses stream 0, like instance 0 of `images`;
        // same stream + different image means different output is fine.
        // The property that matters: same stream and same image agree.
        assert_eq!(c[0].changed, {
            let mut rng = stream_rng(21, DOMAIN_CORRUPTION, 0);
            corrupt_flip(&images.image(2), 0.4, &mut rng).changed
        });
    }

    #[test]
    fn occlusion_covers_whole_image() {
        let v = BinaryVector::ones(16);
        let mut rng = stream_rng(3, DOMAIN_INIT, 42);
        let pair = corrupt_occlude(&v, 4, 4, 4, 4, 0, &mut rng).unwrap();
        assert!(pair.corrupted.as_array().iter().all(|&x| x == 0.0));
        assert_eq!(pair.changed, BinaryVector::ones(16));
        pair.validate().unwrap();
    }

    #[test]
    fn occlusion_with_matching_fill_changes_nothing() {
        let v = BinaryVector::ones(16);
        let mut rng = stream_rng(3, DOMAIN_INIT, 43);
        let pair = corrupt_occlude(&v, 4, 4, 2, 2, 1, &mut rng).unwrap();
        assert_eq!(pair.changed, BinaryVector::zeros(16));
        assert_eq!(pair.corrupted.as_array(), v.as_array());
    }

    #[test]
    fn occlusion_corners_are_uniform() {
        // 8x8 patch in 28x28 leaves a 21x21 grid of corners.
        let h = 28;
        let w = 28;
        let v = BinaryVector::ones(h * w);
        let draws = 100_000usize;
        let mut counts = vec![0usize; 21 * 21];
        for t in 0..draws {
            let mut rng = stream_rng(5, DOMAIN_CORRUPTION, t as u64);
            let pair = corrupt_occlude(&v, h, w, 8, 8, 0, &mut rng).unwrap();
            // Recover the corner from the first changed pixel.
            let first = pair
                .changed
                .as_array()
                .iter()
                .position(|&b| b == 1.0)
                .unwrap();
            let (top, left) = (first / w, first % w);
            assert!(top <= 20 && left <= 20);
            counts[top * 21 + left] += 1;
        }
        let expected = draws as f64 / (21.0 * 21.0);
        let chi2: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        // 440 degrees of freedom: mean 440, sd ~29.7; stay within ~5 sd.
        assert!(chi2 < 590.0, "chi2 = {chi2}");
    }

    #[test]
    fn occlusion_rejects_oversized_patches() {
        let v = BinaryVector::ones(16);
        let mut rng = stream_rng(3, DOMAIN_INIT, 44);
        assert!(corrupt_occlude(&v, 4, 4, 5, 2, 0, &mut rng).is_err());
    }

    #[test]
    fn metrics_hand_case() {
        // 10 pixels, 2 changed; the prediction is wrong on 1 changed and
        // 1 unchanged pixel.
        let clean = BinaryVector::zeros(10);
        let mut corrupted = Array1::<f64>::zeros(10);
        corrupted[0] = 1.0;
        corrupted[1] = 1.0;
        let changed = BinaryVector::from_bools(&[
            true, true, false, false, false, false, false, false, false, false,
        ]);
        let pair = StructuredPair {
            clean: clean.clone(),
            corrupted: FeatureVector::new(corrupted).unwrap(),
            changed,
        };
        pair.validate().unwrap();
        let mut wrong = vec![false; 10];
        wrong[0] = true; // changed pixel, wrong
        wrong[5] = true; // unchanged pixel, wrong
        let pred = BinaryVector::from_bools(&wrong);
        let m = error_metrics(&[pred], &[pair]).unwrap();
        assert!((m.all_err - 20.0).abs() < 1e-12);
        assert!((m.changed_err - 50.0).abs() < 1e-12);
    }

    #[test]
    fn metrics_perfect_prediction_is_zero() {
        let images = checkerboard(3, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.5 },
            seed: 2,
        };
        let pairs = corrupt_images(&images, &spec).unwrap();
        let preds: Vec<BinaryVector> = pairs.iter().map(|p| p.clean.clone()).collect();
        let m = error_metrics(&preds, &pairs).unwrap();
        assert_eq!(m.all_err, 0.0);
        assert_eq!(m.changed_err, 0.0);
    }

    #[test]
    fn metrics_identity_prediction_under_flips() {
        let images = checkerboard(50, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.25 },
            seed: 11,
        };
        let pairs = corrupt_images(&images, &spec).unwrap();
        let preds: Vec<BinaryVector> = pairs
            .iter()
            .map(|p| BinaryVector::new(p.corrupted.as_array().clone()).unwrap())
            .collect();
        let m = error_metrics(&preds, &pairs).unwrap();
        // Every changed pixel is wrong by construction.
        assert_eq!(m.changed_err, 100.0);
        assert!(m.all_err > 0.0 && m.all_err < 100.0);
    }

    #[test]
    fn metrics_with_no_changed_pixels_report_nan() {
        let images = checkerboard(2, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.0 },
            seed: 0,
        };
        let pairs = corrupt_images(&images, &spec).unwrap();
        let preds: Vec<BinaryVector> = pairs.iter().map(|p| p.clean.clone()).collect();
        let m = error_metrics(&preds, &pairs).unwrap();
        assert!(m.changed_err.is_nan());
        assert_eq!(m.all_err, 0.0);
    }

    #[test]
    fn metrics_are_permutation_invariant() {
        let images = checkerboard(8, 4, 4);
        let spec = CorruptionSpec {
            kind: Corruption::Flip { prob: 0.3 },
            seed: 13,
        };
        let pairs = corrupt_images(&images, &spec).unwrap();
        let preds: Vec<BinaryVector> = pairs
            .iter()
            .enumerate()
            .map(|(i, p)| {
                if i % 2 == 0 {
                    p.clean.clone()
                } else {
                    BinaryVector::new(p.corrupted.as_array().clone()).unwrap()
                }
            })
            .collect();
        let m0 = error_metrics(&preds, &pairs).unwrap();
        let order: Vec<usize> = (0..pairs.len()).rev().collect();
        let preds_p: Vec<BinaryVector> = order.iter().map(|&i| preds[i].clone()).collect();
        let pairs_p: Vec<StructuredPair> = order.iter().map(|&i| pairs[i].clone()).collect();
        let m1 = error_metrics(&preds_p, &pairs_p).unwrap();
        assert_eq!(m0.all_err, m1.all_err);
        assert_eq!(m0.changed_err, m1.changed_err);
    }

    #[test]
    fn split_is_disjoint_exhaustive_and_seeded() {
        let images = checkerboard(10, 2, 2);
        let (tr, va, te) = split(&images, (6, 2, 2), 5).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), 10);
        let (tr2, _, _) = split(&images, (6, 2, 2), 5).unwrap();
        assert_eq!(tr.pixels, tr2.pixels);
        let (tr3, _, _) = split(&images, (6, 2, 2), 6).unwrap();
        assert_ne!(tr.pixels, tr3.pixels);
        assert!(split(&images, (5, 2, 2), 5).is_err());
    }

    #[test]
    fn synthetic_images_are_binary_and_reproducible() {
        let a = synthetic_images(20, 8, 8, 6, 77).unwrap();
        let b = synthetic_images(20, 8, 8, 6, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 20);
        assert!(a.pixels.iter().all(|&p| p <= 1));
        // Not degenerate: some on and some off pixels overall.
        let on: usize = a.pixels.iter().map(|&p| p as usize).sum();
        assert!(on > 0 && on < 20 * 64);
    }
}
