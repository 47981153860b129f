//! `make-dataset`: read or synthesize images, binarize, corrupt, split,
//! and write the paired files plus a manifest.

use std::fs;
use std::path::PathBuf;

use clap::Parser;
use crbm_bp::data::{
    binarize, corrupt_images, load_binmat, load_idx, save_pairs, split_order, synthetic_images,
    Corruption, CorruptionSpec, GrayImages,
};
use crbm_bp::{Error, Result};

use crate::config::{resolve, RunConfig};

#[derive(Parser)]
pub struct Args {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input images, IDX or raw matrix container (detected by magic).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Generate this many synthetic structured images instead of reading.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Synthetic image height.
    #[arg(long)]
    height: Option<usize>,
    /// Synthetic image width.
    #[arg(long)]
    width: Option<usize>,
    /// Hidden units of the synthetic generator.
    #[arg(long)]
    gen_hidden: Option<usize>,
    /// Binarization threshold (pixel > threshold becomes 1). Defaults to
    /// 127 for IDX input, 0 for raw input, unused for synthetic data.
    #[arg(long)]
    binarize_threshold: Option<u8>,
    /// Corruption process: flip or occlude.
    #[arg(long)]
    corrupt: Option<String>,
    /// Flip probability.
    #[arg(long)]
    flip_prob: Option<f64>,
    /// Occlusion patch height.
    #[arg(long)]
    patch_h: Option<usize>,
    /// Occlusion patch width.
    #[arg(long)]
    patch_w: Option<usize>,
    /// Occlusion fill value (0 or 1).
    #[arg(long)]
    fill: Option<u8>,
    /// Images in the training split; defaults to everything not assigned
    /// to validation or test.
    #[arg(long)]
    train_count: Option<usize>,
    /// Images in the validation split.
    #[arg(long)]
    val_count: Option<usize>,
    /// Images in the test split.
    #[arg(long)]
    test_count: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the split files and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

pub fn run(args: Args) -> Result<()> {
    let mut file = RunConfig::load(args.config.as_deref())?;
    let input = args.input.or(file.take("input").map(PathBuf::from));
    let synthetic = resolve(args.synthetic, file.take_parsed("synthetic")?, 0);
    let height = resolve(args.height, file.take_parsed("height")?, 16);
    let width = resolve(args.width, file.take_parsed("width")?, 16);
    let gen_hidden = resolve(args.gen_hidden, file.take_parsed("gen_hidden")?, 12);
    let threshold_override = args
        .binarize_threshold
        .or(file.take_parsed("binarize_threshold")?);
    let corrupt_kind = resolve(
        args.corrupt,
        file.take("corrupt"),
        "flip".to_string(),
    );
    let flip_prob = resolve(args.flip_prob, file.take_parsed("flip_prob")?, 0.1);
    let patch_h = resolve(args.patch_h, file.take_parsed("patch_h")?, 8);
    let patch_w = resolve(args.patch_w, file.take_parsed("patch_w")?, 8);
    let fill = resolve(args.fill, file.take_parsed("fill")?, 0);
    let val_count = resolve(args.val_count, file.take_parsed("val_count")?, 0);
    let test_count = resolve(args.test_count, file.take_parsed("test_count")?, 0);
    let train_count_opt = args.train_count.or(file.take_parsed("train_count")?);
    let seed = resolve(args.seed, file.take_parsed("seed")?, 0);
    file.reject_unknown()?;

    // Source images.
    let (images, source) = if synthetic > 0 {
        if input.is_some() {
            return Err(Error::Config(
                "--input and --synthetic are mutually exclusive".into(),
            ));
        }
        (
            synthetic_images(synthetic, height, width, gen_hidden, seed)?,
            format!("synthetic n={synthetic} {height}x{width} gen_hidden={gen_hidden}"),
        )
    } else {
        let path = input.ok_or_else(|| {
            Error::Config("either --input or --synthetic is required".into())
        })?;
        let (gray, default_threshold) = sniff_and_load(&path)?;
        let threshold = threshold_override.unwrap_or(default_threshold);
        (
            binarize(&gray, threshold),
            format!("{} threshold={threshold}", path.display()),
        )
    };

    let n = images.len();
    let train_count = train_count_opt.unwrap_or_else(|| n.saturating_sub(val_count + test_count));
    if train_count == 0 {
        return Err(Error::Config("training split would be empty".into()));
    }
    if train_count + val_count + test_count > n {
        return Err(Error::Config(format!(
            "split sizes {train_count}+{val_count}+{test_count} exceed the {n} available images"
        )));
    }

    let order = split_order(n, seed);
    let mut cursor = 0usize;
    let mut take = |count: usize| -> Option<Vec<usize>> {
        if count == 0 {
            return None;
        }
        let part = order[cursor..cursor + count].to_vec();
        cursor += count;
        Some(part)
    };
    let splits = [
        ("train", take(train_count)),
        ("val", take(val_count)),
        ("test", take(test_count)),
    ];

    fs::create_dir_all(&args.out_dir)?;
    let kind = match corrupt_kind.as_str() {
        "flip" => Corruption::Flip { prob: flip_prob },
        "occlude" => Corruption::Occlude {
            patch_h,
            patch_w,
            fill,
        },
        other => {
            return Err(Error::Config(format!(
                "unknown corruption '{other}' (expected flip or occlude)"
            )))
        }
    };

    let mut manifest = String::new();
    manifest.push_str(&format!(
        "source = {source}\nheight = {}\nwidth = {}\nseed = {seed}\ncorrupt = {corrupt_kind}\n",
        images.height, images.width
    ));
    match kind {
        Corruption::Flip { prob } => manifest.push_str(&format!("flip_prob = {prob}\n")),
        Corruption::Occlude {
            patch_h,
            patch_w,
            fill,
        } => manifest.push_str(&format!(
            "patch_h = {patch_h}\npatch_w = {patch_w}\nfill = {fill}\n"
        )),
    }

    for (offset, (name, indices)) in splits.into_iter().enumerate() {
        let Some(indices) = indices else { continue };
        let subset = images.subset(&indices)?;
        // Each split corrupts under its own seed so masks never repeat
        // across splits.
        let spec = CorruptionSpec {
            kind,
            seed: seed.wrapping_add(offset as u64),
        };
        let pairs = corrupt_images(&subset, &spec)?;
        let (clean, corrupted, mask) = super::split_paths(&args.out_dir, name);
        save_pairs(&pairs, subset.height, subset.width, &clean, &corrupted, &mask)?;
        manifest.push_str(&format!("{name} = {}\n", pairs.len()));
    }
    fs::write(args.out_dir.join("manifest.txt"), manifest)?;
    println!("dataset written to {}", args.out_dir.display());
    Ok(())
}

/// Detects the container by its leading bytes and loads it.
fn sniff_and_load(path: &std::path::Path) -> Result<(GrayImages, u8)> {
    let bytes = fs::read(path)?;
    if bytes.len() >= 8 && &bytes[..8] == crbm_bp::data::BINMAT_MAGIC {
        Ok((load_binmat(path)?, 0))
    } else {
        Ok((load_idx(path)?, 127))
    }
}
