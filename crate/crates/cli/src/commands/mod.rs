//! Subcommand implementations.

pub mod bench;
pub mod eval;
pub mod make_dataset;
pub mod oracle;
pub mod predict;
pub mod train;

use std::path::{Path, PathBuf};

use crbm_bp::data::{load_pairs, StructuredPair};
use crbm_bp::{Error, Result};

/// File names inside a dataset directory, per split.
pub fn split_paths(dir: &Path, split: &str) -> (PathBuf, PathBuf, PathBuf) {
    (
        dir.join(format!("{split}_clean.binmat")),
        dir.join(format!("{split}_corrupted.binmat")),
        dir.join(format!("{split}_mask.binmat")),
    )
}

/// Loads one split of a dataset directory.
pub fn load_split(dir: &Path, split: &str) -> Result<Vec<StructuredPair>> {
    let (clean, corrupted, mask) = split_paths(dir, split);
    if !clean.exists() {
        return Err(Error::InvalidValue(format!(
            "dataset {} has no '{split}' split ({} missing)",
            dir.display(),
            clean.display()
        )));
    }
    load_pairs(clean, corrupted, mask)
}

/// Whether a split exists in a dataset directory.
pub fn split_exists(dir: &Path, split: &str) -> bool {
    split_paths(dir, split).0.exists()
}

/// Parses a `VxH` size pair such as `1000x500`.
pub fn parse_size(s: &str) -> Result<(usize, usize)> {
    let (v, h) = s
        .split_once('x')
        .ok_or_else(|| Error::Config(format!("size '{s}' is not of the form VxH")))?;
    let nv = v
        .trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("bad visible size in '{s}': {e}")))?;
    let nh = h
        .trim()
        .parse::<usize>()
        .map_err(|e| Error::Config(format!("bad hidden size in '{s}': {e}")))?;
    if nv == 0 || nh == 0 {
        return Err(Error::Config(format!("size '{s}' has an empty layer")));
    }
    Ok((nv, nh))
}
