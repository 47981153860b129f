//! Image file formats: IDX input, the raw matrix container, and PGM output.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::model::BinaryVector;

use super::{BinaryImages, GrayImages, StructuredPair};

/// Magic of the raw matrix container: `"BINMAT01"`, then little-endian
/// `u32` `(N, H, W)`, then `N * H * W` bytes row-major.
pub const BINMAT_MAGIC: &[u8; 8] = b"BINMAT01";

/// IDX magic for a 3-dimensional `u8` tensor, big-endian.
const IDX_MAGIC: u32 = 0x0000_0803;

/// Reads an IDX file of `u8` images (the container MNIST ships in).
pub fn load_idx(path: impl AsRef<Path>) -> Result<GrayImages> {
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0u64;
    let magic = read_u32_be(&mut r, &mut offset)?;
    if magic != IDX_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad IDX magic {magic:#010x}, expected {IDX_MAGIC:#010x}"),
        });
    }
    let n = read_u32_be(&mut r, &mut offset)? as usize;
    let h = read_u32_be(&mut r, &mut offset)? as usize;
    let w = read_u32_be(&mut r, &mut offset)? as usize;
    if n == 0 {
        return Err(Error::Parse {
            offset: 4,
            message: "IDX file declares zero images".into(),
        });
    }
    if h == 0 || w == 0 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("IDX file declares degenerate image size {h}x{w}"),
        });
    }
    let expected = n * h * w;
    let mut payload = vec![0u8; expected];
    r.read_exact(&mut payload).map_err(|e| Error::Parse {
        offset,
        message: format!("payload shorter than the declared {n}x{h}x{w} ({e})"),
    })?;
    offset += expected as u64;
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Parse {
            offset,
            message: format!("payload longer than the declared {n}x{h}x{w}"),
        });
    }
    Ok(GrayImages {
        pixels: Array2::from_shape_vec((n, h * w), payload).expect("shape checked"),
        height: h,
        width: w,
    })
}

/// Reads the raw matrix container. Pixel values are returned untouched;
/// binarize afterwards (threshold 0 for already-binary data).
pub fn load_binmat(path: impl AsRef<Path>) -> Result<GrayImages> {
    let mut r = BufReader::new(File::open(path)?);
    let mut offset = 0u64;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|e| Error::Parse {
        offset: 0,
        message: format!("file too short for a magic ({e})"),
    })?;
    offset += 8;
    if &magic != BINMAT_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad matrix magic {magic:?}, expected {BINMAT_MAGIC:?}"),
        });
    }
    let n = read_u32_le(&mut r, &mut offset)? as usize;
    let h = read_u32_le(&mut r, &mut offset)? as usize;
    let w = read_u32_le(&mut r, &mut offset)? as usize;
    if n == 0 || h == 0 || w == 0 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("degenerate matrix dimensions {n}x{h}x{w}"),
        });
    }
    let mut payload = vec![0u8; n * h * w];
    r.read_exact(&mut payload).map_err(|e| Error::Parse {
        offset,
        message: format!("payload shorter than the declared {n}x{h}x{w} ({e})"),
    })?;
    Ok(GrayImages {
        pixels: Array2::from_shape_vec((n, h * w), payload).expect("shape checked"),
        height: h,
        width: w,
    })
}

/// Writes binary images to the raw matrix container.
pub fn save_binmat(images: &BinaryImages, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(BINMAT_MAGIC)?;
    for n in [images.len(), images.height, images.width] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    for row in images.pixels.rows() {
        w.write_all(row.as_slice().expect("row-major layout"))?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a `(clean, corrupted, mask)` triple of matrix files.
pub fn save_pairs(
    pairs: &[StructuredPair],
    height: usize,
    width: usize,
    clean_path: impl AsRef<Path>,
    corrupted_path: impl AsRef<Path>,
    mask_path: impl AsRef<Path>,
) -> Result<()> {
    let clean: Vec<BinaryVector> = pairs.iter().map(|p| p.clean.clone()).collect();
    let corrupted: Vec<BinaryVector> = pairs
        .iter()
        .map(|p| BinaryVector::new(p.corrupted.as_array().clone()))
        .collect::<Result<_>>()?;
    let masks: Vec<BinaryVector> = pairs.iter().map(|p| p.changed.clone()).collect();
    save_binmat(&BinaryImages::from_vectors(&clean, height, width)?, clean_path)?;
    save_binmat(
        &BinaryImages::from_vectors(&corrupted, height, width)?,
        corrupted_path,
    )?;
    save_binmat(&BinaryImages::from_vectors(&masks, height, width)?, mask_path)?;
    Ok(())
}

/// Loads a `(clean, corrupted, mask)` triple written by [`save_pairs`] and
/// re-validates the mask invariant.
pub fn load_pairs(
    clean_path: impl AsRef<Path>,
    corrupted_path: impl AsRef<Path>,
    mask_path: impl AsRef<Path>,
) -> Result<Vec<StructuredPair>> {
    let clean = as_binary(load_binmat(clean_path)?)?;
    let corrupted = as_binary(load_binmat(corrupted_path)?)?;
    let masks = as_binary(load_binmat(mask_path)?)?;
    if clean.len() != corrupted.len() || clean.len() != masks.len() {
        return Err(Error::dim(format!(
            "pair files disagree on instance count: {} / {} / {}",
            clean.len(),
            corrupted.len(),
            masks.len()
        )));
    }
    if clean.pixels.ncols() != corrupted.pixels.ncols()
        || clean.pixels.ncols() != masks.pixels.ncols()
    {
        return Err(Error::dim("pair files disagree on image size"));
    }
    let mut pairs = Vec::with_capacity(clean.len());
    for i in 0..clean.len() {
        let pair = StructuredPair {
            clean: clean.image(i),
            corrupted: corrupted.image(i).into(),
            changed: masks.image(i),
        };
        pair.validate()?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn as_binary(g: GrayImages) -> Result<BinaryImages> {
    BinaryImages::new(g.pixels, g.height, g.width)
}

/// Writes an image grid as a binary PGM (P5) file for visual inspection.
/// Pixels map 0 to black and 1 to white; a one-pixel gray rule separates
/// the tiles.
pub fn write_pgm_grid(images: &BinaryImages, columns: usize, path: impl AsRef<Path>) -> Result<()> {
    if columns == 0 {
        return Err(Error::Config("grid needs at least one column".into()));
    }
    let n = images.len();
    let cols = columns.min(n);
    let rows = n.div_ceil(cols);
    let tile_h = images.height;
    let tile_w = images.width;
    let out_h = rows * tile_h + rows - 1;
    let out_w = cols * tile_w + cols - 1;
    let mut canvas = vec![128u8; out_h * out_w];
    for (idx, img) in images.pixels.rows().into_iter().enumerate() {
        let gr = idx / cols;
        let gc = idx % cols;
        let top = gr * (tile_h + 1);
        let left = gc * (tile_w + 1);
        for r in 0..tile_h {
            for c in 0..tile_w {
                canvas[(top + r) * out_w + left + c] = img[r * tile_w + c] * 255;
            }
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write!(w, "P5\n{out_w} {out_h}\n255\n")?;
    w.write_all(&canvas)?;
    w.flush()?;
    Ok(())
}

fn read_u32_be(r: &mut impl Read, offset: &mut u64) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Parse {
        offset: *offset,
        message: format!("unexpected end of file ({e})"),
    })?;
    *offset += 4;
    Ok(u32::from_be_bytes(b))
}

fn read_u32_le(r: &mut impl Read, offset: &mut u64) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Parse {
        offset: *offset,
        message: format!("unexpected end of file ({e})"),
    })?;
    *offset += 4;
    Ok(u32::from_le_bytes(b))
}
