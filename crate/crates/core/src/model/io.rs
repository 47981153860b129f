//! Versioned binary container for model parameters.
//!
//! Layout: an 8-byte magic, a little-endian `u32` triplet `(|v|, |h|, |x|)`,
//! then the parameter blocks as little-endian `f64` in row-major order and
//! the fixed order `w_vh, w_vx, w_hx, b_v, b_h`. A file with `|x| = 0`
//! omits the two feature blocks; that is how plain RBMs are stored.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::model::CrbmParams;

pub const MODEL_MAGIC: &[u8; 8] = b"CRBMBP01";

pub fn save_model(p: &CrbmParams, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MODEL_MAGIC)?;
    for n in [p.n_visible(), p.n_hidden(), p.n_features()] {
        w.write_all(&(n as u32).to_le_bytes())?;
    }
    write_f64s(&mut w, p.w_vh.iter())?;
    if p.n_features() > 0 {
        write_f64s(&mut w, p.w_vx.iter())?;
        write_f64s(&mut w, p.w_hx.iter())?;
    }
    write_f64s(&mut w, p.b_v.iter())?;
    write_f64s(&mut w, p.b_h.iter())?;
    w.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<CrbmParams> {
    let mut r = Tracked::new(BufReader::new(File::open(path)?));
    let mut magic = [0u8; 8];
    r.read_all(&mut magic)?;
    if &magic != MODEL_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad model magic {magic:?}, expected {MODEL_MAGIC:?}"),
        });
    }
    let nv = r.read_u32_le()? as usize;
    let nh = r.read_u32_le()? as usize;
    let nx = r.read_u32_le()? as usize;
    if nv == 0 || nh == 0 {
        return Err(Error::Parse {
            offset: 8,
            message: format!("model declares an empty layer: |v| = {nv}, |h| = {nh}"),
        });
    }
    let w_vh = r.read_matrix(nv, nh)?;
    let (w_vx, w_hx) = if nx > 0 {
        (r.read_matrix(nv, nx)?, r.read_matrix(nh, nx)?)
    } else {
        (Array2::zeros((nv, 0)), Array2::zeros((nh, 0)))
    };
    let b_v = r.read_vector(nv)?;
    let b_h = r.read_vector(nh)?;
    r.expect_eof()?;
    CrbmParams::new(w_vh, w_vx, w_hx, b_v, b_h)
}

fn write_f64s<'a, W: Write>(w: &mut W, values: impl Iterator<Item = &'a f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reader that remembers its byte offset so parse errors can point at the
/// exact position.
struct Tracked<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Tracked<R> {
    fn new(inner: R) -> Self {
        Tracked { inner, offset: 0 }
    }

    fn read_all(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| Error::Parse {
            offset: self.offset,
            message: format!("unexpected end of file ({e})"),
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn read_u32_le(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.read_all(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn read_f64_le(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.read_all(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn read_vector(&mut self, len: usize) -> Result<Array1<f64>> {
        let mut v = Vec::with_capacity(len);
        for _ in 0..len {
            v.push(self.read_f64_le()?);
        }
        Ok(Array1::from_vec(v))
    }

    fn read_matrix(&mut self, rows: usize, cols: usize) -> Result<Array2<f64>> {
        let mut v = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            v.push(self.read_f64_le()?);
        }
        Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Parse {
            offset: self.offset,
            message: e.to_string(),
        })
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut b = [0u8; 1];
        match self.inner.read(&mut b) {
            Ok(0) => Ok(()),
            Ok(_) => Err(Error::Parse {
                offset: self.offset,
                message: "trailing bytes after parameter blocks".into(),
            }),
            Err(e) => Err(e.into()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RbmParams;
    use crate::rng::{stream_rng, DOMAIN_INIT};

    #[test]
    fn crbm_round_trip_is_exact() {
        let mut rng = stream_rng(1, DOMAIN_INIT, 20);
        let p = CrbmParams::init_random(5, 3, 4, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.crbm");
        save_model(&p, &path).unwrap();
        let q = load_model(&path).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn rbm_round_trip_via_zero_features() {
        let p = RbmParams::zeros(4, 2);
        let as_crbm: CrbmParams = p.clone().into();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.rbm");
        save_model(&as_crbm, &path).unwrap();
        let q = load_model(&path).unwrap();
        assert_eq!(q.n_features(), 0);
        let back: RbmParams = q.try_into().unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn bad_magic_is_reported_at_offset_zero() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk");
        std::fs::write(&path, b"NOTMAGIC____").unwrap();
        match load_model(&path) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let mut rng = stream_rng(2, DOMAIN_INIT, 21);
        let p = CrbmParams::init_random(3, 2, 1, &mut rng);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.crbm");
        save_model(&p, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        match load_model(&path) {
            Err(Error::Parse { offset, .. }) => assert!(offset > 8),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
