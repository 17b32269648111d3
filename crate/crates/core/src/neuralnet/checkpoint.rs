//! Binary model checkpoints.
//!
//! Byte layout, all integers `u32` and all reals `f64`, little-endian:
//!
//! ```text
//! magic            8 bytes  "AMBCMLP\0"
//! version          u32      = 1
//! n_per_symbol     u32      0 when the input is not a frame encoding
//! linear layers L  u32      hidden layers + 1
//! dims             (L+1) x u32   input, hidden..., 1
//! bn_momentum, bn_epsilon, prob_clip_epsilon   3 x f64
//! for l in 0..L:   W_l row-major (dims[l+1] x dims[l])
//! for l in 0..L:   b_l
//! for each hidden layer: BN scale, BN shift
//! for each hidden layer: running mean, running variance
//! standardizer mean (input), standardizer inverse std (input)
//! ```
//!
//! Nothing may follow the last value.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{BatchNorm, Linear, MlpConfig, MlpModel, Standardizer};
use crate::error::{AmbcError, Result};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"AMBCMLP\0";
pub const CHECKPOINT_VERSION: u32 = 1;

fn bad(msg: impl Into<String>) -> AmbcError {
    AmbcError::Checkpoint(msg.into())
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_reals<'a>(out: &mut Vec<u8>, vals: impl IntoIterator<Item = &'a f64>) {
    for v in vals {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Serializes a model into the checkpoint byte layout.
pub fn write_checkpoint<W: Write>(model: &MlpModel, mut w: W) -> Result<()> {
    let cfg = &model.config;
    let dims = cfg.layer_dims();
    let mut out = Vec::with_capacity(64 + 8 * model.parameter_count() * 2);
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    put_u32(&mut out, CHECKPOINT_VERSION);
    put_u32(&mut out, cfg.n_per_symbol().unwrap_or(0) as u32);
    put_u32(&mut out, (dims.len() - 1) as u32);
    for &d in &dims {
        put_u32(&mut out, d as u32);
    }
    put_reals(&mut out, &[cfg.bn_momentum, cfg.bn_epsilon, cfg.prob_clip_epsilon]);
    for l in &model.linears {
        put_reals(&mut out, l.weight.iter());
    }
    for l in &model.linears {
        put_reals(&mut out, l.bias.iter());
    }
    for bn in &model.norms {
        put_reals(&mut out, bn.scale.iter());
        put_reals(&mut out, bn.shift.iter());
    }
    for bn in &model.norms {
        put_reals(&mut out, bn.running_mean.iter());
        put_reals(&mut out, bn.running_var.iter());
    }
    put_reals(&mut out, model.standardizer.mean.iter());
    put_reals(&mut out, model.standardizer.inv_std.iter());
    w.write_all(&out)
        .map_err(|e| bad(format!("write failed: {e}")))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| bad(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn vector(&mut self, n: usize) -> Result<Array1<f64>> {
        Ok(Array1::from(self.reals(n)?))
    }
}

/// Parses the checkpoint byte layout.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<MlpModel> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf).map_err(|e| bad(format!("read failed: {e}")))?;
    let mut c = Cursor { buf: &buf, pos: 0 };

    if c.take(8)? != CHECKPOINT_MAGIC {
        return Err(bad("not a model checkpoint (bad magic)"));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let n_per_symbol = c.u32()? as usize;
    let n_linear = c.u32()? as usize;
    if !(2..=64).contains(&n_linear) {
        return Err(bad(format!("implausible layer count {n_linear}")));
    }
    let dims: Vec<usize> = (0..=n_linear).map(|_| c.u32().map(|d| d as usize)).collect::<Result<_>>()?;
    if dims.contains(&0) || dims[n_linear] != 1 {
        return Err(bad(format!("invalid layer dims {dims:?}")));
    }
    let mut config = MlpConfig::with_dims(dims[0], dims[1..n_linear].to_vec());
    config.bn_momentum = c.f64()?;
    config.bn_epsilon = c.f64()?;
    config.prob_clip_epsilon = c.f64()?;
    config.validate().map_err(|e| bad(e.to_string()))?;
    if n_per_symbol != config.n_per_symbol().unwrap_or(0) {
        return Err(bad(format!("header N={n_per_symbol} disagrees with input width {}", dims[0])));
    }

    let mut weights = Vec::with_capacity(n_linear);
    for l in 0..n_linear {
        let w = Array2::from_shape_vec((dims[l + 1], dims[l]), c.reals(dims[l + 1] * dims[l])?)
            .map_err(|e| bad(e.to_string()))?;
        weights.push(w);
    }
    let mut linears = Vec::with_capacity(n_linear);
    for (l, weight) in weights.into_iter().enumerate() {
        linears.push(Linear {
            weight,
            bias: c.vector(dims[l + 1])?,
        });
    }
    let hidden = &dims[1..n_linear];
    let mut norms: Vec<BatchNorm> = Vec::with_capacity(hidden.len());
    for &m in hidden {
        norms.push(BatchNorm {
            scale: c.vector(m)?,
            shift: c.vector(m)?,
            running_mean: Array1::zeros(m),
            running_var: Array1::ones(m),
        });
    }
    for (bn, &m) in norms.iter_mut().zip(hidden) {
        bn.running_mean = c.vector(m)?;
        bn.running_var = c.vector(m)?;
        if bn.running_var.iter().any(|&v| !(v >= 0.0)) {
            return Err(bad("negative running variance"));
        }
    }
    let standardizer = Standardizer {
        mean: c.vector(dims[0])?,
        inv_std: c.vector(dims[0])?,
    };
    if c.pos != buf.len() {
        return Err(bad(format!("{} trailing bytes", buf.len() - c.pos)));
    }
    Ok(MlpModel {
        config,
        linears,
        norms,
        standardizer,
    })
}

/// Writes a checkpoint file atomically.
pub fn save_checkpoint(model: &MlpModel, path: &Path) -> Result<()> {
    let io = |source| AmbcError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    write_checkpoint(model, &mut tmp)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path).map_err(|source| AmbcError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_checkpoint(bytes.as_slice())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    fn toy() -> MlpModel {
        let mut m = MlpModel::new(MlpConfig::with_dims(12, vec![8, 4]), &mut rng_from_seed(3)).unwrap();
        m.norms[0].running_mean.fill(0.25);
        m.standardizer.mean.fill(-1.5);
        m
    }

    #[test]
    fn round_trip_is_exact() {
        let m = toy();
        let mut bytes = Vec::new();
        write_checkpoint(&m, &mut bytes).unwrap();
        assert_eq!(read_checkpoint(bytes.as_slice()).unwrap(), m);
    }

    #[test]
    fn header_layout() {
        let mut bytes = Vec::new();
        write_checkpoint(&toy(), &mut bytes).unwrap();
        assert_eq!(&bytes[..8], b"AMBCMLP\0");
        let u = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        assert_eq!(u(8), 1);
        assert_eq!(u(12), 1); // 12 inputs = one sample per symbol
        assert_eq!(u(16), 3);
        assert_eq!([u(20), u(24), u(28), u(32)], [12, 8, 4, 1]);
        let params = 12 * 8 + 8 * 4 + 4 + 8 + 4 + 1;
        let bn = 2 * (8 + 4) * 2;
        assert_eq!(bytes.len(), 36 + 24 + 8 * (params + bn + 24));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut bytes = Vec::new();
        write_checkpoint(&toy(), &mut bytes).unwrap();
        assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(read_checkpoint(extra.as_slice()).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(magic.as_slice()).is_err());
        let mut version = bytes;
        version[8] = 9;
        assert!(read_checkpoint(version.as_slice()).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&toy(), &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), toy());
        assert!(matches!(load_checkpoint(&dir.path().join("missing")), Err(AmbcError::Io { .. })));
    }
}
