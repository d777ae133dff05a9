//! Versioned little-endian binary container for network parameters and
//! optimizer state.
//!
//! Layout: magic `PPCKPT\0\0`, `u32` version, four `u32` shape fields
//! (classes, hidden1, hidden2, hidden3), `u64` completed epochs, `u32`
//! tensor count, then per tensor a `u32` name length, UTF-8 name, `u32`
//! rows, `u32` cols and `rows × cols` row-major `f64` values.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use super::network::{EncoderParams, NetworkShape};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"PPCKPT\0\0";
pub const VERSION: u32 = 1;
const VELOCITY_PREFIX: &str = "velocity/";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: EncoderParams,
    /// Momentum buffers, when saved mid-training.
    pub velocity: Option<EncoderParams>,
    pub epochs_done: u64,
}

impl Checkpoint {
    pub fn new(params: EncoderParams) -> Self {
        Self {
            params,
            velocity: None,
            epochs_done: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let s = self.params.shape;
        for v in [s.classes, s.hidden1, s.hidden2, s.hidden3] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.epochs_done.to_le_bytes());
        let mut tensors = Vec::new();
        collect_tensors(&self.params, "", &mut tensors);
        if let Some(v) = &self.velocity {
            collect_tensors(v, VELOCITY_PREFIX, &mut tensors);
        }
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for (name, m) in tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.nrows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u32).to_le_bytes());
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    out.extend_from_slice(&m[(r, c)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(8)? != MAGIC {
            return Err(r.error("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.error(&format!("unsupported checkpoint version {version}")));
        }
        let shape = NetworkShape {
            classes: r.u32()? as usize,
            hidden1: r.u32()? as usize,
            hidden2: r.u32()? as usize,
            hidden3: r.u32()? as usize,
        };
        shape.validate().map_err(|e| r.error(&e.to_string()))?;
        let epochs_done = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| r.error("tensor name is not UTF-8"))?
                .to_string();
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let mut m = DMatrix::zeros(rows, cols);
            for i in 0..rows {
                for j in 0..cols {
                    m[(i, j)] = r.f64()?;
                }
            }
            tensors.insert(name, m);
        }
        if r.pos != bytes.len() {
            return Err(r.error("trailing bytes after the last tensor"));
        }
        let params = assemble(&shape, "", &mut tensors, path)?;
        let has_velocity = tensors.keys().any(|k| k.starts_with(VELOCITY_PREFIX));
        let velocity = if has_velocity {
            Some(assemble(&shape, VELOCITY_PREFIX, &mut tensors, path)?)
        } else {
            None
        };
        if let Some(extra) = tensors.keys().next() {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unexpected tensor `{extra}`"),
            });
        }
        Ok(Self {
            params,
            velocity,
            epochs_done,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Fails with a per-layer shape diff unless the parameters fit `shape`.
    pub fn ensure_shape(&self, shape: &NetworkShape) -> Result<()> {
        let mut diffs = Vec::new();
        if self.params.shape != *shape {
            diffs.push(format!(
                "checkpoint shape {:?} vs configured {:?}",
                self.params.shape, shape
            ));
        }
        diffs.extend(self.params.shape_diff(shape));
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(format!("incompatible checkpoint: {}", diffs.join("; "))))
        }
    }
}

fn collect_tensors(p: &EncoderParams, prefix: &str, out: &mut Vec<(String, DMatrix<f64>)>) {
    for l in &p.layers {
        out.push((format!("{prefix}{}.weight", l.name), l.weight.clone()));
        out.push((
            format!("{prefix}{}.bias", l.name),
            DMatrix::from_column_slice(l.bias.len(), 1, l.bias.as_slice()),
        ));
    }
}

fn assemble(
    shape: &NetworkShape,
    prefix: &str,
    tensors: &mut BTreeMap<String, DMatrix<f64>>,
    path: &Path,
) -> Result<EncoderParams> {
    let mut params = EncoderParams::zeros(*shape);
    let mut diffs = Vec::new();
    for layer in &mut params.layers {
        let (rows, cols) = layer.weight.shape();
        let wname = format!("{prefix}{}.weight", layer.name);
        let bname = format!("{prefix}{}.bias", layer.name);
        match tensors.remove(&wname) {
            Some(m) if m.shape() == (rows, cols) => layer.weight = m,
            Some(m) => diffs.push(format!(
                "{wname}: expected {rows}×{cols}, found {}×{}",
                m.nrows(),
                m.ncols()
            )),
            None => diffs.push(format!("{wname}: missing")),
        }
        match tensors.remove(&bname) {
            Some(m) if m.shape() == (rows, 1) => layer.bias = DVector::from_column_slice(m.as_slice()),
            Some(m) => diffs.push(format!("{bname}: expected {rows}×1, found {}×{}", m.nrows(), m.ncols())),
            None => diffs.push(format!("{bname}: missing")),
        }
    }
    if diffs.is_empty() {
        Ok(params)
    } else {
        Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("tensor shape mismatch: {}", diffs.join("; ")),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn error(&self, message: &str) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            message: format!("{message} (byte offset {})", self.pos),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(&format!("truncated: needed {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;
    use crate::pointcloud::{GroupedSample, FEATURE_DIM};
    use crate::predictor::network::forward;

    fn shape() -> NetworkShape {
        NetworkShape {
            classes: 2,
            hidden1: 5,
            hidden2: 7,
            hidden3: 6,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let params = EncoderParams::init(shape(), 11).unwrap();
        let mut velocity = EncoderParams::init(shape(), 12).unwrap();
        velocity.scale(1e-3);
        let ckpt = Checkpoint {
            params: params.clone(),
            velocity: Some(velocity),
            epochs_done: 17,
        };
        let bytes = ckpt.to_bytes();
        let back = Checkpoint::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), bytes);

        let sample = GroupedSample {
            keypoint_indices: vec![0, 1],
            keypoint_positions: vec![Vec3::new(0.1, 0.2, 0.9), Vec3::new(-0.3, 0.0, 1.1)],
            group_size: 3,
            group_radius: 0.03,
            features: (0..2 * 3 * FEATURE_DIM)
                .map(|i| (i as f64 * 0.37).sin() * 0.02)
                .collect(),
        };
        let a = forward(&params, &sample).unwrap().to_tensor();
        let b = forward(&back.params, &sample).unwrap().to_tensor();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn truncation_is_reported_with_offset() {
        let bytes = Checkpoint::new(EncoderParams::init(shape(), 1).unwrap()).to_bytes();
        for cut in [0, 7, 20, 40, bytes.len() - 1] {
            let err = Checkpoint::from_bytes(&bytes[..cut], Path::new("x")).unwrap_err();
            assert!(matches!(err, Error::Format { .. }), "{err}");
            assert!(err.to_string().contains("byte offset"));
        }
    }

    #[test]
    fn shape_mismatch_lists_differences() {
        let ckpt = Checkpoint::new(EncoderParams::init(shape(), 1).unwrap());
        let other = NetworkShape { hidden2: 9, ..shape() };
        let msg = ckpt.ensure_shape(&other).unwrap_err().to_string();
        assert!(msg.contains("point2"), "{msg}");
        assert!(ckpt.ensure_shape(&shape()).is_ok());
    }
}
