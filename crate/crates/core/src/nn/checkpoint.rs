//! `UQP1` checkpoint encoding.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "UQP1" | u32 version (=1) | u32 layer_count
//!        | layer_count x (u32 in_dim, u32 out_dim, u8 activation)
//!        | per layer: weights (out x in, row-major) then biases, as f32
//! ```
//!
//! Several networks may be concatenated in one file, each with its own header.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};

use super::{Activation, MlpParams};

pub const MAGIC: [u8; 4] = *b"UQP1";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected \"UQP1\"")]
    MagicMismatch { found: [u8; 4] },
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated checkpoint: needed {needed} bytes, {available} available")]
    Truncated { needed: usize, available: usize },
    #[error("unknown activation code {0}")]
    UnknownActivation(u8),
    #[error("layer {layer} expects input width {expected} but previous layer emits {found}")]
    DimensionChain {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid header: {0}")]
    InvalidHeader(String),
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("expected {expected} networks, found {found}")]
    NetworkCount { expected: usize, found: usize },
    #[error("non-finite parameter in layer {0}")]
    NonFinite(usize),
}

/// Serializes one network.
pub fn encode(params: &MlpParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 9 * params.num_layers() + 4 * params.num_params());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(params.num_layers() as u32).to_le_bytes());
    for (w, act) in params.weights().iter().zip(params.activations()) {
        out.extend_from_slice(&(w.ncols() as u32).to_le_bytes());
        out.extend_from_slice(&(w.nrows() as u32).to_le_bytes());
        out.push(act.code());
    }
    for v in params.to_flat() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                needed: self.pos + n,
                available: self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CheckpointError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Decodes one network from the front of `bytes`; returns it with the byte count consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(MlpParams, usize), CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(CheckpointError::MagicMismatch { found: magic });
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let layer_count = r.u32()? as usize;
    if layer_count == 0 {
        return Err(CheckpointError::InvalidHeader("zero layers".into()));
    }
    let mut shapes = Vec::with_capacity(layer_count);
    for layer in 0..layer_count {
        let in_dim = r.u32()? as usize;
        let out_dim = r.u32()? as usize;
        let code = r.take(1)?[0];
        let act = Activation::from_code(code).ok_or(CheckpointError::UnknownActivation(code))?;
        if in_dim == 0 || out_dim == 0 {
            return Err(CheckpointError::InvalidHeader(format!(
                "layer {layer} has a zero dimension"
            )));
        }
        if let Some(&(_, prev_out, _)) = shapes.last() {
            if prev_out != in_dim {
                return Err(CheckpointError::DimensionChain {
                    layer,
                    expected: in_dim,
                    found: prev_out,
                });
            }
        }
        shapes.push((in_dim, out_dim, act));
    }
    let payload: usize = shapes.iter().map(|&(i, o, _)| (i * o + o) * 4).sum();
    let available = bytes.len() - r.pos;
    if payload > available {
        return Err(CheckpointError::Truncated {
            needed: r.pos + payload,
            available: bytes.len(),
        });
    }
    let mut weights = Vec::with_capacity(layer_count);
    let mut biases = Vec::with_capacity(layer_count);
    let mut activations = Vec::with_capacity(layer_count);
    for (layer, &(in_dim, out_dim, act)) in shapes.iter().enumerate() {
        let w: Vec<f64> = (0..in_dim * out_dim)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<_, _>>()?;
        let b: Vec<f64> = (0..out_dim)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<_, _>>()?;
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(CheckpointError::NonFinite(layer));
        }
        weights.push(Array2::from_shape_vec((out_dim, in_dim), w).unwrap());
        biases.push(Array1::from(b));
        activations.push(act);
    }
    let params = MlpParams::from_parts(weights, biases, activations)
        .map_err(|e| CheckpointError::InvalidHeader(e.to_string()))?;
    Ok((params, r.pos))
}

/// Decodes a buffer holding exactly one network.
pub fn decode(bytes: &[u8]) -> Result<MlpParams, CheckpointError> {
    let (params, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - used));
    }
    Ok(params)
}

/// Decodes a buffer of concatenated networks.
pub fn decode_bundle(bytes: &[u8]) -> Result<Vec<MlpParams>, CheckpointError> {
    let mut nets = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let (p, used) = decode_prefix(&bytes[pos..])?;
        nets.push(p);
        pos += used;
    }
    Ok(nets)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn save_checkpoint(params: &MlpParams, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    fs::write(path, encode(params)).map_err(io_err(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<MlpParams, CheckpointError> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(io_err(path))?)
}

pub fn save_bundle(nets: &[&MlpParams], path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    let bytes: Vec<u8> = nets.iter().flat_map(|n| encode(n)).collect();
    fs::write(path, bytes).map_err(io_err(path))
}

/// Loads a bundle and checks it holds `expected` networks.
pub fn load_bundle(path: impl AsRef<Path>, expected: usize) -> Result<Vec<MlpParams>, CheckpointError> {
    let path = path.as_ref();
    let nets = decode_bundle(&fs::read(path).map_err(io_err(path))?)?;
    if nets.len() != expected {
        return Err(CheckpointError::NetworkCount {
            expected,
            found: nets.len(),
        });
    }
    Ok(nets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sample_net() -> MlpParams {
        let mut r = rng::stream(11, &[]);
        let mut p = MlpParams::init(
            &[5, 7, 3],
            &[Activation::Relu, Activation::Tanh],
            &mut r,
        )
        .unwrap();
        p.quantize_f32();
        p
    }

    #[test]
    fn header_layout_is_exact() {
        let p = MlpParams::zeros(&[2, 3], &[Activation::Tanh]).unwrap();
        let bytes = encode(&p);
        assert_eq!(&bytes[0..4], b"UQP1");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[1, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[2, 0, 0, 0]);
        assert_eq!(&bytes[16..20], &[3, 0, 0, 0]);
        assert_eq!(bytes[20], 2);
        assert_eq!(bytes.len(), 21 + (6 + 3) * 4);
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let p = sample_net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.uqp");
        save_checkpoint(&p, &path).unwrap();
        let q = load_checkpoint(&path).unwrap();
        let bits = |n: &MlpParams| n.to_flat().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&p), bits(&q));
        assert_eq!(p, q);
    }

    #[test]
    fn wrong_magic() {
        let mut bytes = encode(&sample_net());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::MagicMismatch { found }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn wrong_version() {
        let mut bytes = encode(&sample_net());
        bytes[4] = 2;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::UnsupportedVersion(2))
        ));
    }

    #[test]
    fn short_payload_is_truncation() {
        let bytes = encode(&sample_net());
        assert!(matches!(
            decode(&bytes[..bytes.len() - 3]),
            Err(CheckpointError::Truncated { .. })
        ));
        assert!(matches!(
            decode(&bytes[..10]),
            Err(CheckpointError::Truncated { .. })
        ));
    }

    #[test]
    fn broken_dimension_chain() {
        let mut bytes = encode(&sample_net());
        // second layer in_dim lives at 12 + 9 bytes
        bytes[21] = 8;
        assert!(matches!(
            decode(&bytes),
            Err(CheckpointError::DimensionChain { layer: 1, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode(&sample_net());
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(CheckpointError::TrailingBytes(1))));
    }

    #[test]
    fn bundle_round_trip() {
        let a = sample_net();
        let b = MlpParams::zeros(&[3, 1], &[Activation::Identity]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bundle.uqp");
        save_bundle(&[&a, &b], &path).unwrap();
        let nets = load_bundle(&path, 2).unwrap();
        assert_eq!(nets, vec![a, b]);
        assert!(matches!(
            load_bundle(&path, 3),
            Err(CheckpointError::NetworkCount { expected: 3, found: 2 })
        ));
    }
}
