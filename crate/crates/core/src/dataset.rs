//! Labeled gate-camera records and the `UQD1` binary container.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "UQD1" | u32 version | u32 record_count | u32 obs_dim | u32 pose_dim | u32 cmd_dim
//! record_count x (obs_dim + pose_dim + cmd_dim) f32
//! ```
//!
//! Each record stores the observation, the gate pose `(r, theta, phi, psi)` and
//! the expert command `(vx, vy, vz, yaw_rate)`.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::perception::{GateRelativePose, Observation, OBS_DIM, POSE_DIM};
use crate::policy::{VelocityCommand, CMD_DIM};
use crate::rng;
use crate::sim::{
    expert_command, generate_track, relative_gate_pose, render_observation, DroneState, TrackConfig,
    Vec3,
};

pub const MAGIC: [u8; 4] = *b"UQD1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
const RECORD_FLOATS: usize = OBS_DIM + POSE_DIM + CMD_DIM;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic {found:?}, expected \"UQD1\"")]
    MagicMismatch { found: [u8; 4] },
    #[error("unsupported dataset version {0}")]
    UnsupportedVersion(u32),
    #[error("{field} is {found}, expected {expected}")]
    DimensionMismatch {
        field: &'static str,
        expected: u32,
        found: u32,
    },
    #[error("payload is {found} bytes, header implies {expected}")]
    LengthMismatch { expected: u64, found: u64 },
    #[error("record {record}: {reason}")]
    InvalidRecord { record: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub obs: Observation,
    pub pose: GateRelativePose,
    pub cmd: VelocityCommand,
}

impl Record {
    /// Rounds every field through f32 so the record equals its stored form.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| v as f32 as f64;
        let pixels = self.obs.pixels().iter().map(|&p| q(p)).collect();
        Self {
            obs: Observation::new(pixels).expect("f32 rounding keeps [0, 1]"),
            pose: GateRelativePose {
                r: q(self.pose.r),
                theta: q(self.pose.theta),
                phi: q(self.pose.phi),
                psi: q(self.pose.psi),
            },
            cmd: VelocityCommand::from_array(self.cmd.to_array().map(q)),
        }
    }
}

pub fn encode(records: &[Record]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * RECORD_FLOATS * 4);
    out.extend_from_slice(&MAGIC);
    for v in [
        VERSION,
        records.len() as u32,
        OBS_DIM as u32,
        POSE_DIM as u32,
        CMD_DIM as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for r in records {
        r.obs.pixels().iter().for_each(|&p| put(p));
        let p = r.pose;
        [p.r, p.theta, p.phi, p.psi].into_iter().for_each(&mut put);
        r.cmd.to_array().into_iter().for_each(&mut put);
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Vec<Record>, DatasetError> {
    if bytes.len() < HEADER_LEN {
        return Err(DatasetError::LengthMismatch {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != MAGIC {
        return Err(DatasetError::MagicMismatch { found });
    }
    let version = read_u32(bytes, 4);
    if version != VERSION {
        return Err(DatasetError::UnsupportedVersion(version));
    }
    let count = read_u32(bytes, 8) as usize;
    for (field, at, expected) in [
        ("obs_dim", 12, OBS_DIM),
        ("pose_dim", 16, POSE_DIM),
        ("cmd_dim", 20, CMD_DIM),
    ] {
        let found = read_u32(bytes, at);
        if found as usize != expected {
            return Err(DatasetError::DimensionMismatch {
                field,
                expected: expected as u32,
                found,
            });
        }
    }
    let payload = &bytes[HEADER_LEN..];
    let expected = count as u64 * RECORD_FLOATS as u64 * 4;
    if payload.len() as u64 != expected {
        return Err(DatasetError::LengthMismatch {
            expected,
            found: payload.len() as u64,
        });
    }
    payload
        .chunks_exact(RECORD_FLOATS * 4)
        .enumerate()
        .map(|(i, chunk)| {
            let v: Vec<f64> = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect();
            let bad = |reason: String| DatasetError::InvalidRecord { record: i, reason };
            if v.iter().any(|x| !x.is_finite()) {
                return Err(bad("non-finite value".into()));
            }
            let obs = Observation::new(v[..OBS_DIM].to_vec()).map_err(|e| bad(e.to_string()))?;
            let p = &v[OBS_DIM..OBS_DIM + POSE_DIM];
            let c = &v[OBS_DIM + POSE_DIM..];
            Ok(Record {
                obs,
                pose: GateRelativePose {
                    r: p[0],
                    theta: p[1],
                    phi: p[2],
                    psi: p[3],
                },
                cmd: VelocityCommand::new(c[0], c[1], c[2], c[3]),
            })
        })
        .collect()
}

pub fn write_dataset(records: &[Record], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    std::fs::write(path, encode(records)).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Vec<Record>, DatasetError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

/// Pose sampler for the training distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    /// Upper bound of the per-track radius noise amplitude, m.
    pub max_radius_noise: f64,
    pub max_height_noise: f64,
    /// Horizontal drone distance to the gate center, m.
    pub min_distance: f64,
    pub max_distance: f64,
    /// Bearing off the gate axis, rad.
    pub max_bearing: f64,
    /// Elevation of the drone seen from the gate center, rad.
    pub max_elevation: f64,
    /// Heading error relative to the line of sight, rad.
    pub max_yaw_error: f64,
    pub pixel_noise_std: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self {
            max_radius_noise: 0.3,
            max_height_noise: 0.3,
            min_distance: 0.3,
            max_distance: 9.0,
            max_bearing: 50f64.to_radians(),
            max_elevation: 30f64.to_radians(),
            max_yaw_error: 35f64.to_radians(),
            pixel_noise_std: 0.05,
        }
    }
}

/// One record from its own stream: random mildly noisy track, random gate,
/// random approach pose behind it.
pub fn sample_record(config: &SamplingConfig, rng: &mut rng::Rng) -> Record {
    let track_cfg = TrackConfig::with_noise(
        rng.random_range(0.0..=config.max_radius_noise),
        rng.random_range(0.0..=config.max_height_noise),
        rng.random(),
    );
    let track = generate_track(&track_cfg).expect("sampler emits valid track configs");
    let gate = track.gates[rng.random_range(0..track.gates.len())];
    let d = rng.random_range(config.min_distance..config.max_distance);
    let bearing = rng.random_range(-config.max_bearing..=config.max_bearing);
    let dz = d * rng.random_range(-config.max_elevation..=config.max_elevation).tan();
    let yaw_err = rng.random_range(-config.max_yaw_error..=config.max_yaw_error);
    let horiz = (gate.normal() * bearing.cos() + gate.lateral() * bearing.sin()) * d;
    let position = gate.center - horiz + Vec3::new(0.0, 0.0, dz);
    let los = gate.center - position;
    let yaw = crate::sim::wrap_angle(los.y.atan2(los.x) + yaw_err);
    let state = DroneState::at_rest(position, yaw);
    let obs = render_observation(&state, &gate, config.pixel_noise_std, rng);
    Record {
        obs,
        pose: relative_gate_pose(&state, &gate),
        cmd: expert_command(&state, &gate),
    }
    .quantized()
}

/// `count` records, record `i` drawn from stream `(seed, tag, i)`.
pub fn sample_records(count: usize, config: &SamplingConfig, seed: u64, tag: u64) -> Vec<Record> {
    (0..count)
        .into_par_iter()
        .map(|i| sample_record(config, &mut rng::stream(seed, &[tag, i as u64])))
        .collect()
}

/// Fraction of records with the gate center in front of the camera.
pub fn visible_fraction(records: &[Record]) -> f64 {
    let n = records.iter().filter(|r| r.pose.theta.abs() < PI / 2.0).count();
    n as f64 / records.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Vec<Record> {
        sample_records(16, &SamplingConfig::default(), 5, rng::tags::CMVAE_DATA)
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let recs = small();
        let back = decode(&encode(&recs)).unwrap();
        assert_eq!(recs, back);
    }

    #[test]
    fn payload_length_matches_header() {
        let bytes = encode(&small());
        assert_eq!(bytes.len(), HEADER_LEN + 16 * 264 * 4);
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = encode(&small());
        let err = decode(&bytes[..bytes.len() - 4]).unwrap_err();
        assert!(matches!(err, DatasetError::LengthMismatch { .. }));
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(DatasetError::LengthMismatch { .. })));
    }

    #[test]
    fn header_fields_checked() {
        let bytes = encode(&small());
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(decode(&b), Err(DatasetError::MagicMismatch { .. })));
        let mut b = bytes.clone();
        b[4] = 2;
        assert!(matches!(decode(&b), Err(DatasetError::UnsupportedVersion(2))));
        let mut b = bytes.clone();
        b[13] = 0;
        assert!(matches!(decode(&b), Err(DatasetError::DimensionMismatch { field: "obs_dim", .. })));
    }

    #[test]
    fn out_of_range_pixel_rejected() {
        let mut bytes = encode(&small());
        bytes[HEADER_LEN..HEADER_LEN + 4].copy_from_slice(&2.0f32.to_le_bytes());
        assert!(matches!(decode(&bytes), Err(DatasetError::InvalidRecord { record: 0, .. })));
    }

    #[test]
    fn sampling_is_deterministic_and_in_range() {
        let a = small();
        assert_eq!(a, small());
        for r in &a {
            assert!(r.obs.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
            assert!(r.pose.r > 0.0 && r.pose.r < 10.0);
        }
        assert_eq!(visible_fraction(&a), 1.0);
    }
}
