use std::f64::consts::{FRAC_PI_2, PI};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{wrap_angle, Gate, Vec3};
use crate::error::{Error, Result};
use crate::rng::{self, tags};

/// Minimum gate height, m.
pub const MIN_GATE_HEIGHT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    pub n_gates: usize,
    pub radius: f64,
    pub base_height: f64,
    /// Per-gate radius offset amplitude `R`: offsets are Uniform(-R, R).
    pub radius_noise: f64,
    /// Per-gate height offset amplitude `H`.
    pub height_noise: f64,
    pub half_aperture: f64,
    pub seed: u64,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            n_gates: 8,
            radius: 8.0,
            base_height: 2.0,
            radius_noise: 0.0,
            height_noise: 0.0,
            half_aperture: 0.75,
            seed: 0,
        }
    }
}

impl TrackConfig {
    pub fn with_noise(radius_noise: f64, height_noise: f64, seed: u64) -> Self {
        Self {
            radius_noise,
            height_noise,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_gates < 3 {
            return Err(Error::InvalidConfig(format!("{} gates, need at least 3", self.n_gates)));
        }
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidConfig("track radius must be positive".into()));
        }
        if !(self.radius_noise >= 0.0 && self.height_noise >= 0.0)
            || !self.radius_noise.is_finite()
            || !self.height_noise.is_finite()
        {
            return Err(Error::InvalidConfig("noise amplitudes must be non-negative".into()));
        }
        if !(self.half_aperture.is_finite() && self.half_aperture > 0.0) {
            return Err(Error::InvalidConfig("gate half aperture must be positive".into()));
        }
        if !self.base_height.is_finite() {
            return Err(Error::InvalidConfig("base height must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub config: TrackConfig,
    pub gates: Vec<Gate>,
}

impl Track {
    pub fn gate(&self, passed: usize) -> &Gate {
        &self.gates[passed % self.gates.len()]
    }
}

/// Gate `i` sits at angle `2 pi i / n` on a circle of radius `radius + U(-R, R)`
/// and height `max(0.5, base_height + U(-H, H))`, facing counter-clockwise travel.
pub fn generate_track(config: &TrackConfig) -> Result<Track> {
    config.validate()?;
    let mut r = rng::stream(config.seed, &[tags::TRACK]);
    let gates = (0..config.n_gates)
        .map(|i| {
            let angle = 2.0 * PI * i as f64 / config.n_gates as f64;
            // two draws per gate regardless of amplitude
            let dr = config.radius_noise * (2.0 * r.random::<f64>() - 1.0);
            let dh = config.height_noise * (2.0 * r.random::<f64>() - 1.0);
            let radius = config.radius + dr;
            let height = (config.base_height + dh).max(MIN_GATE_HEIGHT);
            Gate {
                center: Vec3::new(radius * angle.cos(), radius * angle.sin(), height),
                yaw: wrap_angle(angle + FRAC_PI_2),
                half_aperture: config.half_aperture,
            }
        })
        .collect();
    Ok(Track {
        config: config.clone(),
        gates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_track_is_regular() {
        let t = generate_track(&TrackConfig::default()).unwrap();
        assert_eq!(t.gates.len(), 8);
        for (i, g) in t.gates.iter().enumerate() {
            let horiz = (g.center.x.powi(2) + g.center.y.powi(2)).sqrt();
            assert!((horiz - 8.0).abs() < 1e-12);
            assert_eq!(g.center.z, 2.0);
            let angle = g.center.y.atan2(g.center.x).rem_euclid(2.0 * PI);
            assert!((angle - i as f64 * PI / 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noise_stays_in_bounds() {
        for seed in 0..1000 {
            let t = generate_track(&TrackConfig::with_noise(1.5, 2.5, seed)).unwrap();
            for g in &t.gates {
                let horiz = (g.center.x.powi(2) + g.center.y.powi(2)).sqrt();
                assert!((6.5..=9.5).contains(&horiz), "seed {seed}: {horiz}");
                assert!((0.5..=4.5).contains(&g.center.z));
            }
        }
    }

    #[test]
    fn seeded_tracks_repeat() {
        let c = TrackConfig::with_noise(1.0, 2.0, 99);
        assert_eq!(generate_track(&c).unwrap(), generate_track(&c).unwrap());
        let d = TrackConfig::with_noise(1.0, 2.0, 100);
        assert_ne!(generate_track(&c).unwrap(), generate_track(&d).unwrap());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = TrackConfig::default();
        c.n_gates = 2;
        assert!(generate_track(&c).is_err());
        let mut c = TrackConfig::default();
        c.radius = 0.0;
        assert!(generate_track(&c).is_err());
        let mut c = TrackConfig::default();
        c.height_noise = -1.0;
        assert!(generate_track(&c).is_err());
    }

    #[test]
    fn gates_face_direction_of_travel() {
        let t = generate_track(&TrackConfig::default()).unwrap();
        for i in 0..8 {
            let a = t.gates[i].center;
            let b = t.gates[(i + 1) % 8].center;
            assert!((b - a).dot(&t.gates[i].normal()) > 0.0);
        }
    }
}
