//! Desk-scale gate-racing environment.
//!
//! A circular track of square gates, a first-order-lag point-mass drone, a
//! 16x16 pinhole renderer that draws only the next gate, a ground-truth expert,
//! and closed-loop episode execution.

mod dynamics;
mod episode;
mod expert;
mod geometry;
mod render;
mod track;

pub use dynamics::{step_dynamics, DynamicsConfig};
pub use episode::{
    run_episode, start_state, write_trajectory_csv, EpisodeConfig, EpisodeResult, ExpertPilot,
    Pilot, PilotInput, PilotOutput, Termination, TrajectoryPoint,
};
pub use expert::{expert_command, EXPERT_SLOW_RADIUS, EXPERT_YAW_GAIN};
pub use geometry::{check_gate_event, relative_gate_pose, GateEvent};
pub use render::{project_gate_corners, render_observation, FOCAL_PX, NEAR_PLANE};
pub use track::{generate_track, Track, TrackConfig};

use std::f64::consts::PI;

use nalgebra::Vector3;

pub type Vec3 = Vector3<f64>;

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Rotates a world-frame vector into the yaw-only body frame.
pub fn world_to_body(v: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x + s * v.y, -s * v.x + c * v.y, v.z)
}

pub fn body_to_world(v: &Vec3, yaw: f64) -> Vec3 {
    let (s, c) = yaw.sin_cos();
    Vec3::new(c * v.x - s * v.y, s * v.x + c * v.y, v.z)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub center: Vec3,
    /// Direction of the gate normal (direction of travel), rad.
    pub yaw: f64,
    pub half_aperture: f64,
}

impl Gate {
    pub fn normal(&self) -> Vec3 {
        Vec3::new(self.yaw.cos(), self.yaw.sin(), 0.0)
    }

    /// Horizontal in-plane axis.
    pub fn lateral(&self) -> Vec3 {
        Vec3::new(-self.yaw.sin(), self.yaw.cos(), 0.0)
    }

    /// Aperture corners in drawing order.
    pub fn corners(&self) -> [Vec3; 4] {
        let a = self.half_aperture;
        let l = self.lateral() * a;
        let u = Vec3::new(0.0, 0.0, a);
        [
            self.center + l + u,
            self.center - l + u,
            self.center - l - u,
            self.center + l - u,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DroneState {
    pub position: Vec3,
    pub yaw: f64,
    /// World-frame velocity, m/s.
    pub velocity: Vec3,
    pub yaw_rate: f64,
    pub time: f64,
}

impl DroneState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            velocity: Vec3::zeros(),
            yaw_rate: 0.0,
            time: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(self.velocity.iter()).all(|v| v.is_finite())
            && self.yaw.is_finite()
            && self.yaw_rate.is_finite()
            && self.time.is_finite()
    }
}
