use serde::{Deserialize, Serialize};

use super::{body_to_world, wrap_angle, DroneState, Vec3};
use crate::error::{Error, Result};
use crate::policy::VelocityCommand;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsConfig {
    /// Integration step, s.
    pub dt: f64,
    /// Velocity and yaw-rate lag time constant, s.
    pub tau: f64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        Self { dt: 0.05, tau: 0.3 }
    }
}

/// First-order lag toward the commanded (world-frame) velocity and yaw rate,
/// then explicit position/yaw integration with the updated rates.
pub fn step_dynamics(
    state: &DroneState,
    cmd: &VelocityCommand,
    config: &DynamicsConfig,
) -> Result<DroneState> {
    if !state.is_finite() || !cmd.is_finite() {
        return Err(Error::NonFinite("dynamics input"));
    }
    let cmd = cmd.clamped();
    let gain = config.dt / config.tau;
    let target = body_to_world(&Vec3::new(cmd.vx, cmd.vy, cmd.vz), state.yaw);
    let velocity = state.velocity + (target - state.velocity) * gain;
    let yaw_rate = state.yaw_rate + (cmd.yaw_rate - state.yaw_rate) * gain;
    let next = DroneState {
        position: state.position + velocity * config.dt,
        yaw: wrap_angle(state.yaw + yaw_rate * config.dt),
        velocity,
        yaw_rate,
        time: state.time + config.dt,
    };
    if !next.is_finite() {
        return Err(Error::NonFinite("dynamics output"));
    }
    Ok(next)
}
