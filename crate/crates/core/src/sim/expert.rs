use super::{relative_gate_pose, world_to_body, DroneState, Gate};
use crate::policy::{VelocityCommand, V_MAX, YAW_RATE_MAX};

/// Distance below which the expert slows linearly, m.
pub const EXPERT_SLOW_RADIUS: f64 = 3.0;
pub const EXPERT_YAW_GAIN: f64 = 1.5;

/// Ground-truth pilot: fly straight at the gate center, slowing inside
/// `EXPERT_SLOW_RADIUS`, and yaw toward it.
pub fn expert_command(state: &DroneState, gate: &Gate) -> VelocityCommand {
    let offset = gate.center - state.position;
    let r = offset.norm();
    let pose = relative_gate_pose(state, gate);
    let yaw_rate = (EXPERT_YAW_GAIN * pose.theta).clamp(-YAW_RATE_MAX, YAW_RATE_MAX);
    if r <= f64::EPSILON {
        return VelocityCommand::new(0.0, 0.0, 0.0, yaw_rate);
    }
    let speed = V_MAX * (r / EXPERT_SLOW_RADIUS).min(1.0);
    let v = world_to_body(&(offset * (speed / r)), state.yaw);
    VelocityCommand::new(v.x, v.y, v.z, yaw_rate)
}
