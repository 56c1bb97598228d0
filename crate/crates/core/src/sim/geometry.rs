use super::{wrap_angle, world_to_body, DroneState, Gate};
use crate::perception::GateRelativePose;

/// Gate pose in the drone's yaw-only body frame.
pub fn relative_gate_pose(state: &DroneState, gate: &Gate) -> GateRelativePose {
    let b = world_to_body(&(gate.center - state.position), state.yaw);
    let horiz = b.x.hypot(b.y);
    GateRelativePose {
        r: b.norm(),
        theta: wrap_angle(b.y.atan2(b.x)),
        phi: b.z.atan2(horiz),
        psi: wrap_angle(gate.yaw - state.yaw),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GateEvent {
    None,
    Traversed,
    Missed,
}

/// Classifies the motion segment `prev -> cur` against a gate.
///
/// A crossing is a change of the signed distance along the gate normal from
/// negative to non-negative. It is a traversal when the crossing point lies in
/// the square aperture, and a miss otherwise.
pub fn check_gate_event(prev: &DroneState, cur: &DroneState, gate: &Gate) -> GateEvent {
    let n = gate.normal();
    let d0 = (prev.position - gate.center).dot(&n);
    let d1 = (cur.position - gate.center).dot(&n);
    if !(d0 < 0.0 && d1 >= 0.0) {
        return GateEvent::None;
    }
    let t = d0 / (d0 - d1);
    let p = prev.position + (cur.position - prev.position) * t;
    let off = p - gate.center;
    let u = off.dot(&gate.lateral());
    let w = off.z;
    if u.abs() <= gate.half_aperture && w.abs() <= gate.half_aperture {
        GateEvent::Traversed
    } else {
        GateEvent::Missed
    }
}
