// ASCII view of the camera frame while approaching a gate.

use uqnav::rng;
use uqnav::sim::{generate_track, relative_gate_pose, render_observation, DroneState, TrackConfig};

pub fn run_example() -> uqnav::Result<()> {
    let track = generate_track(&TrackConfig::default())?;
    let gate = track.gates[0];
    for (dist, lateral) in [(6.0, 0.0), (2.5, 0.0), (3.0, 1.0)] {
        let pos = gate.center - gate.normal() * dist + gate.lateral() * lateral;
        let state = DroneState::at_rest(pos, gate.yaw);
        let obs = render_observation(&state, &gate, 0.0, &mut rng::stream(0, &[]));
        let p = relative_gate_pose(&state, &gate);
        println!("r = {:.2} m, theta = {:.1} deg", p.r, p.theta.to_degrees());
        for row in 0..16 {
            let line: String = (0..16)
                .map(|c| if obs.pixel(row, c) > 0.5 { '#' } else { '.' })
                .collect();
            println!("  {line}");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> uqnav::Result<()> {
    run_example()
}
