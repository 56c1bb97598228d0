//! Predictive command distribution for one frame from a trained run directory,
//! for a growing number of latent samples.
//!
//! ```text
//! cargo run --release --example reproduce_table -- run
//! cargo run --release --example predictive_distribution -- run
//! ```

use uqnav::harness::{self, Artifacts, RunConfig};
use uqnav::policy::EnsembleParams;
use uqnav::rng;
use uqnav::sim::{generate_track, render_observation, DroneState, TrackConfig};
use uqnav::uq::predict_stochastic_input;

fn main() -> uqnav::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "run".into());
    let art = Artifacts::new(&dir);
    let encoder = harness::load_cmvae(&art)?;
    let ensemble = EnsembleParams::load(&dir, RunConfig::default().ensemble_members)?;

    for (label, radius_noise, height_noise) in [("nominal", 0.0, 0.0), ("perturbed", 1.5, 2.5)] {
        let track = generate_track(&TrackConfig::with_noise(radius_noise, height_noise, 3))?;
        let gate = track.gates[1];
        let prev = track.gates[0];
        let state = DroneState::at_rest(prev.center, prev.yaw);
        let obs = render_observation(&state, &gate, 0.05, &mut rng::stream(0, &[]));
        println!("{label} gate, {:.2} m above the drone", gate.center.z - prev.center.z);
        println!("    N      vx      vz   std_vx   std_vz  epistemic_vz  aleatoric_vz");
        for n in [1, 2, 5, 10, 50] {
            let res = predict_stochastic_input(&encoder, &ensemble, &obs, n, &mut rng::stream(0, &[1]))?;
            let cmd = res.command();
            let std = res.std_physical();
            println!(
                "{n:5} {:7.3} {:7.3} {:8.3} {:8.3} {:13.2e} {:13.2e}",
                cmd.vx, cmd.vz, std[0], std[2], res.epistemic_var[2], res.aleatoric_var[2]
            );
        }
    }
    Ok(())
}
