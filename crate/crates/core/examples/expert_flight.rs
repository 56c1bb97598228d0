//! Flies the ground-truth expert on tracks of increasing gate noise.
//!
//! ```text
//! cargo run --example expert_flight -- [episodes] [trajectory.csv]
//! ```

use uqnav::rng;
use uqnav::sim::{generate_track, run_episode, write_trajectory_csv, EpisodeConfig, ExpertPilot, TrackConfig};

fn main() -> uqnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let episodes: u64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let csv = args.next();
    let config = EpisodeConfig::default();

    for (r, h) in [(0.0, 0.0), (1.0, 2.0), (1.5, 2.5)] {
        let mut gates = Vec::new();
        for e in 0..episodes {
            let track = generate_track(&TrackConfig::with_noise(r, h, rng::derive_seed(1, &[e])))?;
            let result = run_episode(&ExpertPilot, &track, &config, e);
            if e == 0 && r == 0.0 {
                if let Some(path) = &csv {
                    write_trajectory_csv(&result, path)?;
                }
            }
            gates.push(result.gates_traversed);
        }
        let mean = gates.iter().sum::<usize>() as f64 / gates.len() as f64;
        println!("R={r:<4} H={h:<4} mean gates {mean:5.2}  {gates:?}");
    }
    Ok(())
}
