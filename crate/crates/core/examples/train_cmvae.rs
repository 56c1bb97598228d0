//! Trains the perception model on a freshly sampled dataset and reports the
//! pose-regression error on the held-out split.
//!
//! ```text
//! cargo run --release --example train_cmvae -- [records] [epochs]
//! ```

use uqnav::dataset::{sample_records, SamplingConfig};
use uqnav::perception::{pose_error, split_indices, train_cmvae, CmvaeTrainConfig};
use uqnav::rng::tags;

fn main() -> uqnav::Result<()> {
    let mut args = std::env::args().skip(1);
    let records: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(5000);
    let epochs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let data = sample_records(records, &SamplingConfig::default(), 1, tags::CMVAE_DATA);
    let config = CmvaeTrainConfig {
        epochs,
        ..CmvaeTrainConfig::default()
    };
    let trained = train_cmvae(&data, &config, 1)?;
    println!("epoch      total  image_mse   pose_mse        kl");
    for row in &trained.log {
        println!(
            "{:5} {:10.5} {:10.5} {:10.5} {:9.3}",
            row.epoch, row.total, row.image_mse, row.pose_mse, row.kl
        );
    }
    let (_, held) = split_indices(data.len());
    let err = pose_error(&trained.params, &data, &held)?;
    println!(
        "held-out distance error {:.3} m over mean distance {:.3} m ({:.1}%)",
        err.mean_abs_distance_error,
        err.mean_distance,
        100.0 * err.relative()
    );
    println!("checksum {}", trained.params.checksum());
    Ok(())
}
