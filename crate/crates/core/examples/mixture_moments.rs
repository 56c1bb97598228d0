// Collapsing an N x M grid of Gaussian predictions into one Gaussian.

use uqnav::policy::GaussianPrediction;
use uqnav::uq::{aggregate_grid, decompose_uncertainty, mixture_moments};

pub fn run_example() -> uqnav::Result<()> {
    let g = |m: f64, v: f64| GaussianPrediction::new(vec![m], vec![v]);
    let pair = [g(0.0, 1.0)?, g(2.0, 1.0)?];
    let m = mixture_moments(&pair)?;
    println!("N(0,1) + N(2,1): mean {} var {}", m.mean[0], m.variance[0]);

    // 3 latent samples x 2 members
    let grid = vec![
        vec![g(0.10, 0.01)?, g(0.30, 0.02)?],
        vec![g(0.20, 0.01)?, g(0.40, 0.02)?],
        vec![g(0.15, 0.01)?, g(0.35, 0.02)?],
    ];
    let res = aggregate_grid(&grid)?;
    let flat: Vec<_> = grid.iter().flatten().cloned().collect();
    let (ale, epi) = decompose_uncertainty(&flat)?;
    println!(
        "grid: mean {:.4} std {:.4} (aleatoric {:.5}, epistemic {:.5})",
        res.mean[0], res.std[0], ale[0], epi[0]
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> uqnav::Result<()> {
    run_example()
}
