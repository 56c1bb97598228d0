// Analytic gradients against central differences for the two policy losses.

use ndarray::Array2;
use rand::Rng as _;
use uqnav::nn::{loss_and_grads, Activation, Batch, LossKind, MlpParams};
use uqnav::rng;

pub fn run_example() -> uqnav::Result<f64> {
    let mut r = rng::stream(11, &[]);
    let mut worst: f64 = 0.0;
    for (kind, out) in [(LossKind::Mse, 3), (LossKind::HeteroscedasticNll, 6)] {
        let net = MlpParams::init(&[4, 8, out], &[Activation::Tanh, Activation::Identity], &mut r)?;
        let batch = Batch {
            inputs: Array2::from_shape_fn((5, 4), |_| r.random_range(-1.0..1.0)),
            targets: Array2::from_shape_fn((5, out / if kind == LossKind::Mse { 1 } else { 2 }), |_| {
                r.random_range(-1.0..1.0)
            }),
        };
        let (_, grads) = loss_and_grads(&net, &batch, kind)?;
        let analytic = grads.to_flat();
        let theta = net.to_flat();
        let h = 1e-5;
        for (i, a) in analytic.iter().enumerate() {
            let mut probe = net.clone();
            let mut t = theta.clone();
            t[i] = theta[i] + h;
            probe.set_flat(&t)?;
            let plus = loss_and_grads(&probe, &batch, kind)?.0;
            t[i] = theta[i] - h;
            probe.set_flat(&t)?;
            let minus = loss_and_grads(&probe, &batch, kind)?.0;
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
        }
        println!("{kind:?}: {} parameters checked", analytic.len());
    }
    println!("worst relative error {worst:.2e}");
    Ok(worst)
}

#[allow(dead_code)]
fn main() -> uqnav::Result<()> {
    run_example().map(|_| ())
}
