//! Independent oracles shared by the integration tests and the acceptance suite.

#![allow(dead_code)]

use std::f64::consts::PI;

use ndarray::Array2;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use uqnav::nn::{loss_and_grads, Activation, Batch, LossKind, MlpParams};
use uqnav::perception::{cmvae_loss_and_grads, CmvaeArch, CmvaeParams, LossWeights};
use uqnav::policy::GaussianPrediction;
use uqnav::rng::Rng;
use uqnav::sim::{DroneState, Gate, GateEvent, Vec3};

pub const FD_STEP: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

/// Largest relative error over all entries of `analytic`, by central
/// differences of `loss` around `theta`.
pub fn max_fd_error(theta: &[f64], analytic: &[f64], mut loss: impl FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(theta.len(), analytic.len());
    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..theta.len() {
        probe[i] = theta[i] + FD_STEP;
        let plus = loss(&probe);
        probe[i] = theta[i] - FD_STEP;
        let minus = loss(&probe);
        probe[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

fn random_activation(rng: &mut Rng) -> Activation {
    [Activation::Relu, Activation::Tanh, Activation::Identity][rng.random_range(0..3)]
}

/// Small network with 1-2 hidden layers of random width and activation.
pub fn random_net(input: usize, output: usize, rng: &mut Rng) -> MlpParams {
    let hidden = rng.random_range(1..=2);
    let mut dims = vec![input];
    let mut acts = Vec::new();
    for _ in 0..hidden {
        dims.push(rng.random_range(2..=6));
        acts.push(random_activation(rng));
    }
    dims.push(output);
    acts.push(Activation::Identity);
    let mut net = MlpParams::init(&dims, &acts, rng).unwrap();
    // non-zero biases so every path is exercised
    let flat: Vec<f64> = net
        .to_flat()
        .into_iter()
        .map(|w| if w == 0.0 { rng.random_range(-0.5..0.5) } else { w })
        .collect();
    net.set_flat(&flat).unwrap();
    net
}

pub fn random_matrix(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(lo..hi))
}

/// Worst relative gradient error of an nn-level loss on one random network.
pub fn mlp_gradient_error(kind: LossKind, rng: &mut Rng) -> f64 {
    let input = rng.random_range(2..=5);
    let k = rng.random_range(1..=3);
    let out = if kind == LossKind::HeteroscedasticNll { 2 * k } else { k };
    let net = random_net(input, out, rng);
    let rows = rng.random_range(1..=6);
    let batch = Batch {
        inputs: random_matrix(rows, input, -1.5, 1.5, rng),
        targets: random_matrix(rows, k, -1.5, 1.5, rng),
    };
    let (_, grads) = loss_and_grads(&net, &batch, kind).unwrap();
    let theta = net.to_flat();
    let mut probe = net.clone();
    max_fd_error(&theta, &grads.to_flat(), |t| {
        probe.set_flat(t).unwrap();
        loss_and_grads(&probe, &batch, kind).unwrap().0
    })
}

/// Worst relative gradient error of the perception composite loss over all
/// three networks, on a small random architecture with fixed noise.
pub fn cmvae_gradient_error(rng: &mut Rng) -> f64 {
    let arch = CmvaeArch {
        obs_dim: rng.random_range(3..=8),
        latent_dim: rng.random_range(2..=4),
        encoder_hidden: vec![rng.random_range(3..=6)],
        decoder_hidden: vec![rng.random_range(3..=6)],
        pose_hidden: vec![rng.random_range(2..=5)],
    };
    let params = CmvaeParams::init(&arch, rng).unwrap();
    let n = rng.random_range(1..=5);
    let images = random_matrix(n, arch.obs_dim, 0.0, 1.0, rng);
    let poses = random_matrix(n, 4, -0.9, 0.9, rng);
    let eps = Array2::from_shape_fn((n, arch.latent_dim), |_| StandardNormal.sample(rng));
    let weights = LossWeights { pose: 1.0, beta: rng.random_range(1e-3..1.0) };
    let (_, grads) = cmvae_loss_and_grads(&params, images.view(), poses.view(), eps.view(), weights).unwrap();
    let total = |p: &CmvaeParams| {
        cmvae_loss_and_grads(p, images.view(), poses.view(), eps.view(), weights)
            .unwrap()
            .0
            .total
    };
    let mut worst: f64 = 0.0;
    for which in 0..3 {
        let net = |p: &CmvaeParams| match which {
            0 => p.encoder.clone(),
            1 => p.image_decoder.clone(),
            _ => p.pose_head.clone(),
        };
        let analytic = match which {
            0 => grads.encoder.to_flat(),
            1 => grads.image_decoder.to_flat(),
            _ => grads.pose_head.to_flat(),
        };
        let theta = net(&params).to_flat();
        let mut probe = params.clone();
        worst = worst.max(max_fd_error(&theta, &analytic, |t| {
            let target = match which {
                0 => &mut probe.encoder,
                1 => &mut probe.image_decoder,
                _ => &mut probe.pose_head,
            };
            target.set_flat(t).unwrap();
            total(&probe)
        }));
    }
    worst
}

pub fn random_components(k: usize, d: usize, rng: &mut Rng) -> Vec<GaussianPrediction> {
    (0..k)
        .map(|_| {
            let mean = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let var = (0..d).map(|_| rng.random_range(0.05..2.0)).collect();
            GaussianPrediction::new(mean, var).unwrap()
        })
        .collect()
}

/// Empirical per-dimension mean and std of `samples` draws from the uniform mixture.
pub fn mixture_monte_carlo(components: &[GaussianPrediction], samples: usize, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    let d = components[0].mean.len();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..samples {
        let c = &components[rng.random_range(0..components.len())];
        for j in 0..d {
            let n: f64 = StandardNormal.sample(rng);
            let x = c.mean[j] + c.variance[j].sqrt() * n;
            sum[j] += x;
            sum_sq[j] += x * x;
        }
    }
    let n = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s, m)| (s / n - m * m).sqrt())
        .collect();
    (mean, std)
}

/// Gate plane crossing by sampling the segment at `points + 1` positions,
/// refining the bracketed sign change by bisection, then testing the aperture.
pub fn segment_oracle(prev: &DroneState, cur: &DroneState, gate: &Gate, points: usize) -> GateEvent {
    let (yc, ys) = (gate.yaw.cos(), gate.yaw.sin());
    let at = |t: f64| -> Vec3 {
        if t == 1.0 {
            cur.position
        } else {
            prev.position + (cur.position - prev.position) * t
        }
    };
    let signed = |p: Vec3| (p.x - gate.center.x) * yc + (p.y - gate.center.y) * ys;
    if signed(at(0.0)) >= 0.0 {
        return GateEvent::None;
    }
    let Some(i) = (1..=points).find(|&i| signed(at(i as f64 / points as f64)) >= 0.0) else {
        return GateEvent::None;
    };
    let (mut lo, mut hi) = ((i - 1) as f64 / points as f64, i as f64 / points as f64);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if signed(at(mid)) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let p = at(0.5 * (lo + hi));
    let lateral = -(p.x - gate.center.x) * ys + (p.y - gate.center.y) * yc;
    let vertical = p.z - gate.center.z;
    if lateral.abs() <= gate.half_aperture && vertical.abs() <= gate.half_aperture {
        GateEvent::Traversed
    } else {
        GateEvent::Missed
    }
}

/// Random gate and motion segment; two thirds of the cases are forced to cross
/// the gate plane near the aperture edges.
pub fn random_segment_case(rng: &mut Rng) -> (DroneState, DroneState, Gate) {
    let gate = Gate {
        center: Vec3::new(rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0), rng.random_range(0.5..4.5)),
        yaw: rng.random_range(-PI..PI),
        half_aperture: 0.75,
    };
    let n = gate.normal();
    let l = gate.lateral();
    let up = Vec3::new(0.0, 0.0, 1.0);
    let (p0, p1) = if rng.random_bool(1.0 / 3.0) {
        let p0 = gate.center + Vec3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let p1 = p0 + Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        (p0, p1)
    } else {
        let cross = gate.center + l * rng.random_range(-1.2..1.2) + up * rng.random_range(-1.2..1.2);
        let dir = n * rng.random_range(0.05..1.0) + l * rng.random_range(-0.5..0.5) + up * rng.random_range(-0.5..0.5);
        let t = rng.random_range(0.01..0.99);
        (cross - dir * t, cross + dir * (1.0 - t))
    };
    (DroneState::at_rest(p0, 0.0), DroneState::at_rest(p1, 0.0), gate)
}
