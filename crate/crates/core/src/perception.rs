//! Cross-modal VAE perception.
//!
//! One encoder maps a 16x16 gate-camera frame to a diagonal Gaussian over a
//! 10-d latent space. Two heads read a latent sample back out: an image decoder
//! (logistic output) and a gate-pose estimator. Training minimizes
//! `image_mse + w_pose * pose_mse + beta * KL(q || N(0, I))` with a single
//! reparameterized sample per example.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use ndarray::{concatenate, s, Array2, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::nn::checkpoint::{self, CheckpointError};
use crate::nn::loss::sigmoid;
use crate::nn::{Activation, AdamConfig, AdamState, MlpGrads, MlpParams, NnError, LOG_VAR_MAX, LOG_VAR_MIN};
use crate::rng::{self, tags, Rng};

pub const IMAGE_SIDE: usize = 16;
pub const OBS_DIM: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const LATENT_DIM: usize = 10;
pub const POSE_DIM: usize = 4;
/// Gate distance (m) that maps to 1.0 in the normalized pose.
pub const POSE_RANGE_SCALE: f64 = 10.0;

/// Flattened 16x16 grayscale frame, row-major, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pixels: Vec<f64>,
}

impl Observation {
    pub fn new(pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != OBS_DIM {
            return Err(Error::InvalidObservation(format!(
                "expected {OBS_DIM} pixels, got {}",
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidObservation(format!("pixel {p} outside [0, 1]")));
        }
        Ok(Self { pixels })
    }

    pub fn blank() -> Self {
        Self {
            pixels: vec![0.0; OBS_DIM],
        }
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * IMAGE_SIDE + col]
    }
}

/// Diagonal Gaussian over the latent space.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDistribution {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl LatentDistribution {
    pub fn new(mean: Vec<f64>, std: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != std.len() {
            return Err(Error::InvalidDistribution(format!(
                "mean has {} entries, std has {}",
                mean.len(),
                std.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidDistribution("non-finite mean".into()));
        }
        if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidDistribution(
                "std entries must be positive and finite".into(),
            ));
        }
        Ok(Self { mean, std })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn sample(&self, rng: &mut Rng) -> LatentSample {
        reparameterize_sample(self, rng)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
}

/// Pose of the next gate in the drone body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateRelativePose {
    /// Distance to the gate center, m.
    pub r: f64,
    /// Azimuth, rad.
    pub theta: f64,
    /// Elevation, rad.
    pub phi: f64,
    /// Gate yaw relative to the drone yaw, rad.
    pub psi: f64,
}

impl GateRelativePose {
    /// `(r / 10 m, theta / pi, phi / (pi/2), psi / pi)`: the pose head's target space.
    pub fn to_normalized(&self) -> [f64; POSE_DIM] {
        [
            self.r / POSE_RANGE_SCALE,
            self.theta / PI,
            self.phi / FRAC_PI_2,
            self.psi / PI,
        ]
    }

    pub fn from_normalized(v: [f64; POSE_DIM]) -> Self {
        Self {
            r: v[0] * POSE_RANGE_SCALE,
            theta: v[1] * PI,
            phi: v[2] * FRAC_PI_2,
            psi: v[3] * PI,
        }
    }
}

/// Layer widths for the three perception networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmvaeArch {
    pub obs_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub pose_hidden: Vec<usize>,
}

impl Default for CmvaeArch {
    fn default() -> Self {
        Self {
            obs_dim: OBS_DIM,
            latent_dim: LATENT_DIM,
            encoder_hidden: vec![128, 64],
            decoder_hidden: vec![64, 128],
            pose_hidden: vec![32],
        }
    }
}

fn chain(input: usize, hidden: &[usize], output: usize) -> (Vec<usize>, Vec<Activation>) {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Identity);
    (dims, acts)
}

impl CmvaeArch {
    fn encoder(&self) -> (Vec<usize>, Vec<Activation>) {
        chain(self.obs_dim, &self.encoder_hidden, 2 * self.latent_dim)
    }
    fn decoder(&self) -> (Vec<usize>, Vec<Activation>) {
        chain(self.latent_dim, &self.decoder_hidden, self.obs_dim)
    }
    fn pose_head(&self) -> (Vec<usize>, Vec<Activation>) {
        chain(self.latent_dim, &self.pose_hidden, POSE_DIM)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmvaeParams {
    pub encoder: MlpParams,
    pub image_decoder: MlpParams,
    pub pose_head: MlpParams,
}

impl CmvaeParams {
    pub fn init(arch: &CmvaeArch, rng: &mut Rng) -> Result<Self> {
        let (d, a) = arch.encoder();
        let encoder = MlpParams::init(&d, &a, rng)?;
        let (d, a) = arch.decoder();
        let image_decoder = MlpParams::init(&d, &a, rng)?;
        let (d, a) = arch.pose_head();
        let pose_head = MlpParams::init(&d, &a, rng)?;
        Self::from_networks(encoder, image_decoder, pose_head)
    }

    pub fn zeros(arch: &CmvaeArch) -> Result<Self> {
        let (d, a) = arch.encoder();
        let encoder = MlpParams::zeros(&d, &a)?;
        let (d, a) = arch.decoder();
        let image_decoder = MlpParams::zeros(&d, &a)?;
        let (d, a) = arch.pose_head();
        let pose_head = MlpParams::zeros(&d, &a)?;
        Self::from_networks(encoder, image_decoder, pose_head)
    }

    /// Checks the dimension chain between the three networks.
    pub fn from_networks(
        encoder: MlpParams,
        image_decoder: MlpParams,
        pose_head: MlpParams,
    ) -> Result<Self> {
        let enc_out = encoder.output_dim();
        if enc_out % 2 != 0 {
            return Err(NnError::InvalidArchitecture(format!(
                "encoder output width {enc_out} is not even"
            ))
            .into());
        }
        let latent = enc_out / 2;
        for (what, net) in [("image decoder input", &image_decoder), ("pose head input", &pose_head)] {
            if net.input_dim() != latent {
                return Err(NnError::DimensionMismatch {
                    what,
                    expected: latent,
                    got: net.input_dim(),
                }
                .into());
            }
        }
        if image_decoder.output_dim() != encoder.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "image decoder output",
                expected: encoder.input_dim(),
                got: image_decoder.output_dim(),
            }
            .into());
        }
        if pose_head.output_dim() != POSE_DIM {
            return Err(NnError::DimensionMismatch {
                what: "pose head output",
                expected: POSE_DIM,
                got: pose_head.output_dim(),
            }
            .into());
        }
        Ok(Self {
            encoder,
            image_decoder,
            pose_head,
        })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim() / 2
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn quantize_f32(&mut self) {
        self.encoder.quantize_f32();
        self.image_decoder.quantize_f32();
        self.pose_head.quantize_f32();
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        [&self.encoder, &self.image_decoder, &self.pose_head]
            .into_iter()
            .flat_map(checkpoint::encode)
            .collect()
    }

    /// SHA-256 over the three-network checkpoint encoding.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        checkpoint::save_bundle(&[&self.encoder, &self.image_decoder, &self.pose_head], path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut nets = checkpoint::load_bundle(path, 3)?;
        let pose_head = nets.pop().unwrap();
        let image_decoder = nets.pop().unwrap();
        let encoder = nets.pop().unwrap();
        Self::from_networks(encoder, image_decoder, pose_head)
    }
}

fn clamp_log_var(v: f64) -> f64 {
    v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)
}

/// Encodes one frame. `std = exp(0.5 * clamp(log_var, -10, 10))`.
pub fn encode(params: &CmvaeParams, obs: &Observation) -> Result<LatentDistribution> {
    if obs.pixels.len() != params.obs_dim() {
        return Err(Error::InvalidObservation(format!(
            "encoder expects {} pixels, got {}",
            params.obs_dim(),
            obs.pixels.len()
        )));
    }
    let out = params.encoder.forward(&obs.pixels)?;
    let l = params.latent_dim();
    let std = out[l..]
        .iter()
        .map(|&v| (0.5 * clamp_log_var(v)).exp())
        .collect();
    LatentDistribution::new(out[..l].to_vec(), std)
}

/// Batched encoder: returns `(means, stds)`, one row per input row.
pub fn encode_batch(
    params: &CmvaeParams,
    images: ArrayView2<'_, f64>,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let out = params.encoder.forward_batch(images)?;
    let l = params.latent_dim();
    let mean = out.slice(s![.., ..l]).to_owned();
    let std = out
        .slice(s![.., l..])
        .mapv(|v| (0.5 * clamp_log_var(v)).exp());
    Ok((mean, std))
}

/// `z = mean + std * eps`, elementwise.
pub fn reparameterize(mean: &[f64], std: &[f64], eps: &[f64]) -> Vec<f64> {
    mean.iter()
        .zip(std)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect()
}

/// Adjoint of [`reparameterize`]: maps dL/dz to `(dL/dmean, dL/dstd)`.
pub fn reparameterize_backward(eps: &[f64], dz: &[f64]) -> (Vec<f64>, Vec<f64>) {
    (dz.to_vec(), dz.iter().zip(eps).map(|(d, e)| d * e).collect())
}

pub fn reparameterize_sample(dist: &LatentDistribution, rng: &mut Rng) -> LatentSample {
    let eps: Vec<f64> = (0..dist.dim()).map(|_| StandardNormal.sample(rng)).collect();
    LatentSample {
        z: reparameterize(&dist.mean, &dist.std, &eps),
    }
}

/// `KL(N(mean, std^2) || N(0, I)) = 1/2 sum (mean^2 + std^2 - ln std^2 - 1)`.
pub fn kl_to_standard_normal(dist: &LatentDistribution) -> f64 {
    kl_terms(&dist.mean, &dist.std)
}

/// Same as [`kl_to_standard_normal`] on raw slices; rejects non-positive std.
pub fn kl_from_parts(mean: &[f64], std: &[f64]) -> Result<f64> {
    if mean.len() != std.len() {
        return Err(Error::InvalidDistribution("length mismatch".into()));
    }
    if std.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::InvalidDistribution(
            "std entries must be positive and finite".into(),
        ));
    }
    Ok(kl_terms(mean, std))
}

fn kl_terms(mean: &[f64], std: &[f64]) -> f64 {
    0.5 * mean
        .iter()
        .zip(std)
        .map(|(m, s)| {
            let var = s * s;
            m * m + var - var.ln() - 1.0
        })
        .sum::<f64>()
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn pose_from_head(o: &[f64]) -> [f64; POSE_DIM] {
    [softplus(o[0]), o[1].tanh(), o[2].tanh(), o[3].tanh()]
}

fn check_latent(params: &CmvaeParams, z: &LatentSample) -> Result<()> {
    if z.z.len() != params.latent_dim() {
        return Err(NnError::DimensionMismatch {
            what: "latent sample",
            expected: params.latent_dim(),
            got: z.z.len(),
        }
        .into());
    }
    if z.z.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("latent sample"));
    }
    Ok(())
}

pub fn decode_image(params: &CmvaeParams, z: &LatentSample) -> Result<Observation> {
    check_latent(params, z)?;
    let logits = params.image_decoder.forward(&z.z)?;
    Ok(Observation {
        pixels: logits.into_iter().map(sigmoid).collect(),
    })
}

pub fn estimate_gate_pose(params: &CmvaeParams, z: &LatentSample) -> Result<GateRelativePose> {
    check_latent(params, z)?;
    let o = params.pose_head.forward(&z.z)?;
    Ok(GateRelativePose::from_normalized(pose_from_head(&o)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub pose: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            pose: 1.0,
            beta: 1e-3,
        }
    }
}

/// Batch-mean loss components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CmvaeLoss {
    pub total: f64,
    pub image_mse: f64,
    pub pose_mse: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmvaeGrads {
    pub encoder: MlpGrads,
    pub image_decoder: MlpGrads,
    pub pose_head: MlpGrads,
}

/// Loss of both heads at given latents, with gradients for the heads and for `z`.
pub(crate) struct HeadsOutput {
    pub image_mse: f64,
    pub pose_mse: f64,
    pub decoder: MlpGrads,
    pub pose_head: MlpGrads,
    pub dz: Array2<f64>,
}

pub(crate) fn heads_loss_and_grads(
    params: &CmvaeParams,
    z: ArrayView2<'_, f64>,
    images: ArrayView2<'_, f64>,
    poses: ArrayView2<'_, f64>,
    pose_weight: f64,
) -> Result<HeadsOutput> {
    let b = z.nrows() as f64;

    let dec = params.image_decoder.forward_cached(z)?;
    let mut d_logits = dec.output().mapv(sigmoid);
    let img_norm = 1.0 / (b * images.ncols() as f64);
    let mut image_mse = 0.0;
    Zip::from(&mut d_logits).and(images).for_each(|y, &x| {
        let p = *y;
        let e = p - x;
        image_mse += e * e;
        *y = 2.0 * e * img_norm * p * (1.0 - p);
    });
    image_mse *= img_norm;

    let head = params.pose_head.forward_cached(z)?;
    let ho = head.output();
    let pose_norm = 1.0 / (b * POSE_DIM as f64);
    let mut d_head = Array2::zeros(ho.dim());
    let mut pose_mse = 0.0;
    for ((o, t), mut d) in ho.rows().into_iter().zip(poses.rows()).zip(d_head.rows_mut()) {
        let o = o.as_slice().unwrap();
        let pred = pose_from_head(o);
        for k in 0..POSE_DIM {
            let e = pred[k] - t[k];
            pose_mse += e * e;
            let dpred = if k == 0 {
                sigmoid(o[0])
            } else {
                1.0 - pred[k] * pred[k]
            };
            d[k] = pose_weight * 2.0 * e * pose_norm * dpred;
        }
    }
    pose_mse *= pose_norm;

    let (g_dec, dz_img) = params.image_decoder.backward(&dec, d_logits)?;
    let (g_head, dz_pose) = params.pose_head.backward(&head, d_head)?;
    Ok(HeadsOutput {
        image_mse,
        pose_mse,
        decoder: g_dec,
        pose_head: g_head,
        dz: dz_img + dz_pose,
    })
}

/// Composite loss and gradients with explicit reparameterization noise.
///
/// `poses` are normalized (see [`GateRelativePose::to_normalized`]); `eps` holds
/// one standard-normal row per example.
pub fn cmvae_loss_and_grads(
    params: &CmvaeParams,
    images: ArrayView2<'_, f64>,
    poses: ArrayView2<'_, f64>,
    eps: ArrayView2<'_, f64>,
    weights: LossWeights,
) -> Result<(CmvaeLoss, CmvaeGrads)> {
    let n = images.nrows();
    if n == 0 {
        return Err(Error::Empty("cmvae batch"));
    }
    let l = params.latent_dim();
    if poses.dim() != (n, POSE_DIM) || eps.dim() != (n, l) {
        return Err(NnError::DimensionMismatch {
            what: "cmvae batch rows",
            expected: n,
            got: poses.nrows().min(eps.nrows()),
        }
        .into());
    }
    let b = n as f64;
    let enc = params.encoder.forward_cached(images)?;
    let out = enc.output();
    let mu = out.slice(s![.., ..l]);
    let raw = out.slice(s![.., l..]);
    let log_var = raw.mapv(clamp_log_var);
    let sigma = log_var.mapv(|v| (0.5 * v).exp());
    let z = &mu + &(&sigma * &eps);

    let kl = 0.5
        * Zip::from(mu)
            .and(&sigma)
            .and(&log_var)
            .fold(0.0, |acc, &m, &sd, &lv| acc + m * m + sd * sd - lv - 1.0)
        / b;

    let heads = heads_loss_and_grads(params, z.view(), images, poses, weights.pose)?;

    let beta = weights.beta;
    let d_mu = &heads.dz + &(&mu * (beta / b));
    let mut d_raw = Array2::zeros((n, l));
    Zip::from(&mut d_raw)
        .and(&heads.dz)
        .and(&eps)
        .and(&sigma)
        .and(raw)
        .for_each(|d, &dz, &e, &sd, &r| {
            if r > LOG_VAR_MIN && r < LOG_VAR_MAX {
                *d = dz * e * 0.5 * sd + beta * 0.5 * (sd * sd - 1.0) / b;
            }
        });
    let d_out = concatenate(Axis(1), &[d_mu.view(), d_raw.view()]).unwrap();
    let (g_enc, _) = params.encoder.backward(&enc, d_out)?;

    let loss = CmvaeLoss {
        total: heads.image_mse + weights.pose * heads.pose_mse + beta * kl,
        image_mse: heads.image_mse,
        pose_mse: heads.pose_mse,
        kl,
    };
    Ok((
        loss,
        CmvaeGrads {
            encoder: g_enc,
            image_decoder: heads.decoder,
            pose_head: heads.pose_head,
        },
    ))
}

struct BatchArrays {
    images: Array2<f64>,
    poses: Array2<f64>,
}

fn gather(records: &[Record], idx: &[usize]) -> BatchArrays {
    let mut images = Array2::zeros((idx.len(), OBS_DIM));
    let mut poses = Array2::zeros((idx.len(), POSE_DIM));
    for (row, &i) in idx.iter().enumerate() {
        let r = &records[i];
        images
            .row_mut(row)
            .assign(&ndarray::ArrayView1::from(r.obs.pixels()));
        poses
            .row_mut(row)
            .assign(&ndarray::ArrayView1::from(&r.pose.to_normalized()));
    }
    BatchArrays { images, poses }
}

fn normal_rows(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || StandardNormal.sample(rng))
}

/// Composite loss on a batch of records, drawing one latent sample per example.
pub fn cmvae_loss(
    params: &CmvaeParams,
    batch: &[Record],
    weights: LossWeights,
    rng: &mut Rng,
) -> Result<CmvaeLoss> {
    if batch.is_empty() {
        return Err(Error::Empty("cmvae batch"));
    }
    for r in batch {
        if r.obs.pixels().len() != params.obs_dim() {
            return Err(Error::InvalidObservation("wrong frame size".into()));
        }
    }
    let idx: Vec<usize> = (0..batch.len()).collect();
    let arrays = gather(batch, &idx);
    let eps = normal_rows(batch.len(), params.latent_dim(), rng);
    let (loss, _) = cmvae_loss_and_grads(
        params,
        arrays.images.view(),
        arrays.poses.view(),
        eps.view(),
        weights,
    )?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CmvaeTrainConfig {
    pub arch: CmvaeArch,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub loss_weights: LossWeights,
}

impl Default for CmvaeTrainConfig {
    fn default() -> Self {
        Self {
            arch: CmvaeArch::default(),
            epochs: 30,
            batch_size: 64,
            learning_rate: 1e-3,
            loss_weights: LossWeights::default(),
        }
    }
}

/// One row of the training log. Epoch 0 is the untrained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CmvaeEpochLog {
    pub epoch: usize,
    pub total: f64,
    pub image_mse: f64,
    pub pose_mse: f64,
    pub kl: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedCmvae {
    pub params: CmvaeParams,
    pub log: Vec<CmvaeEpochLog>,
}

pub const MIN_TRAINING_RECORDS: usize = 1000;

/// Records whose index hash falls in the held-out decile.
pub fn is_held_out(index: usize) -> bool {
    rng::index_hash(index as u64) % 10 == 0
}

pub fn split_indices(n: usize) -> (Vec<usize>, Vec<usize>) {
    (0..n).partition(|&i| !is_held_out(i))
}

fn evaluate_pass(
    params: &CmvaeParams,
    records: &[Record],
    idx: &[usize],
    batch_size: usize,
    weights: LossWeights,
    rng: &mut Rng,
) -> Result<CmvaeLoss> {
    let mut acc = CmvaeLoss::default();
    for chunk in idx.chunks(batch_size) {
        let arrays = gather(records, chunk);
        let eps = normal_rows(chunk.len(), params.latent_dim(), rng);
        let (loss, _) = cmvae_loss_and_grads(
            params,
            arrays.images.view(),
            arrays.poses.view(),
            eps.view(),
            weights,
        )?;
        accumulate(&mut acc, &loss, chunk.len());
    }
    Ok(finish(acc, idx.len()))
}

fn accumulate(acc: &mut CmvaeLoss, loss: &CmvaeLoss, n: usize) {
    let w = n as f64;
    acc.total += loss.total * w;
    acc.image_mse += loss.image_mse * w;
    acc.pose_mse += loss.pose_mse * w;
    acc.kl += loss.kl * w;
}

fn finish(acc: CmvaeLoss, n: usize) -> CmvaeLoss {
    let w = 1.0 / n as f64;
    CmvaeLoss {
        total: acc.total * w,
        image_mse: acc.image_mse * w,
        pose_mse: acc.pose_mse * w,
        kl: acc.kl * w,
    }
}

fn log_row(epoch: usize, l: CmvaeLoss) -> CmvaeEpochLog {
    CmvaeEpochLog {
        epoch,
        total: l.total,
        image_mse: l.image_mse,
        pose_mse: l.pose_mse,
        kl: l.kl,
    }
}

/// Trains the three perception networks jointly on the non-held-out records.
///
/// The log holds the untrained loss (epoch 0) followed by the running mean of
/// the minibatch losses for each epoch. Returned parameters are rounded to
/// checkpoint precision.
pub fn train_cmvae(records: &[Record], config: &CmvaeTrainConfig, seed: u64) -> Result<TrainedCmvae> {
    if records.len() < MIN_TRAINING_RECORDS {
        return Err(Error::DatasetTooSmall {
            got: records.len(),
            min: MIN_TRAINING_RECORDS,
        });
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
    }
    let mut init_rng = rng::stream(seed, &[tags::CMVAE_INIT]);
    let mut params = CmvaeParams::init(&config.arch, &mut init_rng)?;
    let adam = AdamConfig::with_learning_rate(config.learning_rate);
    let mut opt_enc = AdamState::new(&params.encoder, adam);
    let mut opt_dec = AdamState::new(&params.image_decoder, adam);
    let mut opt_pose = AdamState::new(&params.pose_head, adam);

    let (mut train_idx, _) = split_indices(records.len());
    let mut log = Vec::with_capacity(config.epochs + 1);
    let mut eval_rng = rng::stream(seed, &[tags::CMVAE_TRAIN, 0]);
    let initial = evaluate_pass(
        &params,
        records,
        &train_idx,
        config.batch_size,
        config.loss_weights,
        &mut eval_rng,
    )?;
    log.push(log_row(0, initial));

    for epoch in 1..=config.epochs {
        let mut epoch_rng = rng::stream(seed, &[tags::CMVAE_TRAIN, epoch as u64]);
        train_idx.shuffle(&mut epoch_rng);
        let mut acc = CmvaeLoss::default();
        for chunk in train_idx.chunks(config.batch_size) {
            let arrays = gather(records, chunk);
            let eps = normal_rows(chunk.len(), params.latent_dim(), &mut epoch_rng);
            let (loss, grads) = cmvae_loss_and_grads(
                &params,
                arrays.images.view(),
                arrays.poses.view(),
                eps.view(),
                config.loss_weights,
            )?;
            opt_enc.step(&mut params.encoder, &grads.encoder)?;
            opt_dec.step(&mut params.image_decoder, &grads.image_decoder)?;
            opt_pose.step(&mut params.pose_head, &grads.pose_head)?;
            accumulate(&mut acc, &loss, chunk.len());
        }
        let row = finish(acc, train_idx.len());
        if !row.total.is_finite() {
            return Err(Error::NonFinite("cmvae training loss"));
        }
        log.push(log_row(epoch, row));
    }
    params.quantize_f32();
    Ok(TrainedCmvae { params, log })
}

/// Distance-error summary of the pose head, decoding from the latent mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseErrorReport {
    pub mean_abs_distance_error: f64,
    pub mean_distance: f64,
    pub records: usize,
}

impl PoseErrorReport {
    pub fn relative(&self) -> f64 {
        self.mean_abs_distance_error / self.mean_distance
    }
}

pub fn pose_error(params: &CmvaeParams, records: &[Record], idx: &[usize]) -> Result<PoseErrorReport> {
    if idx.is_empty() {
        return Err(Error::Empty("pose evaluation set"));
    }
    let mut err = 0.0;
    let mut dist = 0.0;
    for chunk in idx.chunks(256) {
        let arrays = gather(records, chunk);
        let (mean, _) = encode_batch(params, arrays.images.view())?;
        let head = params.pose_head.forward_batch(mean.view())?;
        for (row, &i) in head.rows().into_iter().zip(chunk) {
            let pred = GateRelativePose::from_normalized(pose_from_head(row.as_slice().unwrap()));
            err += (pred.r - records[i].pose.r).abs();
            dist += records[i].pose.r;
        }
    }
    let n = idx.len() as f64;
    Ok(PoseErrorReport {
        mean_abs_distance_error: err / n,
        mean_distance: dist / n,
        records: idx.len(),
    })
}

pub fn write_loss_log(log: &[CmvaeEpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}
