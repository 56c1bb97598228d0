//! Latent-to-velocity control policies trained by behavior cloning.
//!
//! Ensemble members emit a Gaussian per command dimension (means and clamped
//! log-variances) and are trained with the heteroscedastic NLL. The baseline is
//! a single deterministic network trained with MSE. In both cases the perception
//! encoder is only borrowed; it cannot change during policy training.

use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::nn::checkpoint;
use crate::nn::{
    loss_and_grads, Activation, AdamConfig, AdamState, Batch, LossKind, MlpParams, NnError,
    LOG_VAR_MAX, LOG_VAR_MIN,
};
use crate::perception::{self, CmvaeParams, LatentSample, LATENT_DIM};
use crate::rng::{self, tags, Rng};

pub const V_MAX: f64 = 3.0;
pub const YAW_RATE_MAX: f64 = 1.5;
pub const CMD_DIM: usize = 4;

/// Body-frame velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64, vz: f64, yaw_rate: f64) -> Self {
        Self {
            vx,
            vy,
            vz,
            yaw_rate,
        }
    }

    pub fn to_array(&self) -> [f64; CMD_DIM] {
        [self.vx, self.vy, self.vz, self.yaw_rate]
    }

    pub fn from_array(a: [f64; CMD_DIM]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    /// Scales every component into `[-1, 1]` units of its actuation limit.
    pub fn to_normalized(&self) -> [f64; CMD_DIM] {
        [
            self.vx / V_MAX,
            self.vy / V_MAX,
            self.vz / V_MAX,
            self.yaw_rate / YAW_RATE_MAX,
        ]
    }

    pub fn from_normalized(a: &[f64]) -> Self {
        Self::new(a[0] * V_MAX, a[1] * V_MAX, a[2] * V_MAX, a[3] * YAW_RATE_MAX)
    }

    /// Per-axis clamp to the actuation limits.
    pub fn clamped(&self) -> Self {
        Self::new(
            self.vx.clamp(-V_MAX, V_MAX),
            self.vy.clamp(-V_MAX, V_MAX),
            self.vz.clamp(-V_MAX, V_MAX),
            self.yaw_rate.clamp(-YAW_RATE_MAX, YAW_RATE_MAX),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Per-dimension Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl GaussianPrediction {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != variance.len() {
            return Err(Error::InvalidPrediction(format!(
                "mean has {} entries, variance has {}",
                mean.len(),
                variance.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) || variance.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidPrediction(
                "means must be finite and variances finite and non-negative".into(),
            ));
        }
        Ok(Self { mean, variance })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn std(&self) -> Vec<f64> {
        self.variance.iter().map(|v| v.sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicyTrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for PolicyTrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 40,
            batch_size: 64,
            learning_rate: 1e-3,
        }
    }
}

fn policy_arch(hidden: &[usize], out: usize) -> (Vec<usize>, Vec<Activation>) {
    let mut dims = vec![LATENT_DIM];
    dims.extend_from_slice(hidden);
    dims.push(out);
    let mut acts = vec![Activation::Relu; hidden.len()];
    acts.push(Activation::Identity);
    (dims, acts)
}

/// Ensemble of heteroscedastic members sharing one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleParams {
    members: Vec<MlpParams>,
}

impl EnsembleParams {
    pub fn new(members: Vec<MlpParams>) -> Result<Self> {
        let first = members
            .first()
            .ok_or(Error::Empty("ensemble members"))?;
        if first.output_dim() != 2 * CMD_DIM {
            return Err(NnError::DimensionMismatch {
                what: "member output",
                expected: 2 * CMD_DIM,
                got: first.output_dim(),
            }
            .into());
        }
        for m in &members[1..] {
            if m.layer_dims() != first.layer_dims() || m.activations() != first.activations() {
                return Err(NnError::InvalidArchitecture(
                    "ensemble members must share one architecture".into(),
                )
                .into());
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[MlpParams] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn member_path(dir: &Path, i: usize) -> std::path::PathBuf {
        dir.join(format!("member_{i}.uqp"))
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        for (i, m) in self.members.iter().enumerate() {
            checkpoint::save_checkpoint(m, Self::member_path(dir.as_ref(), i))?;
        }
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>, members: usize) -> Result<Self> {
        let mut nets = Vec::with_capacity(members);
        for i in 0..members {
            let path = Self::member_path(dir.as_ref(), i);
            if !path.exists() {
                return Err(Error::MissingArtifact(path));
            }
            nets.push(checkpoint::load_checkpoint(&path)?);
        }
        Self::new(nets)
    }
}

/// Single deterministic policy network.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselinePolicyParams {
    pub net: MlpParams,
}

impl BaselinePolicyParams {
    pub const FILE_NAME: &'static str = "baseline.uqp";

    pub fn new(net: MlpParams) -> Result<Self> {
        if net.input_dim() != LATENT_DIM || net.output_dim() != CMD_DIM {
            return Err(NnError::InvalidArchitecture(format!(
                "baseline must map {LATENT_DIM} -> {CMD_DIM}, got {} -> {}",
                net.input_dim(),
                net.output_dim()
            ))
            .into());
        }
        Ok(Self { net })
    }

    /// Normalized command for one latent sample.
    pub fn forward(&self, z: &LatentSample) -> Result<Vec<f64>> {
        Ok(self.net.forward(&z.z)?)
    }

    pub fn command(&self, z: &LatentSample) -> Result<VelocityCommand> {
        Ok(VelocityCommand::from_normalized(&self.forward(z)?))
    }
}

/// One member evaluated at one latent sample. `variance = exp(clamp(log_var))`.
pub fn policy_forward(member: &MlpParams, z: &LatentSample) -> Result<GaussianPrediction> {
    if member.output_dim() % 2 != 0 {
        return Err(NnError::InvalidArchitecture("member output width must be even".into()).into());
    }
    let out = member.forward(&z.z)?;
    let k = out.len() / 2;
    let variance = out[k..]
        .iter()
        .map(|&s| s.clamp(LOG_VAR_MIN, LOG_VAR_MAX).exp())
        .collect();
    GaussianPrediction::new(out[..k].to_vec(), variance)
}

/// `(1/k) sum_d [ ln(var_d)/2 + (y_d - mean_d)^2 / (2 var_d) ]`, constant omitted.
pub fn heteroscedastic_nll(pred: &GaussianPrediction, target: &[f64]) -> Result<f64> {
    if target.len() != pred.dim() {
        return Err(NnError::DimensionMismatch {
            what: "nll target",
            expected: pred.dim(),
            got: target.len(),
        }
        .into());
    }
    if pred.variance.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidPrediction("variance must be positive".into()));
    }
    let k = pred.dim() as f64;
    Ok(pred
        .mean
        .iter()
        .zip(&pred.variance)
        .zip(target)
        .map(|((m, v), y)| 0.5 * v.ln() + (y - m) * (y - m) / (2.0 * v))
        .sum::<f64>()
        / k)
}

pub const MIN_POLICY_RECORDS: usize = 1000;

/// Encoder outputs for every record, computed once; the encoder is frozen.
struct LatentTable {
    mean: Array2<f64>,
    std: Array2<f64>,
    targets: Array2<f64>,
}

fn latent_table(encoder: &CmvaeParams, records: &[Record]) -> Result<LatentTable> {
    let n = records.len();
    let mut mean = Array2::zeros((n, LATENT_DIM));
    let mut std = Array2::zeros((n, LATENT_DIM));
    let mut targets = Array2::zeros((n, CMD_DIM));
    for (c, chunk) in records.chunks(512).enumerate() {
        let mut images = Array2::zeros((chunk.len(), encoder.obs_dim()));
        for (row, r) in chunk.iter().enumerate() {
            images.row_mut(row).assign(&ArrayView1::from(r.obs.pixels()));
        }
        let (m, s) = perception::encode_batch(encoder, images.view())?;
        let start = c * 512;
        mean.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&m);
        std.slice_mut(ndarray::s![start..start + chunk.len(), ..]).assign(&s);
    }
    for (i, r) in records.iter().enumerate() {
        targets
            .row_mut(i)
            .assign(&ArrayView1::from(&r.cmd.to_normalized()));
    }
    Ok(LatentTable { mean, std, targets })
}

impl LatentTable {
    /// One fresh reparameterized latent per listed record.
    fn sample_batch(&self, idx: &[usize], rng: &mut Rng) -> Batch {
        let mut inputs = Array2::zeros((idx.len(), LATENT_DIM));
        let mut targets = Array2::zeros((idx.len(), CMD_DIM));
        for (row, &i) in idx.iter().enumerate() {
            for k in 0..LATENT_DIM {
                let e: f64 = StandardNormal.sample(rng);
                inputs[[row, k]] = self.mean[[i, k]] + self.std[[i, k]] * e;
            }
            targets.row_mut(row).assign(&self.targets.row(i));
        }
        Batch { inputs, targets }
    }
}

/// Per-epoch record of one policy network's training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolicyEpochLog {
    pub network: usize,
    pub epoch: usize,
    pub train_loss: f64,
    pub held_out_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedEnsemble {
    pub params: EnsembleParams,
    pub log: Vec<PolicyEpochLog>,
}

#[derive(Debug, Clone)]
pub struct TrainedBaseline {
    pub params: BaselinePolicyParams,
    pub log: Vec<PolicyEpochLog>,
}

struct NetworkJob<'a> {
    table: &'a LatentTable,
    train_idx: &'a [usize],
    held_idx: &'a [usize],
    config: &'a PolicyTrainConfig,
    loss: LossKind,
    seed: u64,
    init_tag: u64,
    train_tag: u64,
    network: usize,
}

fn held_out_loss(job: &NetworkJob<'_>, net: &MlpParams) -> Result<f64> {
    // same noise every epoch so the curve is comparable
    let mut r = rng::stream(job.seed, &[job.train_tag, job.network as u64, u64::MAX]);
    let mut total = 0.0;
    for chunk in job.held_idx.chunks(job.config.batch_size) {
        let batch = job.table.sample_batch(chunk, &mut r);
        let (l, _) = loss_and_grads(net, &batch, job.loss)?;
        total += l * chunk.len() as f64;
    }
    Ok(total / job.held_idx.len() as f64)
}

fn train_network(job: NetworkJob<'_>, out_dim: usize) -> Result<(MlpParams, Vec<PolicyEpochLog>)> {
    let (dims, acts) = policy_arch(&job.config.hidden, out_dim);
    let mut init_rng = rng::stream(job.seed, &[job.init_tag, job.network as u64]);
    let mut net = MlpParams::init(&dims, &acts, &mut init_rng)?;
    let mut opt = AdamState::new(&net, AdamConfig::with_learning_rate(job.config.learning_rate));
    let mut order = job.train_idx.to_vec();
    let mut log = vec![PolicyEpochLog {
        network: job.network,
        epoch: 0,
        train_loss: f64::NAN,
        held_out_loss: held_out_loss(&job, &net)?,
    }];
    for epoch in 1..=job.config.epochs {
        let mut r = rng::stream(job.seed, &[job.train_tag, job.network as u64, epoch as u64]);
        order.shuffle(&mut r);
        let mut total = 0.0;
        for chunk in order.chunks(job.config.batch_size) {
            let batch = job.table.sample_batch(chunk, &mut r);
            let (l, g) = loss_and_grads(&net, &batch, job.loss)?;
            opt.step(&mut net, &g)?;
            total += l * chunk.len() as f64;
        }
        let train_loss = total / order.len() as f64;
        if !train_loss.is_finite() {
            return Err(Error::NonFinite("policy training loss"));
        }
        log.push(PolicyEpochLog {
            network: job.network,
            epoch,
            train_loss,
            held_out_loss: held_out_loss(&job, &net)?,
        });
    }
    net.quantize_f32();
    Ok((net, log))
}

fn check_inputs(records: &[Record], config: &PolicyTrainConfig) -> Result<()> {
    if records.len() < MIN_POLICY_RECORDS {
        return Err(Error::DatasetTooSmall {
            got: records.len(),
            min: MIN_POLICY_RECORDS,
        });
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(Error::InvalidConfig("batch size and epochs must be positive".into()));
    }
    Ok(())
}

/// Trains `members` heteroscedastic policies on latents from the frozen encoder.
///
/// Each member has its own initialization and shuffling stream, so members can
/// train in any order (or concurrently) with identical results.
pub fn train_ensemble(
    encoder: &CmvaeParams,
    records: &[Record],
    members: usize,
    config: &PolicyTrainConfig,
    seed: u64,
) -> Result<TrainedEnsemble> {
    check_inputs(records, config)?;
    if members == 0 {
        return Err(Error::InvalidConfig("ensemble needs at least one member".into()));
    }
    let table = latent_table(encoder, records)?;
    let (train_idx, held_idx) = perception::split_indices(records.len());
    let results: Vec<_> = (0..members)
        .into_par_iter()
        .map(|i| {
            train_network(
                NetworkJob {
                    table: &table,
                    train_idx: &train_idx,
                    held_idx: &held_idx,
                    config,
                    loss: LossKind::HeteroscedasticNll,
                    seed,
                    init_tag: tags::MEMBER_INIT,
                    train_tag: tags::MEMBER_TRAIN,
                    network: i,
                },
                2 * CMD_DIM,
            )
        })
        .collect();
    let mut nets = Vec::with_capacity(members);
    let mut log = Vec::new();
    for r in results {
        let (net, l) = r?;
        nets.push(net);
        log.extend(l);
    }
    Ok(TrainedEnsemble {
        params: EnsembleParams::new(nets)?,
        log,
    })
}

/// Trains the deterministic behavior-cloning baseline (MSE on the mean).
pub fn train_baseline_bc(
    encoder: &CmvaeParams,
    records: &[Record],
    config: &PolicyTrainConfig,
    seed: u64,
) -> Result<TrainedBaseline> {
    check_inputs(records, config)?;
    let table = latent_table(encoder, records)?;
    let (train_idx, held_idx) = perception::split_indices(records.len());
    let (net, log) = train_network(
        NetworkJob {
            table: &table,
            train_idx: &train_idx,
            held_idx: &held_idx,
            config,
            loss: LossKind::Mse,
            seed,
            init_tag: tags::BASELINE_INIT,
            train_tag: tags::BASELINE_TRAIN,
            network: 0,
        },
        CMD_DIM,
    )?;
    Ok(TrainedBaseline {
        params: BaselinePolicyParams::new(net)?,
        log,
    })
}

pub fn write_policy_log(log: &[PolicyEpochLog], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    for row in log {
        w.serialize(row)?;
    }
    w.flush().map_err(Error::io(path))?;
    Ok(())
}
