//! Predictive distribution of a policy ensemble under a stochastic latent input.
//!
//! For an observation, `N` latents are drawn from the encoder's Gaussian. Each
//! latent is pushed through all `M` members; the `M` member Gaussians are
//! collapsed into one by uniform mixture moment matching, and the `N` per-latent
//! Gaussians are collapsed the same way. With uniform weights the two-stage
//! result equals moment matching over the flat set of `N * M` member outputs,
//! which is also where the aleatoric/epistemic split is taken.

use crate::error::{Error, Result};
use crate::perception::{self, CmvaeParams, LatentSample, Observation};
use crate::policy::{policy_forward, EnsembleParams, GaussianPrediction, VelocityCommand, V_MAX, YAW_RATE_MAX};
use crate::rng::Rng;

/// Aggregated prediction plus its variance decomposition, per output dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveResult {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Mean of the member variances over all `N * M` components.
    pub aleatoric_var: Vec<f64>,
    /// Variance of the member means over all `N * M` components.
    pub epistemic_var: Vec<f64>,
    pub n_latent: usize,
    pub n_members: usize,
}

impl PredictiveResult {
    /// The aggregated mean read as a (normalized) velocity command.
    pub fn command(&self) -> VelocityCommand {
        VelocityCommand::from_normalized(&self.mean)
    }

    /// Predictive std in physical units (m/s, m/s, m/s, rad/s).
    pub fn std_physical(&self) -> [f64; 4] {
        [
            self.std[0] * V_MAX,
            self.std[1] * V_MAX,
            self.std[2] * V_MAX,
            self.std[3] * YAW_RATE_MAX,
        ]
    }
}

fn check_components(components: &[GaussianPrediction]) -> Result<usize> {
    let first = components.first().ok_or(Error::Empty("mixture components"))?;
    let d = first.dim();
    if components.iter().any(|c| c.dim() != d) {
        return Err(Error::InvalidPrediction("components differ in dimension".into()));
    }
    Ok(d)
}

fn mean_of(components: &[GaussianPrediction], d: usize) -> Vec<f64> {
    let k = components.len() as f64;
    (0..d)
        .map(|j| components.iter().map(|c| c.mean[j]).sum::<f64>() / k)
        .collect()
}

/// Collapses a uniform Gaussian mixture to its exact mean and variance.
///
/// `var = (1/K) sum (var_k + mean_k^2) - mean^2`, evaluated in the centered form
/// `(1/K) sum var_k + (1/K) sum (mean_k - mean)^2`, floored at zero.
pub fn mixture_moments(components: &[GaussianPrediction]) -> Result<GaussianPrediction> {
    let d = check_components(components)?;
    let (aleatoric, epistemic) = decompose_uncertainty(components)?;
    let mean = mean_of(components, d);
    let variance = aleatoric
        .iter()
        .zip(&epistemic)
        .map(|(a, e)| (a + e).max(0.0))
        .collect();
    GaussianPrediction::new(mean, variance)
}

/// `(mean of variances, variance of means)` per dimension.
pub fn decompose_uncertainty(components: &[GaussianPrediction]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = check_components(components)?;
    let k = components.len() as f64;
    let mean = mean_of(components, d);
    let aleatoric = (0..d)
        .map(|j| components.iter().map(|c| c.variance[j]).sum::<f64>() / k)
        .collect();
    let epistemic = (0..d)
        .map(|j| {
            components
                .iter()
                .map(|c| {
                    let dev = c.mean[j] - mean[j];
                    dev * dev
                })
                .sum::<f64>()
                / k
        })
        .collect();
    Ok((aleatoric, epistemic))
}

/// Two-stage aggregation of a prediction grid, `grid[n][i]` = member `i` at latent `n`.
pub fn aggregate_grid(grid: &[Vec<GaussianPrediction>]) -> Result<PredictiveResult> {
    let n_latent = grid.len();
    if n_latent == 0 {
        return Err(Error::Empty("latent samples"));
    }
    let n_members = grid[0].len();
    if grid.iter().any(|row| row.len() != n_members) {
        return Err(Error::InvalidPrediction("ragged prediction grid".into()));
    }
    let per_latent = grid
        .iter()
        .map(|row| mixture_moments(row))
        .collect::<Result<Vec<_>>>()?;
    let total = mixture_moments(&per_latent)?;
    let flat: Vec<GaussianPrediction> = grid.iter().flatten().cloned().collect();
    let (aleatoric_var, epistemic_var) = decompose_uncertainty(&flat)?;
    Ok(PredictiveResult {
        std: total.std(),
        mean: total.mean,
        aleatoric_var,
        epistemic_var,
        n_latent,
        n_members,
    })
}

/// Aggregates the ensemble at the given latent samples.
pub fn predict_from_latents(
    ensemble: &EnsembleParams,
    latents: &[LatentSample],
) -> Result<PredictiveResult> {
    let grid = latents
        .iter()
        .map(|z| {
            ensemble
                .members()
                .iter()
                .map(|m| policy_forward(m, z))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    aggregate_grid(&grid)
}

/// Predictive distribution for one observation using `n_latent` latent samples.
///
/// All `n_latent` samples are drawn from `rng` before any member is evaluated, so
/// the first `k` samples for `n_latent = N` coincide with those for `n_latent = k`.
pub fn predict_stochastic_input(
    encoder: &CmvaeParams,
    ensemble: &EnsembleParams,
    obs: &Observation,
    n_latent: usize,
    rng: &mut Rng,
) -> Result<PredictiveResult> {
    if n_latent == 0 {
        return Err(Error::InvalidConfig("number of latent samples must be positive".into()));
    }
    let dist = perception::encode(encoder, obs)?;
    let latents: Vec<LatentSample> = (0..n_latent).map(|_| dist.sample(rng)).collect();
    predict_from_latents(ensemble, &latents)
}
