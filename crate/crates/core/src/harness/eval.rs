use std::path::Path;

use rayon::prelude::*;

use super::RunConfig;
use crate::error::{Error, Result};
use crate::perception::{self, CmvaeParams};
use crate::policy::{BaselinePolicyParams, EnsembleParams};
use crate::rng::{self, tags, Rng};
use crate::sim::{
    generate_track, run_episode, Pilot, PilotInput, PilotOutput, Termination, TrackConfig,
};
use crate::uq::predict_stochastic_input;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    /// `BC`: deterministic policy on one latent sample.
    Baseline,
    /// `BCE-UIk`: ensemble with `k` latent samples per step.
    Ensemble { n_latent: usize },
}

impl ModelKind {
    pub fn parse(name: &str) -> Result<Self> {
        if name == "BC" {
            return Ok(Self::Baseline);
        }
        name.strip_prefix("BCE-UI")
            .and_then(|k| k.parse::<usize>().ok())
            .filter(|&k| k > 0)
            .map(|n_latent| Self::Ensemble { n_latent })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {name:?}")))
    }
}

pub struct BaselinePilot<'a> {
    pub encoder: &'a CmvaeParams,
    pub policy: &'a BaselinePolicyParams,
}

impl Pilot for BaselinePilot<'_> {
    fn act(&self, input: &PilotInput<'_>, rng: &mut Rng) -> Result<PilotOutput> {
        let dist = perception::encode(self.encoder, input.observation)?;
        let z = dist.sample(rng);
        Ok(PilotOutput {
            command: self.policy.command(&z)?,
            prediction: None,
        })
    }
}

pub struct EnsemblePilot<'a> {
    pub encoder: &'a CmvaeParams,
    pub ensemble: &'a EnsembleParams,
    pub n_latent: usize,
}

impl Pilot for EnsemblePilot<'_> {
    fn act(&self, input: &PilotInput<'_>, rng: &mut Rng) -> Result<PilotOutput> {
        let pred = predict_stochastic_input(
            self.encoder,
            self.ensemble,
            input.observation,
            self.n_latent,
            rng,
        )?;
        Ok(PilotOutput {
            command: pred.command(),
            prediction: Some(pred),
        })
    }
}

pub struct LoadedModels {
    pub encoder: CmvaeParams,
    pub baseline: Option<BaselinePolicyParams>,
    pub ensemble: Option<EnsembleParams>,
}

impl LoadedModels {
    fn pilot(&self, kind: ModelKind) -> Result<Box<dyn Pilot + '_>> {
        Ok(match kind {
            ModelKind::Baseline => Box::new(BaselinePilot {
                encoder: &self.encoder,
                policy: self
                    .baseline
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("baseline policy not loaded".into()))?,
            }),
            ModelKind::Ensemble { n_latent } => Box::new(EnsemblePilot {
                encoder: &self.encoder,
                ensemble: self
                    .ensemble
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("ensemble not loaded".into()))?,
                n_latent,
            }),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub model: String,
    pub radius_noise: f64,
    pub height_noise: f64,
    pub episode: usize,
    pub gates: usize,
    pub termination: Termination,
    pub aborted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub model: String,
    pub radius_noise: f64,
    pub height_noise: f64,
    pub mean_gates: f64,
    pub std_gates: f64,
    pub episodes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub episodes: Vec<EpisodeOutcome>,
}

pub const RESULTS_HEADER: [&str; 6] = [
    "model",
    "radius_noise",
    "height_noise",
    "mean_gates",
    "std_gates",
    "episodes",
];

impl ResultsTable {
    pub fn mean_gates(&self, model: &str, noise: (f64, f64)) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| r.model == model && (r.radius_noise, r.height_noise) == noise)
            .map(|r| r.mean_gates)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(RESULTS_HEADER)?;
        for r in &self.rows {
            w.write_record([
                r.model.clone(),
                r.radius_noise.to_string(),
                r.height_noise.to_string(),
                format!("{:.4}", r.mean_gates),
                format!("{:.4}", r.std_gates),
                r.episodes.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv_string()?).map_err(Error::io(path))
    }

    /// Per-episode gate counts with termination reasons and abort flags.
    pub fn write_episodes_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record([
            "model",
            "radius_noise",
            "height_noise",
            "episode",
            "gates",
            "termination",
            "aborted",
        ])?;
        for e in &self.episodes {
            let term = serde_json::to_value(e.termination)?;
            w.write_record([
                e.model.clone(),
                e.radius_noise.to_string(),
                e.height_noise.to_string(),
                e.episode.to_string(),
                e.gates.to_string(),
                term.as_str().unwrap_or_default().to_string(),
                e.aborted.to_string(),
            ])?;
        }
        w.flush().map_err(Error::io(path))?;
        Ok(())
    }

    /// Fixed-width console rendering, one model per line.
    pub fn render(&self, noise_levels: &[(f64, f64)]) -> String {
        let mut out = format!("{:<10}", "model");
        for (r, h) in noise_levels {
            out.push_str(&format!("{:>16}", format!("R={r} H={h}")));
        }
        out.push('\n');
        let mut models: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        for m in models {
            out.push_str(&format!("{m:<10}"));
            for &n in noise_levels {
                let cell = self
                    .rows
                    .iter()
                    .find(|r| r.model == m && (r.radius_noise, r.height_noise) == n)
                    .map(|r| format!("{:.2} ± {:.2}", r.mean_gates, r.std_gates))
                    .unwrap_or_else(|| "-".into());
                out.push_str(&format!("{cell:>16}"));
            }
            out.push('\n');
        }
        out
    }
}

/// `BCE-UI5 >= BCE-UI1 >= BC` and `BCE-UI5 >= BC + 2` at noise `(1.5, 2.5)`.
pub fn ood_trend_holds(table: &ResultsTable) -> Option<bool> {
    let at = (1.5, 2.5);
    let bc = table.mean_gates("BC", at)?;
    let ui1 = table.mean_gates("BCE-UI1", at)?;
    let ui5 = table.mean_gates("BCE-UI5", at)?;
    Some(ui5 >= ui1 && ui1 >= bc && ui5 >= bc + 2.0)
}

/// `BCE-UI3 >= BCE-UI1` at noise `(1, 2)`.
pub fn intermediate_trend_holds(table: &ResultsTable) -> Option<bool> {
    let at = (1.0, 2.0);
    Some(table.mean_gates("BCE-UI3", at)? >= table.mean_gates("BCE-UI1", at)?)
}

fn mean_std(values: &[usize]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<usize>() as f64 / n;
    let var = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs every (model, noise cell, episode) combination.
///
/// Episode `e` of cell `c` uses the same track and the same random streams for
/// every model, so models are compared on identical conditions. Results are
/// ordered by model, cell and episode regardless of scheduling.
pub fn evaluate_models(models: &LoadedModels, config: &RunConfig) -> Result<ResultsTable> {
    let kinds = config
        .models
        .iter()
        .map(|m| ModelKind::parse(m))
        .collect::<Result<Vec<_>>>()?;
    let pilots = kinds
        .iter()
        .map(|&k| models.pilot(k))
        .collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for m in 0..kinds.len() {
        for c in 0..config.noise_levels.len() {
            for e in 0..config.episodes_per_cell {
                jobs.push((m, c, e));
            }
        }
    }
    let outcomes = jobs
        .par_iter()
        .map(|&(m, c, e)| {
            let (radius_noise, height_noise) = config.noise_levels[c];
            let cell_path = [c as u64, e as u64];
            let track_seed = rng::derive_seed(config.seed, &[tags::TRACK, cell_path[0], cell_path[1]]);
            let track = generate_track(&TrackConfig::with_noise(radius_noise, height_noise, track_seed))?;
            let key = rng::derive_seed(config.seed, &[tags::EPISODE, cell_path[0], cell_path[1]]);
            let result = run_episode(pilots[m].as_ref(), &track, &config.episode, key);
            Ok(EpisodeOutcome {
                model: config.models[m].clone(),
                radius_noise,
                height_noise,
                episode: e,
                gates: result.gates_traversed,
                termination: result.termination,
                aborted: result.aborted(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let per_cell = config.episodes_per_cell;
    let rows = outcomes
        .chunks(per_cell)
        .map(|chunk| {
            let gates: Vec<usize> = chunk.iter().map(|o| o.gates).collect();
            let (mean, std) = mean_std(&gates);
            ResultRow {
                model: chunk[0].model.clone(),
                radius_noise: chunk[0].radius_noise,
                height_noise: chunk[0].height_noise,
                mean_gates: mean,
                std_gates: std,
                episodes: chunk.len(),
            }
        })
        .collect();
    Ok(ResultsTable {
        rows,
        episodes: outcomes,
    })
}
