//! End-to-end pipeline: datasets, training stages, evaluation, results table.

mod eval;

pub use eval::{
    evaluate_models, intermediate_trend_holds, ood_trend_holds, BaselinePilot, EnsemblePilot,
    EpisodeOutcome, LoadedModels, ModelKind, ResultRow, ResultsTable,
};

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::dataset::{self, Record, SamplingConfig};
use crate::error::{Error, Result};
use crate::perception::{self, CmvaeParams, CmvaeTrainConfig};
use crate::policy::{self, BaselinePolicyParams, EnsembleParams, PolicyTrainConfig};
use crate::rng::tags;
use crate::sim::EpisodeConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub cmvae_records: usize,
    pub policy_records: usize,
    pub sampling: SamplingConfig,
    pub cmvae: CmvaeTrainConfig,
    pub policy: PolicyTrainConfig,
    pub baseline: PolicyTrainConfig,
    pub ensemble_members: usize,
    pub episode: EpisodeConfig,
    /// `(radius_noise, height_noise)` per evaluation cell, m.
    pub noise_levels: Vec<(f64, f64)>,
    pub episodes_per_cell: usize,
    pub models: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            cmvae_records: 20_000,
            policy_records: 8_000,
            sampling: SamplingConfig::default(),
            cmvae: CmvaeTrainConfig::default(),
            policy: PolicyTrainConfig::default(),
            baseline: PolicyTrainConfig::default(),
            ensemble_members: 5,
            episode: EpisodeConfig::default(),
            noise_levels: vec![(0.0, 0.0), (1.0, 2.0), (1.5, 2.5)],
            episodes_per_cell: 20,
            models: ["BC", "BCE-UI1", "BCE-UI3", "BCE-UI5"].map(String::from).to_vec(),
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(Error::io(path))?;
        let config: Self = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cmvae_records", self.cmvae_records),
            ("policy_records", self.policy_records),
            ("ensemble_members", self.ensemble_members),
            ("episodes_per_cell", self.episodes_per_cell),
            ("cmvae.epochs", self.cmvae.epochs),
            ("cmvae.batch_size", self.cmvae.batch_size),
            ("policy.epochs", self.policy.epochs),
            ("policy.batch_size", self.policy.batch_size),
            ("baseline.epochs", self.baseline.epochs),
            ("baseline.batch_size", self.baseline.batch_size),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if self
            .noise_levels
            .iter()
            .any(|&(r, h)| !(r >= 0.0 && h >= 0.0 && r.is_finite() && h.is_finite()))
        {
            return Err(Error::InvalidConfig("noise levels must be non-negative".into()));
        }
        if self.models.is_empty() {
            return Err(Error::InvalidConfig("model roster is empty".into()));
        }
        for m in &self.models {
            ModelKind::parse(m)?;
        }
        Ok(())
    }
}

/// File layout of a run directory.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn cmvae_data(&self) -> PathBuf {
        self.dir.join("cmvae_data.uqd")
    }
    pub fn policy_data(&self) -> PathBuf {
        self.dir.join("policy_data.uqd")
    }
    pub fn cmvae(&self) -> PathBuf {
        self.dir.join("cmvae.uqp")
    }
    pub fn cmvae_log(&self) -> PathBuf {
        self.dir.join("cmvae_loss.csv")
    }
    pub fn ensemble_log(&self) -> PathBuf {
        self.dir.join("ensemble_loss.csv")
    }
    pub fn baseline(&self) -> PathBuf {
        self.dir.join(BaselinePolicyParams::FILE_NAME)
    }
    pub fn baseline_log(&self) -> PathBuf {
        self.dir.join("baseline_loss.csv")
    }
    pub fn results(&self) -> PathBuf {
        self.dir.join("results.csv")
    }
    pub fn episodes(&self) -> PathBuf {
        self.dir.join("episodes.csv")
    }

    fn ensure_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.dir).map_err(Error::io(&self.dir))
    }
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path))
    }
}

pub fn load_records(path: PathBuf) -> Result<Vec<Record>> {
    Ok(dataset::read_dataset(require(path)?)?)
}

pub fn load_cmvae(art: &Artifacts) -> Result<CmvaeParams> {
    CmvaeParams::load(require(art.cmvae())?)
}

pub fn load_baseline(art: &Artifacts) -> Result<BaselinePolicyParams> {
    let net = crate::nn::checkpoint::load_checkpoint(require(art.baseline())?)?;
    BaselinePolicyParams::new(net)
}

/// Samples both datasets and writes them to the run directory.
pub fn generate_datasets(config: &RunConfig, art: &Artifacts) -> Result<(Vec<Record>, Vec<Record>)> {
    art.ensure_dir()?;
    let cmvae = dataset::sample_records(config.cmvae_records, &config.sampling, config.seed, tags::CMVAE_DATA);
    let policy = dataset::sample_records(config.policy_records, &config.sampling, config.seed, tags::POLICY_DATA);
    dataset::write_dataset(&cmvae, art.cmvae_data())?;
    dataset::write_dataset(&policy, art.policy_data())?;
    Ok((cmvae, policy))
}

pub fn train_cmvae_stage(config: &RunConfig, art: &Artifacts) -> Result<perception::TrainedCmvae> {
    let records = load_records(art.cmvae_data())?;
    let trained = perception::train_cmvae(&records, &config.cmvae, config.seed)?;
    trained.params.save(art.cmvae())?;
    perception::write_loss_log(&trained.log, art.cmvae_log())?;
    Ok(trained)
}

pub fn train_policy_stage(config: &RunConfig, art: &Artifacts) -> Result<policy::TrainedEnsemble> {
    let encoder = load_cmvae(art)?;
    let records = load_records(art.policy_data())?;
    let trained = policy::train_ensemble(
        &encoder,
        &records,
        config.ensemble_members,
        &config.policy,
        config.seed,
    )?;
    trained.params.save(&art.dir)?;
    policy::write_policy_log(&trained.log, art.ensemble_log())?;
    Ok(trained)
}

pub fn train_baseline_stage(config: &RunConfig, art: &Artifacts) -> Result<policy::TrainedBaseline> {
    let encoder = load_cmvae(art)?;
    let records = load_records(art.policy_data())?;
    let trained = policy::train_baseline_bc(&encoder, &records, &config.baseline, config.seed)?;
    crate::nn::checkpoint::save_checkpoint(&trained.params.net, art.baseline())?;
    policy::write_policy_log(&trained.log, art.baseline_log())?;
    Ok(trained)
}

/// Loads every checkpoint the roster needs, evaluates, and writes
/// `results.csv` and `episodes.csv`.
pub fn evaluate_stage(config: &RunConfig, art: &Artifacts) -> Result<ResultsTable> {
    let kinds = config
        .models
        .iter()
        .map(|m| ModelKind::parse(m))
        .collect::<Result<Vec<_>>>()?;
    let encoder = load_cmvae(art)?;
    let baseline = if kinds.contains(&ModelKind::Baseline) {
        Some(load_baseline(art)?)
    } else {
        None
    };
    let ensemble = if kinds.iter().any(|k| matches!(k, ModelKind::Ensemble { .. })) {
        Some(EnsembleParams::load(&art.dir, config.ensemble_members)?)
    } else {
        None
    };
    let models = LoadedModels {
        encoder,
        baseline,
        ensemble,
    };
    let table = evaluate_models(&models, config)?;
    table.write_csv(art.results())?;
    table.write_episodes_csv(art.episodes())?;
    Ok(table)
}

#[derive(Debug, Clone)]
pub struct PipelineReport {
    pub table: ResultsTable,
    pub cmvae: perception::TrainedCmvae,
    pub ensemble: policy::TrainedEnsemble,
    pub baseline: policy::TrainedBaseline,
    /// Hash of the encoder checkpoint file right after perception training.
    pub encoder_checksum_before: String,
    /// Same hash after both policy stages have run.
    pub encoder_checksum_after: String,
    pub stage_times: Vec<(&'static str, Duration)>,
}

impl PipelineReport {
    pub fn total_time(&self) -> Duration {
        self.stage_times.iter().map(|(_, d)| *d).sum()
    }
}

pub fn file_checksum(path: impl AsRef<Path>) -> Result<String> {
    use sha2::{Digest, Sha256};
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Data generation, perception training, ensemble and baseline training, evaluation.
pub fn run_pipeline(config: &RunConfig, art: &Artifacts) -> Result<PipelineReport> {
    config.validate()?;
    let mut times = Vec::new();
    let mut t = Instant::now();
    let mut lap = |name, t: &mut Instant| {
        times.push((name, t.elapsed()));
        *t = Instant::now();
    };
    generate_datasets(config, art)?;
    lap("gen-data", &mut t);
    let cmvae = train_cmvae_stage(config, art)?;
    lap("train-cmvae", &mut t);
    let before = file_checksum(art.cmvae())?;
    let ensemble = train_policy_stage(config, art)?;
    lap("train-policy", &mut t);
    let baseline = train_baseline_stage(config, art)?;
    lap("train-baseline", &mut t);
    let after = file_checksum(art.cmvae())?;
    let table = evaluate_stage(config, art)?;
    lap("evaluate", &mut t);
    Ok(PipelineReport {
        table,
        cmvae,
        ensemble,
        baseline,
        encoder_checksum_before: before,
        encoder_checksum_after: after,
        stage_times: times,
    })
}
