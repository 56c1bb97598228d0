use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use uqnav::harness::{self, Artifacts, RunConfig};
use uqnav::Error;

#[derive(Parser)]
#[command(name = "uqnav", version, about = "Gate-racing policies with input-uncertainty propagation")]
struct Cli {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory for datasets, checkpoints and results.
    #[arg(long, global = true, default_value = "run")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the perception and policy datasets.
    GenData,
    /// Train the cross-modal VAE.
    TrainCmvae,
    /// Train the heteroscedastic policy ensemble on the frozen encoder.
    TrainPolicy,
    /// Train the single-network behavior-cloning baseline.
    TrainBaseline,
    /// Closed-loop evaluation of every model on every noise cell.
    Evaluate,
    /// Print the results table and the trend verdict.
    ReproduceTable {
        /// Run the whole pipeline first.
        #[arg(long)]
        full: bool,
    },
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::from_json_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    let art = Artifacts::new(&cli.out);
    match cli.command {
        Command::GenData => {
            let (a, b) = harness::generate_datasets(&config, &art)?;
            println!("wrote {} and {} records to {}", a.len(), b.len(), art.dir.display());
        }
        Command::TrainCmvae => {
            let t = harness::train_cmvae_stage(&config, &art)?;
            let (first, last) = (t.log[0].total, t.log[t.log.len() - 1].total);
            println!("cmvae loss {first:.5} -> {last:.5}, checksum {}", t.params.checksum());
        }
        Command::TrainPolicy => {
            let t = harness::train_policy_stage(&config, &art)?;
            println!("trained {} members", t.params.len());
        }
        Command::TrainBaseline => {
            harness::train_baseline_stage(&config, &art)?;
            println!("trained baseline");
        }
        Command::Evaluate => {
            let table = harness::evaluate_stage(&config, &art)?;
            print!("{}", table.render(&config.noise_levels));
        }
        Command::ReproduceTable { full } => {
            let table = if full {
                harness::run_pipeline(&config, &art)?.table
            } else {
                harness::evaluate_stage(&config, &art)?
            };
            print!("{}", table.to_csv_string()?);
            println!();
            print!("{}", table.render(&config.noise_levels));
            let pass = harness::ood_trend_holds(&table).unwrap_or(false);
            println!("verdict: {}", if pass { "PASS" } else { "FAIL" });
            if !pass {
                return Ok(ExitCode::from(3));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::MissingArtifact(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
