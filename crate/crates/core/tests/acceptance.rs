mod common;

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::Rng as _;
use uqnav::dataset::read_dataset;
use uqnav::harness::{self, intermediate_trend_holds, ood_trend_holds, Artifacts, RunConfig};
use uqnav::nn::{Activation, LossKind, MlpParams};
use uqnav::perception::{self, pose_error, split_indices, CmvaeArch, CmvaeParams, Observation};
use uqnav::policy::{policy_forward, EnsembleParams, PolicyEpochLog};
use uqnav::rng;
use uqnav::sim::{check_gate_event, generate_track, run_episode, EpisodeConfig, ExpertPilot, Termination, TrackConfig};
use uqnav::uq::{aggregate_grid, mixture_moments, predict_stochastic_input};

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: &str, name: &str, started: Instant, out: Outcome) -> bool {
    let verdict = if out.pass { "PASS" } else { "FAIL" };
    println!("{verdict} {id:>3} {name}: {} ({:.1}s)", out.detail, started.elapsed().as_secs_f64());
    out.pass
}

fn within(elapsed: Duration, limit: Duration) -> bool {
    elapsed < limit
}

fn gradient_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1001, &[]);
    let mut worst = [0.0f64; 3];
    for _ in 0..10 {
        worst[0] = worst[0].max(common::mlp_gradient_error(LossKind::Mse, &mut r));
        worst[1] = worst[1].max(common::mlp_gradient_error(LossKind::HeteroscedasticNll, &mut r));
        worst[2] = worst[2].max(common::cmvae_gradient_error(&mut r));
    }
    let ok = worst.iter().all(|&e| e < 1e-5) && within(start.elapsed(), Duration::from_secs(60));
    Outcome {
        pass: ok,
        detail: format!("max rel err mse {:.2e}, nll {:.2e}, composite {:.2e}", worst[0], worst[1], worst[2]),
    }
}

fn mixture_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng::stream(1002, &[]);
    let mut worst_mean = 0.0f64;
    let mut worst_std = 0.0f64;
    for _ in 0..100 {
        let k = r.random_range(1..=8);
        let cs = common::random_components(k, 2, &mut r);
        let m = mixture_moments(&cs).unwrap();
        let (mean, std) = common::mixture_monte_carlo(&cs, 1_000_000, &mut r);
        for j in 0..2 {
            let s = m.variance[j].sqrt();
            worst_mean = worst_mean.max((mean[j] - m.mean[j]).abs() / m.mean[j].abs().max(s));
            worst_std = worst_std.max((std[j] - s).abs() / s);
        }
    }
    let mut worst_nested = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(1..=10);
        let members = r.random_range(1..=10);
        let grid: Vec<Vec<_>> = (0..n).map(|_| common::random_components(members, 4, &mut r)).collect();
        let nested = aggregate_grid(&grid).unwrap();
        let flat: Vec<_> = grid.iter().flatten().cloned().collect();
        let direct = mixture_moments(&flat).unwrap();
        for j in 0..4 {
            worst_nested = worst_nested
                .max((nested.mean[j] - direct.mean[j]).abs())
                .max((nested.std[j] - direct.std()[j]).abs());
        }
    }
    let ok = worst_mean < 0.01
        && worst_std < 0.01
        && worst_nested <= 1e-9
        && within(start.elapsed(), Duration::from_secs(120));
    Outcome {
        pass: ok,
        detail: format!("MC mean {worst_mean:.2e}, MC std {worst_std:.2e}, nested vs flat {worst_nested:.1e}"),
    }
}

fn reduction_identity() -> Outcome {
    let mut failures = 0;
    for seed in 0..20u64 {
        let mut r = rng::stream(1003, &[seed]);
        let encoder = CmvaeParams::init(&CmvaeArch::default(), &mut r).unwrap();
        let member = MlpParams::init(&[10, 32, 8], &[Activation::Relu, Activation::Identity], &mut r).unwrap();
        let ensemble = EnsembleParams::new(vec![member]).unwrap();
        let obs = Observation::new((0..256).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let res = predict_stochastic_input(&encoder, &ensemble, &obs, 1, &mut rng::stream(seed, &[7])).unwrap();
        let z = perception::encode(&encoder, &obs).unwrap().sample(&mut rng::stream(seed, &[7]));
        let direct = policy_forward(&ensemble.members()[0], &z).unwrap();
        if res.mean != direct.mean || res.std != direct.std() {
            failures += 1;
        }
    }
    Outcome { pass: failures == 0, detail: format!("{failures}/20 cases differ") }
}

fn expert_gate() -> Outcome {
    let start = Instant::now();
    let completed = (0..20u64)
        .filter(|&seed| {
            let track = generate_track(&TrackConfig::with_noise(0.0, 0.0, seed)).unwrap();
            let r = run_episode(&ExpertPilot, &track, &EpisodeConfig::default(), seed);
            r.termination == Termination::Completed && r.gates_traversed == 32
        })
        .count();
    Outcome {
        pass: completed == 20 && within(start.elapsed(), Duration::from_secs(60)),
        detail: format!("{completed}/20 tracks at 32/32"),
    }
}

fn geometry_oracle() -> Outcome {
    let mut r = rng::stream(1010, &[]);
    let mut disagreements = 0;
    for _ in 0..1000 {
        let (a, b, g) = common::random_segment_case(&mut r);
        if check_gate_event(&a, &b, &g) != common::segment_oracle(&a, &b, &g, 10_000) {
            disagreements += 1;
        }
    }
    Outcome { pass: disagreements == 0, detail: format!("{disagreements} disagreements in 1000 cases") }
}

/// Initial and final held-out loss per network, averaged over networks.
fn held_out_change(log: &[PolicyEpochLog]) -> (f64, f64) {
    let nets = log.iter().map(|l| l.network).max().map_or(0, |n| n + 1);
    let (mut first, mut last) = (0.0, 0.0);
    for n in 0..nets {
        let rows: Vec<_> = log.iter().filter(|l| l.network == n).collect();
        first += rows[0].held_out_loss;
        last += rows[rows.len() - 1].held_out_loss;
    }
    (first / nets as f64, last / nets as f64)
}

fn main() -> ExitCode {
    let mut all = true;
    println!("acceptance suite");

    let t = Instant::now();
    all &= report("1", "gradient oracle", t, gradient_oracle());
    let t = Instant::now();
    all &= report("2", "mixture oracle", t, mixture_oracle());
    let t = Instant::now();
    all &= report("3", "N=1 M=1 reduction", t, reduction_identity());
    let t = Instant::now();
    all &= report("4", "expert sanity gate", t, expert_gate());

    let config = RunConfig::default();
    let root = tempfile::tempdir().unwrap();
    let first = Artifacts::new(root.path().join("first"));
    let t = Instant::now();
    let run = harness::run_pipeline(&config, &first);
    let elapsed = t.elapsed();
    match run {
        Ok(rep) => {
            print!("{}", rep.table.render(&config.noise_levels));
            let at = (0.0, 0.0);
            let zero: Vec<(String, f64)> = config
                .models
                .iter()
                .map(|m| (m.clone(), rep.table.mean_gates(m, at).unwrap_or(0.0)))
                .collect();
            let zero_ok = zero
                .iter()
                .all(|(m, g)| if m == "BCE-UI5" { *g >= 30.0 } else { *g >= 28.0 });
            let detail = zero.iter().map(|(m, g)| format!("{m} {g:.2}")).collect::<Vec<_>>().join(", ");
            all &= report(
                "5",
                "zero-noise learned performance",
                t,
                Outcome {
                    pass: zero_ok && within(elapsed, Duration::from_secs(30 * 60)),
                    detail: format!("{detail}; pipeline {:.0}s", elapsed.as_secs_f64()),
                },
            );
            let g = |m: &str, at| rep.table.mean_gates(m, at).unwrap_or(f64::NAN);
            let ood = (1.5, 2.5);
            all &= report(
                "6",
                "OoD ordinal trend",
                Instant::now(),
                Outcome {
                    pass: ood_trend_holds(&rep.table) == Some(true),
                    detail: format!(
                        "UI5 {:.2} >= UI1 {:.2} >= BC {:.2}, UI5 - BC = {:.2}",
                        g("BCE-UI5", ood),
                        g("BCE-UI1", ood),
                        g("BC", ood),
                        g("BCE-UI5", ood) - g("BC", ood)
                    ),
                },
            );
            let mid = (1.0, 2.0);
            all &= report(
                "7",
                "intermediate noise trend",
                Instant::now(),
                Outcome {
                    pass: intermediate_trend_holds(&rep.table) == Some(true),
                    detail: format!("UI3 {:.2} >= UI1 {:.2}", g("BCE-UI3", mid), g("BCE-UI1", mid)),
                },
            );
            all &= report(
                "8",
                "encoder freeze",
                Instant::now(),
                Outcome {
                    pass: rep.encoder_checksum_before == rep.encoder_checksum_after,
                    detail: format!("sha256 {}", &rep.encoder_checksum_after[..16]),
                },
            );

            let t = Instant::now();
            let second = Artifacts::new(root.path().join("second"));
            let same = harness::run_pipeline(&config, &second).is_ok()
                && std::fs::read(first.results()).ok() == std::fs::read(second.results()).ok();
            all &= report(
                "9",
                "determinism",
                t,
                Outcome { pass: same, detail: "results.csv byte-identical across two runs".into() },
            );

            let log = &rep.cmvae.log;
            let (l0, l1) = (log[0].total, log[log.len() - 1].total);
            let drop = (l0 - l1) / l0;
            let records = read_dataset(first.cmvae_data()).unwrap();
            let (_, held) = split_indices(records.len());
            let pose = pose_error(&rep.cmvae.params, &records, &held).unwrap();
            let (n0, n1) = held_out_change(&rep.ensemble.log);
            let (b0, b1) = held_out_change(&rep.baseline.log);
            let training_ok = drop >= 0.8 && pose.relative() < 0.2 && n0 - n1 >= 0.5 * n0.abs() && b1 < b0;
            all &= report(
                "T",
                "training quality",
                Instant::now(),
                Outcome {
                    pass: training_ok,
                    detail: format!(
                        "cmvae loss -{:.1}%, held-out pose err {:.1}%, ensemble NLL {n0:.3} -> {n1:.3}, baseline MSE {b0:.4} -> {b1:.4}",
                        100.0 * drop,
                        100.0 * pose.relative()
                    ),
                },
            );
        }
        Err(e) => {
            for (id, name) in [
                ("5", "zero-noise learned performance"),
                ("6", "OoD ordinal trend"),
                ("7", "intermediate noise trend"),
                ("8", "encoder freeze"),
                ("9", "determinism"),
                ("T", "training quality"),
            ] {
                all &= report(id, name, t, Outcome { pass: false, detail: format!("pipeline error: {e}") });
            }
        }
    }

    let t = Instant::now();
    all &= report("10", "geometry oracle", t, geometry_oracle());

    if all {
        println!("acceptance: all criteria PASS");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: FAIL");
        ExitCode::FAILURE
    }
}
