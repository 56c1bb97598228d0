use std::process::Command;

fn uqnav() -> Command {
    Command::new(env!("CARGO_BIN_EXE_uqnav"))
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = uqnav().arg("fly").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_succeeds_and_lists_subcommands() {
    let out = uqnav().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["gen-data", "train-cmvae", "train-policy", "train-baseline", "evaluate", "reproduce-table"] {
        assert!(text.contains(cmd), "{cmd}");
    }
    for flag in ["--config", "--seed", "--out"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"episodes_per_cell": 0}"#).unwrap();
    let out = uqnav()
        .args(["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "gen-data"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    std::fs::write(&cfg, "{not json").unwrap();
    let out = uqnav().args(["--config", cfg.to_str().unwrap(), "gen-data"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_artifacts_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for cmd in ["train-cmvae", "train-policy", "train-baseline", "evaluate", "reproduce-table"] {
        let out = uqnav().args(["--out", dir.path().to_str().unwrap(), cmd]).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert!(err.contains("missing artifact"), "{cmd}: {err}");
    }
}

#[test]
fn gen_data_writes_both_files_and_seed_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"cmvae_records": 30, "policy_records": 20, "seed": 1}"#).unwrap();
    let run = |out: &str, seed: &str| {
        let status = uqnav()
            .args(["--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out, "gen-data"])
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(a.to_str().unwrap(), "5");
    run(b.to_str().unwrap(), "6");
    let recs = uqnav::dataset::read_dataset(a.join("cmvae_data.uqd")).unwrap();
    assert_eq!(recs.len(), 30);
    assert_eq!(uqnav::dataset::read_dataset(a.join("policy_data.uqd")).unwrap().len(), 20);
    assert_ne!(
        std::fs::read(a.join("cmvae_data.uqd")).unwrap(),
        std::fs::read(b.join("cmvae_data.uqd")).unwrap()
    );
}
