use std::path::Path;
use std::process::Command;

use modrl_ta::harness::artifacts::*;
use modrl_ta::harness::ExperimentConfig;

const SMALL: &str = r#"
seed = 3

[env]
positions = 4
context_dim = 8

[network]
trunk = [8]
head = [8]

[replay]
warmup = 16
batch_size = 8

[training]
cold_start_steps = 20
steps = 80

[pda]
log_sessions = 40
sim_episodes = 20

[cem]
population = 6
elites = 2
generations = 2

[cem.fitness]
kind = "rollout"
episodes = 10

[eval]
episodes = 20
auc_episodes = 20
"#;

fn modrl(dir: &Path, config: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_modrl"))
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(dir)
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn stage_verbs_chain_and_match_a_full_run() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let staged = tmp.path().join("staged");
    for verb in ["build-table", "simulate", "train", "cem", "evaluate"] {
        let out = modrl(&staged, &config, &[verb]);
        assert!(
            out.status.success(),
            "{verb}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let full = tmp.path().join("full");
    let out = modrl(&full, &config, &["run"]);
    assert!(out.status.success());

    let cfg = ExperimentConfig::from_toml_str(SMALL).unwrap();
    let a = read_metrics(&staged.join(METRICS)).unwrap();
    let b = read_metrics(&full.join(METRICS)).unwrap();
    assert!(a[0].same_outcome(&b[0]));
    assert_eq!(
        read_table(&staged.join(CTR_TABLE)).unwrap(),
        read_table(&full.join(CTR_TABLE)).unwrap()
    );
    assert_eq!(
        read_transitions(&staged.join(REAL_TRANSITIONS), &cfg).unwrap(),
        read_transitions(&full.join(REAL_TRANSITIONS), &cfg).unwrap()
    );
    assert_eq!(
        read_weights(&staged.join(WEIGHTS)).unwrap(),
        read_weights(&full.join(WEIGHTS)).unwrap()
    );
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = modrl(&tmp.path().join("a"), &config, &["--seed", "9", "run"]);
    assert!(out.status.success());
    let rows = read_metrics(&tmp.path().join("a").join(METRICS)).unwrap();
    assert_eq!(rows[0].seed, 9);
}

#[test]
fn ablation_writes_five_rows_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    let out = modrl(tmp.path(), &config, &["ablation", "--seeds", "2"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("median combined"));
    assert_eq!(read_metrics(&tmp.path().join(METRICS)).unwrap().len(), 10);
}

#[test]
fn failures_exit_with_stage_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "seed = 1\nunknown_key = 2\n").unwrap();
    let out = modrl(tmp.path(), &bad, &["train"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));

    let config = tmp.path().join("small.toml");
    std::fs::write(&config, SMALL).unwrap();
    // No checkpoint has been written yet.
    let out = modrl(&tmp.path().join("empty"), &config, &["evaluate"]);
    assert_eq!(out.status.code(), Some(8));

    let fused = tmp.path().join("fused.toml");
    std::fs::write(
        &fused,
        format!("{SMALL}\n[ablation.fused_reward]\nclick = 1.0\n"),
    )
    .unwrap();
    let dir = tmp.path().join("fused");
    assert!(modrl(&dir, &fused, &["train"]).status.success());
    assert_eq!(modrl(&dir, &fused, &["cem"]).status.code(), Some(6));
}
