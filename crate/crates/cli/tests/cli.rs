use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amrsim(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amrsim"))
        .current_dir(dir)
        .env("AMRSIM_RESULTS_DIR", dir.join("results"))
        .args(args)
        .output()
        .unwrap()
}

const UMBRELLA: &str = "configs/umbrella_configs/base_experiment.yaml";

#[test]
fn scaffold_train_evaluate_tune() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(amrsim(d, &["scaffold", "."]).status.code(), Some(0));
    assert_eq!(amrsim(d, &["scaffold", "."]).status.code(), Some(1));
    assert_eq!(amrsim(d, &["scaffold", ".", "--force"]).status.code(), Some(0));

    let out = amrsim(
        d,
        &[
            "train", "--config", UMBRELLA,
            "--s", "environment=configs/environment/three_abx_w_crossresistance.yaml",
            "--p", "environment.max_time_steps=5",
            "--p", "training.run_name=three_abx_w_crossr_exp",
            "--run-id", "r1", "--parallel", "2",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let resolved = fs::read_to_string(d.join("results/r1/resolved_config.yaml")).unwrap();
    assert!(resolved.contains("three_abx_w_crossr_exp"));
    assert!(resolved.contains("max_time_steps: 5"));

    let out = amrsim(
        d,
        &[
            "evaluate", "--config", UMBRELLA,
            "--s", "environment=configs/environment/three_abx_w_crossresistance.yaml",
            "--policy", "results/r1/checkpoints/final.json", "--episodes", "1",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(summary["sd"], 0.0);

    // The policy was trained on three antibiotics; the default scenario has two.
    let out = amrsim(d, &["evaluate", "--config", UMBRELLA, "--policy", "results/r1/checkpoints/final.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = amrsim(
        d,
        &[
            "tune", "--config", UMBRELLA, "--p", "environment.max_time_steps=5",
            "--tuning-spec", "configs/tuning/default.yaml", "--run-id", "t1",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("results/t1/leaderboard.csv").is_file());
    assert!(d.join("results/t1/best_config.yaml").is_file());
}

#[test]
fn validation_failures_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    amrsim(d, &["scaffold", "."]);
    for args in [
        vec!["train", "--config", UMBRELLA, "--p", "reward_calculator.lambda=2"],
        vec!["train", "--config", UMBRELLA, "--p", "environment.num_patients_per_time_step=many"],
        vec!["train", "--config", UMBRELLA, "--p", "no_equals_sign"],
        vec!["train", "--config", "missing.yaml"],
        vec!["train", "--config", UMBRELLA, "--s", "nonsense=configs/environment/default.yaml"],
        vec!["train"],
    ] {
        let out = amrsim(d, &args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(!d.join("results").exists());
    let out = amrsim(d, &["train", "--config", UMBRELLA, "--p", "reward_calculator.lambda=2"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("reward_calculator.lambda"));
}
