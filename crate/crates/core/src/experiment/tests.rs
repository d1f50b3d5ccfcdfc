use std::fs;

use super::*;
use crate::agents::Agent;
use crate::config::{apply_overrides, default_config, Algorithm, Distribution, ExperimentConfig, OverrideDirective};
use crate::env::Environment;
use crate::error::Error;
use crate::patient::PatientProfile;
use crate::reward::RewardModel;

fn small(algorithm: Algorithm) -> ExperimentConfig {
    let mut c = default_config();
    c.environment.max_time_steps = 10;
    c.agent_algorithm.algorithm = algorithm;
    c.training.total_num_training_episodes = 6;
    c.training.save_freq_every_n_episodes = 2;
    c.training.eval_freq_every_n_episodes = 3;
    c.training.num_eval_episodes = 4;
    c
}

fn opts(root: &std::path::Path, id: &str, parallel: usize) -> TrainOptions {
    TrainOptions {
        results_root: root.to_path_buf(),
        run_id: Some(id.to_string()),
        parallel,
    }
}

#[test]
fn par_map_preserves_order() {
    let items: Vec<u64> = (0..37).collect();
    assert_eq!(par_map(&items, 5, |x| x * x), items.iter().map(|x| x * x).collect::<Vec<_>>());
}

#[test]
fn block_structure_of_base_listing() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = default_config();
    c.environment.max_time_steps = 5;
    assert_eq!(c.training.total_num_training_episodes, 25);
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let rows = &run.metrics.rows;
    assert_eq!(rows.iter().filter(|r| r.phase == Phase::Train).count(), 25);
    let eval: Vec<_> = rows.iter().filter(|r| r.phase == Phase::Eval).collect();
    assert_eq!(eval.len(), 50);
    for (b, block) in eval.chunks(10).enumerate() {
        assert!(block.iter().all(|r| r.episode == 5 * (b + 1)));
        assert_eq!(block.iter().map(|r| r.eval_episode.unwrap()).collect::<Vec<_>>(), (0..10).collect::<Vec<_>>());
    }
    for pair in rows.windows(2) {
        let key = |r: &MetricsRow| (r.episode, r.phase, r.eval_episode);
        assert!(key(&pair[0]) < key(&pair[1]));
    }
    let on_disk = read_metrics(run.run_dir.join("metrics.csv")).unwrap();
    assert_eq!(on_disk, run.metrics);
    for f in ["resolved_config.yaml", "summary.json", "checkpoints/final.json", "checkpoints/episode_000005.json"] {
        assert!(run.run_dir.join(f).is_file(), "{f}");
    }
    assert!(!run.run_dir.join("trajectories.jsonl").exists());
}

#[test]
fn final_eval_added_off_tick() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algorithm::Random);
    c.training.total_num_training_episodes = 7;
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let ticks: Vec<usize> = run
        .metrics
        .rows
        .iter()
        .filter(|r| r.phase == Phase::Eval && r.eval_episode == Some(0))
        .map(|r| r.episode)
        .collect();
    assert_eq!(ticks, vec![3, 6, 7]);
    assert_eq!(run.final_eval.returns.len(), 4);
}

#[test]
fn metrics_byte_identical_and_parallel_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algorithm::TabularQ);
    c.training.log_patient_trajectories = true;
    let a = train(&c, &opts(&dir.path().join("a"), "run", 1)).unwrap();
    let b = train(&c, &opts(&dir.path().join("b"), "run", 1)).unwrap();
    let p = train(&c, &opts(&dir.path().join("p"), "run", 4)).unwrap();
    for f in ["metrics.csv", "trajectories.jsonl", "checkpoints/final.json", "resolved_config.yaml"] {
        let x = fs::read(a.run_dir.join(f)).unwrap();
        assert_eq!(x, fs::read(b.run_dir.join(f)).unwrap(), "{f}");
        assert_eq!(x, fs::read(p.run_dir.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn trajectory_records_are_self_describing() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algorithm::GreedyHeuristic);
    c.training.log_patient_trajectories = true;
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let text = fs::read_to_string(run.run_dir.join("trajectories.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    // 6 train episodes plus 2 eval blocks of 4, 10 steps each.
    assert_eq!(lines.len(), (6 + 8) * 10);
    let first = &lines[0];
    assert_eq!(first["phase"], "train");
    assert_eq!(first["t"], 1);
    assert_eq!(first["patients"].as_array().unwrap().len(), 3);
    assert!(first["true_sigma"].is_array());
}

#[test]
fn never_treat_pure_decay() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = small(Algorithm::NeverTreat);
    c.environment.antibiotics[0].initial_pressure = 2.0;
    c.environment.antibiotics[1].initial_pressure = 1.0;
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let steps = c.environment.max_time_steps as i32;
    for row in &run.metrics.rows {
        for (a, abx) in c.environment.antibiotics.iter().enumerate() {
            let p = abx.initial_pressure * (1.0 - abx.leak).powi(steps);
            let expected = 2.0 / (1.0 + (-p / abx.flatness).exp()) - 1.0;
            let initial = 2.0 / (1.0 + (-abx.initial_pressure / abx.flatness).exp()) - 1.0;
            assert!((row.final_sigma[a] - expected).abs() < 1e-12);
            assert!(row.final_sigma[a] < initial);
        }
    }
}

#[test]
fn existing_run_folder_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(Algorithm::NeverTreat);
    train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let err = train(&c, &opts(dir.path(), "r", 1)).unwrap_err();
    assert!(matches!(err, Error::AlreadyExists { .. }));
}

#[test]
fn unwritable_root_fails_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = train(&small(Algorithm::NeverTreat), &opts(&blocker.join("sub"), "r", 1)).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
}

#[test]
fn timestamped_run_id() {
    let dir = tempfile::tempdir().unwrap();
    let mut o = opts(dir.path(), "", 1);
    o.run_id = None;
    let run = train(&small(Algorithm::NeverTreat), &o).unwrap();
    let stamp = run.run_id.strip_prefix("example_run_").unwrap();
    assert_eq!(stamp.len(), 16);
    assert!(stamp.ends_with('Z') && stamp.as_bytes()[8] == b'T');
}

#[test]
fn evaluate_saved_policy() {
    let dir = tempfile::tempdir().unwrap();
    let c = small(Algorithm::TabularQ);
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    let e = evaluate(&c, &run.final_policy, 4, 1).unwrap();
    assert_eq!(e, run.final_eval);
    assert_eq!(e, evaluate(&c, &run.final_policy, 4, 3).unwrap());
    let single = evaluate(&c, &run.final_policy, 1, 1).unwrap();
    assert_eq!(single.sd, 0.0);
    assert_eq!(single.returns.len(), 1);

    let mut wider = c.clone();
    wider.environment.antibiotics.push(wider.environment.antibiotics[0].clone());
    wider.environment.antibiotics[2].name = "C".into();
    wider.environment.cross_resistance.clear();
    wider.normalize();
    assert!(matches!(evaluate(&wider, &run.final_policy, 1, 1), Err(Error::Dimension { .. })));
}

#[test]
fn random_prescribing_costs_community_reward() {
    let mut c = small(Algorithm::Random);
    c.reward_calculator.lambda = 1.0;
    let agent = Agent::from_config(&c.agent_algorithm, 2);
    let e = evaluate_agent(&c, &agent, 5, 1).unwrap();
    assert!(e.returns.iter().all(|&r| r < 0.0), "{e:?}");
}

fn base_for_tuning() -> ExperimentConfig {
    let mut c = small(Algorithm::TabularQ);
    c.environment.max_time_steps = 5;
    c.training.num_eval_episodes = 3;
    c
}

fn lr_spec(num_trials: usize) -> TuningSpec {
    TuningSpec::from_yaml(
        &format!(
            "num_trials: {num_trials}\nepisodes_per_trial: 4\nseed: 11\nparameters:\n  - path: agent_algorithm.learning_rate\n    kind: continuous\n    low: 0.01\n    high: 0.5\n"
        ),
        "spec.yaml".as_ref(),
    )
    .unwrap()
}

#[test]
fn tuning_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let base = base_for_tuning();
    let spec = lr_spec(8);
    let a = tune(&base, &spec, &opts(dir.path(), "a", 1)).unwrap();
    let b = tune(&base, &spec, &opts(dir.path(), "b", 4)).unwrap();
    let board = |r: &TuneRecord| fs::read_to_string(r.tune_dir.join("leaderboard.csv")).unwrap();
    assert_eq!(board(&a), board(&b));
    assert_eq!(a.leaderboard.len(), 8);
    for pair in a.leaderboard.windows(2) {
        assert!(pair[0].objective > pair[1].objective || (pair[0].objective == pair[1].objective && pair[0].trial < pair[1].trial));
    }
    let values: Vec<f64> = a.leaderboard.iter().map(|t| t.config.agent_algorithm.learning_rate).collect();
    assert!(values.iter().all(|v| (0.01..0.5).contains(v)));
    let best = fs::read_to_string(a.tune_dir.join("best_config.yaml")).unwrap();
    assert_eq!(best, crate::config::to_yaml(&a.best));
}

#[test]
fn single_trial_is_best() {
    let dir = tempfile::tempdir().unwrap();
    let base = base_for_tuning();
    let spec = lr_spec(1);
    let r = tune(&base, &spec, &opts(dir.path(), "t", 1)).unwrap();
    assert_eq!(r.best, trial_config(&base, &spec, 0).unwrap());
}

#[test]
fn invalid_path_fails_before_trials() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = lr_spec(3);
    spec.parameters[0].path = "agent_algorithm.learning_rat".into();
    let err = tune(&base_for_tuning(), &spec, &opts(dir.path(), "t", 1)).unwrap_err();
    assert!(err.is_validation());
    assert!(!dir.path().join("t").exists());

    let mut spec = lr_spec(3);
    spec.parameters[0].low = Some(0.6);
    assert!(tune(&base_for_tuning(), &spec, &opts(dir.path(), "t", 1)).unwrap_err().is_validation());
}

#[test]
fn log_and_integer_draws_stay_in_range() {
    let spec = TuningSpec::from_yaml(
        "num_trials: 50\nepisodes_per_trial: 1\nseed: 3\nparameters:\n  - path: agent_algorithm.learning_rate\n    kind: log_continuous\n    low: 0.001\n    high: 1.0\n  - path: agent_algorithm.sigma_bins\n    kind: integer\n    low: 2\n    high: 4\n",
        "s.yaml".as_ref(),
    )
    .unwrap();
    spec.validate(&base_for_tuning()).unwrap();
    let mut below_tenth = 0;
    for i in 0..50 {
        let c = trial_config(&base_for_tuning(), &spec, i).unwrap();
        let lr = c.agent_algorithm.learning_rate;
        assert!((0.001..1.0).contains(&lr));
        below_tenth += usize::from(lr < 0.1);
        assert!((2..=4).contains(&c.agent_algorithm.sigma_bins));
    }
    // Log-uniform puts two thirds of the mass below 0.1 on this range.
    assert!(below_tenth > 25, "{below_tenth}");
}

#[test]
fn lower_threshold_wins_when_treating_pays() {
    let mut base = small(Algorithm::GreedyHeuristic);
    base.reward_calculator.lambda = 0.0;
    base.reward_calculator.expected_value_mode = true;
    base.patient_generator.pi.distribution = Distribution::Uniform { lo: 0.35, hi: 0.85 };
    for abx in &mut base.environment.antibiotics {
        abx.leak = 0.5;
    }
    let base = apply_overrides(&base, &[]).unwrap();

    // Oracle: treating beats withholding for every admissible patient at any
    // resistance level this population can reach.
    let model = RewardModel::<f64>::from_config(&base);
    for pi in [0.35, 0.6, 0.85] {
        for s in [0.0, 0.2, 0.4] {
            let p = PatientProfile { pi, phi_b: 1.0, omega_b: 1.0, phi_f: 1.0, omega_f: 1.0, rho: 0.1, infected: true };
            let sigma = [s, s];
            let treat = model.expected_raw_reward(&p, Some(0), &sigma).unwrap();
            let skip = model.expected_raw_reward(&p, None, &sigma).unwrap();
            assert!(treat > skip, "pi {pi} sigma {s}");
        }
    }
    let mut env = Environment::<f64>::new(&base).unwrap();
    env.reset(0);
    let mut peak: f64 = 0.0;
    while !env.is_finished() {
        let r = env.step(&[1, 1, 1]).unwrap();
        peak = peak.max(r.info.true_sigma[0]);
    }
    assert!(peak < 0.4, "{peak}");

    let dir = tempfile::tempdir().unwrap();
    let spec = TuningSpec::from_yaml(
        "num_trials: 6\nepisodes_per_trial: 1\nseed: 5\nparameters:\n  - path: agent_algorithm.threshold\n    kind: categorical\n    values: [0.3, 0.9]\n",
        "s.yaml".as_ref(),
    )
    .unwrap();
    let r = tune(&base, &spec, &opts(dir.path(), "t", 2)).unwrap();
    let drawn: Vec<&str> = r.leaderboard.iter().map(|t| t.values[0].1.as_str()).collect();
    assert!(drawn.contains(&"0.9"), "{drawn:?}");
    assert_eq!(drawn[0], "0.3");
    assert_eq!(r.best.agent_algorithm.threshold, 0.3);
}

#[test]
fn overrides_compose_with_training() {
    let c = apply_overrides(
        &small(Algorithm::NeverTreat),
        &[OverrideDirective::parameter("environment.num_patients_per_time_step=5").unwrap()],
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let run = train(&c, &opts(dir.path(), "r", 1)).unwrap();
    assert_eq!(run.config.environment.num_patients_per_time_step, 5);
}
