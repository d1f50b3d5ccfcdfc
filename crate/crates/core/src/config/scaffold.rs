use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

pub const DEFAULT_ENVIRONMENT: &str = "\
# Patient population size, episode length and per-antibiotic resistance dynamics.
num_patients_per_time_step: 3
max_time_steps: 50
# Steps between antibiogram (observed resistance) refreshes.
antibiogram_refresh_interval: 1
antibiotics:
  - name: A
    flatness: 1.0
    leak: 0.2
    inflation_rate: 0.1
    initial_pressure: 0.0
    amr_noise_sd: 0.0
    amr_bias: 0.0
  - name: B
    flatness: 2.0
    leak: 0.1
    inflation_rate: 0.1
    initial_pressure: 0.0
    amr_noise_sd: 0.0
    amr_bias: 0.0
# cross_resistance[a][b]: pressure added to antibiotic a per prescription of b.
cross_resistance:
  - [1.0, 0.0]
  - [0.0, 1.0]
";

pub const THREE_ABX_ENVIRONMENT: &str = "\
num_patients_per_time_step: 3
max_time_steps: 50
antibiogram_refresh_interval: 1
antibiotics:
  - name: A
    flatness: 1.0
    leak: 0.2
    inflation_rate: 0.1
  - name: B
    flatness: 2.0
    leak: 0.1
    inflation_rate: 0.1
  - name: C
    flatness: 1.5
    leak: 0.15
    inflation_rate: 0.1
cross_resistance:
  - [1.0, 0.3, 0.0]
  - [0.3, 1.0, 0.0]
  - [0.0, 0.5, 1.0]
";

pub const DEFAULT_PATIENT_GENERATOR: &str = "\
# Each attribute: a distribution (constant, uniform, truncated_normal) plus an
# observation model (observable flag, additive bias, Gaussian noise sd).
pi:
  distribution: {kind: uniform, lo: 0.2, hi: 0.9}
  observable: true
  bias: 0.0
  noise_sd: 0.0
phi_b:
  distribution: {kind: constant, value: 1.0}
omega_b:
  distribution: {kind: constant, value: 1.0}
phi_f:
  distribution: {kind: constant, value: 1.0}
omega_f:
  distribution: {kind: constant, value: 1.0}
rho:
  distribution: {kind: constant, value: 0.1}
";

pub const DEFAULT_REWARD: &str = "\
# Weight of the community (resistance) term; 0 = individual only.
lambda: 0.5
base_benefit: 1.0
base_penalty: 1.0
base_efficacy:
  A: 0.9
  B: 0.8
default_base_efficacy: 0.9
base_failure_harm: 0.5
normalization_cap: 1.0
expected_value_mode: false
";

pub const DEFAULT_AGENT: &str = "\
# random | never_treat | greedy_heuristic | tabular_q
algorithm: tabular_q
threshold: 0.5
learning_rate: 0.1
discount: 0.95
epsilon_start: 1.0
epsilon_end: 0.05
epsilon_decay_episodes: 20
sigma_bins: 5
pi_bins: 5
seed: 0
";

pub const BASE_EXPERIMENT: &str = "\
# Base experiment configuration
config_folder_location: ../
options_folder_location: ../../options

# Component configurations
environment: environment/default.yaml
reward_calculator: reward_calculator/default.yaml
patient_generator: patient_generator/default.yaml
agent_algorithm: agent_algorithm/default.yaml

# Training configuration
training:
  run_name: example_run
  total_num_training_episodes: 25
  save_freq_every_n_episodes: 5
  eval_freq_every_n_episodes: 5
  num_eval_episodes: 10
  seed: 42
  log_patient_trajectories: true
";

pub const DEFAULT_TUNING: &str = "\
num_trials: 8
episodes_per_trial: 10
seed: 7
parameters:
  - path: agent_algorithm.learning_rate
    kind: log_continuous
    low: 0.01
    high: 0.5
  - path: agent_algorithm.discount
    kind: continuous
    low: 0.5
    high: 0.99
";

/// Relative path (under `configs/`) and contents of every scaffolded file.
pub const FILES: [(&str, &str); 7] = [
    ("environment/default.yaml", DEFAULT_ENVIRONMENT),
    ("environment/three_abx_w_crossresistance.yaml", THREE_ABX_ENVIRONMENT),
    ("reward_calculator/default.yaml", DEFAULT_REWARD),
    ("patient_generator/default.yaml", DEFAULT_PATIENT_GENERATOR),
    ("agent_algorithm/default.yaml", DEFAULT_AGENT),
    ("umbrella_configs/base_experiment.yaml", BASE_EXPERIMENT),
    ("tuning/default.yaml", DEFAULT_TUNING),
];

/// Writes the default config tree under `target_dir/configs/`. Refuses to
/// touch anything if a file already exists, unless `force` is set.
pub fn scaffold_defaults(target_dir: impl AsRef<Path>, force: bool) -> Result<Vec<PathBuf>> {
    let root = target_dir.as_ref().join("configs");
    let targets: Vec<(PathBuf, &str)> = FILES.iter().map(|(rel, text)| (root.join(rel), *text)).collect();
    if !force {
        if let Some((path, _)) = targets.iter().find(|(p, _)| p.exists()) {
            return Err(Error::AlreadyExists { path: path.clone() });
        }
    }
    let mut created = Vec::with_capacity(targets.len());
    for (path, text) in targets {
        let dir = path.parent().expect("scaffold paths have parents");
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        created.push(path);
    }
    Ok(created)
}

/// Path of the umbrella file inside a scaffolded tree.
pub fn umbrella_path(target_dir: impl AsRef<Path>) -> PathBuf {
    target_dir
        .as_ref()
        .join("configs/umbrella_configs/base_experiment.yaml")
}
