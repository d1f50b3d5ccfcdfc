use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::par_map;
use super::run::{timestamp, train, TrainOptions};
use crate::config::{apply_overrides, to_yaml, ExperimentConfig, OverrideDirective};
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterKind {
    Continuous,
    LogContinuous,
    Integer,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningParameter {
    /// Dot path into the experiment config, as accepted by `--p`.
    pub path: String,
    pub kind: ParameterKind,
    #[serde(default)]
    pub low: Option<f64>,
    #[serde(default)]
    pub high: Option<f64>,
    /// Choices for categorical parameters.
    #[serde(default)]
    pub values: Vec<serde_yaml::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningSpec {
    pub num_trials: usize,
    /// Training episodes per trial.
    pub episodes_per_trial: usize,
    pub seed: u64,
    pub parameters: Vec<TuningParameter>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub trial: usize,
    /// Mean return of the final eval block.
    pub objective: f64,
    /// `(path, value)` in spec order, values as passed to the override parser.
    pub values: Vec<(String, String)>,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone)]
pub struct TuneRecord {
    pub tune_dir: PathBuf,
    /// Best first; ties keep trial order.
    pub leaderboard: Vec<TrialResult>,
    pub best: ExperimentConfig,
}

impl TuningSpec {
    pub fn from_yaml(text: &str, origin: &Path) -> Result<Self> {
        let spec: TuningSpec = serde_yaml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            location: e.location().map(|l| (l.line(), l.column())),
            message: e.to_string(),
        })?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile { path: path.to_path_buf() }
            } else {
                Error::io(path, e)
            }
        })?;
        Self::from_yaml(&text, path)
    }

    /// Checks ranges and that every path resolves against `base`, without
    /// running anything.
    pub fn validate(&self, base: &ExperimentConfig) -> Result<()> {
        if self.num_trials == 0 {
            return Err(Error::validation("tuning.num_trials", "must be at least 1"));
        }
        if self.episodes_per_trial == 0 {
            return Err(Error::validation("tuning.episodes_per_trial", "must be at least 1"));
        }
        for (i, p) in self.parameters.iter().enumerate() {
            let key = format!("tuning.parameters.{i}");
            match p.kind {
                ParameterKind::Categorical => {
                    if p.values.is_empty() {
                        return Err(Error::validation(format!("{key}.values"), "categorical parameters need at least one value"));
                    }
                    for v in &p.values {
                        scalar_text(v).ok_or_else(|| Error::validation(format!("{key}.values"), "values must be scalars"))?;
                    }
                }
                kind => {
                    let (Some(lo), Some(hi)) = (p.low, p.high) else {
                        return Err(Error::validation(key, "low and high are required"));
                    };
                    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                        return Err(Error::validation(key, "low must be below high"));
                    }
                    if kind == ParameterKind::LogContinuous && lo <= 0.0 {
                        return Err(Error::validation(format!("{key}.low"), "log_continuous ranges must be positive"));
                    }
                    if kind == ParameterKind::Integer && lo.ceil() > hi.floor() {
                        return Err(Error::validation(key, "range contains no integer"));
                    }
                }
            }
            // Every admissible value must produce a valid config; probing with
            // one sample catches unknown paths and type errors up front.
            let probe = self.draw_one(p, &mut rng::seeded(0));
            apply_overrides(base, &[OverrideDirective::parameter(&format!("{}={probe}", p.path))?])?;
        }
        Ok(())
    }

    fn draw_one(&self, p: &TuningParameter, rng: &mut rng::StreamRng) -> String {
        let lo = p.low.unwrap_or(0.0);
        let hi = p.high.unwrap_or(1.0);
        match p.kind {
            ParameterKind::Continuous => rng.random_range(lo..hi).to_string(),
            ParameterKind::LogContinuous => rng.random_range(lo.ln()..hi.ln()).exp().to_string(),
            ParameterKind::Integer => rng.random_range(lo.ceil() as i64..=hi.floor() as i64).to_string(),
            ParameterKind::Categorical => {
                let i = rng.random_range(0..p.values.len());
                scalar_text(&p.values[i]).expect("validated scalar")
            }
        }
    }

    /// Parameter values for trial `i`; depends only on the tuning seed and `i`.
    pub fn sample(&self, trial: usize) -> Vec<(String, String)> {
        let mut rng = rng::seeded(derive_seed(self.seed, rng::TUNE, trial as u64));
        self.parameters
            .iter()
            .map(|p| (p.path.clone(), self.draw_one(p, &mut rng)))
            .collect()
    }
}

fn scalar_text(v: &serde_yaml::Value) -> Option<String> {
    match v {
        serde_yaml::Value::Bool(b) => Some(b.to_string()),
        serde_yaml::Value::Number(n) => Some(n.to_string()),
        serde_yaml::Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

/// Trial config: sampled values applied on top of `base`, with the trial
/// budget and a per-trial run name.
pub fn trial_config(base: &ExperimentConfig, spec: &TuningSpec, trial: usize) -> Result<ExperimentConfig> {
    let mut directives = Vec::new();
    for (path, value) in spec.sample(trial) {
        directives.push(OverrideDirective::parameter(&format!("{path}={value}"))?);
    }
    let mut config = apply_overrides(base, &directives)?;
    config.training.total_num_training_episodes = spec.episodes_per_trial;
    config.training.run_name = format!("{}_trial{trial:03}", base.training.run_name);
    config.training.log_patient_trajectories = false;
    config.validate()?;
    Ok(config)
}

pub fn leaderboard_csv(spec: &TuningSpec, leaderboard: &[TrialResult]) -> String {
    let mut out = String::from("rank,trial,objective");
    for p in &spec.parameters {
        out.push(',');
        out.push_str(&p.path);
    }
    out.push('\n');
    for (rank, r) in leaderboard.iter().enumerate() {
        out.push_str(&format!("{},{},{}", rank + 1, r.trial, r.objective));
        for (_, v) in &r.values {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
    }
    out
}

/// Seeded random search. Each trial trains in its own subfolder of
/// `<results_root>/<tune_id>/trials/`; the leaderboard and best config are
/// written next to it.
pub fn tune(base: &ExperimentConfig, spec: &TuningSpec, options: &TrainOptions) -> Result<TuneRecord> {
    base.validate()?;
    spec.validate(base)?;
    let configs: Vec<ExperimentConfig> = (0..spec.num_trials)
        .map(|i| trial_config(base, spec, i))
        .collect::<Result<_>>()?;

    let tune_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}_tune_{}", base.training.run_name, timestamp()));
    let tune_dir = options.results_root.join(&tune_id);
    fs::create_dir_all(&options.results_root).map_err(|e| Error::io(&options.results_root, e))?;
    match fs::create_dir(&tune_dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(Error::AlreadyExists { path: tune_dir });
        }
        Err(e) => return Err(Error::io(&tune_dir, e)),
    }
    let trials_root = tune_dir.join("trials");

    let indexed: Vec<(usize, &ExperimentConfig)> = configs.iter().enumerate().collect();
    let outcomes = par_map(&indexed, options.parallel.max(1), |&(i, config)| {
        let opts = TrainOptions {
            results_root: trials_root.clone(),
            run_id: Some(format!("trial_{i:03}")),
            parallel: 1,
        };
        train(config, &opts).map(|r| r.final_eval.mean)
    });

    let mut leaderboard = Vec::with_capacity(spec.num_trials);
    for (i, (objective, config)) in outcomes.into_iter().zip(configs).enumerate() {
        leaderboard.push(TrialResult {
            trial: i,
            objective: objective?,
            values: spec.sample(i),
            config,
        });
    }
    leaderboard.sort_by(|a, b| b.objective.total_cmp(&a.objective).then(a.trial.cmp(&b.trial)));

    let board_path = tune_dir.join("leaderboard.csv");
    fs::write(&board_path, leaderboard_csv(spec, &leaderboard)).map_err(|e| Error::io(&board_path, e))?;
    let best = leaderboard[0].config.clone();
    let best_path = tune_dir.join("best_config.yaml");
    fs::write(&best_path, to_yaml(&best)).map_err(|e| Error::io(&best_path, e))?;

    Ok(TuneRecord {
        tune_dir,
        leaderboard,
        best,
    })
}
