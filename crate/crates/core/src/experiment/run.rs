use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::metrics::{header, MetricsRow, MetricsTable, Phase};
use super::par_map;
use crate::agents::{config_fingerprint, Agent, Transition};
use crate::config::{to_yaml, ExperimentConfig};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::rng::{self, derive_seed};

/// Overrides the default `results` root.
pub const RESULTS_DIR_ENV: &str = "AMRSIM_RESULTS_DIR";

pub fn default_results_root() -> PathBuf {
    std::env::var_os(RESULTS_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// UTC, second resolution, sortable.
pub fn timestamp() -> String {
    chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string()
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub results_root: PathBuf,
    /// Pins the run folder name instead of `<run_name>_<timestamp>`.
    pub run_id: Option<String>,
    pub parallel: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            results_root: default_results_root(),
            run_id: None,
            parallel: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStats {
    pub ret: f64,
    pub mean_individual: f64,
    pub mean_community: f64,
    pub final_sigma: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single episode.
    pub sd: f64,
    pub returns: Vec<f64>,
}

impl EvalSummary {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len();
        let mean = if n == 0 { 0.0 } else { returns.iter().sum::<f64>() / n as f64 };
        let sd = if n < 2 {
            0.0
        } else {
            (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        EvalSummary { mean, sd, returns }
    }
}

#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: String,
    pub run_dir: PathBuf,
    pub config: ExperimentConfig,
    pub metrics: MetricsTable,
    pub checkpoints: Vec<PathBuf>,
    pub final_policy: PathBuf,
    pub final_eval: EvalSummary,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    run_id: &'a str,
    run_name: &'a str,
    algorithm: &'a str,
    training_episodes: usize,
    eval_blocks: usize,
    final_eval: &'a EvalSummary,
    checkpoints: Vec<String>,
    final_policy: String,
}

/// Episode seed for training episode `index` (0-based).
pub fn train_seed(config: &ExperimentConfig, index: usize) -> u64 {
    derive_seed(config.training.seed, rng::TRAIN, index as u64)
}

/// Episode seed for the `k`-th episode of every eval block.
pub fn eval_seed(config: &ExperimentConfig, k: usize) -> u64 {
    derive_seed(config.training.seed, rng::EVAL, k as u64)
}

/// Runs one full episode. Learning happens only when `learn` is set; the
/// trajectory sink, when given, receives one JSON record per step.
pub fn run_episode(
    env: &mut Environment<f64>,
    agent: &mut Agent,
    seed: u64,
    learn: bool,
    mut trajectory: Option<(&mut Vec<String>, serde_json::Value)>,
) -> Result<EpisodeStats> {
    let (mut obs, reset) = env.reset(seed);
    let mut stats = EpisodeStats {
        ret: 0.0,
        mean_individual: 0.0,
        mean_community: 0.0,
        final_sigma: reset.true_sigma,
    };
    let mut steps = 0usize;
    loop {
        let action = agent.act(&obs, learn)?;
        let step = env.step(&action)?;
        if learn {
            agent.learn(&Transition {
                observation: &obs,
                action: &action,
                reward: step.reward,
                next_observation: &step.observation,
                truncated: step.truncated,
            })?;
        }
        stats.ret += step.reward;
        stats.mean_individual += step.info.breakdown.individual_mean;
        stats.mean_community += step.info.breakdown.community_mean;
        steps += 1;
        if let Some((sink, tag)) = trajectory.as_mut() {
            let patients: Vec<_> = step
                .info
                .cohort
                .iter()
                .zip(&step.info.breakdown.outcomes)
                .map(|(p, o)| {
                    json!({
                        "pi": p.pi,
                        "infected": o.infected,
                        "action": o.action.map(|a| a + 1).unwrap_or(0),
                        "resistant": o.resistant,
                        "outcome": o.result.name(),
                        "raw_reward": o.raw_reward,
                    })
                })
                .collect();
            let mut record = tag.clone();
            let fields = record.as_object_mut().expect("trajectory tag is an object");
            fields.insert("t".into(), json!(step.info.t));
            fields.insert("observed_sigma".into(), json!(obs.sigma_hat()));
            fields.insert("actions".into(), json!(action));
            fields.insert("reward".into(), json!(step.reward));
            fields.insert("individual".into(), json!(step.info.breakdown.individual_mean));
            fields.insert("community".into(), json!(step.info.breakdown.community_mean));
            fields.insert("true_sigma".into(), json!(step.info.true_sigma));
            fields.insert("patients".into(), json!(patients));
            sink.push(record.to_string());
        }
        let done = step.truncated || step.terminated;
        stats.final_sigma = step.info.true_sigma;
        obs = step.observation;
        if done {
            break;
        }
    }
    if steps > 0 {
        stats.mean_individual /= steps as f64;
        stats.mean_community /= steps as f64;
    }
    Ok(stats)
}

/// Greedy evaluation of `agent` on eval seeds `0..n`; the agent is cloned
/// and reseeded per episode so results do not depend on scheduling.
fn eval_block(
    config: &ExperimentConfig,
    agent: &Agent,
    n: usize,
    parallel: usize,
    log: bool,
    block: usize,
) -> Result<Vec<(EpisodeStats, Vec<String>)>> {
    let indices: Vec<usize> = (0..n).collect();
    par_map(&indices, parallel, |&k| {
        let mut env = Environment::<f64>::new(config)?;
        let mut agent = agent.clone();
        let seed = eval_seed(config, k);
        agent.reseed(derive_seed(seed, rng::AGENT, 0));
        let mut lines = Vec::new();
        let sink = log.then(|| (&mut lines, json!({"phase": "eval", "episode": block, "eval_episode": k})));
        let stats = run_episode(&mut env, &mut agent, seed, false, sink)?;
        Ok((stats, lines))
    })
    .into_iter()
    .collect()
}

fn row(episode: usize, phase: Phase, eval_episode: Option<usize>, s: &EpisodeStats) -> MetricsRow {
    MetricsRow {
        episode,
        phase,
        eval_episode,
        ret: s.ret,
        mean_individual: s.mean_individual,
        mean_community: s.mean_community,
        final_sigma: s.final_sigma.clone(),
    }
}

struct Appender {
    file: fs::File,
    path: PathBuf,
}

impl Appender {
    fn create(path: PathBuf) -> Result<Self> {
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Appender { file, path })
    }

    fn line(&mut self, text: &str) -> Result<()> {
        writeln!(self.file, "{text}").map_err(|e| Error::io(&self.path, e))
    }
}

fn create_run_dir(root: &Path, run_id: &str) -> Result<PathBuf> {
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let dir = root.join(run_id);
    match fs::create_dir(&dir) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
            return Err(Error::AlreadyExists { path: dir });
        }
        Err(e) => return Err(Error::io(&dir, e)),
    }
    let checkpoints = dir.join("checkpoints");
    fs::create_dir(&checkpoints).map_err(|e| Error::io(&checkpoints, e))?;
    Ok(dir)
}

/// Runs a full training job into a fresh run folder.
///
/// Layout: `resolved_config.yaml`, `metrics.csv`, `trajectories.jsonl` (when
/// trajectory logging is on), `checkpoints/` and `summary.json`. An eval block
/// runs after every `eval_freq` training episodes, and once more at the end
/// if the last episode was not an eval tick.
pub fn train(config: &ExperimentConfig, options: &TrainOptions) -> Result<RunRecord> {
    config.validate()?;
    let training = &config.training;
    let mut env = Environment::<f64>::new(config)?;
    let mut agent = Agent::from_config(&config.agent_algorithm, config.num_antibiotics());
    agent.reseed(derive_seed(training.seed, rng::AGENT, config.agent_algorithm.seed));

    let run_id = options
        .run_id
        .clone()
        .unwrap_or_else(|| format!("{}_{}", training.run_name, timestamp()));
    let run_dir = create_run_dir(&options.results_root, &run_id)?;
    let resolved = run_dir.join("resolved_config.yaml");
    fs::write(&resolved, to_yaml(config)).map_err(|e| Error::io(&resolved, e))?;

    let names = config.antibiotic_names();
    let fingerprint = config_fingerprint(&config.agent_algorithm, &names);
    let mut metrics = Appender::create(run_dir.join("metrics.csv"))?;
    let columns = header(&names);
    metrics.line(&columns)?;
    let mut trajectories = if training.log_patient_trajectories {
        Some(Appender::create(run_dir.join("trajectories.jsonl"))?)
    } else {
        None
    };

    let mut rows = Vec::new();
    let mut checkpoints = Vec::new();
    let mut final_eval = None;
    let mut eval_blocks = 0;
    let total = training.total_num_training_episodes;
    let parallel = options.parallel.max(1);
    for ep in 1..=total {
        agent.begin_episode(ep - 1);
        let mut lines = Vec::new();
        let sink = trajectories
            .is_some()
            .then(|| (&mut lines, json!({"phase": "train", "episode": ep})));
        let stats = run_episode(&mut env, &mut agent, train_seed(config, ep - 1), true, sink)?;
        let r = row(ep, Phase::Train, None, &stats);
        metrics.line(&r.csv_line())?;
        rows.push(r);
        if let Some(t) = trajectories.as_mut() {
            for l in &lines {
                t.line(l)?;
            }
        }

        if ep % training.save_freq_every_n_episodes == 0 {
            let path = run_dir.join("checkpoints").join(format!("episode_{ep:06}.json"));
            agent.save(&path, Some(fingerprint.clone()))?;
            checkpoints.push(path);
        }
        if ep % training.eval_freq_every_n_episodes == 0 || ep == total {
            let block = eval_block(
                config,
                &agent,
                training.num_eval_episodes,
                parallel,
                trajectories.is_some(),
                ep,
            )?;
            let mut returns = Vec::with_capacity(block.len());
            for (k, (stats, lines)) in block.into_iter().enumerate() {
                let r = row(ep, Phase::Eval, Some(k), &stats);
                metrics.line(&r.csv_line())?;
                rows.push(r);
                returns.push(stats.ret);
                if let Some(t) = trajectories.as_mut() {
                    for l in &lines {
                        t.line(l)?;
                    }
                }
            }
            eval_blocks += 1;
            final_eval = Some(EvalSummary::from_returns(returns));
        }
    }
    let final_eval = final_eval.expect("last training episode always evaluates");

    let final_policy = run_dir.join("checkpoints").join("final.json");
    agent.save(&final_policy, Some(fingerprint))?;
    if checkpoints.is_empty() {
        checkpoints.push(final_policy.clone());
    }
    let rel = |p: &Path| p.strip_prefix(&run_dir).unwrap_or(p).to_string_lossy().into_owned();
    let summary = Summary {
        run_id: &run_id,
        run_name: &training.run_name,
        algorithm: config.agent_algorithm.algorithm.name(),
        training_episodes: total,
        eval_blocks,
        final_eval: &final_eval,
        checkpoints: checkpoints.iter().map(|p| rel(p)).collect(),
        final_policy: rel(&final_policy),
    };
    let summary_path = run_dir.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).expect("summary serializes"))
        .map_err(|e| Error::io(&summary_path, e))?;

    Ok(RunRecord {
        run_id,
        run_dir,
        config: config.clone(),
        metrics: MetricsTable {
            columns: columns.split(',').map(str::to_string).collect(),
            rows,
        },
        checkpoints,
        final_policy,
        final_eval,
    })
}

/// Greedy evaluation of a saved policy on the eval seeds of `config`.
pub fn evaluate(
    config: &ExperimentConfig,
    policy_path: impl AsRef<Path>,
    num_episodes: usize,
    parallel: usize,
) -> Result<EvalSummary> {
    config.validate()?;
    let agent = Agent::load(policy_path, config.num_antibiotics())?;
    evaluate_agent(config, &agent, num_episodes, parallel)
}

pub fn evaluate_agent(
    config: &ExperimentConfig,
    agent: &Agent,
    num_episodes: usize,
    parallel: usize,
) -> Result<EvalSummary> {
    let block = eval_block(config, agent, num_episodes, parallel.max(1), false, 0)?;
    Ok(EvalSummary::from_returns(block.into_iter().map(|(s, _)| s.ret).collect()))
}
