use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::AgentConfig;
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

use super::Transition;

/// Discretized per-slot state: binned antibiogram plus the slot's binned π̂.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub sigma: Vec<u8>,
    pub pi: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEntry {
    pub values: Vec<f64>,
    pub visits: u64,
}

/// Equal-width bin of a value in `[0, 1]`.
pub fn bin(x: f64, bins: usize) -> u8 {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    ((x * bins as f64).floor() as usize).min(bins - 1) as u8
}

/// Factored tabular Q-learning: one shared table indexed by
/// `(binned σ̂, binned π̂_i)`, updated once per patient slot with the shared
/// step reward.
#[derive(Debug, Clone)]
pub struct TabularQ {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub sigma_bins: usize,
    pub pi_bins: usize,
    pub num_antibiotics: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub table: BTreeMap<StateKey, QEntry>,
    rng: StreamRng,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct TabularSnapshot {
    pub num_antibiotics: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_episodes: usize,
    pub sigma_bins: usize,
    pub pi_bins: usize,
    pub epsilon: f64,
    pub entries: Vec<SnapshotEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct SnapshotEntry {
    pub sigma: Vec<u8>,
    pub pi: u8,
    pub values: Vec<f64>,
    pub visits: u64,
}

impl TabularQ {
    pub fn new(config: &AgentConfig, num_antibiotics: usize) -> Self {
        TabularQ {
            learning_rate: config.learning_rate,
            discount: config.discount,
            epsilon_start: config.epsilon_start,
            epsilon_end: config.epsilon_end,
            epsilon_decay_episodes: config.epsilon_decay_episodes,
            sigma_bins: config.sigma_bins,
            pi_bins: config.pi_bins,
            num_antibiotics,
            seed: config.seed,
            epsilon: config.epsilon_start,
            table: BTreeMap::new(),
            rng: rng::stream(config.seed, rng::AGENT),
        }
    }

    pub fn reseed(&mut self, seed: u64) {
        self.rng = rng::seeded(seed);
    }

    /// Linear decay from `epsilon_start` to `epsilon_end`.
    pub fn begin_episode(&mut self, episode: usize) {
        if episode >= self.epsilon_decay_episodes {
            self.epsilon = self.epsilon_end;
            return;
        }
        let frac = episode as f64 / self.epsilon_decay_episodes as f64;
        self.epsilon = self.epsilon_start + (self.epsilon_end - self.epsilon_start) * frac;
    }

    pub fn key<T: Scalar>(&self, obs: &Observation<T>, slot: usize) -> StateKey {
        StateKey {
            sigma: obs
                .sigma_hat()
                .iter()
                .map(|s| bin(s.as_f64(), self.sigma_bins))
                .collect(),
            pi: bin(obs.pi_hat(slot).as_f64(), self.pi_bins),
        }
    }

    /// Action values for a state; unvisited states read as zeros.
    pub fn values(&self, key: &StateKey) -> Vec<f64> {
        self.table
            .get(key)
            .map(|e| e.values.clone())
            .unwrap_or_else(|| vec![0.0; self.num_antibiotics + 1])
    }

    fn check<T: Scalar>(&self, obs: &Observation<T>) -> Result<()> {
        if obs.layout.num_antibiotics != self.num_antibiotics {
            return Err(Error::Dimension {
                what: "observation antibiotics",
                expected: self.num_antibiotics,
                found: obs.layout.num_antibiotics,
            });
        }
        Ok(())
    }

    pub fn act<T: Scalar>(&mut self, obs: &Observation<T>, explore: bool) -> Result<Vec<usize>> {
        self.check(obs)?;
        let mut actions = Vec::with_capacity(obs.layout.num_patients);
        for slot in 0..obs.layout.num_patients {
            if explore && self.epsilon > 0.0 && self.rng.random::<f64>() < self.epsilon {
                actions.push(self.rng.random_range(0..=self.num_antibiotics));
            } else {
                actions.push(argmax(&self.values(&self.key(obs, slot))));
            }
        }
        Ok(actions)
    }

    pub fn learn<T: Scalar>(&mut self, tr: &Transition<'_, T>) -> Result<()> {
        self.check(tr.observation)?;
        self.check(tr.next_observation)?;
        let reward = tr.reward.as_f64();
        for (slot, &action) in tr.action.iter().enumerate() {
            let target = if tr.truncated {
                reward
            } else {
                let next = self.values(&self.key(tr.next_observation, slot));
                reward + self.discount * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let key = self.key(tr.observation, slot);
            let width = self.num_antibiotics + 1;
            let entry = self.table.entry(key).or_insert_with(|| QEntry {
                values: vec![0.0; width],
                visits: 0,
            });
            let q = &mut entry.values[action];
            *q += self.learning_rate * (target - *q);
            entry.visits += 1;
        }
        Ok(())
    }

    pub(crate) fn snapshot(&self) -> TabularSnapshot {
        TabularSnapshot {
            num_antibiotics: self.num_antibiotics,
            seed: self.seed,
            learning_rate: self.learning_rate,
            discount: self.discount,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_episodes: self.epsilon_decay_episodes,
            sigma_bins: self.sigma_bins,
            pi_bins: self.pi_bins,
            epsilon: self.epsilon,
            entries: self
                .table
                .iter()
                .map(|(k, e)| SnapshotEntry {
                    sigma: k.sigma.clone(),
                    pi: k.pi,
                    values: e.values.clone(),
                    visits: e.visits,
                })
                .collect(),
        }
    }

    pub(crate) fn restore(s: TabularSnapshot) -> std::result::Result<Self, String> {
        let width = s.num_antibiotics + 1;
        let mut table = BTreeMap::new();
        for e in s.entries {
            if e.sigma.len() != s.num_antibiotics || e.values.len() != width {
                return Err(format!(
                    "table entry has {} resistance bins and {} action values; expected {} and {}",
                    e.sigma.len(),
                    e.values.len(),
                    s.num_antibiotics,
                    width
                ));
            }
            if e.values.iter().any(|v| !v.is_finite()) {
                return Err("table contains non-finite values".into());
            }
            table.insert(StateKey { sigma: e.sigma, pi: e.pi }, QEntry { values: e.values, visits: e.visits });
        }
        if s.sigma_bins == 0 || s.pi_bins == 0 {
            return Err("bin counts must be positive".into());
        }
        Ok(TabularQ {
            learning_rate: s.learning_rate,
            discount: s.discount,
            epsilon_start: s.epsilon_start,
            epsilon_end: s.epsilon_end,
            epsilon_decay_episodes: s.epsilon_decay_episodes,
            sigma_bins: s.sigma_bins,
            pi_bins: s.pi_bins,
            num_antibiotics: s.num_antibiotics,
            seed: s.seed,
            epsilon: s.epsilon,
            table,
            rng: rng::stream(s.seed, rng::AGENT),
        })
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
