//! Built-in prescribing policies behind one act/learn interface.
//!
//! Policy files are JSON documents tagged with `format`, `version` and
//! `algorithm`; see the README for the schema.

mod tabular;

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{AgentConfig, Algorithm};
use crate::env::Observation;
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

pub use tabular::{argmax, bin, QEntry, StateKey, TabularQ};
use tabular::TabularSnapshot;

pub const POLICY_FORMAT: &str = "amrsim-policy";
pub const POLICY_VERSION: u32 = 1;

/// One environment transition as seen by a learning agent.
#[derive(Debug, Clone, Copy)]
pub struct Transition<'a, T> {
    pub observation: &'a Observation<T>,
    pub action: &'a [usize],
    pub reward: T,
    pub next_observation: &'a Observation<T>,
    pub truncated: bool,
}

#[derive(Debug, Clone)]
pub struct RandomAgent {
    pub seed: u64,
    rng: StreamRng,
}

#[derive(Debug, Clone)]
pub enum Agent {
    Random(RandomAgent),
    NeverTreat,
    /// Treat slots with `π̂ ≥ threshold` using the antibiotic with the lowest
    /// observed resistance.
    GreedyHeuristic { threshold: f64 },
    TabularQ(TabularQ),
}

impl Agent {
    pub fn from_config(config: &AgentConfig, num_antibiotics: usize) -> Self {
        match config.algorithm {
            Algorithm::Random => Agent::Random(RandomAgent {
                seed: config.seed,
                rng: rng::stream(config.seed, rng::AGENT),
            }),
            Algorithm::NeverTreat => Agent::NeverTreat,
            Algorithm::GreedyHeuristic => Agent::GreedyHeuristic {
                threshold: config.threshold,
            },
            Algorithm::TabularQ => Agent::TabularQ(TabularQ::new(config, num_antibiotics)),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            Agent::Random(_) => Algorithm::Random,
            Agent::NeverTreat => Algorithm::NeverTreat,
            Agent::GreedyHeuristic { .. } => Algorithm::GreedyHeuristic,
            Agent::TabularQ(_) => Algorithm::TabularQ,
        }
    }

    /// Replaces the exploration stream, e.g. per evaluation episode.
    pub fn reseed(&mut self, seed: u64) {
        match self {
            Agent::Random(r) => r.rng = rng::seeded(seed),
            Agent::TabularQ(q) => q.reseed(seed),
            _ => {}
        }
    }

    pub fn begin_episode(&mut self, episode: usize) {
        if let Agent::TabularQ(q) = self {
            q.begin_episode(episode);
        }
    }

    /// One action per patient slot: 0 = no treatment, `a` = antibiotic `a`.
    pub fn act<T: Scalar>(&mut self, obs: &Observation<T>, explore: bool) -> Result<Vec<usize>> {
        let slots = obs.layout.num_patients;
        let abx = obs.layout.num_antibiotics;
        if obs.values.len() != obs.layout.len() {
            return Err(Error::Dimension {
                what: "observation vector",
                expected: obs.layout.len(),
                found: obs.values.len(),
            });
        }
        match self {
            Agent::Random(r) => Ok((0..slots).map(|_| r.rng.random_range(0..=abx)).collect()),
            Agent::NeverTreat => Ok(vec![0; slots]),
            Agent::GreedyHeuristic { threshold } => {
                let sigma = obs.sigma_hat();
                let mut best = 0;
                for (a, s) in sigma.iter().enumerate() {
                    if *s < sigma[best] {
                        best = a;
                    }
                }
                let threshold = T::lit(*threshold);
                Ok((0..slots)
                    .map(|slot| if obs.pi_hat(slot) >= threshold { best + 1 } else { 0 })
                    .collect())
            }
            Agent::TabularQ(q) => q.act(obs, explore),
        }
    }

    /// No-op for non-learning agents.
    pub fn learn<T: Scalar>(&mut self, transition: &Transition<'_, T>) -> Result<()> {
        match self {
            Agent::TabularQ(q) => q.learn(transition),
            _ => Ok(()),
        }
    }

    fn to_file(&self, fingerprint: Option<String>) -> PolicyFile {
        let body = match self {
            Agent::Random(r) => PolicyBody::Random { seed: r.seed },
            Agent::NeverTreat => PolicyBody::NeverTreat {},
            Agent::GreedyHeuristic { threshold } => PolicyBody::GreedyHeuristic { threshold: *threshold },
            Agent::TabularQ(q) => PolicyBody::TabularQ {
                config_fingerprint: fingerprint.unwrap_or_default(),
                table: q.snapshot(),
            },
        };
        PolicyFile {
            format: POLICY_FORMAT.to_string(),
            version: POLICY_VERSION,
            body,
        }
    }

    pub fn to_json(&self, fingerprint: Option<String>) -> String {
        serde_json::to_string_pretty(&self.to_file(fingerprint)).expect("policy serializes")
    }

    /// Writes the policy to `path`. `fingerprint` identifies the config that
    /// produced a learned table.
    pub fn save(&self, path: impl AsRef<Path>, fingerprint: Option<String>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json(fingerprint)).map_err(|e| Error::io(path, e))
    }

    /// Restores a saved policy; `num_antibiotics` is checked against learned
    /// tables.
    pub fn load(path: impl AsRef<Path>, num_antibiotics: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let fail = |message: String| Error::PolicyLoad {
            path: path.to_path_buf(),
            message,
        };
        let header: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| fail(format!("corrupt policy file: {e}")))?;
        if header.get("format").and_then(|f| f.as_str()) != Some(POLICY_FORMAT) {
            return Err(fail(format!("not an {POLICY_FORMAT} file")));
        }
        match header.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == u64::from(POLICY_VERSION) => {}
            Some(v) => return Err(fail(format!("unsupported version {v}; this build reads {POLICY_VERSION}"))),
            None => return Err(fail("missing version".into())),
        }
        let file: PolicyFile =
            serde_json::from_value(header).map_err(|e| fail(format!("corrupt policy file: {e}")))?;
        Ok(match file.body {
            PolicyBody::Random { seed } => Agent::Random(RandomAgent {
                seed,
                rng: rng::stream(seed, rng::AGENT),
            }),
            PolicyBody::NeverTreat {} => Agent::NeverTreat,
            PolicyBody::GreedyHeuristic { threshold } => Agent::GreedyHeuristic { threshold },
            PolicyBody::TabularQ { table, .. } => {
                if table.num_antibiotics != num_antibiotics {
                    return Err(Error::Dimension {
                        what: "policy antibiotics",
                        expected: num_antibiotics,
                        found: table.num_antibiotics,
                    });
                }
                Agent::TabularQ(TabularQ::restore(table).map_err(fail)?)
            }
        })
    }
}

/// Short hex digest identifying the agent config and antibiotic set a policy
/// was trained against.
pub fn config_fingerprint(agent: &AgentConfig, antibiotics: &[String]) -> String {
    let mut h = Sha256::new();
    h.update(serde_yaml::to_string(agent).expect("agent config serializes"));
    for name in antibiotics {
        h.update([0u8]);
        h.update(name.as_bytes());
    }
    h.finalize().iter().take(16).map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    body: PolicyBody,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
enum PolicyBody {
    Random { seed: u64 },
    NeverTreat {},
    GreedyHeuristic { threshold: f64 },
    TabularQ {
        config_fingerprint: String,
        table: TabularSnapshot,
    },
}
