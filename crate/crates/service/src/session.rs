use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use amrsim::config::{Attribute, ExperimentConfig};
use amrsim::env::{ActionSpace, Environment, Observation};
use serde::Serialize;

use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Active,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservedPatientView {
    pub slot: usize,
    pub pi_hat: f64,
    /// Further observable attributes, keyed by name.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<&'static str, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservationView {
    pub antibiogram: Vec<f64>,
    /// Step index at which the antibiogram was last refreshed.
    pub antibiogram_refreshed_at: usize,
    pub patients: Vec<ObservedPatientView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RewardView {
    pub overall: f64,
    pub individual: f64,
    pub community: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryEntry {
    /// Step index after the action was applied.
    pub step_index: usize,
    /// What the prescriber saw when choosing.
    pub observation: ObservationView,
    pub actions: Vec<usize>,
    pub reward: RewardView,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RevealedPatient {
    pub slot: usize,
    pub pi: f64,
    pub infected: bool,
    pub action: usize,
    pub resistant: Option<bool>,
    pub outcome: &'static str,
    pub raw_reward: f64,
}

/// Latent truth, only serialized once the episode is over.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Reveal {
    /// One row per step, starting with the reset state.
    pub true_sigma: Vec<Vec<f64>>,
    pub infected_counts: Vec<usize>,
    pub patients: Vec<Vec<RevealedPatient>>,
    pub cumulative_reward: RewardView,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionView {
    pub session_id: String,
    pub status: Status,
    pub step_index: usize,
    pub max_time_steps: usize,
    pub antibiotic_names: Vec<String>,
    pub action_space: ActionSpaceView,
    pub observation: ObservationView,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub last_reward: Option<RewardView>,
    pub finished: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reveal: Option<Reveal>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ActionSpaceView {
    pub num_slots: usize,
    pub choices_per_slot: usize,
    /// Inclusive bounds of each slot's action; 0 means no treatment.
    pub allowed_range: [usize; 2],
}

impl From<ActionSpace> for ActionSpaceView {
    fn from(a: ActionSpace) -> Self {
        ActionSpaceView {
            num_slots: a.num_slots,
            choices_per_slot: a.choices_per_slot,
            allowed_range: [0, a.choices_per_slot - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HistoryView {
    pub session_id: String,
    pub status: Status,
    pub entries: Vec<HistoryEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reveal: Option<Reveal>,
}

pub struct Session {
    id: String,
    env: Environment<f64>,
    names: Vec<String>,
    observation: ObservationView,
    history: Vec<HistoryEntry>,
    reveal: Reveal,
}

fn observation_view(env: &Environment<f64>, obs: &Observation<f64>) -> ObservationView {
    let (_, refreshed) = env.antibiogram().expect("session environment is reset");
    ObservationView {
        antibiogram: obs.sigma_hat().to_vec(),
        antibiogram_refreshed_at: refreshed,
        patients: (0..obs.layout.num_patients)
            .map(|slot| {
                let values = obs.patient(slot);
                let mut attributes = BTreeMap::new();
                let mut pi_hat = 0.0;
                for (attr, &v) in obs.layout.patient_fields.iter().zip(values) {
                    if *attr == Attribute::Pi {
                        pi_hat = v;
                    } else {
                        attributes.insert(attr.name(), v);
                    }
                }
                ObservedPatientView { slot, pi_hat, attributes }
            })
            .collect(),
    }
}

impl Session {
    pub fn new(id: String, config: &ExperimentConfig, seed: u64) -> amrsim::Result<Self> {
        let mut env = Environment::<f64>::new(config)?;
        let (obs, info) = env.reset(seed);
        let observation = observation_view(&env, &obs);
        Ok(Session {
            id,
            env,
            names: config.antibiotic_names(),
            observation,
            history: Vec::new(),
            reveal: Reveal {
                true_sigma: vec![info.true_sigma],
                infected_counts: Vec::new(),
                patients: Vec::new(),
                cumulative_reward: RewardView {
                    overall: 0.0,
                    individual: 0.0,
                    community: 0.0,
                },
            },
        })
    }

    pub fn status(&self) -> Status {
        if self.env.is_finished() {
            Status::Finished
        } else {
            Status::Active
        }
    }

    pub fn view(&self) -> SessionView {
        let finished = self.status() == Status::Finished;
        SessionView {
            session_id: self.id.clone(),
            status: self.status(),
            step_index: self.env.t(),
            max_time_steps: self.env.max_time_steps(),
            antibiotic_names: self.names.clone(),
            action_space: self.env.action_space().into(),
            observation: self.observation.clone(),
            last_reward: self.history.last().map(|h| h.reward),
            finished,
            reveal: finished.then(|| self.reveal.clone()),
        }
    }

    pub fn history(&self) -> HistoryView {
        HistoryView {
            session_id: self.id.clone(),
            status: self.status(),
            entries: self.history.clone(),
            reveal: (self.status() == Status::Finished).then(|| self.reveal.clone()),
        }
    }

    pub fn step(&mut self, actions: &[usize]) -> amrsim::Result<SessionView> {
        let step = self.env.step(actions)?;
        let b = &step.info.breakdown;
        let reward = RewardView {
            overall: b.overall,
            individual: b.individual_mean,
            community: b.community_mean,
        };
        let seen = std::mem::replace(&mut self.observation, observation_view(&self.env, &step.observation));
        self.history.push(HistoryEntry {
            step_index: step.info.t,
            observation: seen,
            actions: actions.to_vec(),
            reward,
        });

        let r = &mut self.reveal;
        r.true_sigma.push(step.info.true_sigma.clone());
        r.infected_counts.push(step.info.cohort.iter().filter(|p| p.infected).count());
        r.patients.push(
            step.info
                .cohort
                .iter()
                .zip(&b.outcomes)
                .enumerate()
                .map(|(slot, (p, o))| RevealedPatient {
                    slot,
                    pi: p.pi,
                    infected: p.infected,
                    action: actions[slot],
                    resistant: o.resistant,
                    outcome: o.result.name(),
                    raw_reward: o.raw_reward,
                })
                .collect(),
        );
        r.cumulative_reward.overall += reward.overall;
        r.cumulative_reward.individual += reward.individual;
        r.cumulative_reward.community += reward.community;
        Ok(self.view())
    }
}

struct Slot {
    session: Arc<Mutex<Session>>,
    last_access: Instant,
}

/// In-memory sessions with idle expiry and a hard capacity. Each session has
/// its own lock, so requests on different sessions never wait on each other.
pub struct SessionStore {
    slots: Mutex<HashMap<String, Slot>>,
    capacity: usize,
    idle_timeout: Duration,
}

impl SessionStore {
    pub fn new(capacity: usize, idle_timeout: Duration) -> Self {
        SessionStore {
            slots: Mutex::new(HashMap::new()),
            capacity,
            idle_timeout,
        }
    }

    fn sweep(&self, slots: &mut HashMap<String, Slot>, now: Instant) {
        slots.retain(|_, s| now.duration_since(s.last_access) < self.idle_timeout);
    }

    pub fn len(&self) -> usize {
        let mut slots = self.slots.lock().expect("session map lock");
        self.sweep(&mut slots, Instant::now());
        slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&self, session: Session) -> Result<(), ApiError> {
        let now = Instant::now();
        let mut slots = self.slots.lock().expect("session map lock");
        self.sweep(&mut slots, now);
        if slots.len() >= self.capacity {
            let oldest = slots.values().map(|s| s.last_access).min().unwrap_or(now);
            let wait = self.idle_timeout.saturating_sub(now.duration_since(oldest));
            return Err(ApiError::capacity(self.capacity, wait.as_secs().max(1)));
        }
        slots.insert(
            session.id.clone(),
            Slot {
                session: Arc::new(Mutex::new(session)),
                last_access: now,
            },
        );
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ApiError> {
        let now = Instant::now();
        let mut slots = self.slots.lock().expect("session map lock");
        self.sweep(&mut slots, now);
        let slot = slots.get_mut(id).ok_or_else(|| ApiError::not_found("session", id))?;
        slot.last_access = now;
        Ok(slot.session.clone())
    }

    pub fn remove(&self, id: &str) -> Result<(), ApiError> {
        let mut slots = self.slots.lock().expect("session map lock");
        self.sweep(&mut slots, Instant::now());
        slots
            .remove(id)
            .map(|_| ())
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}
