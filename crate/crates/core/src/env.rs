//! Episodic prescribing environment with a reset/step contract.
//!
//! Each step resolves the current cohort's outcomes against the true
//! resistance levels, tallies prescriptions, advances the balloons, scores the
//! step, generates the next cohort, and refreshes the antibiogram on refresh
//! ticks. Observations expose the (possibly stale, noisy, biased) antibiogram
//! followed by each patient's observed attributes.

use rand_distr::{Distribution as _, StandardNormal};

use crate::balloon::{reset_balloons, step_balloons, BalloonParams, BalloonState, CrossResistance};
use crate::config::{Attribute, ExperimentConfig};
use crate::error::{Error, Result};
use crate::patient::{ObservedPatient, PatientGenerator, PatientProfile};
use crate::reward::{combine, community_reward, individual_mean, RewardModel, StepRewardBreakdown};
use crate::rng::{self, StreamRng};
use crate::scalar::{clamp, Scalar};

/// Shape of an observation vector: `num_antibiotics` antibiogram entries, then
/// `patient_fields.len()` entries per patient slot (π̂ first).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationLayout {
    pub num_antibiotics: usize,
    pub num_patients: usize,
    pub patient_fields: Vec<Attribute>,
}

impl ObservationLayout {
    pub fn len(&self) -> usize {
        self.num_antibiotics + self.num_patients * self.patient_fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation<T> {
    pub values: Vec<T>,
    pub layout: ObservationLayout,
}

impl<T: Scalar> Observation<T> {
    pub fn sigma_hat(&self) -> &[T] {
        &self.values[..self.layout.num_antibiotics]
    }

    /// Observed attributes of one patient slot, π̂ first.
    pub fn patient(&self, slot: usize) -> &[T] {
        let width = self.layout.patient_fields.len();
        let start = self.layout.num_antibiotics + slot * width;
        &self.values[start..start + width]
    }

    pub fn pi_hat(&self, slot: usize) -> T {
        self.patient(slot)[0]
    }
}

/// `(num_slots, choices_per_slot)`; choice 0 is no treatment, `1..=A` pick an
/// antibiotic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionSpace {
    pub num_slots: usize,
    pub choices_per_slot: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo<T> {
    /// Step index after this transition.
    pub t: usize,
    /// True resistance levels after the balloon update.
    pub true_sigma: Vec<T>,
    pub breakdown: StepRewardBreakdown<T>,
    /// Prescriptions per antibiotic this step.
    pub counts: Vec<usize>,
    /// True profiles of the cohort that was acted on.
    pub cohort: Vec<PatientProfile<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult<T> {
    pub observation: Observation<T>,
    pub reward: T,
    /// No absorbing states; always false.
    pub terminated: bool,
    pub truncated: bool,
    pub info: StepInfo<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResetInfo<T> {
    pub true_sigma: Vec<T>,
}

#[derive(Debug, Clone)]
struct Episode<T> {
    balloons: BalloonState<T>,
    patients: PatientGenerator,
    outcomes: StreamRng,
    amr_noise: StreamRng,
    cohort: Vec<(PatientProfile<T>, ObservedPatient<T>)>,
    antibiogram: Vec<T>,
    last_refresh: usize,
    t: usize,
    finished: bool,
}

#[derive(Debug, Clone)]
pub struct Environment<T> {
    config: ExperimentConfig,
    balloon_params: Vec<BalloonParams<T>>,
    cross: CrossResistance<T>,
    reward: RewardModel<T>,
    amr_bias: Vec<T>,
    amr_noise_sd: Vec<f64>,
    layout: ObservationLayout,
    episode: Option<Episode<T>>,
}

impl<T: Scalar> Environment<T> {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let mut config = config.clone();
        config.normalize();
        config.validate()?;
        let abx = &config.environment.antibiotics;
        let mut patient_fields = vec![Attribute::Pi];
        patient_fields.extend(config.patient_generator.extra_observed());
        let layout = ObservationLayout {
            num_antibiotics: abx.len(),
            num_patients: config.environment.num_patients_per_time_step,
            patient_fields,
        };
        Ok(Environment {
            balloon_params: abx.iter().map(BalloonParams::from_config).collect(),
            cross: CrossResistance::from_rows(&config.environment.cross_resistance)?,
            reward: RewardModel::from_config(&config),
            amr_bias: abx.iter().map(|a| T::lit(a.amr_bias)).collect(),
            amr_noise_sd: abx.iter().map(|a| a.amr_noise_sd).collect(),
            layout,
            episode: None,
            config,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn layout(&self) -> &ObservationLayout {
        &self.layout
    }

    pub fn action_space(&self) -> ActionSpace {
        ActionSpace {
            num_slots: self.layout.num_patients,
            choices_per_slot: self.layout.num_antibiotics + 1,
        }
    }

    pub fn max_time_steps(&self) -> usize {
        self.config.environment.max_time_steps
    }

    pub fn reward_model(&self) -> &RewardModel<T> {
        &self.reward
    }

    /// Current step index; 0 right after reset.
    pub fn t(&self) -> usize {
        self.episode.as_ref().map_or(0, |e| e.t)
    }

    pub fn is_finished(&self) -> bool {
        self.episode.as_ref().is_some_and(|e| e.finished)
    }

    pub fn true_sigma(&self) -> Option<&[T]> {
        self.episode.as_ref().map(|e| e.balloons.sigma.as_slice())
    }

    /// Latest published antibiogram and the step it was taken at.
    pub fn antibiogram(&self) -> Option<(&[T], usize)> {
        self.episode.as_ref().map(|e| (e.antibiogram.as_slice(), e.last_refresh))
    }

    pub fn observed_cohort(&self) -> Vec<ObservedPatient<T>> {
        self.episode
            .as_ref()
            .map(|e| e.cohort.iter().map(|(_, o)| o.clone()).collect())
            .unwrap_or_default()
    }

    pub fn reset(&mut self, seed: u64) -> (Observation<T>, ResetInfo<T>) {
        let balloons = reset_balloons(&self.balloon_params);
        let mut patients = PatientGenerator::new(
            self.config.patient_generator.clone(),
            rng::stream(seed, rng::PATIENTS),
            rng::stream(seed, rng::PATIENT_OBSERVATION_NOISE),
        );
        let cohort = patients.generate(self.layout.num_patients);
        let mut episode = Episode {
            balloons,
            patients,
            outcomes: rng::stream(seed, rng::OUTCOMES),
            amr_noise: rng::stream(seed, rng::AMR_OBSERVATION_NOISE),
            cohort,
            antibiogram: Vec::new(),
            last_refresh: 0,
            t: 0,
            finished: false,
        };
        self.refresh_antibiogram(&mut episode);
        let info = ResetInfo {
            true_sigma: episode.balloons.sigma.clone(),
        };
        let obs = self.assemble(&episode);
        self.episode = Some(episode);
        (obs, info)
    }

    fn refresh_antibiogram(&self, episode: &mut Episode<T>) {
        episode.antibiogram = episode
            .balloons
            .sigma
            .iter()
            .enumerate()
            .map(|(a, &sigma)| {
                let mut v = sigma + self.amr_bias[a];
                if self.amr_noise_sd[a] > 0.0 {
                    let z: f64 = StandardNormal.sample(&mut episode.amr_noise);
                    v = v + T::lit(self.amr_noise_sd[a] * z);
                }
                clamp(v, T::zero(), T::one())
            })
            .collect();
        episode.last_refresh = episode.t;
    }

    fn assemble(&self, episode: &Episode<T>) -> Observation<T> {
        let mut values = Vec::with_capacity(self.layout.len());
        values.extend_from_slice(&episode.antibiogram);
        for (_, observed) in &episode.cohort {
            for &attr in &self.layout.patient_fields {
                values.push(observed.get(attr).expect("layout lists observable attributes"));
            }
        }
        Observation {
            values,
            layout: self.layout.clone(),
        }
    }

    fn check_action(&self, action: &[usize]) -> Result<()> {
        if action.len() != self.layout.num_patients {
            return Err(Error::Dimension {
                what: "action vector",
                expected: self.layout.num_patients,
                found: action.len(),
            });
        }
        let max = self.layout.num_antibiotics;
        match action.iter().position(|&v| v > max) {
            Some(slot) => Err(Error::InvalidAction {
                slot,
                value: action[slot],
                max,
            }),
            None => Ok(()),
        }
    }

    pub fn step(&mut self, action: &[usize]) -> Result<StepResult<T>> {
        let mut episode = match self.episode.take() {
            None => return Err(Error::Contract("step called before reset".into())),
            Some(e) if e.finished => {
                self.episode = Some(e);
                return Err(Error::EpisodeFinished);
            }
            Some(e) => e,
        };
        if let Err(e) = self.check_action(action) {
            self.episode = Some(episode);
            return Err(e);
        }

        let sigma = episode.balloons.sigma.clone();
        let mut outcomes = Vec::with_capacity(action.len());
        let mut counts = vec![0usize; self.layout.num_antibiotics];
        for ((patient, _), &choice) in episode.cohort.iter().zip(action) {
            let abx = choice.checked_sub(1);
            if let Some(a) = abx {
                counts[a] += 1;
            }
            outcomes.push(self.reward.resolve_outcome(patient, abx, &sigma, &mut episode.outcomes)?);
        }
        episode.balloons = step_balloons(&episode.balloons, &self.balloon_params, &self.cross, &counts)?;
        let individual = individual_mean(&outcomes)?;
        let community = community_reward(&episode.balloons.sigma);
        let overall = combine(individual, community, self.reward.lambda);

        episode.t += 1;
        let truncated = episode.t == self.max_time_steps();
        episode.finished = truncated;
        let acted_on: Vec<PatientProfile<T>> = episode.cohort.iter().map(|(p, _)| *p).collect();
        episode.cohort = episode.patients.generate(self.layout.num_patients);
        if episode.t % self.config.environment.antibiogram_refresh_interval == 0 {
            self.refresh_antibiogram(&mut episode);
        }

        let observation = self.assemble(&episode);
        let info = StepInfo {
            t: episode.t,
            true_sigma: episode.balloons.sigma.clone(),
            breakdown: StepRewardBreakdown {
                individual_mean: individual,
                community_mean: community,
                overall,
                outcomes,
            },
            counts,
            cohort: acted_on,
        };
        self.episode = Some(episode);
        Ok(StepResult {
            observation,
            reward: overall,
            terminated: false,
            truncated,
            info,
        })
    }
}
