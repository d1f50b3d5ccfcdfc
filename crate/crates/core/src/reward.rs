//! Patient outcome resolution and the individual/community reward mixture.
//!
//! Outcome tree for one patient:
//!
//! * not infected: `not_infected`, reward 0 (over-prescribing costs only
//!   through resistance).
//! * infected, given antibiotic `a`: resistant with probability `σ_a`;
//!   a susceptible infection is cured with probability `clamp(ω_b·e_a)`,
//!   reward `+φ_b·B`.
//! * infected, untreated: spontaneous recovery with probability `ρ`, reward 0.
//! * anything left unresolved incurs `-φ_f·F` with probability
//!   `clamp(ω_f·q)`, otherwise reward 0.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::patient::PatientProfile;
use crate::rng::StreamRng;
use crate::scalar::{clamp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Success,
    SpontaneousRecovery,
    UnresolvedNoHarm,
    FailureHarm,
    NotInfected,
    /// Expected-value mode: no branch sampled, reward is the expectation.
    Expected,
}

impl OutcomeKind {
    pub fn name(self) -> &'static str {
        match self {
            OutcomeKind::Success => "success",
            OutcomeKind::SpontaneousRecovery => "spontaneous_recovery",
            OutcomeKind::UnresolvedNoHarm => "unresolved_no_harm",
            OutcomeKind::FailureHarm => "failure_harm",
            OutcomeKind::NotInfected => "not_infected",
            OutcomeKind::Expected => "expected",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientOutcome<T> {
    /// Antibiotic index, `None` for no treatment.
    pub action: Option<usize>,
    pub infected: bool,
    /// Whether the infection was resistant; `None` when no antibiotic met an
    /// infection.
    pub resistant: Option<bool>,
    pub result: OutcomeKind,
    pub raw_reward: T,
    pub normalized_reward: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRewardBreakdown<T> {
    pub individual_mean: T,
    pub community_mean: T,
    pub overall: T,
    pub outcomes: Vec<PatientOutcome<T>>,
}

/// Reward parameters resolved from config into scalar form.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel<T> {
    pub lambda: T,
    pub base_benefit: T,
    pub base_penalty: T,
    pub efficacy: Vec<T>,
    pub failure_harm: T,
    pub normalizer: T,
    pub expected_value_mode: bool,
}

impl<T: Scalar> RewardModel<T> {
    pub fn from_config(config: &ExperimentConfig) -> Self {
        let r = &config.reward_calculator;
        RewardModel {
            lambda: T::lit(r.lambda),
            base_benefit: T::lit(r.base_benefit),
            base_penalty: T::lit(r.base_penalty),
            efficacy: config.efficacies().into_iter().map(T::lit).collect(),
            failure_harm: T::lit(r.base_failure_harm),
            normalizer: T::lit(config.reward_normalizer()),
            expected_value_mode: r.expected_value_mode,
        }
    }

    fn check_action(&self, action: Option<usize>, sigma: &[T]) -> Result<()> {
        if sigma.len() != self.efficacy.len() {
            return Err(Error::Dimension {
                what: "resistance levels",
                expected: self.efficacy.len(),
                found: sigma.len(),
            });
        }
        match action {
            Some(a) if a >= self.efficacy.len() => Err(Error::Contract(format!(
                "antibiotic index {a} out of range for {} antibiotics",
                self.efficacy.len()
            ))),
            _ => Ok(()),
        }
    }

    pub fn success_probability(&self, patient: &PatientProfile<T>, antibiotic: usize) -> T {
        clamp(patient.omega_b * self.efficacy[antibiotic], T::zero(), T::one())
    }

    pub fn harm_probability(&self, patient: &PatientProfile<T>) -> T {
        clamp(patient.omega_f * self.failure_harm, T::zero(), T::one())
    }

    fn benefit(&self, patient: &PatientProfile<T>) -> T {
        patient.phi_b * self.base_benefit
    }

    fn penalty(&self, patient: &PatientProfile<T>) -> T {
        patient.phi_f * self.base_penalty
    }

    /// Closed-form expectation of the raw reward, conditional on the
    /// patient's latent infection status.
    pub fn expected_raw_reward(&self, patient: &PatientProfile<T>, action: Option<usize>, sigma: &[T]) -> Result<T> {
        self.check_action(action, sigma)?;
        if !patient.infected {
            return Ok(T::zero());
        }
        let (cured, cure_value) = match action {
            Some(a) => {
                let p = (T::one() - sigma[a]) * self.success_probability(patient, a);
                (p, p * self.benefit(patient))
            }
            None => (patient.rho, T::zero()),
        };
        let unresolved = T::one() - cured;
        Ok(cure_value - unresolved * self.harm_probability(patient) * self.penalty(patient))
    }

    pub fn resolve_outcome(
        &self,
        patient: &PatientProfile<T>,
        action: Option<usize>,
        sigma: &[T],
        rng: &mut StreamRng,
    ) -> Result<PatientOutcome<T>> {
        self.check_action(action, sigma)?;
        let finish = |resistant, result, raw: T| PatientOutcome {
            action,
            infected: patient.infected,
            resistant,
            result,
            raw_reward: raw,
            normalized_reward: raw / self.normalizer,
        };
        if self.expected_value_mode {
            let raw = self.expected_raw_reward(patient, action, sigma)?;
            let result = if patient.infected { OutcomeKind::Expected } else { OutcomeKind::NotInfected };
            return Ok(finish(None, result, raw));
        }
        if !patient.infected {
            return Ok(finish(None, OutcomeKind::NotInfected, T::zero()));
        }
        let mut draw = |p: T| rng.random::<f64>() < p.as_f64();
        let resistant = match action {
            Some(a) => {
                let resistant = draw(sigma[a]);
                if !resistant && draw(self.success_probability(patient, a)) {
                    return Ok(finish(Some(false), OutcomeKind::Success, self.benefit(patient)));
                }
                Some(resistant)
            }
            None => {
                if draw(patient.rho) {
                    return Ok(finish(None, OutcomeKind::SpontaneousRecovery, T::zero()));
                }
                None
            }
        };
        if draw(self.harm_probability(patient)) {
            Ok(finish(resistant, OutcomeKind::FailureHarm, -self.penalty(patient)))
        } else {
            Ok(finish(resistant, OutcomeKind::UnresolvedNoHarm, T::zero()))
        }
    }
}

/// Cohort mean of normalized individual rewards.
pub fn individual_mean<T: Scalar>(outcomes: &[PatientOutcome<T>]) -> Result<T> {
    if outcomes.is_empty() {
        return Err(Error::Contract("individual mean of an empty cohort".into()));
    }
    let total: T = outcomes.iter().map(|o| o.normalized_reward).sum();
    Ok(total / T::lit(outcomes.len() as f64))
}

/// Negative mean resistance level across antibiotics, in `(-1, 0]`.
pub fn community_reward<T: Scalar>(sigma: &[T]) -> T {
    if sigma.is_empty() {
        return T::zero();
    }
    let total: T = sigma.iter().copied().sum();
    -(total / T::lit(sigma.len() as f64))
}

/// `(1 - λ)·individual + λ·community`.
pub fn combine<T: Scalar>(individual: T, community: T, lambda: T) -> T {
    (T::one() - lambda) * individual + lambda * community
}
