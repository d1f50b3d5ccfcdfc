//! Antibiotic-prescribing simulation under community antimicrobial
//! resistance: a seedable episodic environment, built-in agents, and an
//! experiment runner with random-search tuning.
//!
//! The simulation math is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiations.

pub mod agents;
pub mod balloon;
pub mod config;
pub mod env;
pub mod error;
pub mod experiment;
pub mod patient;
pub mod reward;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Env = env::Environment<f64>;
pub type EnvF32 = env::Environment<f32>;
pub type Observation = env::Observation<f64>;
pub type StepResult = env::StepResult<f64>;
pub type BalloonState = balloon::BalloonState<f64>;
pub type BalloonParams = balloon::BalloonParams<f64>;
pub type CrossResistance = balloon::CrossResistance<f64>;
pub type PatientProfile = patient::PatientProfile<f64>;
pub type ObservedPatient = patient::ObservedPatient<f64>;
pub type RewardModel = reward::RewardModel<f64>;
pub type PatientOutcome = reward::PatientOutcome<f64>;
pub type StepRewardBreakdown = reward::StepRewardBreakdown<f64>;
