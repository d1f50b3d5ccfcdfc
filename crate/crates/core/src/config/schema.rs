//! Typed experiment configuration.
//!
//! Every section rejects unknown keys. After deserialization a config is
//! normalized (implicit defaults made explicit) and validated, so a resolved
//! config serializes with every leaf present and typed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentConfig,
    pub patient_generator: PatientGeneratorConfig,
    pub reward_calculator: RewardConfig,
    pub agent_algorithm: AgentConfig,
    pub training: TrainingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    pub num_patients_per_time_step: usize,
    pub max_time_steps: usize,
    pub antibiotics: Vec<AntibioticConfig>,
    /// `cross_resistance[a][b]`: pressure added to antibiotic `a` per
    /// prescription of `b`. Empty means identity.
    #[serde(default)]
    pub cross_resistance: Vec<Vec<f64>>,
    /// Steps between antibiogram refreshes.
    #[serde(default = "one")]
    pub antibiogram_refresh_interval: usize,
}

/// One antibiotic: its leaky-balloon parameters and antibiogram corruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AntibioticConfig {
    pub name: String,
    pub flatness: f64,
    pub leak: f64,
    pub inflation_rate: f64,
    #[serde(default)]
    pub initial_pressure: f64,
    #[serde(default)]
    pub amr_noise_sd: f64,
    #[serde(default)]
    pub amr_bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    Constant { value: f64 },
    Uniform { lo: f64, hi: f64 },
    TruncatedNormal { mean: f64, sd: f64, lo: f64, hi: f64 },
}

impl Distribution {
    /// Largest value the distribution can produce.
    pub fn upper_bound(&self) -> f64 {
        match *self {
            Distribution::Constant { value } => value,
            Distribution::Uniform { hi, .. } | Distribution::TruncatedNormal { hi, .. } => hi,
        }
    }

    fn validate(&self, key: &str, legal: (f64, f64)) -> Result<()> {
        let (min, max) = legal;
        let in_range = |v: f64| v.is_finite() && v >= min && v <= max;
        let range_msg = || format!("must lie within [{min}, {max}]");
        match *self {
            Distribution::Constant { value } => {
                if !in_range(value) {
                    return Err(Error::validation(format!("{key}.value"), range_msg()));
                }
            }
            Distribution::Uniform { lo, hi } | Distribution::TruncatedNormal { lo, hi, .. } => {
                if !in_range(lo) {
                    return Err(Error::validation(format!("{key}.lo"), range_msg()));
                }
                if !in_range(hi) {
                    return Err(Error::validation(format!("{key}.hi"), range_msg()));
                }
                if lo > hi {
                    return Err(Error::validation(format!("{key}.lo"), "lo must not exceed hi"));
                }
            }
        }
        if let Distribution::TruncatedNormal { mean, sd, .. } = *self {
            if !mean.is_finite() {
                return Err(Error::validation(format!("{key}.mean"), "must be finite"));
            }
            if !(sd.is_finite() && sd > 0.0) {
                return Err(Error::validation(format!("{key}.sd"), "must be positive"));
            }
        }
        Ok(())
    }
}

/// Distribution of one true patient attribute and how it is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    pub distribution: Distribution,
    #[serde(default)]
    pub observable: bool,
    #[serde(default)]
    pub bias: f64,
    #[serde(default)]
    pub noise_sd: f64,
}

impl AttributeSpec {
    pub fn constant(value: f64) -> Self {
        AttributeSpec {
            distribution: Distribution::Constant { value },
            observable: false,
            bias: 0.0,
            noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatientGeneratorConfig {
    #[serde(default = "default_pi")]
    pub pi: AttributeSpec,
    #[serde(default = "default_multiplier")]
    pub phi_b: AttributeSpec,
    #[serde(default = "default_multiplier")]
    pub omega_b: AttributeSpec,
    #[serde(default = "default_multiplier")]
    pub phi_f: AttributeSpec,
    #[serde(default = "default_multiplier")]
    pub omega_f: AttributeSpec,
    #[serde(default = "default_rho")]
    pub rho: AttributeSpec,
}

impl Default for PatientGeneratorConfig {
    fn default() -> Self {
        PatientGeneratorConfig {
            pi: default_pi(),
            phi_b: default_multiplier(),
            omega_b: default_multiplier(),
            phi_f: default_multiplier(),
            omega_f: default_multiplier(),
            rho: default_rho(),
        }
    }
}

/// Patient attributes in observation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    Pi,
    PhiB,
    OmegaB,
    PhiF,
    OmegaF,
    Rho,
}

impl Attribute {
    pub const ALL: [Attribute; 6] = [
        Attribute::Pi,
        Attribute::PhiB,
        Attribute::OmegaB,
        Attribute::PhiF,
        Attribute::OmegaF,
        Attribute::Rho,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Pi => "pi",
            Attribute::PhiB => "phi_b",
            Attribute::OmegaB => "omega_b",
            Attribute::PhiF => "phi_f",
            Attribute::OmegaF => "omega_f",
            Attribute::Rho => "rho",
        }
    }

    pub fn is_probability(self) -> bool {
        matches!(self, Attribute::Pi | Attribute::Rho)
    }

    /// Legal value range used for validation and observation clamping.
    pub fn legal_range(self) -> (f64, f64) {
        if self.is_probability() {
            (0.0, 1.0)
        } else {
            (0.0, f64::INFINITY)
        }
    }
}

impl PatientGeneratorConfig {
    pub fn spec(&self, attribute: Attribute) -> &AttributeSpec {
        match attribute {
            Attribute::Pi => &self.pi,
            Attribute::PhiB => &self.phi_b,
            Attribute::OmegaB => &self.omega_b,
            Attribute::PhiF => &self.phi_f,
            Attribute::OmegaF => &self.omega_f,
            Attribute::Rho => &self.rho,
        }
    }

    /// Attributes beyond π̂ that appear in observations, in layout order.
    pub fn extra_observed(&self) -> Vec<Attribute> {
        Attribute::ALL[1..]
            .iter()
            .copied()
            .filter(|a| self.spec(*a).observable)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub lambda: f64,
    pub base_benefit: f64,
    pub base_penalty: f64,
    /// Per-antibiotic success probability against a susceptible infection.
    /// Antibiotics missing here get `default_base_efficacy`.
    #[serde(default)]
    pub base_efficacy: BTreeMap<String, f64>,
    #[serde(default = "default_efficacy")]
    pub default_base_efficacy: f64,
    pub base_failure_harm: f64,
    #[serde(default = "one_f")]
    pub normalization_cap: f64,
    /// Emit expected rewards instead of sampled outcomes.
    #[serde(default)]
    pub expected_value_mode: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Random,
    NeverTreat,
    GreedyHeuristic,
    TabularQ,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Random => "random",
            Algorithm::NeverTreat => "never_treat",
            Algorithm::GreedyHeuristic => "greedy_heuristic",
            Algorithm::TabularQ => "tabular_q",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    #[serde(default = "half")]
    pub threshold: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_discount")]
    pub discount: f64,
    #[serde(default = "one_f")]
    pub epsilon_start: f64,
    #[serde(default = "default_epsilon_end")]
    pub epsilon_end: f64,
    #[serde(default = "default_decay_episodes")]
    pub epsilon_decay_episodes: usize,
    #[serde(default = "default_bins")]
    pub sigma_bins: usize,
    #[serde(default = "default_bins")]
    pub pi_bins: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            algorithm: Algorithm::TabularQ,
            threshold: half(),
            learning_rate: default_learning_rate(),
            discount: default_discount(),
            epsilon_start: 1.0,
            epsilon_end: default_epsilon_end(),
            epsilon_decay_episodes: default_decay_episodes(),
            sigma_bins: default_bins(),
            pi_bins: default_bins(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub run_name: String,
    pub total_num_training_episodes: usize,
    pub save_freq_every_n_episodes: usize,
    pub eval_freq_every_n_episodes: usize,
    pub num_eval_episodes: usize,
    pub seed: u64,
    #[serde(default)]
    pub log_patient_trajectories: bool,
}

fn one() -> usize {
    1
}
fn one_f() -> f64 {
    1.0
}
fn half() -> f64 {
    0.5
}
fn default_efficacy() -> f64 {
    0.9
}
fn default_learning_rate() -> f64 {
    0.1
}
fn default_discount() -> f64 {
    0.95
}
fn default_epsilon_end() -> f64 {
    0.05
}
fn default_decay_episodes() -> usize {
    100
}
fn default_bins() -> usize {
    5
}
fn default_pi() -> AttributeSpec {
    AttributeSpec {
        observable: true,
        ..AttributeSpec::constant(0.5)
    }
}
fn default_multiplier() -> AttributeSpec {
    AttributeSpec::constant(1.0)
}
fn default_rho() -> AttributeSpec {
    AttributeSpec::constant(0.1)
}

fn check(ok: bool, key: impl Into<String>, message: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::validation(key, message))
    }
}

fn is_prob(x: f64) -> bool {
    x.is_finite() && (0.0..=1.0).contains(&x)
}

impl ExperimentConfig {
    pub fn num_antibiotics(&self) -> usize {
        self.environment.antibiotics.len()
    }

    pub fn antibiotic_names(&self) -> Vec<String> {
        self.environment.antibiotics.iter().map(|a| a.name.clone()).collect()
    }

    /// Makes implicit defaults explicit: identity cross-resistance, a
    /// base-efficacy entry per antibiotic, and π always observable.
    pub fn normalize(&mut self) {
        let n = self.environment.antibiotics.len();
        if self.environment.cross_resistance.is_empty() {
            self.environment.cross_resistance = (0..n)
                .map(|a| (0..n).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
                .collect();
        }
        let default = self.reward_calculator.default_base_efficacy;
        for abx in &self.environment.antibiotics {
            self.reward_calculator
                .base_efficacy
                .entry(abx.name.clone())
                .or_insert(default);
        }
        self.patient_generator.pi.observable = true;
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_environment()?;
        self.validate_patients()?;
        self.validate_reward()?;
        self.validate_agent()?;
        self.validate_training()
    }

    fn validate_environment(&self) -> Result<()> {
        let env = &self.environment;
        check(
            env.num_patients_per_time_step >= 1,
            "environment.num_patients_per_time_step",
            "must be at least 1",
        )?;
        check(env.max_time_steps >= 1, "environment.max_time_steps", "must be at least 1")?;
        check(
            env.antibiogram_refresh_interval >= 1,
            "environment.antibiogram_refresh_interval",
            "must be at least 1",
        )?;
        check(!env.antibiotics.is_empty(), "environment.antibiotics", "at least one antibiotic required")?;
        for (i, abx) in env.antibiotics.iter().enumerate() {
            let key = |f: &str| format!("environment.antibiotics.{i}.{f}");
            check(!abx.name.trim().is_empty(), key("name"), "must not be empty")?;
            check(
                env.antibiotics[..i].iter().all(|o| o.name != abx.name),
                key("name"),
                "duplicate antibiotic name",
            )?;
            check(abx.flatness.is_finite() && abx.flatness > 0.0, key("flatness"), "must be positive")?;
            check(is_prob(abx.leak), key("leak"), "must lie within [0, 1]")?;
            check(
                abx.inflation_rate.is_finite() && abx.inflation_rate > 0.0,
                key("inflation_rate"),
                "must be positive",
            )?;
            check(
                abx.initial_pressure.is_finite() && abx.initial_pressure >= 0.0,
                key("initial_pressure"),
                "must be nonnegative",
            )?;
            check(
                abx.amr_noise_sd.is_finite() && abx.amr_noise_sd >= 0.0,
                key("amr_noise_sd"),
                "must be nonnegative",
            )?;
            check(abx.amr_bias.is_finite(), key("amr_bias"), "must be finite")?;
        }
        let n = env.antibiotics.len();
        check(
            env.cross_resistance.len() == n,
            "environment.cross_resistance",
            "must be a square matrix with one row per antibiotic",
        )?;
        for (a, row) in env.cross_resistance.iter().enumerate() {
            check(
                row.len() == n,
                format!("environment.cross_resistance.{a}"),
                "row length must equal the number of antibiotics",
            )?;
            for (b, c) in row.iter().enumerate() {
                check(
                    c.is_finite() && *c >= 0.0,
                    format!("environment.cross_resistance.{a}.{b}"),
                    "must be nonnegative",
                )?;
            }
        }
        Ok(())
    }

    fn validate_patients(&self) -> Result<()> {
        let pg = &self.patient_generator;
        for attr in Attribute::ALL {
            let spec = pg.spec(attr);
            let key = format!("patient_generator.{}", attr.name());
            spec.distribution.validate(&format!("{key}.distribution"), attr.legal_range())?;
            check(spec.bias.is_finite(), format!("{key}.bias"), "must be finite")?;
            check(
                spec.noise_sd.is_finite() && spec.noise_sd >= 0.0,
                format!("{key}.noise_sd"),
                "must be nonnegative",
            )?;
        }
        check(pg.pi.observable, "patient_generator.pi.observable", "pi is always observable")
    }

    fn validate_reward(&self) -> Result<()> {
        let r = &self.reward_calculator;
        check(is_prob(r.lambda), "reward_calculator.lambda", "must lie within [0, 1]")?;
        check(
            r.base_benefit.is_finite() && r.base_benefit > 0.0,
            "reward_calculator.base_benefit",
            "must be positive",
        )?;
        check(
            r.base_penalty.is_finite() && r.base_penalty > 0.0,
            "reward_calculator.base_penalty",
            "must be positive",
        )?;
        check(
            is_prob(r.default_base_efficacy),
            "reward_calculator.default_base_efficacy",
            "must lie within [0, 1]",
        )?;
        check(
            is_prob(r.base_failure_harm),
            "reward_calculator.base_failure_harm",
            "must lie within [0, 1]",
        )?;
        check(
            r.normalization_cap.is_finite() && r.normalization_cap > 0.0,
            "reward_calculator.normalization_cap",
            "must be positive",
        )?;
        for (name, e) in &r.base_efficacy {
            let key = format!("reward_calculator.base_efficacy.{name}");
            check(
                self.environment.antibiotics.iter().any(|a| &a.name == name),
                key.clone(),
                "names an antibiotic not present in environment.antibiotics",
            )?;
            check(is_prob(*e), key, "must lie within [0, 1]")?;
        }
        for abx in &self.environment.antibiotics {
            check(
                r.base_efficacy.contains_key(&abx.name),
                format!("reward_calculator.base_efficacy.{}", abx.name),
                "missing efficacy entry",
            )?;
        }
        Ok(())
    }

    fn validate_agent(&self) -> Result<()> {
        let a = &self.agent_algorithm;
        check(is_prob(a.threshold), "agent_algorithm.threshold", "must lie within [0, 1]")?;
        check(
            a.learning_rate.is_finite() && a.learning_rate > 0.0 && a.learning_rate <= 1.0,
            "agent_algorithm.learning_rate",
            "must lie within (0, 1]",
        )?;
        check(is_prob(a.discount), "agent_algorithm.discount", "must lie within [0, 1]")?;
        check(is_prob(a.epsilon_start), "agent_algorithm.epsilon_start", "must lie within [0, 1]")?;
        check(is_prob(a.epsilon_end), "agent_algorithm.epsilon_end", "must lie within [0, 1]")?;
        check(
            a.epsilon_decay_episodes >= 1,
            "agent_algorithm.epsilon_decay_episodes",
            "must be at least 1",
        )?;
        check(a.sigma_bins >= 1 && a.sigma_bins <= 255, "agent_algorithm.sigma_bins", "must lie within [1, 255]")?;
        check(a.pi_bins >= 1 && a.pi_bins <= 255, "agent_algorithm.pi_bins", "must lie within [1, 255]")
    }

    fn validate_training(&self) -> Result<()> {
        let t = &self.training;
        check(
            !t.run_name.is_empty()
                && t
                    .run_name
                    .chars()
                    .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.')),
            "training.run_name",
            "must be nonempty and use only [A-Za-z0-9_.-]",
        )?;
        for (key, v) in [
            ("training.total_num_training_episodes", t.total_num_training_episodes),
            ("training.save_freq_every_n_episodes", t.save_freq_every_n_episodes),
            ("training.eval_freq_every_n_episodes", t.eval_freq_every_n_episodes),
            ("training.num_eval_episodes", t.num_eval_episodes),
        ] {
            check(v >= 1, key, "must be at least 1")?;
        }
        Ok(())
    }

    /// Largest φ_b·B and φ_f·F the configured populations can produce, floored
    /// by `normalization_cap`. Divides raw rewards into `[-1, 1]`.
    pub fn reward_normalizer(&self) -> f64 {
        let r = &self.reward_calculator;
        let pg = &self.patient_generator;
        (pg.phi_b.distribution.upper_bound() * r.base_benefit)
            .max(pg.phi_f.distribution.upper_bound() * r.base_penalty)
            .max(r.normalization_cap)
    }

    /// Base efficacy per antibiotic in environment order.
    pub fn efficacies(&self) -> Vec<f64> {
        self.environment
            .antibiotics
            .iter()
            .map(|a| {
                self.reward_calculator
                    .base_efficacy
                    .get(&a.name)
                    .copied()
                    .unwrap_or(self.reward_calculator.default_base_efficacy)
            })
            .collect()
    }
}
