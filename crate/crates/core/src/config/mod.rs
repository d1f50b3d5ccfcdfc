//! Hierarchical experiment configuration: umbrella + subconfig loading,
//! command-line overrides, default scaffolding and resolved snapshots.

mod load;
mod overrides;
mod scaffold;
mod schema;

pub use load::{from_yaml, load_umbrella, to_yaml, LoadedConfig, Provenance, SECTIONS};
pub use overrides::{apply_overrides, OverrideDirective};
pub use scaffold::{scaffold_defaults, umbrella_path, FILES as SCAFFOLD_FILES};
pub use schema::{
    AgentConfig, Algorithm, AntibioticConfig, Attribute, AttributeSpec, Distribution,
    EnvironmentConfig, ExperimentConfig, PatientGeneratorConfig, RewardConfig, TrainingConfig,
};

/// The scaffolded default experiment, resolved in memory.
pub fn default_config() -> ExperimentConfig {
    let section = |text: &str| serde_yaml::from_str::<serde_yaml::Value>(text).expect("default parses");
    let mut training = serde_yaml::from_str::<serde_yaml::Value>(scaffold::BASE_EXPERIMENT)
        .expect("default parses")
        .get("training")
        .cloned()
        .expect("default umbrella has training");
    if let serde_yaml::Value::Mapping(m) = &mut training {
        m.remove("log_patient_trajectories");
    }
    let mut root = serde_yaml::Mapping::new();
    root.insert("environment".into(), section(scaffold::DEFAULT_ENVIRONMENT));
    root.insert("patient_generator".into(), section(scaffold::DEFAULT_PATIENT_GENERATOR));
    root.insert("reward_calculator".into(), section(scaffold::DEFAULT_REWARD));
    root.insert("agent_algorithm".into(), section(scaffold::DEFAULT_AGENT));
    root.insert("training".into(), training);
    let mut config: ExperimentConfig =
        serde_yaml::from_value(serde_yaml::Value::Mapping(root)).expect("defaults match schema");
    config.normalize();
    config
}
