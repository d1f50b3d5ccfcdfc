use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde_yaml::Value;

use super::schema::{
    AgentConfig, EnvironmentConfig, ExperimentConfig, PatientGeneratorConfig, RewardConfig,
    TrainingConfig,
};
use crate::error::{Error, Result};

/// Section names in an umbrella document, in resolution order.
pub const SECTIONS: [&str; 5] = [
    "environment",
    "reward_calculator",
    "patient_generator",
    "agent_algorithm",
    "training",
];

const UMBRELLA_KEYS: [&str; 2] = ["config_folder_location", "options_folder_location"];

/// Where each section of a resolved config came from: a file path or `inline`.
pub type Provenance = BTreeMap<String, String>;

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub provenance: Provenance,
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile {
                path: path.to_path_buf(),
            }
        } else {
            Error::io(path, e)
        }
    })
}

fn parse_error(path: &Path, e: &serde_yaml::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        location: e.location().map(|l| (l.line(), l.column())),
        message: e.to_string(),
    }
}

/// Picks the first backtick-quoted identifier out of a serde message, which is
/// the offending field for unknown/missing-field errors.
fn offending_key(message: &str) -> Option<&str> {
    let start = message.find('`')? + 1;
    let len = message[start..].find('`')?;
    Some(&message[start..start + len])
}

fn schema_error(section: &str, origin: &Path, e: &serde_yaml::Error) -> Error {
    let message = e.to_string();
    let key = match offending_key(&message) {
        Some(field) => format!("{section}.{field}"),
        None => section.to_string(),
    };
    let location = e
        .location()
        .map(|l| format!(" (line {}, column {})", l.line(), l.column()))
        .unwrap_or_default();
    Error::Validation {
        key,
        message: format!("{message} in {}{location}", origin.display()),
    }
}

/// Reads and type-checks a single subconfig file for `section`.
pub(crate) fn load_section_file<T: DeserializeOwned>(section: &str, path: &Path) -> Result<T> {
    let text = read_text(path)?;
    // Syntax first so malformed documents report as parse errors.
    serde_yaml::from_str::<Value>(&text).map_err(|e| parse_error(path, &e))?;
    serde_yaml::from_str::<T>(&text).map_err(|e| schema_error(section, path, &e))
}

fn section_from_value<T: DeserializeOwned>(section: &str, origin: &Path, value: Value) -> Result<T> {
    serde_yaml::from_value::<T>(value).map_err(|e| schema_error(section, origin, &e))
}

#[derive(Default)]
struct Sections {
    environment: Option<EnvironmentConfig>,
    reward_calculator: Option<RewardConfig>,
    patient_generator: Option<PatientGeneratorConfig>,
    agent_algorithm: Option<AgentConfig>,
    training: Option<TrainingConfig>,
}

impl Sections {
    fn set(&mut self, section: &str, origin: &Path, source: Source) -> Result<()> {
        fn get<T: DeserializeOwned>(section: &str, origin: &Path, source: Source) -> Result<T> {
            match source {
                Source::File(path) => load_section_file(section, &path),
                Source::Inline(value) => section_from_value(section, origin, value),
            }
        }
        match section {
            "environment" => self.environment = Some(get(section, origin, source)?),
            "reward_calculator" => self.reward_calculator = Some(get(section, origin, source)?),
            "patient_generator" => self.patient_generator = Some(get(section, origin, source)?),
            "agent_algorithm" => self.agent_algorithm = Some(get(section, origin, source)?),
            "training" => self.training = Some(get(section, origin, source)?),
            _ => unreachable!("section names are checked by the caller"),
        }
        Ok(())
    }

    fn finish(self) -> Result<ExperimentConfig> {
        fn need<T>(v: Option<T>, key: &str) -> Result<T> {
            v.ok_or_else(|| Error::validation(key, "section missing from umbrella config"))
        }
        Ok(ExperimentConfig {
            environment: need(self.environment, "environment")?,
            reward_calculator: need(self.reward_calculator, "reward_calculator")?,
            patient_generator: need(self.patient_generator, "patient_generator")?,
            agent_algorithm: need(self.agent_algorithm, "agent_algorithm")?,
            training: need(self.training, "training")?,
        })
    }
}

enum Source {
    File(PathBuf),
    Inline(Value),
}

/// Loads an umbrella config. Each section is either a path (relative to
/// `config_folder_location`, itself relative to the umbrella's directory) or
/// an inline mapping; a resolved snapshot is therefore a valid umbrella too.
pub fn load_umbrella(path: impl AsRef<Path>) -> Result<LoadedConfig> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let doc: Value = serde_yaml::from_str(&text).map_err(|e| parse_error(path, &e))?;
    let Value::Mapping(map) = doc else {
        return Err(Error::validation("<root>", format!("{} is not a mapping", path.display())));
    };

    let umbrella_dir = path.parent().unwrap_or(Path::new("."));
    let mut config_folder = umbrella_dir.to_path_buf();
    for (k, v) in &map {
        let key = k.as_str().unwrap_or_default();
        if key == "config_folder_location" {
            let folder = v.as_str().ok_or_else(|| {
                Error::validation("config_folder_location", "must be a path string")
            })?;
            config_folder = umbrella_dir.join(folder);
        }
    }

    let mut sections = Sections::default();
    let mut provenance = Provenance::new();
    for (k, v) in map {
        let Some(key) = k.as_str().map(str::to_owned) else {
            return Err(Error::validation("<root>", "non-string key in umbrella config"));
        };
        if UMBRELLA_KEYS.contains(&key.as_str()) {
            continue;
        }
        if !SECTIONS.contains(&key.as_str()) {
            return Err(Error::validation(
                key.clone(),
                format!(
                    "unknown umbrella key in {}; expected one of {}, {}",
                    path.display(),
                    SECTIONS.join(", "),
                    UMBRELLA_KEYS.join(", ")
                ),
            ));
        }
        let source = match v {
            Value::String(rel) => {
                let file = config_folder.join(rel);
                provenance.insert(key.clone(), file.display().to_string());
                Source::File(file)
            }
            Value::Mapping(_) => {
                provenance.insert(key.clone(), "inline".to_string());
                Source::Inline(v)
            }
            _ => {
                return Err(Error::validation(
                    key,
                    "section must be a subconfig path or an inline mapping",
                ))
            }
        };
        sections.set(&key, path, source)?;
    }

    let mut config = sections.finish()?;
    config.normalize();
    config.validate()?;
    Ok(LoadedConfig { config, provenance })
}

/// Replaces one section of `config` with the contents of a subconfig file.
pub(crate) fn replace_section(config: &mut ExperimentConfig, section: &str, path: &Path) -> Result<()> {
    match section {
        "environment" => config.environment = load_section_file(section, path)?,
        "reward_calculator" => config.reward_calculator = load_section_file(section, path)?,
        "patient_generator" => config.patient_generator = load_section_file(section, path)?,
        "agent_algorithm" => config.agent_algorithm = load_section_file(section, path)?,
        "training" => config.training = load_section_file(section, path)?,
        other => {
            return Err(Error::UnknownPath {
                path: other.to_string(),
                suggestions: SECTIONS.iter().map(|s| s.to_string()).collect(),
            })
        }
    }
    Ok(())
}

/// Serializes a resolved config as a single umbrella document.
pub fn to_yaml(config: &ExperimentConfig) -> String {
    serde_yaml::to_string(config).expect("config serializes")
}

/// Parses a resolved config snapshot produced by [`to_yaml`].
pub fn from_yaml(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let mut config: ExperimentConfig =
        serde_yaml::from_str(text).map_err(|e| schema_error("<root>", origin, &e))?;
    config.normalize();
    config.validate()?;
    Ok(config)
}
