//! Command-line overrides: subconfig replacement (`--s slot=path`) and
//! parameter overrides (`--p dot.path=value`).

use std::path::PathBuf;

use serde_yaml::{Number, Value};

use super::load::{replace_section, SECTIONS};
use super::schema::ExperimentConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OverrideDirective {
    /// Swap a whole section for the contents of another subconfig file.
    Subconfig { slot: String, path: PathBuf },
    /// Set one existing leaf; the value string is coerced to the leaf's type.
    Parameter { path: String, value: String },
}

fn split_directive(raw: &str) -> Result<(&str, &str)> {
    let (k, v) = raw
        .split_once('=')
        .ok_or_else(|| Error::Directive(raw.to_string()))?;
    let k = k.trim();
    if k.is_empty() {
        return Err(Error::Directive(raw.to_string()));
    }
    Ok((k, v.trim()))
}

/// Accepts `environment`, `environment_subconfig` and `environment-subconfig`.
fn canonical_slot(slot: &str) -> Result<String> {
    let base = slot
        .replace('-', "_")
        .trim_end_matches("_subconfig")
        .to_string();
    if SECTIONS.contains(&base.as_str()) {
        Ok(base)
    } else {
        Err(Error::UnknownPath {
            path: slot.to_string(),
            suggestions: nearest(slot, SECTIONS.iter().map(|s| s.to_string()).collect()),
        })
    }
}

impl OverrideDirective {
    pub fn subconfig(raw: &str) -> Result<Self> {
        let (slot, path) = split_directive(raw)?;
        Ok(OverrideDirective::Subconfig {
            slot: canonical_slot(slot)?,
            path: PathBuf::from(path),
        })
    }

    pub fn parameter(raw: &str) -> Result<Self> {
        let (path, value) = split_directive(raw)?;
        Ok(OverrideDirective::Parameter {
            path: path.to_string(),
            value: value.to_string(),
        })
    }
}

fn nearest(target: &str, mut candidates: Vec<String>) -> Vec<String> {
    candidates.sort_by_key(|c| (strsim::levenshtein(target, c), c.clone()));
    candidates.truncate(5);
    candidates
}

fn coerce(path: &str, existing: &Value, raw: &str) -> Result<Value> {
    let fail = |expected| Error::Coercion {
        path: path.to_string(),
        value: raw.to_string(),
        expected,
    };
    match existing {
        Value::Bool(_) => match raw {
            "true" | "True" | "TRUE" => Ok(Value::Bool(true)),
            "false" | "False" | "FALSE" => Ok(Value::Bool(false)),
            _ => Err(fail("a boolean")),
        },
        Value::Number(n) if n.is_u64() => raw
            .parse::<u64>()
            .map(|v| Value::Number(v.into()))
            .map_err(|_| fail("a nonnegative integer")),
        Value::Number(n) if n.is_i64() => raw
            .parse::<i64>()
            .map(|v| Value::Number(v.into()))
            .map_err(|_| fail("an integer")),
        Value::Number(_) => raw
            .parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .map(|v| Value::Number(Number::from(v)))
            .ok_or_else(|| fail("a finite real number")),
        Value::String(_) => Ok(Value::String(raw.to_string())),
        Value::Null => serde_yaml::from_str(raw).map_err(|_| fail("a scalar")),
        _ => Err(fail("a scalar leaf (path names a map or list)")),
    }
}

fn keys_of(value: &Value) -> Vec<String> {
    match value {
        Value::Mapping(m) => m.keys().filter_map(|k| k.as_str().map(str::to_owned)).collect(),
        Value::Sequence(s) => (0..s.len()).map(|i| i.to_string()).collect(),
        _ => Vec::new(),
    }
}

fn set_leaf(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let mut node = root;
    let mut walked = Vec::new();
    for segment in path.split('.') {
        let unknown = |node: &Value| Error::UnknownPath {
            path: path.to_string(),
            suggestions: nearest(segment, keys_of(node))
                .into_iter()
                .map(|k| {
                    if walked.is_empty() {
                        k
                    } else {
                        format!("{}.{k}", walked.join("."))
                    }
                })
                .collect(),
        };
        let exists = match &*node {
            Value::Mapping(_) => node.get(segment).is_some(),
            Value::Sequence(seq) => segment.parse::<usize>().is_ok_and(|i| i < seq.len()),
            _ => false,
        };
        if !exists {
            return Err(unknown(&*node));
        }
        node = match node {
            Value::Sequence(seq) => &mut seq[segment.parse::<usize>().expect("checked above")],
            other => other.get_mut(segment).expect("checked above"),
        };
        walked.push(segment);
    }
    let coerced = coerce(path, node, raw)?;
    *node = coerced;
    Ok(())
}

/// Applies directives to a resolved config. Subconfig replacements run
/// first (in order), then parameter overrides (in order), so parameters
/// always take final precedence. Values are coerced by the schema type of
/// the target leaf; unknown paths are errors.
pub fn apply_overrides(
    config: &ExperimentConfig,
    directives: &[OverrideDirective],
) -> Result<ExperimentConfig> {
    let mut out = config.clone();
    for d in directives {
        if let OverrideDirective::Subconfig { slot, path } = d {
            replace_section(&mut out, &canonical_slot(slot)?, path)?;
        }
    }
    out.normalize();

    let params: Vec<_> = directives
        .iter()
        .filter_map(|d| match d {
            OverrideDirective::Parameter { path, value } => Some((path, value)),
            _ => None,
        })
        .collect();
    if !params.is_empty() {
        let mut tree = serde_yaml::to_value(&out).expect("config serializes");
        for (path, value) in params {
            set_leaf(&mut tree, path, value)?;
        }
        out = serde_yaml::from_value(tree).map_err(|e| {
            let message = e.to_string();
            Error::validation("<override>", message)
        })?;
        out.normalize();
    }
    out.validate()?;
    Ok(out)
}
