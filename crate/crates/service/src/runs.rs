use std::fs;
use std::path::Path;

use amrsim::experiment::{read_metrics, MetricsRow};
use serde::Serialize;

use crate::error::ApiError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum RunEntry {
    Ok {
        run_id: String,
        complete: bool,
        config: serde_json::Value,
        #[serde(skip_serializing_if = "Option::is_none")]
        summary: Option<serde_json::Value>,
    },
    Broken {
        run_id: String,
        error: String,
    },
}

fn load_entry(dir: &Path, run_id: String) -> RunEntry {
    let broken = |error: String| RunEntry::Broken {
        run_id: run_id.clone(),
        error,
    };
    let config_path = dir.join("resolved_config.yaml");
    let config = match fs::read_to_string(&config_path) {
        Err(e) => return broken(format!("{}: {e}", config_path.display())),
        Ok(text) => match amrsim::config::from_yaml(&text, &config_path) {
            Err(e) => return broken(e.to_string()),
            Ok(c) => serde_json::to_value(c).expect("config serializes"),
        },
    };
    let summary_path = dir.join("summary.json");
    let summary = match fs::read_to_string(&summary_path) {
        Err(_) => None,
        Ok(text) => match serde_json::from_str(&text) {
            Ok(v) => Some(v),
            Err(e) => return broken(format!("{}: {e}", summary_path.display())),
        },
    };
    RunEntry::Ok {
        run_id,
        complete: summary.is_some(),
        config,
        summary,
    }
}

/// Every folder under the results root that looks like a run (it has a
/// resolved config or a metrics file), sorted by id. A missing root is an
/// empty listing.
pub fn list_runs(root: &Path) -> Vec<RunEntry> {
    let Ok(entries) = fs::read_dir(root) else {
        return Vec::new();
    };
    let mut dirs: Vec<(String, std::path::PathBuf)> = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .filter(|e| e.path().join("resolved_config.yaml").exists() || e.path().join("metrics.csv").exists())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    dirs.sort();
    dirs.into_iter().map(|(id, dir)| load_entry(&dir, id)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetrics {
    pub run_id: String,
    pub columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

pub fn valid_run_id(id: &str) -> bool {
    !id.is_empty()
        && id != "."
        && id != ".."
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

pub fn run_metrics(root: &Path, run_id: &str) -> Result<RunMetrics, ApiError> {
    if !valid_run_id(run_id) {
        return Err(ApiError::not_found("run", run_id));
    }
    let path = root.join(run_id).join("metrics.csv");
    if !path.is_file() {
        return Err(ApiError::not_found("run", run_id));
    }
    let table = read_metrics(&path).map_err(|e| {
        ApiError::new(axum::http::StatusCode::INTERNAL_SERVER_ERROR, "unreadable_run", e.to_string())
    })?;
    Ok(RunMetrics {
        run_id: run_id.to_string(),
        columns: table.columns,
        rows: table.rows,
    })
}
