use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FIXED_COLUMNS: [&str; 6] = [
    "episode",
    "phase",
    "eval_episode",
    "return",
    "mean_individual",
    "mean_community",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Train,
    Eval,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Train => "train",
            Phase::Eval => "eval",
        }
    }
}

/// One episode. Eval rows carry the number of training episodes completed
/// when the block ran and their index within the block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    pub phase: Phase,
    pub eval_episode: Option<usize>,
    /// Undiscounted sum of step rewards.
    #[serde(rename = "return")]
    pub ret: f64,
    pub mean_individual: f64,
    pub mean_community: f64,
    pub final_sigma: Vec<f64>,
}

impl MetricsRow {
    pub fn csv_line(&self) -> String {
        let mut line = format!(
            "{},{},{},{},{},{}",
            self.episode,
            self.phase.name(),
            self.eval_episode.map(|k| k.to_string()).unwrap_or_default(),
            self.ret,
            self.mean_individual,
            self.mean_community
        );
        for s in &self.final_sigma {
            write!(line, ",{s}").expect("string write");
        }
        line
    }
}

pub fn header(antibiotics: &[String]) -> String {
    let mut cols: Vec<String> = FIXED_COLUMNS.iter().map(|c| c.to_string()).collect();
    cols.extend(antibiotics.iter().map(|a| format!("final_sigma_{a}")));
    cols.join(",")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsTable {
    pub columns: Vec<String>,
    pub rows: Vec<MetricsRow>,
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.csv_line());
            out.push('\n');
        }
        out
    }

    pub fn antibiotics(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter_map(|c| c.strip_prefix("final_sigma_").map(str::to_string))
            .collect()
    }
}

pub fn parse_metrics(text: &str, origin: &Path) -> Result<MetricsTable> {
    let bad = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        location: Some((line, 1)),
        message,
    };
    let mut lines = text.lines();
    let columns: Vec<String> = lines
        .next()
        .ok_or_else(|| bad(1, "empty metrics file".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    if columns.len() < FIXED_COLUMNS.len() || columns[..FIXED_COLUMNS.len()] != FIXED_COLUMNS {
        return Err(bad(1, format!("unexpected header; expected it to start with {}", FIXED_COLUMNS.join(","))));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != columns.len() {
            return Err(bad(n, format!("expected {} cells, found {}", columns.len(), cells.len())));
        }
        let float = |s: &str| s.parse::<f64>().map_err(|e| bad(n, format!("{s:?}: {e}")));
        let phase = match cells[1] {
            "train" => Phase::Train,
            "eval" => Phase::Eval,
            other => return Err(bad(n, format!("unknown phase {other:?}"))),
        };
        rows.push(MetricsRow {
            episode: cells[0].parse().map_err(|e| bad(n, format!("episode: {e}")))?,
            phase,
            eval_episode: match cells[2] {
                "" => None,
                k => Some(k.parse().map_err(|e| bad(n, format!("eval_episode: {e}")))?),
            },
            ret: float(cells[3])?,
            mean_individual: float(cells[4])?,
            mean_community: float(cells[5])?,
            final_sigma: cells[6..].iter().map(|s| float(s)).collect::<Result<_>>()?,
        });
    }
    Ok(MetricsTable { columns, rows })
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsTable> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_metrics(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let table = MetricsTable {
            columns: header(&["A".into(), "B".into()]).split(',').map(str::to_string).collect(),
            rows: vec![
                MetricsRow {
                    episode: 1,
                    phase: Phase::Train,
                    eval_episode: None,
                    ret: -0.1 / 3.0,
                    mean_individual: 0.25,
                    mean_community: -1e-17,
                    final_sigma: vec![0.1, 0.2],
                },
                MetricsRow {
                    episode: 1,
                    phase: Phase::Eval,
                    eval_episode: Some(0),
                    ret: 3.0,
                    mean_individual: 0.0,
                    mean_community: 0.0,
                    final_sigma: vec![0.0, 1.0 - f64::EPSILON],
                },
            ],
        };
        let text = table.to_csv();
        assert!(text.starts_with("episode,phase,eval_episode,return,mean_individual,mean_community,final_sigma_A,final_sigma_B\n"));
        let back = parse_metrics(&text, Path::new("m.csv")).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.antibiotics(), vec!["A", "B"]);
    }

    #[test]
    fn malformed_rows_report_line() {
        let text = "episode,phase,eval_episode,return,mean_individual,mean_community\n1,train,,0,0,0\n2,bogus,,0,0,0\n";
        match parse_metrics(text, Path::new("m.csv")) {
            Err(Error::Parse { location: Some((3, _)), .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }
}
