use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Metric};
use crate::classifier::DdReport;
use crate::error::{invalid, Error, Result};
use crate::oracle::DdScore;

pub const REPORT_FORMAT: &str = "ddeval-report";
pub const REPORT_VERSION: u32 = 1;

/// One metric value with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub name: Metric,
    pub value: f64,
    #[serde(default)]
    pub params: serde_json::Map<String, serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cap: Option<usize>,
}

/// Everything measured for one (generator, temperature) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub family: String,
    pub generator: String,
    pub family_index: usize,
    pub generator_index: usize,
    pub temperature: f64,
    pub seed: u64,
    /// True DD between the reference and this generator.
    pub oracle: DdScore,
    pub metrics: Vec<MetricRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classifier: Option<DdReport>,
}

impl CellResult {
    pub fn metric(&self, m: Metric) -> Option<f64> {
        self.metrics.iter().find(|r| r.name == m).map(|r| r.value)
    }
}

/// Oracle ranking of one group of generators at one temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldOrder {
    pub group: String,
    pub temperature: f64,
    /// Generator labels, lowest DD first.
    pub order: Vec<String>,
    /// Oracle DD by declaration order.
    pub scores: Vec<f64>,
    /// Every generator has the same oracle DD, so no ranking exists.
    pub degenerate: bool,
    /// Whether the oracle order agrees with the family's construction
    /// (ascending λ, or descending training fraction); absent for pooled groups.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matches_construction: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauEntry {
    pub group: String,
    pub temperature: f64,
    pub metric: Metric,
    /// `None` when either ranking is fully tied.
    pub tau: Option<f64>,
    /// Generator labels in the metric's order, best first.
    pub ranking: Vec<String>,
    /// Labels of generators that shared a metric value; the tie was broken
    /// by declaration order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ties: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Wall-clock data; the only part of a report that varies between
/// identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timestamp {
    pub started_unix_secs: u64,
    pub elapsed_secs: f64,
}

impl Timestamp {
    pub fn zero() -> Self {
        Timestamp {
            started_unix_secs: 0,
            elapsed_secs: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankReport {
    pub format: String,
    pub version: u32,
    pub config_echo: ExperimentConfig,
    pub per_cell_metrics: Vec<CellResult>,
    pub gold_order: Vec<GoldOrder>,
    pub tau_table: Vec<TauEntry>,
    pub logs: Vec<String>,
    /// Set when the run stopped early; the other sections hold what was
    /// finished.
    pub partial: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timestamp: Timestamp,
}

impl RankReport {
    pub fn tau(&self, group: &str, temperature: f64, metric: Metric) -> Option<&TauEntry> {
        self.tau_table
            .iter()
            .find(|t| t.group == group && t.temperature == temperature && t.metric == metric)
    }

    pub fn gold(&self, group: &str, temperature: f64) -> Option<&GoldOrder> {
        self.gold_order
            .iter()
            .find(|g| g.group == group && g.temperature == temperature)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| invalid!("cannot serialise report: {e}"))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: RankReport = serde_json::from_str(text).map_err(|e| crate::Error::Data(format!("bad report: {e}")))?;
        if r.format != REPORT_FORMAT {
            return Err(crate::Error::Data(format!("not a report: format '{}'", r.format)));
        }
        Ok(r)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    /// One row per (cell, metric), oracle DD included as metric `oracle`.
    pub fn to_csv(&self) -> String {
        cells_to_csv(&self.per_cell_metrics)
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn cells_to_csv(cells: &[CellResult]) -> String {
    let mut out = String::from("family,generator,temperature,metric,value\n");
    for c in cells {
        let prefix = format!("{},{},{}", csv_field(&c.family), csv_field(&c.generator), c.temperature);
        let _ = writeln!(out, "{prefix},oracle,{}", c.oracle.value);
        for m in &c.metrics {
            let _ = writeln!(out, "{prefix},{},{}", m.name, m.value);
        }
    }
    out
}
