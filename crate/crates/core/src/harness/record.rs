use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::access::AccessSummary;
use super::plan::Mode;
use crate::dataio::CategoryId;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::strategies::Variant;

/// One training stage after the base task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub task_id: u32,
    pub classes: BTreeSet<CategoryId>,
    pub vocab_version: u32,
    pub vocab_size: usize,
    /// Epochs trained; `None` when the stage was restored from a checkpoint.
    pub epochs_run: Option<usize>,
    pub best_epoch: Option<usize>,
    /// The stage's own test split, right after the stage.
    pub test: MetricReport,
    pub checkpoint: PathBuf,
    pub checksum: String,
}

/// Outcome of one (strategy, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub strategy: Variant,
    pub seed: u64,
    pub mode: Mode,
    /// Base model on the base task's test split.
    pub base: MetricReport,
    /// Final model on the base task's test split.
    pub old: MetricReport,
    /// Final model on the pooled test splits of every added class.
    pub new: MetricReport,
    pub new_by_class: BTreeMap<CategoryId, MetricReport>,
    /// `old − base`.
    pub forgetting: MetricReport,
    pub stages: Vec<StageRecord>,
    pub access: AccessSummary,
    pub wall_clock_secs: f64,
    /// Base checkpoint followed by one per stage.
    pub checkpoints: Vec<PathBuf>,
}

/// A run that stopped with an error; other runs are unaffected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub strategy: Variant,
    pub seed: u64,
    pub error: String,
}

/// Per-metric `after − before`.
pub fn forgetting_delta(before: &MetricReport, after: &MetricReport) -> MetricReport {
    let (b, a) = (before.values(), after.values());
    MetricReport::from_values(std::array::from_fn(|i| a[i] - b[i]))
}

pub fn run_dir(output_dir: &Path, strategy: Variant, seed: u64) -> PathBuf {
    output_dir.join("runs").join(format!("{}_seed{seed}", strategy.label()))
}

pub(crate) fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("records serialize");
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
}

impl RunRecord {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

/// Every `runs/*/record.json` under `output_dir`, in directory-name order.
pub fn load_records(output_dir: &Path) -> Result<Vec<RunRecord>> {
    let runs = output_dir.join("runs");
    let entries = std::fs::read_dir(&runs).map_err(|e| Error::io(&runs, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path().join("record.json")))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    paths.iter().map(|p| RunRecord::load(p)).collect()
}
