//! Append-only JSON-lines result store.
//!
//! One [`EvaluationRecord`] per line in `records.jsonl`. Lines are appended
//! whole and flushed; a torn final line left by an interrupted run is cut
//! off on open. Readers see records in task-identity order regardless of
//! completion order.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use loadbench_core::forecast::SampleMethod;
use loadbench_core::metrics::MetricReport;
use loadbench_core::series::ExtremeLabel;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::SweepConfig;
use crate::plan::TaskId;

pub const RECORDS_FILE: &str = "records.jsonl";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store i/o at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: corrupt record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("duplicate record for task {0}")]
    Duplicate(String),
    #[error("stored config is invalid: {0}")]
    Config(String),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FailureKind {
    InsufficientContext,
    FitFailed,
    /// The producer returned an error or an unusable forecast.
    Model,
    /// Adapter process failure after all restarts.
    Adapter,
    /// Scoring failed, e.g. a degenerate MASE denominator.
    Metric,
    /// Context or actuals could not be built.
    Data,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub kind: FailureKind,
    pub message: String,
}

impl Failure {
    pub fn is_infrastructure(&self) -> bool {
        self.kind == FailureKind::Adapter
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub fit_seconds: f64,
    pub inference_seconds: f64,
    /// Adapter-reported inference time already contains fitting.
    #[serde(default)]
    pub includes_fit: bool,
}

impl Timing {
    pub fn total(&self) -> f64 {
        self.fit_seconds + self.inference_seconds
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    pub rank_deficient: bool,
    /// Quantile rows re-sorted because the producer crossed them.
    pub interval_repairs: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seasonal_lag: Option<usize>,
    #[serde(default)]
    pub adapter_restarts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_method: Option<SampleMethod>,
}

/// MASE under both scaling variants; `None` where the denominator is
/// degenerate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MaseVariants {
    pub history: Option<f64>,
    pub context: Option<f64>,
}

/// What an adapter said about itself at handshake.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProducerInfo {
    pub model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Per-step data kept for significance tests, stratification and
/// prescriptive replays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepData {
    pub actuals: Vec<f64>,
    pub point: Vec<f64>,
    pub levels: Vec<f64>,
    /// `horizon × levels`; empty for point-only forecasts or when quantile
    /// storage is off.
    #[serde(default)]
    pub quantiles: Vec<Vec<f64>>,
    pub extreme: Vec<ExtremeLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub task: TaskId,
    pub origin: DateTime<Utc>,
    pub status: TaskStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<Failure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<MetricReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mase_variants: Option<MaseVariants>,
    pub timing: Timing,
    pub flags: Flags,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub producer: Option<ProducerInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<StepData>,
}

impl EvaluationRecord {
    pub fn failed(task: TaskId, origin: DateTime<Utc>, failure: Failure, timing: Timing) -> Self {
        Self {
            task,
            origin,
            status: TaskStatus::Failed,
            failure: Some(failure),
            metrics: None,
            mase_variants: None,
            timing,
            flags: Flags::default(),
            producer: None,
            steps: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TaskStatus::Ok
    }

    pub fn mase(&self) -> Option<f64> {
        self.metrics.as_ref().map(|m| m.mase)
    }
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    path: PathBuf,
    file: File,
    records: BTreeMap<TaskId, EvaluationRecord>,
    truncated_bytes: u64,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl Store {
    /// Opens (creating if needed) the store in `dir` and loads what is there.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let path = dir.join(RECORDS_FILE);
        let mut file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        let (records, valid_len, total_len) = read_lines(&mut file, &path)?;
        let truncated_bytes = total_len - valid_len;
        if truncated_bytes > 0 {
            log::warn!("{}: dropping {truncated_bytes} byte(s) of a torn final record", path.display());
            file.set_len(valid_len).map_err(io_err(&path))?;
        }
        Ok(Self {
            dir,
            path,
            file,
            records,
            truncated_bytes,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn records_path(&self) -> &Path {
        &self.path
    }

    /// Bytes of a torn final line removed when the store was opened.
    pub fn truncated_bytes(&self) -> u64 {
        self.truncated_bytes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contains(&self, id: &TaskId) -> bool {
        self.records.contains_key(id)
    }

    pub fn get(&self, id: &TaskId) -> Option<&EvaluationRecord> {
        self.records.get(id)
    }

    /// Records in task-identity order.
    pub fn records(&self) -> impl Iterator<Item = &EvaluationRecord> {
        self.records.values()
    }

    pub fn to_vec(&self) -> Vec<EvaluationRecord> {
        self.records.values().cloned().collect()
    }

    pub fn append(&mut self, record: EvaluationRecord) -> Result<()> {
        if self.records.contains_key(&record.task) {
            return Err(StoreError::Duplicate(record.task.key()));
        }
        let mut line = serde_json::to_string(&record).expect("records always serialise");
        line.push('\n');
        self.file.write_all(line.as_bytes()).map_err(io_err(&self.path))?;
        self.file.flush().map_err(io_err(&self.path))?;
        self.file.sync_data().map_err(io_err(&self.path))?;
        self.records.insert(record.task.clone(), record);
        Ok(())
    }

    pub fn write_config(&self, config: &SweepConfig) -> Result<()> {
        let path = self.dir.join(CONFIG_FILE);
        std::fs::write(&path, config.to_toml_string()).map_err(io_err(&path))
    }

    /// The config a run recorded next to its records, if any.
    pub fn read_config(&self) -> Result<Option<SweepConfig>> {
        let path = self.dir.join(CONFIG_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => SweepConfig::from_toml_str(&text)
                .map(Some)
                .map_err(|e| StoreError::Config(e.to_string())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

/// Parses every complete line. A final line without its newline, or one
/// that does not parse, is treated as torn; earlier bad lines are errors.
fn read_lines(file: &mut File, path: &Path) -> Result<(BTreeMap<TaskId, EvaluationRecord>, u64, u64)> {
    file.seek(SeekFrom::Start(0)).map_err(io_err(path))?;
    let total_len = file.metadata().map_err(io_err(path))?.len();
    let mut reader = BufReader::new(&*file);
    let mut records = BTreeMap::new();
    let mut valid_len = 0u64;
    let mut buf = String::new();
    let mut line_no = 0;
    let mut pending: Option<(usize, String)> = None;
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if let Some((line, message)) = pending.take() {
            return Err(StoreError::Corrupt {
                path: path.to_path_buf(),
                line,
                message,
            });
        }
        if !buf.ends_with('\n') {
            break;
        }
        if buf.trim().is_empty() {
            valid_len += n as u64;
            continue;
        }
        match serde_json::from_str::<EvaluationRecord>(&buf) {
            Ok(record) => {
                let key = record.task.key();
                if records.insert(record.task.clone(), record).is_some() {
                    return Err(StoreError::Duplicate(key));
                }
                valid_len += n as u64;
            }
            Err(e) => pending = Some((line_no, e.to_string())),
        }
    }
    Ok((records, valid_len, total_len))
}
