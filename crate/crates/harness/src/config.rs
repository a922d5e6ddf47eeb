//! Sweep configuration, read from TOML.
//!
//! Every field has a default, so an empty file describes the full default
//! sweep: seven models, eight context lengths, two horizons, three periods
//! and seven windows per period.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, Utc};
use loadbench_core::baselines::{DECOMPOSITION_ID, SARIMA_ID, SEASONAL_NAIVE_ID};
use loadbench_core::forecast::{QuantileLevels, SampleMethod, DEFAULT_SAMPLE_COUNT};
use loadbench_core::metrics::{MaseScaling, HEADLINE_NOMINAL};
use loadbench_core::series::{parse_timestamp, PeriodName, TestPeriod};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_CONTEXT_LENGTHS: [usize; 8] = [24, 48, 96, 168, 336, 512, 1024, 2048];
pub const DEFAULT_HORIZONS: [usize; 2] = [24, 168];
pub const DEFAULT_WINDOWS_PER_PERIOD: usize = 7;
/// Adapter-served models in the default roster.
pub const DEFAULT_ADAPTER_MODELS: [&str; 4] = ["chronos-bolt-small", "chronos-2", "moirai-2-small", "ttm-r2"];
pub const NATIVE_MODELS: [&str; 3] = [SEASONAL_NAIVE_ID, SARIMA_ID, DECOMPOSITION_ID];
/// Largest missing-data rate the harness accepts.
pub const MAX_MISSING_RATE: f64 = 0.2;
pub const DEFAULT_DISPLAY_CAP: f64 = 2.0;
pub const DEFAULT_ADAPTER_RETRIES: usize = 2;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// Where the load series comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// A CSV in the cache schema. Takes precedence over fetching.
    pub csv: Option<PathBuf>,
    /// Fetch window (inclusive start, exclusive end), `YYYY-MM-DD` or a full
    /// UTC timestamp.
    pub start: String,
    pub end: String,
    pub cache_dir: PathBuf,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            csv: None,
            start: "2019-06-01".into(),
            end: "2025-01-01".into(),
            cache_dir: PathBuf::from("cache"),
        }
    }
}

impl DataConfig {
    pub fn range(&self) -> Result<(DateTime<Utc>, DateTime<Utc>)> {
        let start = parse_instant(&self.start)?;
        let end = parse_instant(&self.end)?;
        if start >= end {
            return Err(invalid(format!("data.start {} is not before data.end {}", self.start, self.end)));
        }
        Ok((start, end))
    }
}

/// A test period, optionally overriding the calendar defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    pub name: PeriodName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<String>,
    /// Overrides `windows_per_period` for this period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<usize>,
}

impl PeriodConfig {
    pub fn named(name: PeriodName) -> Self {
        Self {
            name,
            start: None,
            end: None,
            windows: None,
        }
    }

    pub fn resolve(&self) -> Result<TestPeriod> {
        let defaults = TestPeriod::default_for(self.name);
        let start = self.start.as_deref().map(parse_instant).transpose()?.unwrap_or(defaults.start);
        let end = self.end.as_deref().map(parse_instant).transpose()?.unwrap_or(defaults.end);
        TestPeriod::new(self.name, start, end).map_err(|e| invalid(e.to_string()))
    }
}

/// `YYYY-MM-DD` (midnight UTC) or a full UTC timestamp.
pub fn parse_instant(s: &str) -> Result<DateTime<Utc>> {
    if let Some(ts) = parse_timestamp(s) {
        return Ok(ts);
    }
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map(|d| d.and_hms_opt(0, 0, 0).unwrap().and_utc())
        .map_err(|_| invalid(format!("cannot parse instant {s:?} (use YYYY-MM-DD or YYYY-MM-DDTHH:00:00Z)")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    pub missing_rate: f64,
    /// Mixed into each task's seed.
    #[serde(default)]
    pub seed: u64,
}

/// How to launch and talk to one external model process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdapterConfig {
    pub command: Vec<String>,
    pub timeout_seconds: f64,
    pub handshake_timeout_seconds: f64,
    pub retries: usize,
    /// Quantile-to-sample conversion for CRPS. Point-only adapters always
    /// use point noise.
    pub sample_method: SampleMethod,
}

impl Default for AdapterConfig {
    fn default() -> Self {
        Self {
            command: Vec::new(),
            timeout_seconds: 600.0,
            handshake_timeout_seconds: 600.0,
            retries: DEFAULT_ADAPTER_RETRIES,
            sample_method: SampleMethod::InverseCdf,
        }
    }
}

impl AdapterConfig {
    /// `adapter --model <id>`, plus `--seed` when given.
    pub fn default_for(model_id: &str, seed: Option<u64>) -> Self {
        let mut command = vec!["adapter".to_string(), "--model".to_string(), model_id.to_string()];
        if let Some(seed) = seed {
            command.extend(["--seed".to_string(), seed.to_string()]);
        }
        let sample_method = if model_id.starts_with("chronos-bolt") {
            SampleMethod::FittedGaussian
        } else {
            SampleMethod::InverseCdf
        };
        Self {
            command,
            sample_method,
            ..Self::default()
        }
    }
}

/// Which slices of the store the summary tables read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableConfig {
    /// Periods averaged in the context-length table.
    pub headline_periods: Vec<PeriodName>,
    /// Cell used by the calibration, shift and ranking tables.
    pub context_len: usize,
    pub horizon: usize,
    pub reference_period: PeriodName,
    pub nominal: f64,
    /// Values above this are shown capped in text tables.
    pub display_cap: f64,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self {
            headline_periods: vec![PeriodName::Summer, PeriodName::Winter, PeriodName::Covid],
            context_len: 512,
            horizon: 24,
            reference_period: PeriodName::Summer,
            nominal: HEADLINE_NOMINAL,
            display_cap: DEFAULT_DISPLAY_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub models: Vec<String>,
    pub context_lengths: Vec<usize>,
    pub horizons: Vec<usize>,
    pub periods: Vec<PeriodConfig>,
    pub windows_per_period: usize,
    pub quantile_levels: QuantileLevels,
    pub seed: u64,
    pub n_samples: usize,
    pub perturbations: Vec<PerturbationConfig>,
    pub mase_scaling: MaseScaling,
    /// Keep full quantile rows per step in the store.
    pub store_quantiles: bool,
    pub parallelism: Option<usize>,
    pub data: DataConfig,
    pub tables: TableConfig,
    /// Keyed by model id. Adapter models missing here get
    /// [`AdapterConfig::default_for`].
    pub adapters: BTreeMap<String, AdapterConfig>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut models: Vec<String> = DEFAULT_ADAPTER_MODELS.iter().map(|s| s.to_string()).collect();
        models.extend(NATIVE_MODELS.iter().map(|s| s.to_string()));
        Self {
            models,
            context_lengths: DEFAULT_CONTEXT_LENGTHS.to_vec(),
            horizons: DEFAULT_HORIZONS.to_vec(),
            periods: [PeriodName::Summer, PeriodName::Winter, PeriodName::Covid]
                .into_iter()
                .map(PeriodConfig::named)
                .collect(),
            windows_per_period: DEFAULT_WINDOWS_PER_PERIOD,
            quantile_levels: QuantileLevels::default_grid(),
            seed: 42,
            n_samples: DEFAULT_SAMPLE_COUNT,
            perturbations: Vec::new(),
            mase_scaling: MaseScaling::History,
            store_quantiles: true,
            parallelism: None,
            data: DataConfig::default(),
            tables: TableConfig::default(),
            adapters: BTreeMap::new(),
        }
    }
}

impl SweepConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Loads and validates a config; relative data paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(csv) = &config.data.csv {
            if csv.is_relative() {
                config.data.csv = Some(base.join(csv));
            }
        }
        if config.data.cache_dir.is_relative() {
            config.data.cache_dir = base.join(&config.data.cache_dir);
        }
        Ok(config)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serialisable")
    }

    pub fn is_native(model_id: &str) -> bool {
        NATIVE_MODELS.contains(&model_id)
    }

    /// Adapter settings for a non-native model.
    pub fn adapter_for(&self, model_id: &str) -> AdapterConfig {
        self.adapters
            .get(model_id)
            .cloned()
            .unwrap_or_else(|| AdapterConfig::default_for(model_id, Some(self.seed)))
    }

    pub fn resolved_periods(&self) -> Result<Vec<(TestPeriod, usize)>> {
        self.periods
            .iter()
            .map(|p| Ok((p.resolve()?, p.windows.unwrap_or(self.windows_per_period))))
            .collect()
    }

    pub fn max_context(&self) -> usize {
        self.context_lengths.iter().copied().max().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        fn unique<T: Ord + Clone + std::fmt::Debug>(what: &str, items: &[T]) -> Result<()> {
            let mut sorted = items.to_vec();
            sorted.sort();
            if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                return Err(invalid(format!("duplicate {what} {:?}", w[0])));
            }
            Ok(())
        }

        if self.models.is_empty() {
            return Err(invalid("models is empty"));
        }
        unique("model", &self.models)?;
        if self.context_lengths.is_empty() || self.context_lengths.contains(&0) {
            return Err(invalid("context_lengths must be non-empty and positive"));
        }
        unique("context length", &self.context_lengths)?;
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(invalid("horizons must be non-empty and positive"));
        }
        unique("horizon", &self.horizons)?;
        if self.periods.is_empty() {
            return Err(invalid("periods is empty"));
        }
        let names: Vec<PeriodName> = self.periods.iter().map(|p| p.name).collect();
        unique("period", &names)?;
        if self.windows_per_period == 0 || self.periods.iter().any(|p| p.windows == Some(0)) {
            return Err(invalid("windows per period must be >= 1"));
        }
        self.resolved_periods()?;
        if !self.quantile_levels.is_symmetric() {
            return Err(invalid("quantile_levels must be symmetric around 0.5"));
        }
        if self.n_samples < 2 {
            return Err(invalid("n_samples must be >= 2"));
        }
        let mut rates = Vec::new();
        for p in &self.perturbations {
            if !(p.missing_rate > 0.0 && p.missing_rate <= MAX_MISSING_RATE) {
                return Err(invalid(format!(
                    "perturbation missing_rate {} outside (0, {MAX_MISSING_RATE}]",
                    p.missing_rate
                )));
            }
            rates.push(missing_permille(p.missing_rate));
        }
        unique("perturbation rate (permille)", &rates)?;
        if self.parallelism == Some(0) {
            return Err(invalid("parallelism must be >= 1"));
        }
        let t = &self.tables;
        if !(t.nominal > 0.0 && t.nominal < 1.0) || !(t.display_cap > 0.0) {
            return Err(invalid("tables.nominal must be in (0, 1) and tables.display_cap > 0"));
        }
        for (id, adapter) in &self.adapters {
            if Self::is_native(id) {
                return Err(invalid(format!("{id} is a native baseline and cannot have an adapter")));
            }
            if adapter.command.is_empty() {
                return Err(invalid(format!("adapter {id} has an empty command")));
            }
            if !(adapter.timeout_seconds > 0.0 && adapter.handshake_timeout_seconds > 0.0) {
                return Err(invalid(format!("adapter {id} timeouts must be positive")));
            }
        }
        self.data.range()?;
        Ok(())
    }
}

/// Rate in thousandths, the unit used in task identities.
pub fn missing_permille(rate: f64) -> u32 {
    (rate * 1000.0).round() as u32
}
