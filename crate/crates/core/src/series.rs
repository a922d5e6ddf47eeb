//! Hourly load series: construction, validation, CSV I/O, slicing and
//! perturbation.
//!
//! A [`HourlySeries`] stores a start instant and a dense value vector, so the
//! constant 3600 s spacing holds by construction. Raw inputs that contain
//! explicit missing markers go through [`RawSeries::repair`], which fills them
//! by linear interpolation and reports how many points were touched.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDateTime, TimeZone, Timelike, Utc, Weekday};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{sort_floats, sorted_quantile, Scalar};

pub const CSV_HEADER: &str = "timestamp_utc,load_mw";
const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("series must contain at least one point")]
    Empty,
    #[error("value at {timestamp} is not a finite non-negative load: {value}")]
    InvalidValue { timestamp: String, value: f64 },
    #[error("timestamp {timestamp} is not aligned to the top of an hour")]
    Unaligned { timestamp: String },
    #[error("duplicate timestamp {timestamp}")]
    Duplicate { timestamp: String },
    #[error("timestamps not increasing: {previous} followed by {next}")]
    NonMonotone { previous: String, next: String },
    #[error("series is not hourly-contiguous; gaps: {}", .gaps.join(", "))]
    Gaps { gaps: Vec<String> },
    #[error("every value is missing")]
    AllMissing,
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("insufficient history: need {required} h before {origin}, have {available} h")]
    InsufficientHistory {
        origin: String,
        required: usize,
        available: usize,
    },
    #[error("window {start}..{end} lies outside the series span {span_start}..{span_end}")]
    OutOfRange {
        start: String,
        end: String,
        span_start: String,
        span_end: String,
    },
    #[error("invalid test period {name}: {reason}")]
    InvalidPeriod { name: String, reason: String },
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SeriesError> = std::result::Result<T, E>;

pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.format(TIMESTAMP_FORMAT).to_string()
}

/// Parses `YYYY-MM-DDTHH:MM:SSZ` (also accepting an explicit `+00:00` offset).
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(dt) = NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT) {
        return Some(Utc.from_utc_datetime(&dt));
    }
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|dt| dt.with_timezone(&Utc))
}

fn is_hour_aligned(ts: DateTime<Utc>) -> bool {
    ts.minute() == 0 && ts.second() == 0 && ts.nanosecond() == 0
}

/// Timestamped hourly load values in MW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries<T> {
    series_id: String,
    start: DateTime<Utc>,
    values: Vec<T>,
}

impl<T: Scalar> HourlySeries<T> {
    pub fn new(series_id: impl Into<String>, start: DateTime<Utc>, values: Vec<T>) -> Result<Self> {
        if values.is_empty() {
            return Err(SeriesError::Empty);
        }
        if !is_hour_aligned(start) {
            return Err(SeriesError::Unaligned {
                timestamp: format_timestamp(start),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < T::zero() {
                return Err(SeriesError::InvalidValue {
                    timestamp: format_timestamp(start + Duration::hours(i as i64)),
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(Self {
            series_id: series_id.into(),
            start,
            values,
        })
    }

    pub fn series_id(&self) -> &str {
        &self.series_id
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start(&self) -> DateTime<Utc> {
        self.start
    }

    /// Exclusive end: one hour past the last timestamp.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    pub fn timestamp(&self, index: usize) -> DateTime<Utc> {
        self.start + Duration::hours(index as i64)
    }

    pub fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.values.len()).map(|i| self.timestamp(i))
    }

    /// Index of `ts` if it lies on the grid inside `[start, end]`. The
    /// exclusive end maps to `len()`.
    pub fn index_of(&self, ts: DateTime<Utc>) -> Option<usize> {
        if ts < self.start || !is_hour_aligned(ts) {
            return None;
        }
        let idx = (ts - self.start).num_hours() as usize;
        (idx <= self.values.len()).then_some(idx)
    }

    /// `len` consecutive points starting at `from`.
    pub fn window(&self, from: DateTime<Utc>, len: usize) -> Result<Self> {
        let out_of_range = || SeriesError::OutOfRange {
            start: format_timestamp(from),
            end: format_timestamp(from + Duration::hours(len as i64)),
            span_start: format_timestamp(self.start),
            span_end: format_timestamp(self.end()),
        };
        let i = self.index_of(from).ok_or_else(out_of_range)?;
        if len == 0 || i + len > self.values.len() {
            return Err(out_of_range());
        }
        Ok(Self {
            series_id: self.series_id.clone(),
            start: from,
            values: self.values[i..i + len].to_vec(),
        })
    }

    /// Every point strictly before `origin`.
    pub fn history_before(&self, origin: DateTime<Utc>) -> Result<Self> {
        let available = self.index_of(origin).unwrap_or(0);
        if available == 0 {
            return Err(SeriesError::InsufficientHistory {
                origin: format_timestamp(origin),
                required: 1,
                available: 0,
            });
        }
        self.window(self.start, available)
    }

    /// Exactly `context_len` points ending just before `origin`.
    pub fn slice_context(&self, origin: DateTime<Utc>, context_len: usize) -> Result<Self> {
        let available = if origin <= self.start {
            0
        } else {
            let hours = (origin - self.start).num_hours().max(0) as usize;
            hours.min(self.values.len())
        };
        if context_len == 0 || self.index_of(origin).is_none() || available < context_len {
            return Err(SeriesError::InsufficientHistory {
                origin: format_timestamp(origin),
                required: context_len,
                available,
            });
        }
        self.window(origin - Duration::hours(context_len as i64), context_len)
    }

    pub fn with_values(&self, values: Vec<T>) -> Result<Self> {
        Self::new(self.series_id.clone(), self.start, values)
    }

    /// Writes the series in the cache CSV schema.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = String::with_capacity(self.values.len() * 32);
        out.push_str(CSV_HEADER);
        out.push('\n');
        for (ts, v) in self.timestamps().zip(&self.values) {
            let _ = writeln!(out, "{},{}", format_timestamp(ts), v);
        }
        if let Some(parent) = path.as_ref().parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }
}

/// Points as delivered by a source, possibly containing explicit missing
/// markers (`None`). Rows must still be hourly-contiguous.
#[derive(Debug, Clone)]
pub struct RawSeries<T> {
    pub series_id: String,
    pub points: Vec<(DateTime<Utc>, Option<T>)>,
}

impl<T: Scalar> RawSeries<T> {
    /// Checks spacing, then fills missing markers by linear interpolation
    /// (constant extension at the ends). Returns the series and the number
    /// of repaired points.
    pub fn repair(self) -> Result<(HourlySeries<T>, usize)> {
        let Some(&(start, _)) = self.points.first() else {
            return Err(SeriesError::Empty);
        };
        if !is_hour_aligned(start) {
            return Err(SeriesError::Unaligned {
                timestamp: format_timestamp(start),
            });
        }
        let mut gaps = Vec::new();
        for pair in self.points.windows(2) {
            let (prev, next) = (pair[0].0, pair[1].0);
            if next == prev {
                return Err(SeriesError::Duplicate {
                    timestamp: format_timestamp(next),
                });
            }
            if next < prev {
                return Err(SeriesError::NonMonotone {
                    previous: format_timestamp(prev),
                    next: format_timestamp(next),
                });
            }
            if next - prev != Duration::hours(1) {
                gaps.push(format!(
                    "{}..{}",
                    format_timestamp(prev + Duration::hours(1)),
                    format_timestamp(next)
                ));
            }
        }
        if !gaps.is_empty() {
            return Err(SeriesError::Gaps { gaps });
        }

        let raw: Vec<Option<T>> = self.points.iter().map(|p| p.1).collect();
        let missing = raw.iter().filter(|v| v.is_none()).count();
        let values = fill_linear(&raw).ok_or(SeriesError::AllMissing)?;
        if missing > 0 {
            log::info!(
                "{}: repaired {missing} missing point(s) by linear interpolation",
                self.series_id
            );
        }
        Ok((HourlySeries::new(self.series_id, start, values)?, missing))
    }
}

/// Fills `None` entries by linear interpolation between the nearest present
/// neighbours; leading/trailing runs copy the nearest present value.
pub(crate) fn fill_linear<T: Scalar>(raw: &[Option<T>]) -> Option<Vec<T>> {
    let present: Vec<usize> = (0..raw.len()).filter(|&i| raw[i].is_some()).collect();
    let (&first, &last) = (present.first()?, present.last()?);
    let mut out = vec![T::zero(); raw.len()];
    for i in 0..first {
        out[i] = raw[first].unwrap();
    }
    for i in last..raw.len() {
        out[i] = raw[last].unwrap();
    }
    for pair in present.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let (va, vb) = (raw[a].unwrap(), raw[b].unwrap());
        out[a] = va;
        let span = T::from_usize_lossy(b - a);
        for (k, slot) in out.iter_mut().enumerate().take(b).skip(a + 1) {
            let w = T::from_usize_lossy(k - a) / span;
            *slot = va + (vb - va) * w;
        }
    }
    Some(out)
}

/// Reads a series in the cache CSV schema. Empty or `NA` load fields are
/// treated as explicit missing markers and repaired; returns the repaired
/// count alongside the series.
pub fn load_csv_with_repairs<T: Scalar>(path: impl AsRef<Path>) -> Result<(HourlySeries<T>, usize)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| SeriesError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
    let headers = reader.headers().map_err(|e| SeriesError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.iter().collect::<Vec<_>>() != ["timestamp_utc", "load_mw"] {
        return Err(SeriesError::Parse {
            line: 1,
            message: format!("expected header `{CSV_HEADER}`"),
        });
    }

    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| SeriesError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 2 {
            return Err(SeriesError::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let ts = parse_timestamp(&record[0]).ok_or_else(|| SeriesError::Parse {
            line,
            message: format!("bad timestamp `{}`", &record[0]),
        })?;
        let field = &record[1];
        let value = if field.is_empty() || field.eq_ignore_ascii_case("na") {
            None
        } else {
            let v: f64 = field.parse().map_err(|_| SeriesError::Parse {
                line,
                message: format!("bad load value `{field}`"),
            })?;
            Some(T::lit(v))
        };
        points.push((ts, value));
    }

    let series_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "series".into());
    RawSeries { series_id, points }.repair()
}

pub fn load_csv<T: Scalar>(path: impl AsRef<Path>) -> Result<HourlySeries<T>> {
    load_csv_with_repairs(path).map(|(s, _)| s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeriodName {
    Summer,
    Winter,
    Covid,
    Uri,
    Holiday,
    Recent,
}

impl PeriodName {
    pub const ALL: [PeriodName; 6] = [
        PeriodName::Summer,
        PeriodName::Winter,
        PeriodName::Covid,
        PeriodName::Uri,
        PeriodName::Holiday,
        PeriodName::Recent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PeriodName::Summer => "summer",
            PeriodName::Winter => "winter",
            PeriodName::Covid => "covid",
            PeriodName::Uri => "uri",
            PeriodName::Holiday => "holiday",
            PeriodName::Recent => "recent",
        }
    }
}

impl std::fmt::Display for PeriodName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PeriodName {
    type Err = SeriesError;

    fn from_str(s: &str) -> Result<Self> {
        PeriodName::ALL
            .into_iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase())
            .ok_or_else(|| SeriesError::InvalidPeriod {
                name: s.into(),
                reason: "unknown period name".into(),
            })
    }
}

/// A named evaluation regime `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPeriod {
    pub name: PeriodName,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

fn utc(y: i32, m: u32, d: u32) -> DateTime<Utc> {
    Utc.with_ymd_and_hms(y, m, d, 0, 0, 0).unwrap()
}

impl TestPeriod {
    pub fn new(name: PeriodName, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<Self> {
        if start >= end {
            return Err(SeriesError::InvalidPeriod {
                name: name.to_string(),
                reason: format!("start {} is not before end {}", start, end),
            });
        }
        Ok(Self { name, start, end })
    }

    /// Calendar defaults; end dates are exclusive midnights after the last day.
    pub fn default_for(name: PeriodName) -> Self {
        let (start, end) = match name {
            PeriodName::Summer => (utc(2023, 7, 1), utc(2023, 9, 1)),
            PeriodName::Winter => (utc(2022, 12, 1), utc(2023, 3, 1)),
            PeriodName::Covid => (utc(2020, 3, 1), utc(2020, 5, 1)),
            PeriodName::Uri => (utc(2021, 2, 10), utc(2021, 2, 21)),
            PeriodName::Holiday => (utc(2023, 12, 20), utc(2024, 1, 3)),
            PeriodName::Recent => (utc(2023, 1, 1), utc(2024, 1, 1)),
        };
        Self { name, start, end }
    }

    pub fn hours(&self) -> usize {
        (self.end - self.start).num_hours().max(0) as usize
    }

    pub fn validate_within<T: Scalar>(&self, series: &HourlySeries<T>) -> Result<()> {
        if self.start < series.start() || self.end > series.end() {
            return Err(SeriesError::InvalidPeriod {
                name: self.name.to_string(),
                reason: format!(
                    "{}..{} is outside the loaded span {}..{}",
                    format_timestamp(self.start),
                    format_timestamp(self.end),
                    format_timestamp(series.start()),
                    format_timestamp(series.end())
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub missing_rate: f64,
    pub seed: u64,
}

impl PerturbationSpec {
    pub fn new(missing_rate: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&missing_rate) {
            return Err(SeriesError::InvalidPerturbation(format!(
                "missing_rate {missing_rate} outside [0, 0.5]"
            )));
        }
        Ok(Self { missing_rate, seed })
    }
}

/// Removes `round(rate·len)` interior points chosen uniformly without
/// replacement and refills them by linear interpolation. Endpoints are kept.
pub fn inject_missing<T: Scalar>(series: &HourlySeries<T>, spec: &PerturbationSpec) -> Result<HourlySeries<T>> {
    let n = series.len();
    if n < 3 {
        return Err(SeriesError::InvalidPerturbation(format!(
            "series of length {n} is too short (need >= 3)"
        )));
    }
    PerturbationSpec::new(spec.missing_rate, spec.seed)?;
    let interior = n - 2;
    let count = ((spec.missing_rate * n as f64).round() as usize).min(interior);
    if count == 0 {
        return Ok(series.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut raw: Vec<Option<T>> = series.values().iter().copied().map(Some).collect();
    for k in sample(&mut rng, interior, count) {
        raw[k + 1] = None;
    }
    let values = fill_linear(&raw).expect("endpoints always survive");
    series.with_values(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtremeLabel {
    High,
    Low,
    Normal,
}

/// Percentile thresholds used to label extreme hours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtremeThresholds<T> {
    pub low: T,
    pub high: T,
}

impl<T: Scalar> ExtremeThresholds<T> {
    pub fn from_reference(reference: &[T]) -> Result<Self> {
        if reference.len() < 20 {
            return Err(SeriesError::InvalidPeriod {
                name: "extreme-reference".into(),
                reason: format!("reference has {} points, need >= 20", reference.len()),
            });
        }
        let mut sorted = reference.to_vec();
        sort_floats(&mut sorted);
        Ok(Self {
            low: sorted_quantile(&sorted, 0.05),
            high: sorted_quantile(&sorted, 0.95),
        })
    }

    pub fn label(&self, value: T) -> ExtremeLabel {
        if value > self.high {
            ExtremeLabel::High
        } else if value < self.low {
            ExtremeLabel::Low
        } else {
            ExtremeLabel::Normal
        }
    }
}

/// Labels each point high/low/normal against the 95th/5th percentiles of
/// `reference`.
pub fn extreme_mask<T: Scalar>(series: &HourlySeries<T>, reference: &HourlySeries<T>) -> Result<Vec<ExtremeLabel>> {
    let thresholds = ExtremeThresholds::from_reference(reference.values())?;
    Ok(series.values().iter().map(|&v| thresholds.label(v)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DayType {
    Weekday,
    Weekend,
}

impl DayType {
    pub fn of(ts: DateTime<Utc>) -> Self {
        match ts.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        }
    }
}

/// Meteorological season of a UTC instant (northern hemisphere).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Season {
    Winter,
    Spring,
    Summer,
    Autumn,
}

impl Season {
    pub fn of(ts: DateTime<Utc>) -> Self {
        match ts.month() {
            12 | 1 | 2 => Season::Winter,
            3..=5 => Season::Spring,
            6..=8 => Season::Summer,
            _ => Season::Autumn,
        }
    }
}
