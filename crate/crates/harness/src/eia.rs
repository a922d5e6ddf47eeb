//! Hourly ERCOT demand from the EIA open data API, cached as CSV.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use chrono::{DateTime, NaiveDateTime, Utc};
use loadbench_core::series::{format_timestamp, load_csv, HourlySeries, RawSeries, SeriesError};
use serde::Deserialize;
use thiserror::Error;

pub const DEFAULT_BASE_URL: &str = "https://api.eia.gov/v2/electricity/rto/region-data/data/";
pub const API_KEY_VAR: &str = "EIA_API_KEY";
pub const MAX_RETRIES: usize = 5;
const PAGE_LENGTH: usize = 5000;
const PERIOD_FORMAT: &str = "%Y-%m-%dT%H";

#[derive(Debug, Error)]
pub enum EiaError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no API key: set {API_KEY_VAR}")]
    MissingKey,
    #[error("HTTP {status}: {message}")]
    Http {
        status: u16,
        message: String,
        retriable: bool,
    },
    #[error("transport: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Response(String),
    #[error(transparent)]
    Validation(#[from] SeriesError),
    #[error("cache {path}: {source}")]
    Cache {
        path: PathBuf,
        #[source]
        source: SeriesError,
    },
}

impl EiaError {
    pub fn is_retriable(&self) -> bool {
        match self {
            EiaError::Http { retriable, .. } => *retriable,
            EiaError::Transport(_) => true,
            _ => false,
        }
    }

    pub fn status(&self) -> Option<u16> {
        match self {
            EiaError::Http { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Deserialize)]
struct Envelope {
    response: Option<Body>,
    error: Option<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct Body {
    #[serde(default)]
    total: Option<serde_json::Value>,
    #[serde(default)]
    data: Vec<Row>,
}

#[derive(Debug, Deserialize)]
struct Row {
    period: String,
    #[serde(default)]
    value: serde_json::Value,
}

fn parse_value(v: &serde_json::Value) -> Result<Option<f64>, EiaError> {
    match v {
        serde_json::Value::Null => Ok(None),
        serde_json::Value::Number(n) => Ok(n.as_f64()),
        serde_json::Value::String(s) if s.trim().is_empty() => Ok(None),
        serde_json::Value::String(s) => s
            .trim()
            .parse::<f64>()
            .map(Some)
            .map_err(|_| EiaError::Response(format!("non-numeric value {s:?}"))),
        other => Err(EiaError::Response(format!("unexpected value {other}"))),
    }
}

fn parse_period(s: &str) -> Result<DateTime<Utc>, EiaError> {
    NaiveDateTime::parse_from_str(&format!("{s}:00"), "%Y-%m-%dT%H:%M")
        .map(|t| t.and_utc())
        .map_err(|_| EiaError::Response(format!("bad period {s:?}")))
}

fn total_of(v: &Option<serde_json::Value>) -> Option<usize> {
    match v.as_ref()? {
        serde_json::Value::Number(n) => n.as_u64().map(|n| n as usize),
        serde_json::Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

/// Cache file name for one `[start, end)` request.
pub fn cache_file_name(start: DateTime<Utc>, end: DateTime<Utc>) -> String {
    format!("ercot_{}_{}.csv", start.format("%Y%m%dT%H"), end.format("%Y%m%dT%H"))
}

pub struct EiaClient {
    base_url: String,
    api_key: String,
    cache_dir: PathBuf,
    http: reqwest::blocking::Client,
    backoff: Duration,
    max_retries: usize,
    in_flight: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl EiaClient {
    pub fn new(api_key: impl Into<String>, cache_dir: impl Into<PathBuf>) -> Result<Self, EiaError> {
        let api_key = api_key.into();
        if api_key.trim().is_empty() {
            return Err(EiaError::MissingKey);
        }
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| EiaError::Transport(e.to_string()))?;
        Ok(Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key,
            cache_dir: cache_dir.into(),
            http,
            backoff: Duration::from_secs(1),
            max_retries: MAX_RETRIES,
            in_flight: Mutex::new(HashMap::new()),
        })
    }

    /// Reads the key from `EIA_API_KEY`.
    pub fn from_env(cache_dir: impl Into<PathBuf>) -> Result<Self, EiaError> {
        let key = std::env::var(API_KEY_VAR).map_err(|_| EiaError::MissingKey)?;
        Self::new(key, cache_dir)
    }

    pub fn with_base_url(mut self, url: impl Into<String>) -> Self {
        self.base_url = url.into();
        self
    }

    /// Initial retry delay; doubles after each attempt.
    pub fn with_backoff(mut self, initial: Duration) -> Self {
        self.backoff = initial;
        self
    }

    pub fn cache_dir(&self) -> &Path {
        &self.cache_dir
    }

    pub fn cache_path(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> PathBuf {
        self.cache_dir.join(cache_file_name(start, end))
    }

    /// Hourly series covering `[start, end)`, from the cache when present.
    /// Concurrent calls for the same range issue one fetch.
    pub fn fetch(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<HourlySeries<f64>, EiaError> {
        if end <= start {
            return Err(EiaError::InvalidRequest(format!(
                "end {} is not after start {}",
                format_timestamp(end),
                format_timestamp(start)
            )));
        }
        let path = self.cache_path(start, end);
        let gate = {
            let mut map = self.in_flight.lock().unwrap_or_else(|e| e.into_inner());
            map.entry(path.clone()).or_default().clone()
        };
        let _guard = gate.lock().unwrap_or_else(|e| e.into_inner());
        if path.exists() {
            log::debug!("cache hit {}", path.display());
            return load_csv(&path).map_err(|source| EiaError::Cache { path, source });
        }
        let series = self.download(start, end)?;
        std::fs::create_dir_all(&self.cache_dir).map_err(|e| EiaError::Cache {
            path: self.cache_dir.clone(),
            source: e.into(),
        })?;
        let tmp = path.with_extension("csv.part");
        series
            .write_csv(&tmp)
            .and_then(|_| std::fs::rename(&tmp, &path).map_err(SeriesError::from))
            .map_err(|source| EiaError::Cache {
                path: path.clone(),
                source,
            })?;
        log::info!("cached {} points to {}", series.len(), path.display());
        Ok(series)
    }

    fn download(&self, start: DateTime<Utc>, end: DateTime<Utc>) -> Result<HourlySeries<f64>, EiaError> {
        let last = end - chrono::Duration::hours(1);
        let mut points = Vec::new();
        let mut offset = 0;
        loop {
            let body = self.page(start, last, offset)?;
            let n = body.data.len();
            for row in body.data {
                let ts = parse_period(&row.period)?;
                if ts >= start && ts < end {
                    points.push((ts, parse_value(&row.value)?));
                }
            }
            offset += n;
            let total = total_of(&body.total);
            if n == 0 || total.is_none_or(|t| offset >= t) {
                break;
            }
        }
        points.sort_by_key(|p| p.0);
        let mut gaps = Vec::new();
        match (points.first(), points.last()) {
            (Some(first), Some(tail)) => {
                if first.0 > start {
                    gaps.push(format!("{}..{}", format_timestamp(start), format_timestamp(first.0)));
                }
                if tail.0 < last {
                    gaps.push(format!(
                        "{}..{}",
                        format_timestamp(tail.0 + chrono::Duration::hours(1)),
                        format_timestamp(end)
                    ));
                }
            }
            _ => gaps.push(format!("{}..{}", format_timestamp(start), format_timestamp(end))),
        }
        if !gaps.is_empty() {
            return Err(SeriesError::Gaps { gaps }.into());
        }
        let (series, repaired) = RawSeries {
            series_id: cache_file_name(start, end).trim_end_matches(".csv").to_string(),
            points,
        }
        .repair()?;
        if repaired > 0 {
            log::warn!("EIA response had {repaired} missing value(s), interpolated");
        }
        Ok(series)
    }

    fn page(&self, start: DateTime<Utc>, last: DateTime<Utc>, offset: usize) -> Result<Body, EiaError> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.page_once(start, last, offset) {
                Ok(body) => return Ok(body),
                Err(e) if e.is_retriable() && attempt < self.max_retries => {
                    attempt += 1;
                    log::warn!("EIA request failed ({e}); retry {attempt}/{} in {delay:?}", self.max_retries);
                    std::thread::sleep(delay);
                    delay *= 2;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn page_once(&self, start: DateTime<Utc>, last: DateTime<Utc>, offset: usize) -> Result<Body, EiaError> {
        let query: Vec<(&str, String)> = vec![
            ("frequency", "hourly".into()),
            ("data[0]", "value".into()),
            ("facets[respondent][]", "ERCO".into()),
            ("facets[type][]", "D".into()),
            ("start", start.format(PERIOD_FORMAT).to_string()),
            ("end", last.format(PERIOD_FORMAT).to_string()),
            ("sort[0][column]", "period".into()),
            ("sort[0][direction]", "asc".into()),
            ("offset", offset.to_string()),
            ("length", PAGE_LENGTH.to_string()),
            ("api_key", self.api_key.clone()),
        ];
        let response = self
            .http
            .get(&self.base_url)
            .query(&query)
            .send()
            .map_err(|e| EiaError::Transport(e.without_url().to_string()))?;
        let status = response.status();
        let text = response.text().map_err(|e| EiaError::Transport(e.without_url().to_string()))?;
        if !status.is_success() {
            return Err(EiaError::Http {
                status: status.as_u16(),
                message: text.chars().take(300).collect(),
                retriable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        let envelope: Envelope = serde_json::from_str(&text).map_err(|e| EiaError::Response(e.to_string()))?;
        if let Some(err) = envelope.error {
            return Err(EiaError::Response(err.to_string()));
        }
        envelope
            .response
            .ok_or_else(|| EiaError::Response("missing `response` object".into()))
    }
}
