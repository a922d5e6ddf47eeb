//! Child-process client for external models.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use crossbeam::channel::{self, Receiver, RecvTimeoutError};
use loadbench_core::forecast::{
    FitDiagnostics, ForecastError, ForecastOutput, ForecastTask, Forecaster, ForecasterKind, ProbabilisticForecast,
    QuantileLevels,
};
use loadbench_core::series::format_timestamp;
use thiserror::Error;

use crate::config::AdapterConfig;
use crate::protocol::{decode, encode, ForecastReply, ForecastRequest, Message, ModelInfo, PROTOCOL_VERSION};

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("failed to launch {command:?}: {source}")]
    Spawn {
        command: Vec<String>,
        #[source]
        source: std::io::Error,
    },
    #[error("adapter i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("adapter did not answer within {0:.1} s")]
    Timeout(f64),
    #[error("adapter closed its output")]
    Closed,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("handshake failed: {0}")]
    Handshake(String),
    /// The adapter reported an error for the task.
    #[error("model error: {0}")]
    Model(String),
    /// The reply was well-formed but unusable for the task.
    #[error("invalid forecast: {0}")]
    InvalidReply(String),
}

impl AdapterError {
    /// Infrastructure failures warrant a restart; model errors and bad
    /// forecasts are task outcomes.
    pub fn is_infrastructure(&self) -> bool {
        !matches!(self, AdapterError::Model(_) | AdapterError::InvalidReply(_))
    }
}

/// A live adapter process after a successful handshake.
pub struct AdapterClient {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    info: ModelInfo,
    timeout: Duration,
}

impl AdapterClient {
    pub fn spawn(config: &AdapterConfig) -> Result<Self, AdapterError> {
        let (program, args) = config.command.split_first().ok_or_else(|| AdapterError::Spawn {
            command: config.command.clone(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, "empty command"),
        })?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| AdapterError::Spawn {
                command: config.command.clone(),
                source,
            })?;
        let stdin = child.stdin.take().expect("stdin is piped");
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = channel::unbounded();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        let mut client = Self {
            child,
            stdin,
            lines: rx,
            info: ModelInfo {
                model_id: String::new(),
                quantile_levels: Vec::new(),
                parameter_count: None,
                version: None,
                seed: None,
            },
            timeout: Duration::from_secs_f64(config.handshake_timeout_seconds),
        };
        client.send(&Message::Hello {
            protocol: PROTOCOL_VERSION,
        })?;
        match client.recv() {
            Ok(Message::ModelInfo(info)) => client.info = info,
            Ok(Message::Error(e)) => return Err(AdapterError::Handshake(e.message)),
            Ok(other) => return Err(AdapterError::Handshake(format!("expected model_info, got {other:?}"))),
            Err(e) => return Err(AdapterError::Handshake(e.to_string())),
        }
        if let Err(e) = QuantileLevels::new(client.info.quantile_levels.clone()) {
            if !client.info.point_only() {
                return Err(AdapterError::Handshake(format!("bad native grid: {e}")));
            }
        }
        client.timeout = Duration::from_secs_f64(config.timeout_seconds);
        log::info!(
            "adapter {} ready ({} native levels)",
            client.info.model_id,
            client.info.quantile_levels.len()
        );
        Ok(client)
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    fn send(&mut self, message: &Message) -> Result<(), AdapterError> {
        self.stdin.write_all(encode(message).as_bytes())?;
        self.stdin.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, AdapterError> {
        loop {
            let line = match self.lines.recv_timeout(self.timeout) {
                Ok(line) => line?,
                Err(RecvTimeoutError::Timeout) => return Err(AdapterError::Timeout(self.timeout.as_secs_f64())),
                Err(RecvTimeoutError::Disconnected) => return Err(AdapterError::Closed),
            };
            if line.trim().is_empty() {
                continue;
            }
            return decode(&line).map_err(|e| AdapterError::Protocol(format!("{e}: {line:.200}")));
        }
    }

    /// Sends one request and waits for its reply.
    pub fn request(&mut self, request: ForecastRequest) -> Result<ForecastReply, AdapterError> {
        let task_id = request.task_id.clone();
        self.send(&Message::Forecast(request))?;
        match self.recv()? {
            Message::ForecastResult(reply) if reply.task_id == task_id => Ok(reply),
            Message::Error(e) if e.task_id.as_deref().is_none_or(|id| id == task_id) => Err(AdapterError::Model(e.message)),
            other => Err(AdapterError::Protocol(format!("unexpected reply to {task_id}: {other:?}"))),
        }
    }
}

impl Drop for AdapterClient {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Result of a successful adapter call.
#[derive(Debug, Clone)]
pub struct AdapterForecast {
    pub forecast: ProbabilisticForecast<f64>,
    pub includes_fit: bool,
    pub rank_deficient: bool,
    /// Restarts needed before this task succeeded.
    pub restarts: usize,
}

/// A registry-facing model backed by one adapter process, restarted on
/// infrastructure failures up to `retries` times per task. Requests are
/// serialised: one in flight per process.
pub struct AdapterForecaster {
    model_id: String,
    config: AdapterConfig,
    client: Mutex<Option<AdapterClient>>,
    info: ModelInfo,
}

impl AdapterForecaster {
    /// Launches the adapter and completes the handshake.
    pub fn connect(model_id: impl Into<String>, config: AdapterConfig) -> Result<Self, AdapterError> {
        let model_id = model_id.into();
        let client = AdapterClient::spawn(&config)?;
        if client.info().model_id != model_id {
            log::warn!("adapter for {model_id} identifies as {}", client.info().model_id);
        }
        let info = client.info().clone();
        Ok(Self {
            model_id,
            config,
            client: Mutex::new(Some(client)),
            info,
        })
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn request_for(task: &ForecastTask<f64>, task_id: &str) -> ForecastRequest {
        ForecastRequest {
            task_id: task_id.to_string(),
            timestamps: task.context.timestamps().map(format_timestamp).collect(),
            values: task.context.values().to_vec(),
            horizon: task.horizon,
            quantile_levels: task.quantile_levels.as_slice().to_vec(),
        }
    }

    pub fn call(&self, task: &ForecastTask<f64>, task_id: &str) -> Result<AdapterForecast, AdapterError> {
        let request = Self::request_for(task, task_id);
        let mut guard = self.client.lock().unwrap_or_else(|e| e.into_inner());
        let mut last_error = None;
        for attempt in 0..=self.config.retries {
            if guard.is_none() {
                match AdapterClient::spawn(&self.config) {
                    Ok(client) => *guard = Some(client),
                    Err(e) => {
                        log::warn!("{}: restart {attempt} failed: {e}", self.model_id);
                        last_error = Some(e);
                        continue;
                    }
                }
            }
            let client = guard.as_mut().expect("client present");
            match client.request(request.clone()) {
                Ok(reply) => {
                    let mut out = convert_reply(reply, task)?;
                    out.restarts = attempt;
                    return Ok(out);
                }
                Err(e) if e.is_infrastructure() => {
                    log::warn!("{}: {task_id}: {e}; restarting adapter", self.model_id);
                    *guard = None;
                    last_error = Some(e);
                }
                Err(e) => return Err(e),
            }
        }
        Err(last_error.expect("at least one attempt"))
    }
}

/// Validates reply shape against the request and builds the forecast on the
/// requested grid (point-only replies stay point-only).
pub fn convert_reply(reply: ForecastReply, task: &ForecastTask<f64>) -> Result<AdapterForecast, AdapterError> {
    let h = task.horizon;
    if reply.point.len() != h {
        return Err(AdapterError::InvalidReply(format!("{} point values for horizon {h}", reply.point.len())));
    }
    if !(reply.inference_seconds.is_finite() && reply.inference_seconds >= 0.0) {
        return Err(AdapterError::InvalidReply(format!("inference_seconds {}", reply.inference_seconds)));
    }
    let map_err = |e: ForecastError| AdapterError::InvalidReply(e.to_string());
    let mut forecast = if reply.quantiles.is_empty() {
        ProbabilisticForecast::point_only(reply.point).map_err(map_err)?
    } else {
        let width = task.quantile_levels.len();
        if reply.quantiles.len() != h || reply.quantiles.iter().any(|row| row.len() != width) {
            return Err(AdapterError::InvalidReply(format!(
                "quantiles must be {h} x {width}, got {} rows",
                reply.quantiles.len()
            )));
        }
        ProbabilisticForecast::from_quantiles(reply.point, &task.quantile_levels, reply.quantiles).map_err(map_err)?
    };
    if forecast.crossing_repairs > 0 {
        log::warn!("{}: repaired {} crossed quantile row(s)", task.model_id, forecast.crossing_repairs);
    }
    forecast.inference_seconds = reply.inference_seconds;
    Ok(AdapterForecast {
        forecast,
        includes_fit: reply.includes_fit,
        rank_deficient: reply.rank_deficient,
        restarts: 0,
    })
}

impl Forecaster<f64> for AdapterForecaster {
    fn model_id(&self) -> &str {
        &self.model_id
    }

    fn kind(&self) -> ForecasterKind {
        ForecasterKind::ExternalAdapter
    }

    fn forecast(&self, task: &ForecastTask<f64>) -> Result<ForecastOutput<f64>, ForecastError> {
        let task_id = format!("{}@{}", self.model_id, format_timestamp(task.origin));
        let out = self.call(task, &task_id).map_err(|e| ForecastError::Producer {
            model: self.model_id.clone(),
            message: e.to_string(),
        })?;
        Ok(ForecastOutput {
            forecast: out.forecast,
            diagnostics: FitDiagnostics {
                rank_deficient: out.rank_deficient,
                includes_fit: out.includes_fit,
                ..FitDiagnostics::default()
            },
        })
    }
}
