//! Executes a plan against a registry and streams records into a store.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

use crossbeam::channel;
use loadbench_core::forecast::{
    quantiles_from_samples, ForecastError, ForecastTask, ForecasterKind, ProbabilisticForecast, SampleMethod,
};
use loadbench_core::metrics::{context_scaling_lag, evaluate, seasonal_scale, MaseScaling, MASE_PERIOD};
use loadbench_core::series::{inject_missing, ExtremeThresholds, HourlySeries};
use thiserror::Error;

use crate::config::SweepConfig;
use crate::plan::PlannedTask;
use crate::registry::{ModelEntry, Registry, RegistryError};
use crate::store::{
    EvaluationRecord, Failure, FailureKind, Flags, MaseVariants, ProducerInfo, StepData, Store, StoreError,
    TaskStatus, Timing,
};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("extreme-event reference: {0}")]
    Reference(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub planned: usize,
    /// Already in the store before this run.
    pub skipped: usize,
    pub executed: usize,
    pub failed: usize,
    /// Adapter failures that survived all restarts.
    pub infrastructure_errors: usize,
}

/// Evaluation context shared by all workers.
pub struct Evaluator<'a> {
    pub series: &'a HourlySeries<f64>,
    pub config: &'a SweepConfig,
    pub registry: &'a Registry,
    thresholds: ExtremeThresholds<f64>,
}

impl<'a> Evaluator<'a> {
    /// Extreme-event thresholds come from the whole loaded series.
    pub fn new(series: &'a HourlySeries<f64>, config: &'a SweepConfig, registry: &'a Registry) -> Result<Self, RunError> {
        let thresholds =
            ExtremeThresholds::from_reference(series.values()).map_err(|e| RunError::Reference(e.to_string()))?;
        Ok(Self {
            series,
            config,
            registry,
            thresholds,
        })
    }

    /// Runs one task end to end. Never panics on model misbehaviour; every
    /// outcome becomes a record.
    pub fn evaluate(&self, task: &PlannedTask) -> EvaluationRecord {
        let started = Instant::now();
        let fail = |kind: FailureKind, message: String, timing: Timing| {
            EvaluationRecord::failed(task.id.clone(), task.origin, Failure { kind, message }, timing)
        };
        let elapsed_as_fit = |started: Instant| Timing {
            fit_seconds: started.elapsed().as_secs_f64(),
            ..Timing::default()
        };

        let Some(entry) = self.registry.get(&task.id.model) else {
            return fail(FailureKind::Data, format!("model {} not registered", task.id.model), Timing::default());
        };
        let clean = match self.series.slice_context(task.origin, task.id.context_len) {
            Ok(c) => c,
            Err(e) => return fail(FailureKind::Data, e.to_string(), Timing::default()),
        };
        let actuals = match self.series.window(task.origin, task.id.horizon) {
            Ok(a) => a,
            Err(e) => return fail(FailureKind::Data, e.to_string(), Timing::default()),
        };
        let context = match task.id.perturbation() {
            Some(spec) => match inject_missing(&clean, &spec) {
                Ok(c) => c,
                Err(e) => return fail(FailureKind::Data, e.to_string(), Timing::default()),
            },
            None => clean.clone(),
        };
        let forecast_task = match ForecastTask::new(
            task.id.model.clone(),
            context,
            task.id.horizon,
            self.config.quantile_levels.clone(),
            task.id.seed,
        ) {
            Ok(t) => t,
            Err(e) => return fail(FailureKind::Data, e.to_string(), Timing::default()),
        };

        let mut flags = Flags::default();
        let mut producer = None;
        let (forecast, timing, kind, sample_method) = match entry {
            ModelEntry::Native {
                forecaster,
                sample_method,
            } => {
                let out = match forecaster.forecast(&forecast_task) {
                    Ok(out) => out,
                    Err(e) => {
                        let kind = match e {
                            ForecastError::InsufficientContext { .. } => FailureKind::InsufficientContext,
                            ForecastError::FitFailed { .. } => FailureKind::FitFailed,
                            _ => FailureKind::Model,
                        };
                        return fail(kind, e.to_string(), elapsed_as_fit(started));
                    }
                };
                flags.rank_deficient = out.diagnostics.rank_deficient;
                flags.seasonal_lag = out.diagnostics.seasonal_lag;
                let timing = Timing {
                    fit_seconds: out.diagnostics.fit_seconds,
                    inference_seconds: out.forecast.inference_seconds,
                    includes_fit: out.diagnostics.includes_fit,
                };
                (out.forecast, timing, forecaster.kind(), *sample_method)
            }
            ModelEntry::Adapter(adapter) => {
                let info = adapter.info();
                producer = Some(ProducerInfo {
                    model_id: info.model_id.clone(),
                    version: info.version.clone(),
                    seed: info.seed,
                });
                match adapter.call(&forecast_task, &task.id.key()) {
                    Ok(out) => {
                        flags.rank_deficient = out.rank_deficient;
                        flags.adapter_restarts = out.restarts;
                        let timing = Timing {
                            fit_seconds: 0.0,
                            inference_seconds: out.forecast.inference_seconds,
                            includes_fit: out.includes_fit,
                        };
                        (out.forecast, timing, ForecasterKind::ExternalAdapter, adapter.config().sample_method)
                    }
                    Err(e) => {
                        let kind = if e.is_infrastructure() { FailureKind::Adapter } else { FailureKind::Model };
                        let mut rec = fail(kind, e.to_string(), Timing::default());
                        rec.producer = producer;
                        return rec;
                    }
                }
            }
        };

        let (forecast, method) = match self.complete(forecast, kind, sample_method, task.id.seed) {
            Ok(x) => x,
            Err(e) => return fail(FailureKind::Model, e.to_string(), timing),
        };
        flags.interval_repairs = forecast.crossing_repairs;
        flags.sample_method = method;

        let variants = MaseVariants {
            history: self
                .series
                .history_before(task.origin)
                .ok()
                .and_then(|h| seasonal_scale(h.values(), MASE_PERIOD).ok()),
            context: seasonal_scale(clean.values(), context_scaling_lag(clean.len())).ok(),
        };
        let scale = match self.config.mase_scaling {
            MaseScaling::History => variants.history,
            MaseScaling::Context => variants.context,
        };
        let Some(scale) = scale else {
            return fail(
                FailureKind::Metric,
                format!("degenerate {:?} MASE scaling", self.config.mase_scaling),
                timing,
            );
        };
        let metrics = match evaluate(&forecast, actuals.values(), scale) {
            Ok(m) => m,
            Err(e) => return fail(FailureKind::Metric, e.to_string(), timing),
        };
        let mae = metrics.mae;
        let steps = StepData {
            actuals: actuals.values().to_vec(),
            point: forecast.point.clone(),
            levels: forecast.levels.clone(),
            quantiles: if self.config.store_quantiles {
                forecast.quantiles.clone()
            } else {
                Vec::new()
            },
            extreme: actuals.values().iter().map(|&v| self.thresholds.label(v)).collect(),
        };
        EvaluationRecord {
            task: task.id.clone(),
            origin: task.origin,
            status: TaskStatus::Ok,
            failure: None,
            metrics: Some(metrics),
            mase_variants: Some(MaseVariants {
                history: variants.history.map(|s| mae / s),
                context: variants.context.map(|s| mae / s),
            }),
            timing,
            flags,
            producer,
            steps: Some(steps),
        }
    }

    /// Puts the forecast on the configured grid and attaches samples.
    /// Point-only adapters get point-noise samples and the quantiles of those
    /// samples; point-only natives stay point-only.
    fn complete(
        &self,
        forecast: ProbabilisticForecast<f64>,
        kind: ForecasterKind,
        method: SampleMethod,
        seed: u64,
    ) -> Result<(ProbabilisticForecast<f64>, Option<SampleMethod>), ForecastError> {
        let levels = &self.config.quantile_levels;
        let n = self.config.n_samples;
        if !forecast.has_quantiles() {
            if kind == ForecasterKind::NativeBaseline {
                return Ok((forecast, None));
            }
            let inference_seconds = forecast.inference_seconds;
            let point = forecast.point.clone();
            let with_samples = forecast.ensure_samples(SampleMethod::PointNoise, n, seed)?;
            let samples = with_samples.samples.expect("samples attached");
            let mut quantiles = quantiles_from_samples(&samples, levels.as_slice())?;
            // the noise is centred on the producer's point, which stays the median
            if let Some(mid) = levels.position(0.5) {
                for (row, &p) in quantiles.iter_mut().zip(&point) {
                    row[mid] = p;
                }
            }
            let mut out = ProbabilisticForecast::from_quantiles(point, levels, quantiles)?;
            out.samples = Some(samples);
            out.inference_seconds = inference_seconds;
            return Ok((out, Some(SampleMethod::PointNoise)));
        }
        let on_grid = if forecast.levels.as_slice() == levels.as_slice() {
            forecast
        } else {
            forecast.regrid(levels)?
        };
        let out = on_grid.ensure_samples(method, n, seed)?;
        Ok((out, Some(method)))
    }
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

/// Runs every task not already in `store`, appending records from a single
/// writer as workers finish. Store write failures stop the sweep; model and
/// adapter failures are recorded and the sweep continues.
pub fn run_sweep(
    plan: &[PlannedTask],
    series: &HourlySeries<f64>,
    registry: &Registry,
    config: &SweepConfig,
    store: &mut Store,
    parallelism: Option<usize>,
) -> Result<RunSummary, RunError> {
    registry.ensure_resolvable(plan.iter().map(|t| t.id.model.as_str()))?;
    let evaluator = Evaluator::new(series, config, registry)?;
    let pending: Vec<&PlannedTask> = plan.iter().filter(|t| !store.contains(&t.id)).collect();
    let mut summary = RunSummary {
        planned: plan.len(),
        skipped: plan.len() - pending.len(),
        ..RunSummary::default()
    };
    if pending.is_empty() {
        return Ok(summary);
    }
    let workers = parallelism
        .or(config.parallelism)
        .unwrap_or_else(default_parallelism)
        .clamp(1, pending.len());
    log::info!(
        "running {} task(s) on {workers} worker(s), {} already stored",
        pending.len(),
        summary.skipped
    );

    let abort = AtomicBool::new(false);
    let (task_tx, task_rx) = channel::bounded::<&PlannedTask>(workers * 2);
    let (result_tx, result_rx) = channel::unbounded::<EvaluationRecord>();
    let mut write_error = None;
    std::thread::scope(|scope| {
        for _ in 0..workers {
            let task_rx = task_rx.clone();
            let result_tx = result_tx.clone();
            let evaluator = &evaluator;
            let abort = &abort;
            scope.spawn(move || {
                for task in task_rx {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    if result_tx.send(evaluator.evaluate(task)).is_err() {
                        break;
                    }
                }
            });
        }
        drop(task_rx);
        drop(result_tx);
        let abort = &abort;
        scope.spawn(move || {
            for task in pending {
                if abort.load(Ordering::Relaxed) || task_tx.send(task).is_err() {
                    break;
                }
            }
        });

        for record in result_rx {
            if write_error.is_some() {
                continue;
            }
            summary.executed += 1;
            if let Some(failure) = &record.failure {
                summary.failed += 1;
                if failure.is_infrastructure() {
                    summary.infrastructure_errors += 1;
                }
                log::warn!("{}: {:?}: {}", record.task, failure.kind, failure.message);
            }
            if let Err(e) = store.append(record) {
                abort.store(true, Ordering::Relaxed);
                write_error = Some(e);
            }
        }
    });
    if let Some(e) = write_error {
        return Err(e.into());
    }
    Ok(summary)
}
