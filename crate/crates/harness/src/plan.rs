use std::fmt;

use chrono::{DateTime, Duration, Utc};
use loadbench_core::series::{format_timestamp, HourlySeries, PeriodName, PerturbationSpec};
use loadbench_core::Scalar;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{missing_permille, ConfigError, SweepConfig};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(
        "period {period} cannot hold {windows} window(s) of {horizon} h: needs {required_hours} h of targets \
         from {first_origin}, {available_hours} h available"
    )]
    Infeasible {
        period: PeriodName,
        horizon: usize,
        windows: usize,
        first_origin: String,
        required_hours: usize,
        available_hours: usize,
    },
}

/// Identity of one evaluation cell. Two records with equal identity are the
/// same task.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TaskId {
    pub model: String,
    pub context_len: usize,
    pub horizon: usize,
    pub period: PeriodName,
    pub window: usize,
    /// Injected missing-data rate in thousandths; 0 for the clean context.
    pub missing_permille: u32,
    pub seed: u64,
}

impl TaskId {
    /// Stable string form used as the wire-protocol `task_id`.
    pub fn key(&self) -> String {
        format!(
            "{}/c{}/h{}/{}/w{}/m{}/s{}",
            self.model, self.context_len, self.horizon, self.period, self.window, self.missing_permille, self.seed
        )
    }

    pub fn is_clean(&self) -> bool {
        self.missing_permille == 0
    }

    pub fn missing_rate(&self) -> f64 {
        self.missing_permille as f64 / 1000.0
    }

    pub fn perturbation(&self) -> Option<PerturbationSpec> {
        (!self.is_clean()).then(|| PerturbationSpec {
            missing_rate: self.missing_rate(),
            seed: self.seed,
        })
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub id: TaskId,
    pub origin: DateTime<Utc>,
}

impl PlannedTask {
    /// Index range of the targets within `series`.
    pub fn target_range<T: Scalar>(&self, series: &HourlySeries<T>) -> Option<std::ops::Range<usize>> {
        let start = series.index_of(self.origin)?;
        Some(start..start + self.id.horizon)
    }
}

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed shared by every model evaluated on the same cell, so all models see
/// the same perturbed context.
pub fn task_seed(
    base: u64,
    period: PeriodName,
    horizon: usize,
    window: usize,
    context_len: usize,
    perturbation_seed: u64,
    missing_permille: u32,
) -> u64 {
    [
        period as u64,
        horizon as u64,
        window as u64,
        context_len as u64,
        perturbation_seed,
        missing_permille as u64,
    ]
    .into_iter()
    .fold(mix(base), |acc, part| mix(acc ^ part))
}

/// Origins of the rolling windows for one period and horizon: the first at
/// `max(period.start, series.start + max_context)`, then every `horizon`
/// hours, all targets inside the period and the series.
pub fn window_origins<T: Scalar>(
    series: &HourlySeries<T>,
    period: &loadbench_core::series::TestPeriod,
    max_context: usize,
    horizon: usize,
    windows: usize,
) -> Result<Vec<DateTime<Utc>>, PlanError> {
    let first = period.start.max(series.start() + Duration::hours(max_context as i64));
    let limit = period.end.min(series.end());
    let available = if limit > first { (limit - first).num_hours() as usize } else { 0 };
    let required = windows * horizon;
    if required > available {
        return Err(PlanError::Infeasible {
            period: period.name,
            horizon,
            windows,
            first_origin: format_timestamp(first),
            required_hours: required,
            available_hours: available,
        });
    }
    Ok((0..windows).map(|w| first + Duration::hours((w * horizon) as i64)).collect())
}

/// Expands a config into tasks, ordered by period, horizon, window, context
/// length, perturbation and model (config order for each).
pub fn plan_sweep<T: Scalar>(config: &SweepConfig, series: &HourlySeries<T>) -> Result<Vec<PlannedTask>, PlanError> {
    config.validate()?;
    let max_context = config.max_context();
    let mut perturbations = vec![(0u64, 0u32)];
    perturbations.extend(config.perturbations.iter().map(|p| (p.seed, missing_permille(p.missing_rate))));

    let mut tasks = Vec::new();
    for (period, windows) in config.resolved_periods()? {
        for &horizon in &config.horizons {
            let origins = window_origins(series, &period, max_context, horizon, windows)?;
            for (window, &origin) in origins.iter().enumerate() {
                for &context_len in &config.context_lengths {
                    for &(perturbation_seed, permille) in &perturbations {
                        let seed = task_seed(
                            config.seed,
                            period.name,
                            horizon,
                            window,
                            context_len,
                            perturbation_seed,
                            permille,
                        );
                        for model in &config.models {
                            tasks.push(PlannedTask {
                                id: TaskId {
                                    model: model.clone(),
                                    context_len,
                                    horizon,
                                    period: period.name,
                                    window,
                                    missing_permille: permille,
                                    seed,
                                },
                                origin,
                            });
                        }
                    }
                }
            }
        }
    }
    Ok(tasks)
}
