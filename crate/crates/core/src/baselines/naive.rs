use std::time::Instant;

use crate::forecast::{
    FitDiagnostics, ForecastError, ForecastOutput, ForecastTask, Forecaster, ForecasterKind, ProbabilisticForecast,
    Result,
};
use crate::metrics::MASE_PERIOD;
use crate::scalar::Scalar;

use super::SEASONAL_NAIVE_ID;

/// Lag actually used for a context of `len` points: 168, else 24, else the
/// whole context.
pub fn seasonal_naive_lag(len: usize) -> usize {
    if len >= MASE_PERIOD {
        MASE_PERIOD
    } else if len >= 24 {
        24
    } else {
        len
    }
}

/// Repeats the last seasonal cycle of `context` for `horizon` steps.
/// Point-only.
pub fn seasonal_naive<T: Scalar>(context: &[T], horizon: usize) -> Result<(ProbabilisticForecast<T>, usize)> {
    if context.is_empty() {
        return Err(ForecastError::InsufficientContext {
            model: SEASONAL_NAIVE_ID.into(),
            needed: 1,
            got: 0,
        });
    }
    let n = context.len();
    let lag = seasonal_naive_lag(n);
    let point = (0..horizon).map(|h| context[n - lag + h % lag]).collect();
    Ok((ProbabilisticForecast::point_only(point)?, lag))
}

#[derive(Debug, Clone, Default)]
pub struct SeasonalNaive;

impl<T: Scalar> Forecaster<T> for SeasonalNaive {
    fn model_id(&self) -> &str {
        SEASONAL_NAIVE_ID
    }

    fn kind(&self) -> ForecasterKind {
        ForecasterKind::NativeBaseline
    }

    fn forecast(&self, task: &ForecastTask<T>) -> Result<ForecastOutput<T>> {
        let started = Instant::now();
        let (mut forecast, lag) = seasonal_naive(task.context.values(), task.horizon)?;
        if lag != MASE_PERIOD {
            log::debug!("seasonal-naive: context {} < 168, using lag {lag}", task.context.len());
        }
        forecast.inference_seconds = started.elapsed().as_secs_f64();
        Ok(ForecastOutput {
            forecast,
            diagnostics: FitDiagnostics {
                seasonal_lag: Some(lag),
                ..FitDiagnostics::default()
            },
        })
    }
}
