//! Piecewise-linear trend × (1 + daily + weekly Fourier seasonality).
//!
//! The multiplicative model is bilinear in the trend and seasonal
//! coefficients; it is fitted by ridge-penalised nonlinear least squares
//! started from the additive fit.
//! With fewer observations than coefficients, or less than one weekly cycle,
//! the fit is still carried out under the ridge penalty and flagged
//! `rank_deficient`.

use std::f64::consts::PI;
use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::forecast::{
    FitDiagnostics, ForecastError, ForecastOutput, ForecastTask, Forecaster, ForecasterKind, ProbabilisticForecast,
    QuantileLevels, Result,
};
use crate::linalg::{gram_rank, ridge_solve, Design};
use crate::scalar::{mean, Scalar};

use super::DECOMPOSITION_ID;

const DAY: f64 = 24.0;
const WEEK: f64 = 168.0;
const MAX_ITERATIONS: usize = 100;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecompositionSpec {
    pub fourier_daily: usize,
    pub fourier_weekly: usize,
    pub changepoints: usize,
    /// Fraction of the context, from its start, in which knots are placed.
    pub changepoint_range: f64,
    /// Prior scale of the changepoint slope changes (time and load scaled
    /// to unit size).
    pub changepoint_prior_scale: f64,
    pub ridge: f64,
}

impl Default for DecompositionSpec {
    fn default() -> Self {
        Self {
            fourier_daily: 4,
            fourier_weekly: 3,
            changepoints: 25,
            changepoint_range: 0.8,
            changepoint_prior_scale: 0.05,
            ridge: 1e-6,
        }
    }
}

impl DecompositionSpec {
    fn validate(&self) -> Result<()> {
        if self.fourier_daily == 0 || self.fourier_weekly == 0 {
            return Err(ForecastError::InvalidTask("Fourier harmonic counts must be >= 1".into()));
        }
        if !(self.changepoint_range > 0.0 && self.changepoint_range <= 1.0) {
            return Err(ForecastError::InvalidTask("changepoint range must lie in (0, 1]".into()));
        }
        if !(self.changepoint_prior_scale > 0.0) {
            return Err(ForecastError::InvalidTask("changepoint prior scale must be > 0".into()));
        }
        if !(self.ridge >= 0.0) {
            return Err(ForecastError::InvalidTask("ridge penalty must be >= 0".into()));
        }
        Ok(())
    }

    fn trend_cols(&self) -> usize {
        2 + self.changepoints
    }

    fn seasonal_cols(&self) -> usize {
        2 * (self.fourier_daily + self.fourier_weekly)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionFit {
    pub rank_deficient: bool,
    pub design_rank: usize,
    pub design_cols: usize,
    pub residual_sd: f64,
}

struct Basis {
    spec: DecompositionSpec,
    /// Hours since the Unix epoch of the first context point.
    epoch_hour: f64,
    /// Context length, used to scale time to [0, 1).
    span: f64,
}

impl Basis {
    fn knots(&self) -> impl Iterator<Item = f64> + '_ {
        let k = self.spec.changepoints;
        let range = self.spec.changepoint_range;
        (1..=k).map(move |j| range * j as f64 / k as f64)
    }

    fn trend_row(&self, i: usize, out: &mut [f64]) {
        let t = i as f64 / self.span;
        out[0] = 1.0;
        out[1] = t;
        for (slot, c) in out[2..].iter_mut().zip(self.knots()) {
            *slot = (t - c).max(0.0);
        }
    }

    fn seasonal_row(&self, i: usize, out: &mut [f64]) {
        let hour = self.epoch_hour + i as f64;
        let mut col = 0;
        for (period, harmonics) in [(DAY, self.spec.fourier_daily), (WEEK, self.spec.fourier_weekly)] {
            for k in 1..=harmonics {
                let angle = 2.0 * PI * k as f64 * (hour % period) / period;
                out[col] = angle.sin();
                out[col + 1] = angle.cos();
                col += 2;
            }
        }
    }
}

/// Solves `(XᵀX + diag(penalty)) β = Xᵀy`.
fn solve(design: &Design<f64>, y: &[f64], penalty: &[f64]) -> Vec<f64> {
    let (mut gram, rhs) = design.normal_equations(y, None);
    let p = rhs.len();
    for (c, pen) in penalty.iter().enumerate() {
        gram[c * p + c] += pen;
    }
    // escalate only if Cholesky breaks down numerically
    let mut jitter = 1e-12;
    loop {
        if let Some(beta) = ridge_solve(&gram, &rhs, jitter) {
            return beta;
        }
        jitter *= 100.0;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Trend and multiplicative seasonal factor at row `i`.
fn components(trend_basis: &Design<f64>, seasonal_basis: &Design<f64>, tb: &[f64], sb: &[f64], i: usize) -> (f64, f64) {
    (dot(trend_basis.row(i), tb), 1.0 + dot(seasonal_basis.row(i), sb))
}

/// Minimises `Σ (y − trend·factor)² + Σ penalty_k θ_k²` over the stacked
/// trend and seasonal coefficients `θ`.
///
/// Changepoint slope changes carry a Gaussian prior with scale
/// `prior_scale` (weight `σ̂²/τ²`, `σ̂²` from an additive pilot fit); every
/// coefficient except the intercept additionally carries the ridge `lambda`. Starts from the
/// additive joint fit and refines with damped Gauss–Newton steps.
fn fit_bilinear(
    trend_basis: &Design<f64>,
    seasonal_basis: &Design<f64>,
    joint: &Design<f64>,
    y: &[f64],
    lambda: f64,
    prior_scale: f64,
) -> Vec<f64> {
    let n = y.len();
    let tc = trend_basis.cols;
    let p = joint.cols;

    let mut penalty = vec![lambda; p];
    penalty[0] = 0.0;
    let pilot = solve(joint, y, &penalty);
    let sse: f64 = (0..n).map(|i| (y[i] - dot(joint.row(i), &pilot)).powi(2)).sum();
    let sigma2 = sse / n.saturating_sub(p).max(1) as f64;
    for pen in &mut penalty[2..tc] {
        *pen += sigma2 / (prior_scale * prior_scale);
    }

    let mut theta = solve(joint, y, &penalty);
    let additive_trend: Vec<f64> = (0..n).map(|i| dot(trend_basis.row(i), &theta[..tc])).collect();
    let level = additive_trend.iter().sum::<f64>() / n as f64;
    if level.abs() > f64::EPSILON {
        for b in theta[tc..].iter_mut() {
            *b /= level;
        }
    } else {
        theta[tc..].iter_mut().for_each(|b| *b = 0.0);
    }

    let objective = |theta: &[f64]| -> f64 {
        let (tb, sb) = theta.split_at(tc);
        let sse: f64 = (0..n)
            .map(|i| {
                let (t, f) = components(trend_basis, seasonal_basis, tb, sb, i);
                (y[i] - t * f).powi(2)
            })
            .sum();
        sse + theta.iter().zip(&penalty).map(|(t, k)| k * t * t).sum::<f64>()
    };

    let mut current = objective(&theta);
    let mut damping = 1e-8;
    let mut jac = Design::<f64>::new(n, p);
    let mut residual = vec![0.0; n];
    for _ in 0..MAX_ITERATIONS {
        let (tb, sb) = theta.split_at(tc);
        for i in 0..n {
            let (t, f) = components(trend_basis, seasonal_basis, tb, sb, i);
            residual[i] = y[i] - t * f;
            for c in 0..tc {
                jac.set(i, c, trend_basis.at(i, c) * f);
            }
            for c in tc..p {
                jac.set(i, c, seasonal_basis.at(i, c - tc) * t);
            }
        }
        let (mut gram, mut rhs) = jac.normal_equations(&residual, None);
        for c in 0..p {
            rhs[c] -= penalty[c] * theta[c];
            gram[c * p + c] += penalty[c];
        }
        let mut improved = false;
        while damping < 1e12 {
            if let Some(step) = ridge_solve(&gram, &rhs, damping) {
                let candidate: Vec<f64> = theta.iter().zip(&step).map(|(a, b)| a + b).collect();
                let value = objective(&candidate);
                if value < current {
                    let gain = current - value;
                    theta = candidate;
                    current = value;
                    damping = (damping / 10.0).max(1e-15);
                    improved = gain > 1e-14 * (1.0 + current);
                    break;
                }
            }
            damping *= 10.0;
        }
        if !improved {
            break;
        }
    }
    theta
}

/// Fits the decomposition on `context` (first point at `start`) and
/// forecasts `horizon` steps with Gaussian intervals from the residual
/// standard deviation.
pub fn decomposition_fit_forecast<T: Scalar>(
    context: &[T],
    start: DateTime<Utc>,
    horizon: usize,
    spec: &DecompositionSpec,
    levels: &QuantileLevels,
) -> Result<(ProbabilisticForecast<T>, DecompositionFit)> {
    spec.validate()?;
    let n = context.len();
    if n < 3 {
        return Err(ForecastError::InsufficientContext {
            model: DECOMPOSITION_ID.into(),
            needed: 3,
            got: n,
        });
    }
    let y_raw: Vec<f64> = context.iter().map(|v| v.to_f64_lossy()).collect();
    let abs: Vec<f64> = y_raw.iter().map(|v| v.abs()).collect();
    let scale = mean(&abs).unwrap();
    let basis = Basis {
        spec: *spec,
        epoch_hour: start.timestamp() as f64 / 3600.0,
        span: n as f64,
    };
    let (tc, sc) = (spec.trend_cols(), spec.seasonal_cols());

    let mut trend_basis = Design::<f64>::new(n + horizon, tc);
    let mut seasonal_basis = Design::<f64>::new(n + horizon, sc);
    let mut row_t = vec![0.0; tc];
    let mut row_s = vec![0.0; sc];
    for i in 0..n + horizon {
        basis.trend_row(i, &mut row_t);
        basis.seasonal_row(i, &mut row_s);
        for (c, &v) in row_t.iter().enumerate() {
            trend_basis.set(i, c, v);
        }
        for (c, &v) in row_s.iter().enumerate() {
            seasonal_basis.set(i, c, v);
        }
    }

    // identifiability of the linearised (additive) design
    let mut joint = Design::<f64>::new(n, tc + sc);
    for i in 0..n {
        for c in 0..tc {
            joint.set(i, c, trend_basis.at(i, c));
        }
        for c in 0..sc {
            joint.set(i, tc + c, seasonal_basis.at(i, c));
        }
    }
    let (joint_gram, _) = joint.normal_equations(&y_raw, None);
    let design_rank = gram_rank(&joint_gram, tc + sc, RANK_TOLERANCE);
    let rank_deficient = design_rank < tc + sc || (n as f64) < WEEK;
    if rank_deficient {
        log::debug!(
            "fourier-decomp: rank-deficient design (n = {n}, rank {design_rank} of {})",
            tc + sc
        );
    }

    let fitted = if scale > 0.0 {
        let y: Vec<f64> = y_raw.iter().map(|v| v / scale).collect();
        let theta = fit_bilinear(&trend_basis, &seasonal_basis, &joint, &y, spec.ridge, spec.changepoint_prior_scale);
        let (trend_beta, seasonal_beta) = theta.split_at(tc);
        (0..n + horizon)
            .map(|i| {
                let (trend, factor) = components(&trend_basis, &seasonal_basis, trend_beta, seasonal_beta, i);
                trend * factor * scale
            })
            .collect()
    } else {
        vec![0.0; n + horizon]
    };

    let sse: f64 = y_raw.iter().zip(&fitted).map(|(a, b)| (a - b).powi(2)).sum();
    let dof = n.saturating_sub(design_rank).max(1) as f64;
    let residual_sd = (sse / dof).sqrt();

    let point: Vec<T> = fitted[n..].iter().map(|&v| T::lit(v)).collect();
    if point.iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::FitFailed {
            model: DECOMPOSITION_ID.into(),
            reason: "non-finite extrapolation".into(),
            best_params: Vec::new(),
        });
    }
    let sigmas = vec![T::lit(residual_sd); horizon];
    let forecast = ProbabilisticForecast::gaussian(&point, &sigmas, levels)?;
    Ok((
        forecast,
        DecompositionFit {
            rank_deficient,
            design_rank,
            design_cols: tc + sc,
            residual_sd,
        },
    ))
}

#[derive(Debug, Clone, Default)]
pub struct DecompositionForecaster {
    pub spec: DecompositionSpec,
}

impl<T: Scalar> Forecaster<T> for DecompositionForecaster {
    fn model_id(&self) -> &str {
        DECOMPOSITION_ID
    }

    fn kind(&self) -> ForecasterKind {
        ForecasterKind::NativeBaseline
    }

    fn forecast(&self, task: &ForecastTask<T>) -> Result<ForecastOutput<T>> {
        let started = Instant::now();
        let (mut forecast, fit) = decomposition_fit_forecast(
            task.context.values(),
            task.context.start(),
            task.horizon,
            &self.spec,
            &task.quantile_levels,
        )?;
        // fit and extrapolation share one solve; charge it all to fitting
        forecast.inference_seconds = 0.0;
        Ok(ForecastOutput {
            forecast,
            diagnostics: FitDiagnostics {
                fit_seconds: started.elapsed().as_secs_f64(),
                rank_deficient: fit.rank_deficient,
                ..FitDiagnostics::default()
            },
        })
    }
}
