//! SARIMA(2,1,2)(1,1,1)₂₄ by conditional sum of squares.
//!
//! The model is fitted on the doubly differenced series
//! `w_t = (1 − B)(1 − B²⁴) y_t` with pre-sample residuals set to zero and the
//! first `p + P·s` differenced values used only as conditioning lags.
//! Forecasts run the ARMA recursion forward and integrate back; interval
//! widths come from the ψ-weights of the full (integrated) operator.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::forecast::{
    FitDiagnostics, ForecastError, ForecastOutput, ForecastTask, Forecaster, ForecasterKind, ProbabilisticForecast,
    QuantileLevels, Result,
};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::scalar::{mean, Scalar};

use super::SARIMA_ID;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SarimaSpec {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    pub seasonal_p: usize,
    pub seasonal_d: usize,
    pub seasonal_q: usize,
    pub period: usize,
}

impl Default for SarimaSpec {
    fn default() -> Self {
        Self {
            p: 2,
            d: 1,
            q: 2,
            seasonal_p: 1,
            seasonal_d: 1,
            seasonal_q: 1,
            period: 24,
        }
    }
}

impl SarimaSpec {
    fn check_fixed(&self) -> Result<()> {
        if *self != Self::default() {
            return Err(ForecastError::InvalidTask(format!(
                "only the (2,1,2)(1,1,1)_24 order is supported, got {self:?}"
            )));
        }
        Ok(())
    }

    fn differencing_loss(&self) -> usize {
        self.d + self.seasonal_d * self.period
    }

    fn max_ar_lag(&self) -> usize {
        self.p + self.seasonal_p * self.period
    }

    /// Smallest context with at least one conditional residual.
    pub fn min_context(&self) -> usize {
        self.differencing_loss() + self.max_ar_lag() + 1
    }

    fn n_params(&self) -> usize {
        self.p + self.q + self.seasonal_p + self.seasonal_q
    }
}

/// Fitted coefficients and innovation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarimaFit {
    pub ar: [f64; 2],
    pub ma: [f64; 2],
    pub seasonal_ar: f64,
    pub seasonal_ma: f64,
    pub sigma2: f64,
    pub css: f64,
    pub evals: usize,
    pub reflected_roots: bool,
}

/// `1 − Σ a_k B^k` of the multiplicative AR part as lag coefficients.
fn expand_ar<T: Scalar>(ar: [T; 2], sar: T, s: usize) -> Vec<(usize, T)> {
    vec![(1, ar[0]), (2, ar[1]), (s, sar), (s + 1, -ar[0] * sar), (s + 2, -ar[1] * sar)]
}

/// `1 + Σ m_k B^k` of the multiplicative MA part as lag coefficients.
fn expand_ma<T: Scalar>(ma: [T; 2], sma: T, s: usize) -> Vec<(usize, T)> {
    vec![(1, ma[0]), (2, ma[1]), (s, sma), (s + 1, ma[0] * sma), (s + 2, ma[1] * sma)]
}

fn difference<T: Scalar>(y: &[T], lag: usize) -> Vec<T> {
    y.windows(lag + 1).map(|w| w[lag] - w[0]).collect()
}

/// Conditional residuals for `t ≥ start`; earlier residuals are zero.
fn css_residuals<T: Scalar>(w: &[T], ar: &[(usize, T)], ma: &[(usize, T)], start: usize) -> Vec<T> {
    let mut e = vec![T::zero(); w.len()];
    for t in start..w.len() {
        let mut v = w[t];
        for &(k, a) in ar {
            v = v - a * w[t - k];
        }
        for &(k, m) in ma {
            if t >= k {
                v = v - m * e[t - k];
            }
        }
        e[t] = v;
    }
    e
}

const RESTARTS: usize = 3;

/// Feasible region of the CSS search: AR coefficients boxed in (−2, 2),
/// the MA part strictly invertible, seasonal coefficients in (−1, 1).
fn within_bounds(x: &[f64]) -> bool {
    x[..2].iter().all(|v| v.abs() < 2.0)
        && max_inverse_root(-x[2], -x[3]) < 1.0
        && x[4..].iter().all(|v| v.abs() < 1.0)
}

/// Largest inverse-root modulus of `1 − a₁z − a₂z²`.
fn max_inverse_root(a1: f64, a2: f64) -> f64 {
    let disc = a1 * a1 + 4.0 * a2;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        ((a1 + sq) / 2.0).abs().max(((a1 - sq) / 2.0).abs())
    } else {
        (-a2).sqrt()
    }
}

fn unpack<T: Scalar>(x: &[T]) -> ([T; 2], [T; 2], T, T) {
    ([x[0], x[1]], [x[2], x[3]], x[4], x[5])
}

/// Reflects inverse roots of `1 − a₁z − a₂z²` outside the unit circle back
/// inside. Returns the repaired coefficients and whether anything changed.
fn reflect_quadratic(a1: f64, a2: f64) -> ([f64; 2], bool) {
    let disc = a1 * a1 + 4.0 * a2;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let (mut r1, mut r2) = ((a1 + sq) / 2.0, (a1 - sq) / 2.0);
        let mut changed = false;
        for r in [&mut r1, &mut r2] {
            if r.abs() > 1.0 {
                *r = 1.0 / *r;
                changed = true;
            }
        }
        ([r1 + r2, -r1 * r2], changed)
    } else {
        // complex pair with |r|² = −a₂
        let modulus2 = -a2;
        if modulus2 > 1.0 {
            ([a1 / modulus2, 1.0 / a2], true)
        } else {
            ([a1, a2], false)
        }
    }
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn lag_poly(coeffs: &[(usize, f64)], sign: f64) -> Vec<f64> {
    let deg = coeffs.iter().map(|c| c.0).max().unwrap_or(0);
    let mut p = vec![0.0; deg + 1];
    p[0] = 1.0;
    for &(k, c) in coeffs {
        p[k] += sign * c;
    }
    p
}

/// ψ-weights `ψ₀..ψ_{h−1}` of the integrated model.
fn psi_weights(fit: &SarimaFit, spec: &SarimaSpec, horizon: usize) -> Vec<f64> {
    let s = spec.period;
    let ar = expand_ar(fit.ar, fit.seasonal_ar, s);
    let ma = expand_ma(fit.ma, fit.seasonal_ma, s);
    let mut diff = vec![0.0; s + 1];
    diff[0] = 1.0;
    diff[s] = -1.0;
    let full_ar = poly_mul(&poly_mul(&lag_poly(&ar, -1.0), &[1.0, -1.0]), &diff);
    let ma_poly = lag_poly(&ma, 1.0);
    let mut psi = vec![0.0; horizon];
    for j in 0..horizon {
        let mut v = if j < ma_poly.len() { ma_poly[j] } else { 0.0 };
        for k in 1..full_ar.len().min(j + 1) {
            v -= full_ar[k] * psi[j - k];
        }
        psi[j] = v;
    }
    psi
}

/// CSS estimate plus the state needed to run the forecast recursion.
struct FittedSarima {
    fit: SarimaFit,
    w: Vec<f64>,
    residuals: Vec<f64>,
    unit: f64,
    ar_lags: Vec<(usize, f64)>,
    ma_lags: Vec<(usize, f64)>,
}

fn fit_css<T: Scalar>(context: &[T], spec: &SarimaSpec) -> Result<FittedSarima> {
    spec.check_fixed()?;
    let needed = spec.min_context();
    if context.len() < needed {
        return Err(ForecastError::InsufficientContext {
            model: SARIMA_ID.into(),
            needed,
            got: context.len(),
        });
    }
    let s = spec.period;
    let w_raw = difference(&difference(context, 1), s);
    let start = spec.max_ar_lag();

    let w_mean = mean(&w_raw).unwrap();
    let sd = (w_raw.iter().map(|&v| (v - w_mean) * (v - w_mean)).sum::<T>() / T::from_usize_lossy(w_raw.len())).sqrt();
    let unit = if sd > T::zero() { sd.to_f64_lossy() } else { 1.0 };
    let w: Vec<f64> = w_raw.iter().map(|&v| v.to_f64_lossy() / unit).collect();
    let n_resid = (w.len() - start) as f64;

    let objective = |x: &[f64]| -> f64 {
        if !within_bounds(x) {
            return f64::INFINITY;
        }
        let (ar, ma, sar, sma) = unpack(x);
        let e = css_residuals(&w, &expand_ar(ar, sar, s), &expand_ma(ma, sma, s), start);
        e[start..].iter().map(|v| v * v).sum::<f64>() / n_resid
    };

    let opts = NelderMeadOptions {
        max_evals: 3000,
        f_tol: 1e-8,
        initial_step: 0.1,
    };
    let x0 = vec![0.0; spec.n_params()];
    let mut best = nelder_mead(objective, &x0, &opts);
    let mut evals = best.evals;
    for _ in 0..RESTARTS {
        if best.converged {
            break;
        }
        let retry = nelder_mead(objective, &best.x.clone(), &opts);
        evals += retry.evals;
        if retry.value <= best.value {
            best = retry;
        }
    }
    if !best.converged || !best.value.is_finite() {
        return Err(ForecastError::FitFailed {
            model: SARIMA_ID.into(),
            reason: format!("CSS search did not converge after {evals} evaluations"),
            best_params: best.x,
        });
    }

    let (ar, ma, sar, sma) = unpack(&best.x);
    let (ar, r1) = reflect_quadratic(ar[0], ar[1]);
    let reflected = r1;
    if reflected {
        log::debug!("sarima: reflected roots into the unit disk");
    }

    let ar_lags = expand_ar(ar, sar, s);
    let ma_lags = expand_ma(ma, sma, s);
    let residuals = css_residuals(&w, &ar_lags, &ma_lags, start);
    let css = residuals[start..].iter().map(|v| v * v).sum::<f64>();
    Ok(FittedSarima {
        fit: SarimaFit {
            ar,
            ma,
            seasonal_ar: sar,
            seasonal_ma: sma,
            sigma2: css / n_resid * unit * unit,
            css,
            evals,
            reflected_roots: reflected,
        },
        w,
        residuals,
        unit,
        ar_lags,
        ma_lags,
    })
}

impl FittedSarima {
    fn forecast<T: Scalar>(
        &self,
        context: &[T],
        horizon: usize,
        spec: &SarimaSpec,
        levels: &QuantileLevels,
    ) -> Result<ProbabilisticForecast<T>> {
        let s = spec.period;
        // ARMA recursion on the unit-scaled w, future innovations zero
        let n = self.w.len();
        let mut w_ext = self.w.clone();
        let mut e_ext = self.residuals.clone();
        for t in n..n + horizon {
            let mut v = 0.0;
            for &(k, a) in &self.ar_lags {
                v += a * w_ext[t - k];
            }
            for &(k, m) in &self.ma_lags {
                v += m * e_ext[t - k];
            }
            w_ext.push(v);
            e_ext.push(0.0);
        }

        // integrate back: y_t = w_t + y_{t−1} + y_{t−s} − y_{t−s−1}
        let mut y: Vec<f64> = context.iter().map(|v| v.to_f64_lossy()).collect();
        let len = y.len();
        for h in 0..horizon {
            let t = len + h;
            let v = w_ext[n + h] * self.unit + y[t - 1] + y[t - s] - y[t - s - 1];
            y.push(v);
        }
        let point: Vec<T> = y[len..].iter().map(|&v| T::lit(v)).collect();

        let psi = psi_weights(&self.fit, spec, horizon);
        let mut acc = 0.0;
        let sigmas: Vec<T> = psi
            .iter()
            .map(|p| {
                acc += p * p;
                T::lit((self.fit.sigma2 * acc).sqrt())
            })
            .collect();
        if point.iter().chain(&sigmas).any(|v| !v.is_finite()) {
            return Err(ForecastError::FitFailed {
                model: SARIMA_ID.into(),
                reason: "forecast recursion diverged".into(),
                best_params: vec![
                    self.fit.ar[0],
                    self.fit.ar[1],
                    self.fit.ma[0],
                    self.fit.ma[1],
                    self.fit.seasonal_ar,
                    self.fit.seasonal_ma,
                ],
            });
        }
        ProbabilisticForecast::gaussian(&point, &sigmas, levels)
    }
}

/// Fits the fixed-order model on `context` and forecasts `horizon` steps
/// with Gaussian quantiles at `levels`.
pub fn sarima_fit_forecast<T: Scalar>(
    context: &[T],
    horizon: usize,
    spec: &SarimaSpec,
    levels: &QuantileLevels,
) -> Result<(ProbabilisticForecast<T>, SarimaFit)> {
    let fitted = fit_css(context, spec)?;
    let forecast = fitted.forecast(context, horizon, spec, levels)?;
    Ok((forecast, fitted.fit))
}

#[derive(Debug, Clone, Default)]
pub struct SarimaForecaster {
    pub spec: SarimaSpec,
}

impl<T: Scalar> Forecaster<T> for SarimaForecaster {
    fn model_id(&self) -> &str {
        SARIMA_ID
    }

    fn kind(&self) -> ForecasterKind {
        ForecasterKind::NativeBaseline
    }

    fn forecast(&self, task: &ForecastTask<T>) -> Result<ForecastOutput<T>> {
        let values = task.context.values();
        let fit_started = Instant::now();
        let fitted = fit_css(values, &self.spec)?;
        let fit_seconds = fit_started.elapsed().as_secs_f64();
        let inference_started = Instant::now();
        let mut forecast = fitted.forecast(values, task.horizon, &self.spec, &task.quantile_levels)?;
        forecast.inference_seconds = inference_started.elapsed().as_secs_f64();
        Ok(ForecastOutput {
            forecast,
            diagnostics: FitDiagnostics {
                fit_seconds,
                ..FitDiagnostics::default()
            },
        })
    }
}
