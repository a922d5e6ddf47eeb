//! Point, distributional and interval scores.
//!
//! Everything here is a plain average over forecast steps, so every score is
//! invariant to reordering the (actual, forecast) pairs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast::ProbabilisticForecast;
use crate::scalar::{mean, sort_floats, Scalar};

/// Weekly seasonal period used by MASE.
pub const MASE_PERIOD: usize = 168;
/// Nominal coverage of the headline prediction interval.
pub const HEADLINE_NOMINAL: f64 = 0.90;
const LEVEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("length mismatch: {0} actuals vs {1} forecasts")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("scaling history of {len} points is too short for lag {lag}")]
    ShortHistory { len: usize, lag: usize },
    #[error("degenerate MASE scaling: the history is exactly {lag}-periodic (mean seasonal error is 0)")]
    DegenerateScaling { lag: usize },
    #[error("quantile level {0} is missing from the forecast grid")]
    MissingLevel(f64),
    #[error("need >= 2 samples per step")]
    TooFewSamples,
    #[error("invalid argument: {0}")]
    Invalid(String),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Which series supplies the MASE denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaseScaling {
    /// Everything from series start up to the origin, lag 168.
    #[default]
    History,
    /// The context window only, with lag falling back 168 → 24 → 1.
    Context,
}

/// Seasonal lag for the context scaling variant.
pub fn context_scaling_lag(len: usize) -> usize {
    if len > MASE_PERIOD {
        MASE_PERIOD
    } else if len > 24 {
        24
    } else {
        1
    }
}

fn check_lengths<A, B>(a: &[A], b: &[B]) -> Result<()> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

/// Mean absolute seasonal difference `mean |y_t − y_{t−lag}|`.
pub fn seasonal_scale<T: Scalar>(history: &[T], lag: usize) -> Result<T> {
    if lag == 0 || history.len() <= lag {
        return Err(MetricError::ShortHistory { len: history.len(), lag });
    }
    let diffs: Vec<T> = history.windows(lag + 1).map(|w| (w[lag] - w[0]).abs()).collect();
    let scale = mean(&diffs).unwrap();
    if scale <= T::zero() {
        return Err(MetricError::DegenerateScaling { lag });
    }
    Ok(scale)
}

pub fn mae<T: Scalar>(actuals: &[T], forecasts: &[T]) -> Result<T> {
    check_lengths(actuals, forecasts)?;
    let errs: Vec<T> = actuals.iter().zip(forecasts).map(|(y, f)| (*y - *f).abs()).collect();
    Ok(mean(&errs).unwrap())
}

/// MASE with seasonal period `m` computed on `scaling_history`.
pub fn mase<T: Scalar>(actuals: &[T], forecasts: &[T], scaling_history: &[T], m: usize) -> Result<T> {
    let numerator = mae(actuals, forecasts)?;
    Ok(numerator / seasonal_scale(scaling_history, m)?)
}

/// Sample CRPS via the energy form `E|X − y| − ½E|X − X′|`, averaged over
/// steps. The pair expectation runs over all ordered pairs (including
/// `i = j`), evaluated in `O(S log S)` from the sorted sample.
pub fn crps_samples<T: Scalar>(actuals: &[T], samples: &[Vec<T>]) -> Result<T> {
    check_lengths(actuals, samples)?;
    let mut total = T::zero();
    for (&y, row) in actuals.iter().zip(samples) {
        total = total + crps_step(y, row)?;
    }
    Ok(total / T::from_usize_lossy(actuals.len()))
}

fn crps_step<T: Scalar>(y: T, row: &[T]) -> Result<T> {
    let s = row.len();
    if s < 2 {
        return Err(MetricError::TooFewSamples);
    }
    let mut sorted = row.to_vec();
    sort_floats(&mut sorted);
    let n = T::from_usize_lossy(s);
    let mut abs_dev = T::zero();
    let mut weighted = T::zero();
    for (i, &x) in sorted.iter().enumerate() {
        abs_dev = abs_dev + (x - y).abs();
        // Σ_{i,j}|x_i − x_j| = 2 Σ_i (2i − S + 1) x_(i) with 0-based i
        weighted = weighted + T::lit((2 * i) as f64 + 1.0 - s as f64) * x;
    }
    let pair_mean = T::lit(2.0) * weighted / (n * n);
    Ok(abs_dev / n - T::lit(0.5) * pair_mean)
}

fn column<T: Scalar>(quantiles: &[Vec<T>], levels: &[f64], level: f64) -> Result<Vec<T>> {
    let j = levels
        .iter()
        .position(|l| (l - level).abs() < LEVEL_TOLERANCE)
        .ok_or(MetricError::MissingLevel(level))?;
    Ok(quantiles.iter().map(|row| row[j]).collect())
}

/// Central interval `[q((1−ν)/2), q((1+ν)/2)]` for nominal coverage ν.
pub fn central_interval<T: Scalar>(quantiles: &[Vec<T>], levels: &[f64], nominal: f64) -> Result<(Vec<T>, Vec<T>)> {
    Ok((
        column(quantiles, levels, (1.0 - nominal) / 2.0)?,
        column(quantiles, levels, (1.0 + nominal) / 2.0)?,
    ))
}

fn fraction_inside<T: Scalar>(actuals: &[T], lower: &[T], upper: &[T]) -> f64 {
    let hits = actuals
        .iter()
        .zip(lower.iter().zip(upper))
        .filter(|(y, (l, u))| **l <= **y && **y <= **u)
        .count();
    hits as f64 / actuals.len() as f64
}

/// Fraction of steps with `l ≤ y ≤ u` for the central interval at `nominal`.
pub fn coverage<T: Scalar>(actuals: &[T], quantiles: &[Vec<T>], levels: &[f64], nominal: f64) -> Result<f64> {
    check_lengths(actuals, quantiles)?;
    let (lower, upper) = central_interval(quantiles, levels, nominal)?;
    Ok(fraction_inside(actuals, &lower, &upper))
}

/// Interval score with miscoverage `delta` (penalty `2/δ` per unit outside).
pub fn winkler<T: Scalar>(actuals: &[T], lower: &[T], upper: &[T], delta: f64) -> Result<T> {
    check_lengths(actuals, lower)?;
    check_lengths(actuals, upper)?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MetricError::Invalid(format!("miscoverage {delta} outside (0,1)")));
    }
    let penalty = T::lit(2.0 / delta);
    let mut total = T::zero();
    for ((&y, &l), &u) in actuals.iter().zip(lower).zip(upper) {
        if l > u {
            return Err(MetricError::Invalid("lower bound above upper bound".into()));
        }
        let mut score = u - l;
        if y < l {
            score = score + penalty * (l - y);
        } else if y > u {
            score = score + penalty * (y - u);
        }
        total = total + score;
    }
    Ok(total / T::from_usize_lossy(actuals.len()))
}

/// One point of a reliability diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelValue {
    pub nominal: f64,
    pub value: f64,
}

fn symmetric_nominals(levels: &[f64]) -> Vec<f64> {
    let has = |x: f64| levels.iter().any(|l| (l - x).abs() < LEVEL_TOLERANCE);
    let mut out: Vec<f64> = levels
        .iter()
        .filter(|&&l| l < 0.5 - LEVEL_TOLERANCE && has(1.0 - l))
        .map(|&l| 1.0 - 2.0 * l)
        .collect();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out
}

/// Empirical versus nominal coverage for every symmetric pair in the grid.
pub fn reliability_curve<T: Scalar>(actuals: &[T], quantiles: &[Vec<T>], levels: &[f64]) -> Result<Vec<LevelValue>> {
    check_lengths(actuals, quantiles)?;
    symmetric_nominals(levels)
        .into_iter()
        .map(|nominal| {
            Ok(LevelValue {
                nominal,
                value: coverage(actuals, quantiles, levels, nominal)?,
            })
        })
        .collect()
}

/// Mean interval width divided by `actual_scale`, per symmetric level.
pub fn norm_interval_width<T: Scalar>(quantiles: &[Vec<T>], levels: &[f64], actual_scale: T) -> Result<Vec<LevelValue>> {
    if quantiles.is_empty() {
        return Err(MetricError::Empty);
    }
    if actual_scale <= T::zero() {
        return Err(MetricError::Invalid("actual scale must be positive".into()));
    }
    symmetric_nominals(levels)
        .into_iter()
        .map(|nominal| {
            let (lower, upper) = central_interval(quantiles, levels, nominal)?;
            let widths: Vec<T> = lower.iter().zip(&upper).map(|(l, u)| *u - *l).collect();
            Ok(LevelValue {
                nominal,
                value: (mean(&widths).unwrap() / actual_scale).to_f64_lossy(),
            })
        })
        .collect()
}

/// All scores for one forecast against its actuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mase: f64,
    pub mae: f64,
    pub crps: Option<f64>,
    pub coverage: Vec<LevelValue>,
    pub winkler: Vec<LevelValue>,
    pub norm_interval_width: Vec<LevelValue>,
    pub n_steps: usize,
}

impl MetricReport {
    pub fn coverage_at(&self, nominal: f64) -> Option<f64> {
        lookup(&self.coverage, nominal)
    }

    pub fn winkler_at(&self, nominal: f64) -> Option<f64> {
        lookup(&self.winkler, nominal)
    }

    pub fn width_at(&self, nominal: f64) -> Option<f64> {
        lookup(&self.norm_interval_width, nominal)
    }
}

fn lookup(values: &[LevelValue], nominal: f64) -> Option<f64> {
    values
        .iter()
        .find(|lv| (lv.nominal - nominal).abs() < 1e-6)
        .map(|lv| lv.value)
}

/// Scores `forecast` against `actuals` with the given MASE denominator.
/// Distributional scores are filled only when the forecast carries
/// quantiles (interval scores) or samples (CRPS).
pub fn evaluate<T: Scalar>(forecast: &ProbabilisticForecast<T>, actuals: &[T], mase_scale: T) -> Result<MetricReport> {
    check_lengths(actuals, &forecast.point)?;
    if mase_scale <= T::zero() {
        return Err(MetricError::DegenerateScaling { lag: 0 });
    }
    let mae_value = mae(actuals, &forecast.point)?;
    let crps = match &forecast.samples {
        Some(samples) => Some(crps_samples(actuals, samples)?.to_f64_lossy()),
        None => None,
    };
    let mut report = MetricReport {
        mase: (mae_value / mase_scale).to_f64_lossy(),
        mae: mae_value.to_f64_lossy(),
        crps,
        coverage: Vec::new(),
        winkler: Vec::new(),
        norm_interval_width: Vec::new(),
        n_steps: actuals.len(),
    };
    if forecast.has_quantiles() {
        report.coverage = reliability_curve(actuals, &forecast.quantiles, &forecast.levels)?;
        for lv in &report.coverage {
            let (lower, upper) = central_interval(&forecast.quantiles, &forecast.levels, lv.nominal)?;
            report.winkler.push(LevelValue {
                nominal: lv.nominal,
                value: winkler(actuals, &lower, &upper, 1.0 - lv.nominal)?.to_f64_lossy(),
            });
        }
        let abs: Vec<T> = actuals.iter().map(|y| y.abs()).collect();
        let scale = mean(&abs).unwrap();
        if scale > T::zero() {
            report.norm_interval_width = norm_interval_width(&forecast.quantiles, &forecast.levels, scale)?;
        }
    }
    Ok(report)
}
