//! Forecaster abstraction, the probabilistic forecast data model, and the
//! conversions between quantile curves and sample paths.

use chrono::{DateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::normal_quantile;
use crate::scalar::{mean, sort_floats, sorted_quantile, Scalar};
use crate::series::HourlySeries;

/// Lower/upper probability bounds used by inverse-CDF sampling.
pub const INVERSE_CDF_RANGE: (f64, f64) = (0.05, 0.95);
/// Noise scale (fraction of mean |point|) for point-only producers.
pub const POINT_NOISE_FRACTION: f64 = 0.10;
pub const DEFAULT_SAMPLE_COUNT: usize = 1000;
const LEVEL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid forecast: {0}")]
    Invalid(String),
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("{model}: insufficient context ({got} points, need {needed})")]
    InsufficientContext {
        model: String,
        needed: usize,
        got: usize,
    },
    #[error("{model}: fit failed: {reason}")]
    FitFailed {
        model: String,
        reason: String,
        best_params: Vec<f64>,
    },
    #[error("{model}: {message}")]
    Producer { model: String, message: String },
}

pub type Result<T, E = ForecastError> = std::result::Result<T, E>;

/// Strictly increasing probability levels in (0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QuantileLevels(Vec<f64>);

impl QuantileLevels {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.iter().any(|l| !(*l > 0.0 && *l < 1.0)) {
            return Err(ForecastError::Invalid(format!("levels must lie in (0,1): {levels:?}")));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ForecastError::Invalid(format!("levels must be strictly increasing: {levels:?}")));
        }
        Ok(Self(levels))
    }

    /// `{0.01, 0.05, 0.10, …, 0.95, 0.99}`: 21 levels.
    pub fn default_grid() -> Self {
        let mut levels = vec![0.01];
        levels.extend((1..=19).map(|k| (k as f64 * 0.05 * 100.0).round() / 100.0));
        levels.push(0.99);
        Self(levels)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, level: f64) -> Option<usize> {
        self.0.iter().position(|l| (l - level).abs() < LEVEL_TOLERANCE)
    }

    pub fn contains(&self, level: f64) -> bool {
        self.position(level).is_some()
    }

    /// True if every level has its mirror `1 − level` in the grid.
    pub fn is_symmetric(&self) -> bool {
        self.0.iter().all(|l| self.contains(1.0 - l))
    }

    /// Nominal coverages `1 − 2l` of every symmetric pair, ascending.
    pub fn symmetric_nominals(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .0
            .iter()
            .filter(|&&l| l < 0.5 - LEVEL_TOLERANCE && self.contains(1.0 - l))
            .map(|&l| 1.0 - 2.0 * l)
            .collect();
        out.sort_by(|a, b| a.partial_cmp(b).unwrap());
        out
    }
}

impl TryFrom<Vec<f64>> for QuantileLevels {
    type Error = ForecastError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<QuantileLevels> for Vec<f64> {
    fn from(l: QuantileLevels) -> Self {
        l.0
    }
}

/// One evaluation cell handed to a forecaster.
#[derive(Debug, Clone)]
pub struct ForecastTask<T> {
    pub model_id: String,
    pub context: HourlySeries<T>,
    pub horizon: usize,
    pub quantile_levels: QuantileLevels,
    pub origin: DateTime<Utc>,
    pub seed: u64,
}

impl<T: Scalar> ForecastTask<T> {
    pub fn new(
        model_id: impl Into<String>,
        context: HourlySeries<T>,
        horizon: usize,
        quantile_levels: QuantileLevels,
        seed: u64,
    ) -> Result<Self> {
        if horizon == 0 {
            return Err(ForecastError::InvalidTask("horizon must be >= 1".into()));
        }
        let origin = context.end();
        Ok(Self {
            model_id: model_id.into(),
            context,
            horizon,
            quantile_levels,
            origin,
            seed,
        })
    }
}

/// Per-step quantile curves plus optional sample paths.
///
/// `quantiles[h][j]` is the level-`levels[j]` quantile at step `h`;
/// `samples[h]` holds the draws at step `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilisticForecast<T> {
    pub point: Vec<T>,
    pub levels: Vec<f64>,
    pub quantiles: Vec<Vec<T>>,
    pub samples: Option<Vec<Vec<T>>>,
    pub inference_seconds: f64,
    /// Steps whose quantile row had to be re-sorted.
    pub crossing_repairs: usize,
}

impl<T: Scalar> ProbabilisticForecast<T> {
    /// Builds a forecast from quantile rows, sorting any crossed rows and
    /// taking the point forecast from the median column when present.
    pub fn from_quantiles(point: Vec<T>, levels: &QuantileLevels, mut quantiles: Vec<Vec<T>>) -> Result<Self> {
        if quantiles.len() != point.len() {
            return Err(ForecastError::Invalid(format!(
                "{} quantile rows for {} steps",
                quantiles.len(),
                point.len()
            )));
        }
        check_finite(&point, "point")?;
        let mut repairs = 0;
        for (h, row) in quantiles.iter_mut().enumerate() {
            if row.len() != levels.len() {
                return Err(ForecastError::Invalid(format!(
                    "step {h}: {} quantiles for {} levels",
                    row.len(),
                    levels.len()
                )));
            }
            check_finite(row, "quantile")?;
            if row.windows(2).any(|w| w[1] < w[0]) {
                sort_floats(row);
                repairs += 1;
            }
        }
        if repairs > 0 {
            log::warn!("repaired quantile crossing at {repairs} step(s)");
        }
        let point = match levels.position(0.5) {
            Some(j) => quantiles.iter().map(|row| row[j]).collect(),
            None => point,
        };
        Ok(Self {
            point,
            levels: levels.as_slice().to_vec(),
            quantiles,
            samples: None,
            inference_seconds: 0.0,
            crossing_repairs: repairs,
        })
    }

    pub fn point_only(point: Vec<T>) -> Result<Self> {
        check_finite(&point, "point")?;
        Ok(Self {
            quantiles: vec![Vec::new(); point.len()],
            point,
            levels: Vec::new(),
            samples: None,
            inference_seconds: 0.0,
            crossing_repairs: 0,
        })
    }

    /// Gaussian per-step predictive `N(mean_h, sigma_h²)` on `levels`.
    pub fn gaussian(means: &[T], sigmas: &[T], levels: &QuantileLevels) -> Result<Self> {
        let z: Vec<T> = levels.as_slice().iter().map(|&l| T::lit(normal_quantile(l))).collect();
        let quantiles = means
            .iter()
            .zip(sigmas)
            .map(|(&m, &s)| z.iter().map(|&zj| m + s * zj).collect())
            .collect();
        Self::from_quantiles(means.to_vec(), levels, quantiles)
    }

    pub fn horizon(&self) -> usize {
        self.point.len()
    }

    pub fn has_quantiles(&self) -> bool {
        !self.levels.is_empty()
    }

    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|l| (l - level).abs() < LEVEL_TOLERANCE)
    }

    pub fn quantile_column(&self, level: f64) -> Option<Vec<T>> {
        let j = self.level_index(level)?;
        Some(self.quantiles.iter().map(|row| row[j]).collect())
    }

    /// Lower/upper bounds of the central interval with the given nominal
    /// coverage, if both quantile columns exist.
    pub fn interval(&self, nominal: f64) -> Option<(Vec<T>, Vec<T>)> {
        let lo = self.quantile_column((1.0 - nominal) / 2.0)?;
        let hi = self.quantile_column((1.0 + nominal) / 2.0)?;
        Some((lo, hi))
    }

    pub fn with_samples(mut self, samples: Vec<Vec<T>>) -> Result<Self> {
        if samples.len() != self.point.len() {
            return Err(ForecastError::Invalid(format!(
                "{} sample rows for {} steps",
                samples.len(),
                self.point.len()
            )));
        }
        for row in &samples {
            check_finite(row, "sample")?;
        }
        self.samples = Some(samples);
        Ok(self)
    }

    /// Fills `samples` from the quantile curves (or point noise when the
    /// forecast is point-only) unless samples are already present.
    pub fn ensure_samples(self, method: SampleMethod, n_samples: usize, seed: u64) -> Result<Self> {
        if self.samples.is_some() {
            return Ok(self);
        }
        let samples = match (method, self.has_quantiles()) {
            (SampleMethod::PointNoise, _) | (_, false) => samples_by_point_noise(&self.point, n_samples, seed),
            (SampleMethod::FittedGaussian, true) => self
                .quantiles
                .iter()
                .enumerate()
                .map(|(h, row)| {
                    samples_by_fitted_gaussian(&self.levels, row, n_samples, step_seed(seed, h))
                })
                .collect(),
            (SampleMethod::InverseCdf, true) => self
                .quantiles
                .iter()
                .enumerate()
                .map(|(h, row)| samples_by_inverse_cdf(&self.levels, row, n_samples, step_seed(seed, h)))
                .collect(),
        };
        self.with_samples(samples)
    }

    /// Replaces the quantile grid with `levels`, interpolating each row.
    pub fn regrid(&self, levels: &QuantileLevels) -> Result<Self> {
        if !self.has_quantiles() {
            return Err(ForecastError::Invalid("cannot regrid a point-only forecast".into()));
        }
        let quantiles = self
            .quantiles
            .iter()
            .map(|row| interpolate_curve(&self.levels, row, levels.as_slice()))
            .collect();
        let mut out = Self::from_quantiles(self.point.clone(), levels, quantiles)?;
        out.samples = self.samples.clone();
        out.inference_seconds = self.inference_seconds;
        out.crossing_repairs += self.crossing_repairs;
        Ok(out)
    }
}

fn check_finite<T: Scalar>(xs: &[T], what: &str) -> Result<()> {
    if let Some(i) = xs.iter().position(|v| !v.is_finite()) {
        return Err(ForecastError::Invalid(format!("non-finite {what} value at index {i}")));
    }
    Ok(())
}

fn step_seed(seed: u64, step: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

/// How to turn quantile curves into sample paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMethod {
    FittedGaussian,
    InverseCdf,
    PointNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ForecasterKind {
    NativeBaseline,
    ExternalAdapter,
}

/// Timing and diagnostics that accompany a produced forecast.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub fit_seconds: f64,
    pub rank_deficient: bool,
    /// Seasonal lag actually used by seasonal-naive style producers.
    pub seasonal_lag: Option<usize>,
    /// Set when the reported inference time already includes fitting.
    pub includes_fit: bool,
}

#[derive(Debug, Clone)]
pub struct ForecastOutput<T> {
    pub forecast: ProbabilisticForecast<T>,
    pub diagnostics: FitDiagnostics,
}

/// A model that maps a [`ForecastTask`] to a probabilistic forecast.
///
/// Identical task and seed must give identical output.
pub trait Forecaster<T: Scalar>: Send + Sync {
    fn model_id(&self) -> &str;
    fn kind(&self) -> ForecasterKind;
    fn forecast(&self, task: &ForecastTask<T>) -> Result<ForecastOutput<T>>;
}

/// Least-squares fit of `values ≈ mean + sigma·z(level)`.
pub fn gaussian_from_quantiles<T: Scalar>(levels: &[f64], values: &[T]) -> Result<(T, T)> {
    if levels.len() != values.len() || levels.len() < 2 {
        return Err(ForecastError::Invalid(format!(
            "need >= 2 matching levels/values, got {}/{}",
            levels.len(),
            values.len()
        )));
    }
    let z: Vec<T> = levels.iter().map(|&l| T::lit(normal_quantile(l))).collect();
    let n = T::from_usize_lossy(z.len());
    let z_bar = z.iter().copied().sum::<T>() / n;
    let v_bar = values.iter().copied().sum::<T>() / n;
    let mut szz = T::zero();
    let mut szv = T::zero();
    for (&zi, &vi) in z.iter().zip(values) {
        szz = szz + (zi - z_bar) * (zi - z_bar);
        szv = szv + (zi - z_bar) * (vi - v_bar);
    }
    if szz <= T::zero() {
        return Err(ForecastError::Invalid("levels must contain at least two distinct values".into()));
    }
    let mut sigma = szv / szz;
    if sigma < T::zero() {
        log::warn!("degenerate Gaussian fit (sigma = {sigma}); clamped to 0");
        sigma = T::zero();
    }
    let mu = v_bar - (szv / szz) * z_bar;
    Ok((mu, sigma))
}

/// Piecewise-linear interpolation of a `(level, value)` curve, held constant
/// beyond its end levels.
pub fn interpolate_curve<T: Scalar>(levels: &[f64], values: &[T], at: &[f64]) -> Vec<T> {
    at.iter().map(|&u| interpolate_at(levels, values, u)).collect()
}

fn interpolate_at<T: Scalar>(levels: &[f64], values: &[T], u: f64) -> T {
    let last = levels.len() - 1;
    if u <= levels[0] {
        return values[0];
    }
    if u >= levels[last] {
        return values[last];
    }
    let k = levels.partition_point(|&l| l <= u).max(1);
    let (l0, l1) = (levels[k - 1], levels[k]);
    let w = T::lit((u - l0) / (l1 - l0));
    values[k - 1] + (values[k] - values[k - 1]) * w
}

/// Draws `u ~ U(0.05, 0.95)` and maps it through the interpolated curve.
pub fn samples_by_inverse_cdf<T: Scalar>(levels: &[f64], values: &[T], n_samples: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = INVERSE_CDF_RANGE;
    (0..n_samples)
        .map(|_| interpolate_at(levels, values, rng.random_range(lo..hi)))
        .collect()
}

/// Draws from the Gaussian fitted to the quantile curve.
pub fn samples_by_fitted_gaussian<T: Scalar>(levels: &[f64], values: &[T], n_samples: usize, seed: u64) -> Vec<T> {
    let (mu, sigma) = match gaussian_from_quantiles(levels, values) {
        Ok(fit) => fit,
        Err(_) => (values[values.len() / 2], T::zero()),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n_samples)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            mu + sigma * T::lit(z)
        })
        .collect()
}

/// `point_h + ε`, `ε ~ N(0, (0.10·mean|point|)²)`, returned as H rows of S.
pub fn samples_by_point_noise<T: Scalar>(point: &[T], n_samples: usize, seed: u64) -> Vec<Vec<T>> {
    let abs: Vec<T> = point.iter().map(|v| v.abs()).collect();
    let scale = mean(&abs).unwrap_or_else(T::zero).to_f64_lossy() * POINT_NOISE_FRACTION;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if scale <= 0.0 {
        return point.iter().map(|&p| vec![p; n_samples]).collect();
    }
    let noise = Normal::new(0.0, scale).expect("positive scale");
    point
        .iter()
        .map(|&p| (0..n_samples).map(|_| p + T::lit(noise.sample(&mut rng))).collect())
        .collect()
}

/// Type-7 empirical quantiles of every sample row at `levels`.
pub fn quantiles_from_samples<T: Scalar>(samples: &[Vec<T>], levels: &[f64]) -> Result<Vec<Vec<T>>> {
    samples
        .iter()
        .enumerate()
        .map(|(h, row)| {
            if row.len() < 2 {
                return Err(ForecastError::Invalid(format!("step {h}: need >= 2 samples")));
            }
            let mut sorted = row.clone();
            sort_floats(&mut sorted);
            Ok(levels.iter().map(|&l| sorted_quantile(&sorted, l)).collect())
        })
        .collect()
}
