//! Core types and algorithms for probabilistic hourly load forecasting:
//! series handling, forecast containers, scoring, significance testing,
//! native baselines and prescriptive analytics.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the common `f64` instantiation.

pub mod baselines;
pub mod dist;
pub mod forecast;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod prescriptive;
pub mod scalar;
pub mod series;
pub mod stats;

pub use scalar::Scalar;

pub type Series = series::HourlySeries<f64>;
pub type Series32 = series::HourlySeries<f32>;
pub type Forecast = forecast::ProbabilisticForecast<f64>;
pub type Forecast32 = forecast::ProbabilisticForecast<f32>;
pub type Task = forecast::ForecastTask<f64>;
pub type Task32 = forecast::ForecastTask<f32>;
