//! Native reference forecasters.

mod decomposition;
mod naive;
mod sarima;

pub use decomposition::{decomposition_fit_forecast, DecompositionFit, DecompositionForecaster, DecompositionSpec};
pub use naive::{seasonal_naive, seasonal_naive_lag, SeasonalNaive};
pub use sarima::{sarima_fit_forecast, SarimaFit, SarimaForecaster, SarimaSpec};

pub const SEASONAL_NAIVE_ID: &str = "seasonal-naive";
pub const SARIMA_ID: &str = "sarima";
pub const DECOMPOSITION_ID: &str = "fourier-decomp";
