//! Decision support on top of probabilistic load forecasts: peak
//! exceedance and demand-response tiers, reserve sizing, synthetic prices and
//! battery arbitrage by dynamic programming.

use chrono::Timelike;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::normal_quantile;
use crate::forecast::{gaussian_from_quantiles, ProbabilisticForecast};
use crate::scalar::{mean, Scalar};
use crate::series::HourlySeries;

#[derive(Debug, Error, PartialEq)]
pub enum PrescriptiveError {
    #[error("forecast carries no samples")]
    NoSamples,
    #[error("forecast carries no quantiles")]
    NoQuantiles,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("invalid battery spec: {0}")]
    InvalidBattery(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = PrescriptiveError> = std::result::Result<T, E>;

/// Per-hour fraction of samples strictly above `threshold`.
pub fn peak_exceedance<T: Scalar>(forecast: &ProbabilisticForecast<T>, threshold: T) -> Result<Vec<f64>> {
    let samples = forecast.samples.as_ref().ok_or(PrescriptiveError::NoSamples)?;
    Ok(samples
        .iter()
        .map(|row| row.iter().filter(|&&x| x > threshold).count() as f64 / row.len().max(1) as f64)
        .collect())
}

pub const DR_TIER_CUTOFFS: [f64; 3] = [0.25, 0.5, 0.75];

/// Demand-response level 0–3 from exceedance probability.
pub fn dr_tiers(probabilities: &[f64]) -> Result<Vec<u8>> {
    probabilities
        .iter()
        .map(|&p| {
            if !(0.0..=1.0).contains(&p) {
                return Err(PrescriptiveError::Invalid(format!("probability {p} outside [0,1]")));
            }
            Ok(DR_TIER_CUTOFFS.iter().filter(|&&c| p >= c).count() as u8)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ReservePolicy {
    /// Reserve is a fixed fraction of the point forecast.
    Fixed { fraction: f64 },
    /// Reserve is `Q(target) − Q(0.5)` of the predictive distribution.
    Probabilistic { target_quantile: f64 },
}

impl ReservePolicy {
    pub const FIXED_DEFAULT: ReservePolicy = ReservePolicy::Fixed { fraction: 0.10 };
    pub const PROBABILISTIC_DEFAULT: ReservePolicy = ReservePolicy::Probabilistic { target_quantile: 0.999 };

    fn validate(&self) -> Result<()> {
        match *self {
            ReservePolicy::Fixed { fraction } if fraction <= 0.0 => {
                Err(PrescriptiveError::Invalid(format!("fixed fraction {fraction} must be > 0")))
            }
            ReservePolicy::Probabilistic { target_quantile } if !(target_quantile > 0.5 && target_quantile < 1.0) => {
                Err(PrescriptiveError::Invalid(format!("target quantile {target_quantile} outside (0.5, 1)")))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ReservePolicy::Fixed { fraction } => format!("fixed-{:.0}%", fraction * 100.0),
            ReservePolicy::Probabilistic { target_quantile } => format!("probabilistic-q{target_quantile}"),
        }
    }
}

/// Per-hour reserve under `policy`.
///
/// Target quantiles on the forecast grid are read directly; levels beyond
/// the grid use the per-step Gaussian fitted to the quantile curve.
pub fn reserve_requirement<T: Scalar>(forecast: &ProbabilisticForecast<T>, policy: &ReservePolicy) -> Result<Vec<T>> {
    policy.validate()?;
    match *policy {
        ReservePolicy::Fixed { fraction } => Ok(forecast.point.iter().map(|&p| p * T::lit(fraction)).collect()),
        ReservePolicy::Probabilistic { target_quantile } => {
            if !forecast.has_quantiles() {
                return Err(PrescriptiveError::NoQuantiles);
            }
            if let (Some(hi), Some(mid)) = (forecast.quantile_column(target_quantile), forecast.quantile_column(0.5)) {
                return Ok(hi.iter().zip(&mid).map(|(&h, &m)| (h - m).max(T::zero())).collect());
            }
            let z = T::lit(normal_quantile(target_quantile));
            forecast
                .quantiles
                .iter()
                .map(|row| {
                    let (_, sigma) = gaussian_from_quantiles(&forecast.levels, row)
                        .map_err(|e| PrescriptiveError::Invalid(e.to_string()))?;
                    Ok(sigma * z)
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReserveOutcome {
    pub policy: ReservePolicy,
    pub mean_reserve: f64,
    pub shortfall_rate: f64,
    /// `1 − mean(reserve)/mean(fixed reserve)`; 0 for the fixed policy itself.
    pub reduction_vs_fixed: f64,
}

/// Compares reserve policies on one forecast and its realised load. A
/// shortfall is an hour with `actual > point + reserve`.
pub fn reserve_compare<T: Scalar>(
    forecast: &ProbabilisticForecast<T>,
    actuals: &[T],
    policies: &[ReservePolicy],
) -> Result<Vec<ReserveOutcome>> {
    if actuals.len() != forecast.horizon() {
        return Err(PrescriptiveError::LengthMismatch(actuals.len(), forecast.horizon()));
    }
    let fixed = reserve_requirement(forecast, &ReservePolicy::FIXED_DEFAULT)?;
    let fixed_mean = mean(&fixed).unwrap_or_else(T::zero).to_f64_lossy();
    policies
        .iter()
        .map(|policy| {
            let reserve = reserve_requirement(forecast, policy)?;
            let mean_reserve = mean(&reserve).unwrap_or_else(T::zero).to_f64_lossy();
            let shortfalls = actuals
                .iter()
                .zip(forecast.point.iter().zip(&reserve))
                .filter(|(&y, (&p, &r))| y > p + r)
                .count();
            let reduction_vs_fixed = match policy {
                ReservePolicy::Fixed { .. } if *policy == ReservePolicy::FIXED_DEFAULT => 0.0,
                _ if fixed_mean > 0.0 => 1.0 - mean_reserve / fixed_mean,
                _ => 0.0,
            };
            Ok(ReserveOutcome {
                policy: *policy,
                mean_reserve,
                shortfall_rate: shortfalls as f64 / actuals.len().max(1) as f64,
                reduction_vs_fixed,
            })
        })
        .collect()
}

/// Synthetic price coefficients: `a + b·normalised load + diurnal(hour)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriceModel {
    pub base: f64,
    pub load_slope: f64,
}

impl Default for PriceModel {
    fn default() -> Self {
        Self {
            base: 20.0,
            load_slope: 80.0,
        }
    }
}

/// Additive price shape by UTC hour of day (currency/MWh): cheap overnight,
/// a morning shoulder and an evening peak.
pub const DIURNAL_PROFILE: [f64; 24] = [
    -6.0, -8.0, -9.0, -10.0, -9.0, -6.0, -2.0, 4.0, 8.0, 6.0, 3.0, 1.0, 0.0, 0.0, 1.0, 2.0, 4.0, 8.0, 12.0, 14.0, 10.0,
    5.0, 0.0, -4.0,
];

/// Per-hour synthetic price for a load trajectory.
pub fn synth_price<T: Scalar>(load: &HourlySeries<T>, model: &PriceModel) -> Vec<T> {
    let values = load.values();
    let (min, max) = values
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let range = max - min;
    load.timestamps()
        .zip(values)
        .map(|(ts, &v)| {
            let norm = if range > T::zero() { (v - min) / range } else { T::zero() };
            T::lit(model.base) + T::lit(model.load_slope) * norm + T::lit(DIURNAL_PROFILE[ts.hour() as usize])
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TerminalSoc {
    /// Final state of charge must equal the initial one.
    ReturnToInitial,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatterySpec {
    /// MWh
    pub capacity: f64,
    /// Maximum state-of-charge change per hour (MW).
    pub power_limit: f64,
    pub round_trip_efficiency: f64,
    /// Currency per MWh of throughput.
    pub cycling_cost: f64,
    /// MWh
    pub initial_soc: f64,
    pub soc_levels: usize,
    pub terminal: TerminalSoc,
}

impl Default for BatterySpec {
    fn default() -> Self {
        Self {
            capacity: 1000.0,
            power_limit: 250.0,
            round_trip_efficiency: 0.90,
            cycling_cost: 2.0,
            initial_soc: 500.0,
            soc_levels: 201,
            terminal: TerminalSoc::ReturnToInitial,
        }
    }
}

impl BatterySpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(PrescriptiveError::InvalidBattery(m));
        if !(self.capacity > 0.0) {
            return bad(format!("capacity {} must be > 0", self.capacity));
        }
        if !(self.power_limit > 0.0) {
            return bad(format!("power limit {} must be > 0", self.power_limit));
        }
        if !(self.round_trip_efficiency > 0.0 && self.round_trip_efficiency <= 1.0) {
            return bad(format!("efficiency {} outside (0, 1]", self.round_trip_efficiency));
        }
        if !(self.cycling_cost >= 0.0) {
            return bad(format!("cycling cost {} must be >= 0", self.cycling_cost));
        }
        if !(0.0..=self.capacity).contains(&self.initial_soc) {
            return bad(format!("initial soc {} outside [0, {}]", self.initial_soc, self.capacity));
        }
        if self.soc_levels < 2 {
            return bad("need at least 2 SoC levels".into());
        }
        Ok(())
    }

    pub fn grid_step(&self) -> f64 {
        self.capacity / (self.soc_levels - 1) as f64
    }

    /// Initial SoC snapped to the grid.
    pub fn initial_level(&self) -> usize {
        ((self.initial_soc / self.grid_step()).round() as usize).min(self.soc_levels - 1)
    }

    /// Largest number of grid steps reachable in one hour.
    pub fn max_level_move(&self) -> usize {
        ((self.power_limit / self.grid_step()) + 1e-9).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSchedule {
    /// MW per hour on the storage side; positive discharges.
    pub actions: Vec<f64>,
    /// MWh, `horizon + 1` entries starting with the initial SoC.
    pub soc: Vec<f64>,
    pub net_benefit: f64,
}

/// Revenue of one hour: discharge sells `a·√η`, charging buys `|a|/√η`,
/// throughput pays the cycling cost.
fn hour_value(price: f64, action: f64, spec: &BatterySpec) -> f64 {
    let leg = spec.round_trip_efficiency.sqrt();
    let energy = if action >= 0.0 { action * leg } else { action / leg };
    price * energy - spec.cycling_cost * action.abs()
}

/// Objective of an arbitrary schedule under `prices` (may differ from the
/// prices it was optimised for).
pub fn schedule_value<T: Scalar>(actions: &[f64], prices: &[T], spec: &BatterySpec) -> Result<f64> {
    if actions.len() != prices.len() {
        return Err(PrescriptiveError::LengthMismatch(actions.len(), prices.len()));
    }
    Ok(actions
        .iter()
        .zip(prices)
        .map(|(&a, &p)| hour_value(p.to_f64_lossy(), a, spec))
        .sum())
}

/// Checks bounds, power limits and SoC bookkeeping of a schedule.
pub fn check_schedule(schedule: &DispatchSchedule, spec: &BatterySpec) -> Result<()> {
    let tol = 1e-6 * spec.capacity.max(1.0);
    if schedule.soc.len() != schedule.actions.len() + 1 {
        return Err(PrescriptiveError::Invalid("soc trajectory length".into()));
    }
    for (h, &a) in schedule.actions.iter().enumerate() {
        if a.abs() > spec.power_limit + tol {
            return Err(PrescriptiveError::Invalid(format!("hour {h}: action {a} exceeds power limit")));
        }
        if (schedule.soc[h + 1] - (schedule.soc[h] - a)).abs() > tol {
            return Err(PrescriptiveError::Invalid(format!("hour {h}: soc bookkeeping broken")));
        }
    }
    if schedule.soc.iter().any(|&s| s < -tol || s > spec.capacity + tol) {
        return Err(PrescriptiveError::Invalid("soc outside [0, capacity]".into()));
    }
    Ok(())
}

/// Exact optimum over the discretised SoC grid by backward induction.
pub fn optimize_dispatch<T: Scalar>(prices: &[T], spec: &BatterySpec) -> Result<DispatchSchedule> {
    spec.validate()?;
    let horizon = prices.len();
    if horizon < 2 {
        return Err(PrescriptiveError::Invalid(format!("horizon {horizon} < 2")));
    }
    let prices: Vec<f64> = prices.iter().map(|p| p.to_f64_lossy()).collect();
    if prices.iter().any(|p| !p.is_finite()) {
        return Err(PrescriptiveError::Invalid("non-finite price".into()));
    }
    let levels = spec.soc_levels;
    let step = spec.grid_step();
    let reach = spec.max_level_move();
    let start = spec.initial_level();

    // value[l] = best value from hour h onward starting at level l
    let mut value: Vec<f64> = (0..levels)
        .map(|l| match spec.terminal {
            TerminalSoc::Free => 0.0,
            TerminalSoc::ReturnToInitial if l == start => 0.0,
            TerminalSoc::ReturnToInitial => f64::NEG_INFINITY,
        })
        .collect();
    let mut policy = vec![vec![0usize; levels]; horizon];
    for h in (0..horizon).rev() {
        let mut next = vec![f64::NEG_INFINITY; levels];
        for l in 0..levels {
            let lo = l.saturating_sub(reach);
            let hi = (l + reach).min(levels - 1);
            let mut best = (f64::NEG_INFINITY, l);
            for target in lo..=hi {
                if value[target] == f64::NEG_INFINITY {
                    continue;
                }
                let action = (l as f64 - target as f64) * step;
                let v = hour_value(prices[h], action, spec) + value[target];
                // ties go to the smaller move, so flat prices stay idle
                if v > best.0 + 1e-9 || (v >= best.0 - 1e-9 && target.abs_diff(l) < best.1.abs_diff(l)) {
                    best = (v, target);
                }
            }
            next[l] = best.0;
            policy[h][l] = best.1;
        }
        value = next;
    }
    if value[start] == f64::NEG_INFINITY {
        return Err(PrescriptiveError::Invalid("no feasible schedule".into()));
    }

    let mut soc = vec![start as f64 * step];
    let mut actions = Vec::with_capacity(horizon);
    let mut level = start;
    for row in &policy {
        let target = row[level];
        actions.push((level as f64 - target as f64) * step);
        soc.push(target as f64 * step);
        level = target;
    }
    let net_benefit = schedule_value(&actions, &prices, spec)?;
    Ok(DispatchSchedule {
        actions,
        soc,
        net_benefit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forecast::QuantileLevels;

    #[test]
    fn tiers_by_threshold() {
        assert_eq!(dr_tiers(&[0.1, 0.3, 0.6, 0.9]).unwrap(), vec![0, 1, 2, 3]);
        assert_eq!(dr_tiers(&[0.0; 4]).unwrap(), vec![0; 4]);
        assert_eq!(dr_tiers(&[0.25, 0.5, 0.75]).unwrap(), vec![1, 2, 3]);
        assert!(dr_tiers(&[1.2]).is_err());
    }

    #[test]
    fn exceedance_extremes() {
        let f = ProbabilisticForecast::point_only(vec![10.0, 10.0])
            .unwrap()
            .with_samples(vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0]])
            .unwrap();
        assert_eq!(peak_exceedance(&f, 0.0).unwrap(), vec![1.0, 1.0]);
        assert_eq!(peak_exceedance(&f, 2.5).unwrap(), vec![0.5, 1.0]);
        let bare = ProbabilisticForecast::point_only(vec![1.0]).unwrap();
        assert_eq!(peak_exceedance(&bare, 0.0), Err(PrescriptiveError::NoSamples));
    }

    #[test]
    fn zero_spread_reserve() {
        let levels = QuantileLevels::default_grid();
        let f = ProbabilisticForecast::gaussian(&[1000.0, 1200.0], &[0.0, 0.0], &levels).unwrap();
        let out = reserve_compare(
            &f,
            &[1000.0, 1200.0],
            &[ReservePolicy::FIXED_DEFAULT, ReservePolicy::PROBABILISTIC_DEFAULT],
        )
        .unwrap();
        assert_eq!(out[1].mean_reserve, 0.0);
        assert_eq!(out[1].reduction_vs_fixed, 1.0);
        assert!((out[0].mean_reserve - 110.0).abs() < 1e-9);
    }

    #[test]
    fn flat_prices_stay_idle() {
        let s = optimize_dispatch(&[50.0f64; 24], &BatterySpec::default()).unwrap();
        assert!(s.actions.iter().all(|&a| a == 0.0));
        assert_eq!(s.net_benefit, 0.0);
    }

    #[test]
    fn rejects_bad_specs() {
        let spec = BatterySpec {
            initial_soc: 1500.0,
            ..BatterySpec::default()
        };
        assert!(matches!(optimize_dispatch(&[1.0, 2.0], &spec), Err(PrescriptiveError::InvalidBattery(_))));
        assert!(optimize_dispatch(&[1.0], &BatterySpec::default()).is_err());
    }

    #[test]
    fn full_cycle_returns_eta() {
        // charge 250 MWh into storage, discharge it back out
        let spec = BatterySpec::default();
        let bought = -hour_value(1.0, -250.0, &BatterySpec { cycling_cost: 0.0, ..spec });
        let sold = hour_value(1.0, 250.0, &BatterySpec { cycling_cost: 0.0, ..spec });
        assert!((sold / bought - 0.9).abs() < 1e-12);
    }
}
