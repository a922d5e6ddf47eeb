//! Diebold–Mariano testing, window confidence intervals, robustness CV and
//! multi-criteria ranking.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dist::{student_t_quantile, two_sided_p};
use crate::scalar::{mean, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("error sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("loss differential has zero HAC variance (n = {n}, lags = {hac_lags}); statistic undefined")]
    Degenerate { n: usize, hac_lags: usize },
    #[error("mean is zero; coefficient of variation undefined")]
    ZeroMean,
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T, E = StatsError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub hac_lags: usize,
}

/// Newey–West automatic bandwidth `⌊4(n/100)^{2/9}⌋`.
pub fn newey_west_lags(n: usize) -> usize {
    (4.0 * (n as f64 / 100.0).powf(2.0 / 9.0)).floor() as usize
}

/// Bartlett-kernel HAC estimate of `Var(mean(d))`.
pub fn hac_variance_of_mean<T: Scalar>(d: &[T], lags: usize) -> T {
    let n = d.len();
    let nf = T::from_usize_lossy(n);
    let d_bar = mean(d).unwrap_or_else(T::zero);
    let centred: Vec<T> = d.iter().map(|&x| x - d_bar).collect();
    let autocov = |k: usize| -> T {
        centred[k..]
            .iter()
            .zip(&centred[..n - k])
            .map(|(&a, &b)| a * b)
            .sum::<T>()
            / nf
    };
    let mut long_run = autocov(0);
    for k in 1..=lags.min(n.saturating_sub(1)) {
        let w = T::one() - T::from_usize_lossy(k) / T::from_usize_lossy(lags + 1);
        long_run = long_run + T::lit(2.0) * w * autocov(k);
    }
    long_run.max(T::zero()) / nf
}

/// DM test on absolute-error loss: `d_t = |e_a| − |e_b|`. Negative
/// statistics favour `errors_a`.
pub fn diebold_mariano<T: Scalar>(errors_a: &[T], errors_b: &[T], hac_lags: Option<usize>) -> Result<DmResult> {
    if errors_a.len() != errors_b.len() {
        return Err(StatsError::LengthMismatch(errors_a.len(), errors_b.len()));
    }
    let n = errors_a.len();
    if n < 10 {
        return Err(StatsError::TooShort { needed: 10, got: n });
    }
    let d: Vec<T> = errors_a.iter().zip(errors_b).map(|(a, b)| a.abs() - b.abs()).collect();
    let lags = hac_lags.unwrap_or_else(|| newey_west_lags(n));
    let var = hac_variance_of_mean(&d, lags);
    let scale = d.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    // relative floor: rounding noise on a constant differential must not pass as signal
    if var <= T::zero() || var.sqrt() <= scale * T::epsilon() * T::lit(16.0) {
        return Err(StatsError::Degenerate { n, hac_lags: lags });
    }
    let statistic = (mean(&d).unwrap() / var.sqrt()).to_f64_lossy();
    Ok(DmResult {
        statistic,
        p_value: two_sided_p(statistic),
        n,
        hac_lags: lags,
    })
}

/// Student-t confidence interval on the mean: `(mean, half_width)`.
pub fn window_ci<T: Scalar>(values: &[T], level: f64) -> Result<(T, T)> {
    if values.len() < 2 {
        return Err(StatsError::TooShort { needed: 2, got: values.len() });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::Invalid(format!("confidence level {level} outside (0,1)")));
    }
    let n = values.len();
    let m = mean(values).unwrap();
    let ss: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    let sd = (ss / T::from_usize_lossy(n - 1)).sqrt();
    let t = T::lit(student_t_quantile(0.5 + level / 2.0, (n - 1) as f64));
    Ok((m, t * sd / T::from_usize_lossy(n).sqrt()))
}

/// Population standard deviation over mean.
pub fn robustness_cv<T: Scalar>(values: &[T]) -> Result<T> {
    if values.len() < 2 {
        return Err(StatsError::TooShort { needed: 2, got: values.len() });
    }
    let m = mean(values).unwrap();
    if m == T::zero() {
        return Err(StatsError::ZeroMean);
    }
    let var = values.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(values.len());
    Ok(var.sqrt() / m.abs())
}

/// Raw per-model values for the four ranking dimensions (lower is better).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingInput {
    pub model: String,
    /// `|coverage − 0.90|`
    pub coverage_deviation: f64,
    pub crps: f64,
    pub robustness_cv: f64,
    pub latency_seconds: f64,
}

impl RankingInput {
    fn dimensions(&self) -> [f64; 4] {
        [self.coverage_deviation, self.crps, self.robustness_cv, self.latency_seconds]
    }
}

pub const RANK_DIMENSIONS: [&str; 4] = ["calibration", "crps", "robustness", "latency"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedModel {
    pub model: String,
    /// Ranks in [`RANK_DIMENSIONS`] order.
    pub ranks: [usize; 4],
    pub composite: usize,
}

/// Competition ranks (1 = best, ties share the minimum) per dimension,
/// summed into a composite; sorted by composite then model name.
pub fn composite_ranking(inputs: &[RankingInput]) -> Result<Vec<RankedModel>> {
    if inputs.len() < 2 {
        return Err(StatsError::TooShort { needed: 2, got: inputs.len() });
    }
    for input in inputs {
        if input.dimensions().iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(StatsError::Invalid(format!(
                "{}: ranking inputs must be finite and non-negative",
                input.model
            )));
        }
    }
    let mut ranked: Vec<RankedModel> = inputs
        .iter()
        .map(|input| {
            let mine = input.dimensions();
            let mut ranks = [0usize; 4];
            for (dim, rank) in ranks.iter_mut().enumerate() {
                *rank = 1 + inputs.iter().filter(|other| other.dimensions()[dim] < mine[dim]).count();
            }
            RankedModel {
                model: input.model.clone(),
                ranks,
                composite: ranks.iter().sum(),
            }
        })
        .collect();
    ranked.sort_by(|a, b| a.composite.cmp(&b.composite).then_with(|| a.model.cmp(&b.model)));
    Ok(ranked)
}
