use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::ValueEnum;
use loadbench_core::forecast::{ProbabilisticForecast, QuantileLevels, SampleMethod};
use loadbench_core::prescriptive::{
    dr_tiers, optimize_dispatch, peak_exceedance, reserve_compare, reserve_requirement, schedule_value, synth_price,
    BatterySpec, PriceModel, ReservePolicy,
};
use loadbench_core::series::{format_timestamp, load_csv, HourlySeries};
use loadbench_harness::config::parse_instant;
use loadbench_harness::protocol::ForecastReply;
use loadbench_harness::Store;
use serde::Deserialize;

#[derive(Clone, Copy, ValueEnum)]
pub enum Action {
    Peak,
    Reserve,
    Storage,
}

#[derive(clap::Args)]
pub struct Args {
    action: Action,
    /// Result store to read the forecast from (with --task).
    #[arg(long, requires = "task", conflicts_with = "forecast")]
    store: Option<PathBuf>,
    /// Task key of a stored record, as printed in the store.
    #[arg(long)]
    task: Option<String>,
    /// Forecast reply JSON (adapter wire format).
    #[arg(long, requires = "origin")]
    forecast: Option<PathBuf>,
    /// First forecast hour for --forecast.
    #[arg(long)]
    origin: Option<String>,
    /// Quantile levels of the forecast file's rows; defaults to the 21-level grid.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// Series CSV holding the realised load for --forecast.
    #[arg(long)]
    actuals: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Peak threshold in MW.
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long, default_value_t = 0.10)]
    fixed_fraction: f64,
    #[arg(long, default_value_t = 0.999)]
    target_quantile: f64,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// MWh
    #[arg(long)]
    capacity: Option<f64>,
    /// MW
    #[arg(long)]
    power: Option<f64>,
    #[arg(long)]
    efficiency: Option<f64>,
    #[arg(long)]
    cycling_cost: Option<f64>,
    /// MWh
    #[arg(long)]
    initial_soc: Option<f64>,
}

/// A forecast file: an adapter reply, optionally carrying its own levels.
#[derive(Deserialize)]
struct ForecastFile {
    #[serde(flatten)]
    reply: ForecastReply,
    #[serde(default)]
    quantile_levels: Option<Vec<f64>>,
}

struct Input {
    origin: DateTime<Utc>,
    forecast: ProbabilisticForecast<f64>,
    actuals: Option<Vec<f64>>,
}

impl Input {
    fn timestamps(&self) -> impl Iterator<Item = DateTime<Utc>> + '_ {
        (0..self.forecast.horizon()).map(|h| self.origin + chrono::Duration::hours(h as i64))
    }
}

fn from_store(dir: &Path, key: &str) -> Result<Input> {
    let store = Store::open(dir)?;
    let record = store
        .records()
        .find(|r| r.task.key() == key)
        .ok_or_else(|| anyhow!("no record {key:?} in {}", dir.display()))?;
    if let Some(f) = &record.failure {
        bail!("record {key} failed ({:?}): {}", f.kind, f.message);
    }
    let steps = record
        .steps
        .as_ref()
        .ok_or_else(|| anyhow!("record {key} has no step data"))?;
    let forecast = if steps.quantiles.is_empty() {
        ProbabilisticForecast::point_only(steps.point.clone())?
    } else {
        ProbabilisticForecast::from_quantiles(
            steps.point.clone(),
            &QuantileLevels::new(steps.levels.clone())?,
            steps.quantiles.clone(),
        )?
    };
    Ok(Input {
        origin: record.origin,
        forecast,
        actuals: Some(steps.actuals.clone()),
    })
}

fn from_file(path: &Path, origin: &str, levels: Option<Vec<f64>>, actuals: Option<&Path>) -> Result<Input> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let file: ForecastFile = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let origin = parse_instant(origin)?;
    let reply = file.reply;
    let forecast = if reply.quantiles.is_empty() {
        ProbabilisticForecast::point_only(reply.point)?
    } else {
        let levels = match levels.or(file.quantile_levels) {
            Some(l) => QuantileLevels::new(l)?,
            None => QuantileLevels::default_grid(),
        };
        ProbabilisticForecast::from_quantiles(reply.point, &levels, reply.quantiles)?
    };
    let actuals = match actuals {
        Some(p) => {
            let series: HourlySeries<f64> = load_csv(p).with_context(|| format!("loading {}", p.display()))?;
            let window = series
                .window(origin, forecast.horizon())
                .with_context(|| format!("{} does not cover the forecast window", p.display()))?;
            Some(window.values().to_vec())
        }
        None => None,
    };
    Ok(Input {
        origin,
        forecast,
        actuals,
    })
}

fn battery(args: &Args) -> BatterySpec {
    let mut spec = BatterySpec::default();
    if let Some(v) = args.capacity {
        spec.capacity = v;
        spec.initial_soc = v / 2.0;
    }
    if let Some(v) = args.power {
        spec.power_limit = v;
    }
    if let Some(v) = args.efficiency {
        spec.round_trip_efficiency = v;
    }
    if let Some(v) = args.cycling_cost {
        spec.cycling_cost = v;
    }
    if let Some(v) = args.initial_soc {
        spec.initial_soc = v;
    }
    spec
}

fn write(out: &Path, name: &str, contents: &str) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let path = out.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    println!("wrote {}", path.display());
    Ok(())
}

pub fn run(args: Args) -> Result<()> {
    let input = match (&args.store, &args.forecast) {
        (Some(dir), None) => from_store(dir, args.task.as_deref().unwrap_or_default())?,
        (None, Some(path)) => from_file(
            path,
            args.origin.as_deref().unwrap_or_default(),
            args.levels.clone(),
            args.actuals.as_deref(),
        )?,
        _ => bail!("give either --store with --task, or --forecast with --origin"),
    };
    match args.action {
        Action::Peak => peak(&args, input),
        Action::Reserve => reserve(&args, input),
        Action::Storage => storage(&args, input),
    }
}

fn peak(args: &Args, input: Input) -> Result<()> {
    let threshold = args.threshold.ok_or_else(|| anyhow!("peak needs --threshold <MW>"))?;
    let forecast = input
        .forecast
        .clone()
        .ensure_samples(SampleMethod::InverseCdf, args.samples, args.seed)?;
    let probs = peak_exceedance(&forecast, threshold)?;
    let tiers = dr_tiers(&probs)?;
    let mut out = String::from("timestamp,point_mw,exceedance_probability,dr_tier\n");
    for (((ts, p), prob), tier) in input.timestamps().zip(&forecast.point).zip(&probs).zip(&tiers) {
        let _ = writeln!(out, "{},{p},{prob},{tier}", format_timestamp(ts));
    }
    write(&args.out, "peak.csv", &out)
}

fn reserve(args: &Args, input: Input) -> Result<()> {
    let actuals = input
        .actuals
        .as_ref()
        .ok_or_else(|| anyhow!("reserve needs realised load (--actuals)"))?;
    let policies = [
        ReservePolicy::Fixed {
            fraction: args.fixed_fraction,
        },
        ReservePolicy::Probabilistic {
            target_quantile: args.target_quantile,
        },
    ];
    let forecast = input
        .forecast
        .clone()
        .ensure_samples(SampleMethod::InverseCdf, args.samples, args.seed)?;
    let reserves: Vec<Vec<f64>> = policies
        .iter()
        .map(|p| reserve_requirement(&forecast, p))
        .collect::<Result<_, _>>()?;
    let mut hourly = format!("timestamp,point_mw,actual_mw,{},{}\n", policies[0].label(), policies[1].label());
    for (h, ts) in input.timestamps().enumerate() {
        let _ = writeln!(
            hourly,
            "{},{},{},{},{}",
            format_timestamp(ts),
            forecast.point[h],
            actuals[h],
            reserves[0][h],
            reserves[1][h]
        );
    }
    write(&args.out, "reserve_hourly.csv", &hourly)?;

    let mut summary = String::from("policy,mean_reserve_mw,shortfall_rate,reduction_vs_fixed\n");
    for o in reserve_compare(&forecast, actuals, &policies)? {
        let _ = writeln!(
            summary,
            "{},{},{},{}",
            o.policy.label(),
            o.mean_reserve,
            o.shortfall_rate,
            o.reduction_vs_fixed
        );
    }
    write(&args.out, "reserve_summary.csv", &summary)
}

fn storage(args: &Args, input: Input) -> Result<()> {
    let spec = battery(args);
    let load = HourlySeries::new("forecast", input.origin, input.forecast.point.clone())?;
    let model = PriceModel::default();
    let prices = synth_price(&load, &model);
    let schedule = optimize_dispatch(&prices, &spec)?;
    let mut out = String::from("timestamp,load_forecast_mw,price,action_mw,soc_start_mwh\n");
    for (h, ts) in input.timestamps().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            format_timestamp(ts),
            load.values()[h],
            prices[h],
            schedule.actions[h],
            schedule.soc[h]
        );
    }
    write(&args.out, "dispatch.csv", &out)?;

    let mut summary = format!(
        "planned_net_benefit,final_soc_mwh,realised_net_benefit\n{},{},",
        schedule.net_benefit,
        schedule.soc.last().copied().unwrap_or(spec.initial_soc)
    );
    if let Some(actuals) = &input.actuals {
        let realised = HourlySeries::new("actual", input.origin, actuals.clone())?;
        let value = schedule_value(&schedule.actions, &synth_price(&realised, &model), &spec)?;
        let _ = write!(summary, "{value}");
    }
    summary.push('\n');
    write(&args.out, "dispatch_summary.csv", &summary)
}
