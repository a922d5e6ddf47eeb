//! Grouped summaries of a result store: the context-length, calibration,
//! distribution-shift and cost tables, plus the per-figure series.

use std::collections::{BTreeMap, BTreeSet};

use chrono::Duration;
use loadbench_core::series::{DayType, ExtremeLabel, PeriodName, Season};
use loadbench_core::stats::{composite_ranking, diebold_mariano, robustness_cv, window_ci, DmResult, RankedModel, RankingInput, StatsError};

use crate::config::{SweepConfig, TableConfig};
use crate::store::EvaluationRecord;

/// Sum and count of one group.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Acc {
    pub sum: f64,
    pub n: usize,
}

impl Acc {
    pub fn push(&mut self, v: f64) {
        self.sum += v;
        self.n += 1;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0).then(|| self.sum / self.n as f64)
    }
}

/// Groups `records` by `key` and accumulates `value`, in record order.
/// Records where either closure returns `None` are skipped.
pub fn group_mean<'a, K: Ord>(
    records: impl IntoIterator<Item = &'a EvaluationRecord>,
    key: impl Fn(&EvaluationRecord) -> Option<K>,
    value: impl Fn(&EvaluationRecord) -> Option<f64>,
) -> BTreeMap<K, Acc> {
    let mut out: BTreeMap<K, Acc> = BTreeMap::new();
    for r in records {
        if let (Some(k), Some(v)) = (key(r), value(r)) {
            out.entry(k).or_default().push(v);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// `None` renders as a blank cell.
    pub value: Option<f64>,
    /// Secondary value, e.g. percentage degradation.
    pub extra: Option<f64>,
    pub n: usize,
}

impl Cell {
    pub fn blank() -> Self {
        Self {
            value: None,
            extra: None,
            n: 0,
        }
    }

    fn from_acc(acc: Option<&Acc>) -> Self {
        match acc {
            Some(a) => Self {
                value: a.mean(),
                extra: None,
                n: a.n,
            },
            None => Self::blank(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub cells: Vec<Cell>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub title: String,
    pub corner: String,
    pub columns: Vec<String>,
    pub rows: Vec<Row>,
    /// Header suffix for the secondary value, when cells carry one.
    pub extra_label: Option<String>,
    /// Values above this are capped in text output.
    pub display_cap: Option<f64>,
    pub notes: Vec<String>,
}

impl Table {
    pub fn cell(&self, row: &str, column: &str) -> Option<&Cell> {
        let c = self.columns.iter().position(|x| x == column)?;
        self.rows.iter().find(|r| r.label == row).map(|r| &r.cells[c])
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(|r| r.cells.iter().all(|c| c.value.is_none()))
    }
}

/// Models in config order, then any others seen in the records.
pub fn model_order(records: &[EvaluationRecord], config: Option<&SweepConfig>) -> Vec<String> {
    let mut order: Vec<String> = config.map(|c| c.models.clone()).unwrap_or_default();
    let seen: BTreeSet<&str> = records.iter().map(|r| r.task.model.as_str()).collect();
    order.retain(|m| seen.contains(m.as_str()));
    for m in seen {
        if !order.iter().any(|o| o == m) {
            order.push(m.to_string());
        }
    }
    order
}

fn distinct<T: Ord + Copy>(records: &[EvaluationRecord], f: impl Fn(&EvaluationRecord) -> T) -> Vec<T> {
    records.iter().map(f).collect::<BTreeSet<_>>().into_iter().collect()
}

pub fn horizons(records: &[EvaluationRecord]) -> Vec<usize> {
    distinct(records, |r| r.task.horizon)
}

pub fn context_lengths(records: &[EvaluationRecord]) -> Vec<usize> {
    distinct(records, |r| r.task.context_len)
}

pub fn periods(records: &[EvaluationRecord]) -> Vec<PeriodName> {
    distinct(records, |r| r.task.period)
}

fn fmt_num(v: f64) -> String {
    if v.abs() >= 100.0 {
        format!("{v:.0}")
    } else if v.abs() >= 10.0 {
        format!("{v:.2}")
    } else {
        format!("{v:.3}")
    }
}

fn failure_notes(records: &[&EvaluationRecord], cell: impl Fn(&EvaluationRecord) -> String) -> Vec<String> {
    let failed = group_mean(records.iter().copied(), |r| (!r.is_ok()).then(|| cell(r)), |_| Some(0.0));
    failed
        .into_iter()
        .map(|(k, acc)| format!("{k}: {} failed task(s) excluded from the mean", acc.n))
        .collect()
}

/// Mean MASE by context length (rows) and model (columns) for one horizon,
/// clean tasks in the headline periods.
pub fn mase_by_context(records: &[EvaluationRecord], models: &[String], horizon: usize, tables: &TableConfig) -> Table {
    let selected: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.task.horizon == horizon && r.task.is_clean() && tables.headline_periods.contains(&r.task.period))
        .collect();
    let groups = group_mean(selected.iter().copied(), |r| Some((r.task.context_len, r.task.model.clone())), |r| r.mase());
    let contexts = distinct(records, |r| r.task.context_len);
    let rows = contexts
        .iter()
        .map(|&c| Row {
            label: format!("{c}h"),
            cells: models.iter().map(|m| Cell::from_acc(groups.get(&(c, m.clone())))).collect(),
        })
        .collect();
    Table {
        name: format!("mase_by_context_h{horizon}"),
        title: format!("MASE by context length ({horizon}-hour horizon, mean over periods and windows)"),
        corner: "context".into(),
        columns: models.to_vec(),
        rows,
        extra_label: None,
        display_cap: Some(tables.display_cap),
        notes: failure_notes(&selected, |r| format!("{} at {}h", r.task.model, r.task.context_len)),
    }
}

/// Coverage, CRPS, Winkler and normalised width at the nominal level, per
/// model, for the configured context length and horizon.
pub fn calibration(records: &[EvaluationRecord], models: &[String], tables: &TableConfig) -> Table {
    let selected: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.task.context_len == tables.context_len && r.task.horizon == tables.horizon && r.task.is_clean())
        .collect();
    let nominal = tables.nominal;
    let metric = |f: fn(&loadbench_core::metrics::MetricReport, f64) -> Option<f64>| {
        group_mean(selected.iter().copied(), |r| Some(r.task.model.clone()), move |r| {
            r.metrics.as_ref().and_then(|m| f(m, nominal))
        })
    };
    let columns = [
        ("coverage", metric(|m, n| m.coverage_at(n))),
        ("crps_mw", metric(|m, _| m.crps)),
        ("winkler_mw", metric(|m, n| m.winkler_at(n))),
        ("norm_width", metric(|m, n| m.width_at(n))),
    ];
    let rows = models
        .iter()
        .map(|m| Row {
            label: m.clone(),
            cells: columns.iter().map(|(_, g)| Cell::from_acc(g.get(m))).collect(),
        })
        .collect();
    Table {
        name: "calibration".into(),
        title: format!(
            "Calibration at the {:.0}% nominal level (C = {}h, H = {}h)",
            nominal * 100.0,
            tables.context_len,
            tables.horizon
        ),
        corner: "model".into(),
        columns: columns.iter().map(|(c, _)| c.to_string()).collect(),
        rows,
        extra_label: None,
        display_cap: None,
        notes: vec!["blank: the model produced no intervals or samples".into()],
    }
}

/// Mean MASE per period (rows) and model (columns), with percentage change
/// against the reference period.
pub fn distribution_shift(records: &[EvaluationRecord], models: &[String], tables: &TableConfig) -> Table {
    let selected: Vec<&EvaluationRecord> = records
        .iter()
        .filter(|r| r.task.context_len == tables.context_len && r.task.horizon == tables.horizon && r.task.is_clean())
        .collect();
    let groups = group_mean(selected.iter().copied(), |r| Some((r.task.period, r.task.model.clone())), |r| r.mase());
    let mut order = vec![tables.reference_period];
    order.extend(distinct(records, |r| r.task.period).into_iter().filter(|p| *p != tables.reference_period));
    let rows = order
        .iter()
        .map(|&p| Row {
            label: if p == tables.reference_period { format!("{p} (ref)") } else { p.to_string() },
            cells: models
                .iter()
                .map(|m| {
                    let mut cell = Cell::from_acc(groups.get(&(p, m.clone())));
                    let reference = groups.get(&(tables.reference_period, m.clone())).and_then(Acc::mean);
                    cell.extra = match (cell.value, reference) {
                        (Some(v), Some(r)) if r > 0.0 => Some(100.0 * (v / r - 1.0)),
                        _ => None,
                    };
                    cell
                })
                .collect(),
        })
        .collect();
    Table {
        name: "distribution_shift".into(),
        title: format!(
            "MASE under distribution shift (C = {}h, H = {}h), change vs {}",
            tables.context_len, tables.horizon, tables.reference_period
        ),
        corner: "period".into(),
        columns: models.to_vec(),
        rows,
        extra_label: Some("change_pct".into()),
        display_cap: None,
        notes: Vec::new(),
    }
}

/// Mean and total wall-clock per forecast, over every record.
pub fn computational_cost(records: &[EvaluationRecord], models: &[String]) -> Table {
    let groups = group_mean(records, |r| Some(r.task.model.clone()), |r| Some(r.timing.total()));
    let fitted: BTreeSet<&str> = records
        .iter()
        .filter(|r| r.timing.fit_seconds > 0.0 || r.timing.includes_fit)
        .map(|r| r.task.model.as_str())
        .collect();
    let fastest = models
        .iter()
        .filter_map(|m| groups.get(m).and_then(Acc::mean))
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min);
    let rows = models
        .iter()
        .map(|m| {
            let acc = groups.get(m);
            let mean = acc.and_then(Acc::mean);
            let category = if fitted.contains(m.as_str()) { "fit+inference" } else { "inference" };
            Row {
                label: format!("{m} ({category})"),
                cells: vec![
                    Cell::from_acc(acc),
                    Cell {
                        value: acc.map(|a| a.sum),
                        extra: None,
                        n: acc.map_or(0, |a| a.n),
                    },
                    Cell {
                        value: mean.filter(|_| fastest.is_finite()).map(|v| v / fastest),
                        extra: None,
                        n: acc.map_or(0, |a| a.n),
                    },
                ],
            }
        })
        .collect();
    Table {
        name: "computational_cost".into(),
        title: "Computational cost per forecast".into(),
        corner: "model".into(),
        columns: vec!["mean_seconds".into(), "total_seconds".into(), "relative_to_fastest".into()],
        rows,
        extra_label: None,
        display_cap: None,
        notes: vec!["adapter times are self-reported inference; natives include fitting".into()],
    }
}

/// Renders a table as fixed-width text, capping large values and listing
/// their true means underneath.
pub fn render_text(table: &Table) -> String {
    let mut capped = Vec::new();
    let header: Vec<String> = std::iter::once(table.corner.clone()).chain(table.columns.iter().cloned()).collect();
    let mut lines: Vec<Vec<String>> = vec![header];
    for row in &table.rows {
        let mut line = vec![row.label.clone()];
        for (col, cell) in table.columns.iter().zip(&row.cells) {
            let mut text = match cell.value {
                None => String::new(),
                Some(v) => match table.display_cap {
                    Some(cap) if v > cap => {
                        capped.push(format!("{} / {}: mean {}", row.label, col, fmt_num(v)));
                        format!(">{cap:.1}*")
                    }
                    _ => fmt_num(v),
                },
            };
            if let Some(x) = cell.extra {
                text.push_str(&format!(" ({x:+.0}%)"));
            }
            line.push(text);
        }
        lines.push(line);
    }
    let widths: Vec<usize> = (0..lines[0].len())
        .map(|i| lines.iter().map(|l| l[i].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = format!("{}\n\n", table.title);
    for (k, line) in lines.iter().enumerate() {
        let cells: Vec<String> = line
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
        if k == 0 {
            out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
            out.push('\n');
        }
    }
    if !capped.is_empty() {
        out.push('\n');
        for c in capped {
            out.push_str(&format!("* {c}\n"));
        }
    }
    for n in &table.notes {
        out.push_str(&format!("note: {n}\n"));
    }
    out
}

/// Machine-readable form: raw means, blank for empty cells.
pub fn render_csv(table: &Table) -> String {
    let mut header = vec![table.corner.clone()];
    for c in &table.columns {
        header.push(c.clone());
        if let Some(x) = &table.extra_label {
            header.push(format!("{c}_{x}"));
        }
    }
    let mut out = header.join(",");
    out.push('\n');
    for row in &table.rows {
        let mut line = vec![row.label.clone()];
        for cell in &row.cells {
            line.push(cell.value.map(|v| v.to_string()).unwrap_or_default());
            if table.extra_label.is_some() {
                line.push(cell.extra.map(|v| v.to_string()).unwrap_or_default());
            }
        }
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

/// Absolute errors per (period, window, step), for aligning two models.
fn aligned_errors(records: &[EvaluationRecord], model: &str, context_len: usize, horizon: usize) -> BTreeMap<(PeriodName, usize, usize), f64> {
    let mut out = BTreeMap::new();
    for r in records.iter().filter(|r| {
        r.task.model == model && r.task.context_len == context_len && r.task.horizon == horizon && r.task.is_clean()
    }) {
        if let Some(s) = &r.steps {
            for (h, (y, p)) in s.actuals.iter().zip(&s.point).enumerate() {
                out.insert((r.task.period, r.task.window, h), (y - p).abs());
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseDm {
    pub model_a: String,
    pub model_b: String,
    pub result: Result<DmResult, String>,
}

/// Diebold–Mariano tests for every model pair on errors aligned by period,
/// window and step.
pub fn pairwise_dm(records: &[EvaluationRecord], models: &[String], context_len: usize, horizon: usize) -> Vec<PairwiseDm> {
    let errors: Vec<_> = models.iter().map(|m| aligned_errors(records, m, context_len, horizon)).collect();
    let mut out = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let (a, b): (Vec<f64>, Vec<f64>) = errors[i]
                .iter()
                .filter_map(|(k, ea)| errors[j].get(k).map(|eb| (*ea, *eb)))
                .unzip();
            out.push(PairwiseDm {
                model_a: models[i].clone(),
                model_b: models[j].clone(),
                result: diebold_mariano(&a, &b, None).map_err(|e: StatsError| e.to_string()),
            });
        }
    }
    out
}

/// Ranking inputs per model at the table cell; models lacking CRPS or
/// coverage, or observed in fewer than two periods, are left out.
pub fn ranking_inputs(records: &[EvaluationRecord], models: &[String], tables: &TableConfig) -> Vec<RankingInput> {
    let calib = calibration(records, models, tables);
    let shift = distribution_shift(records, models, tables);
    let cost = group_mean(
        records.iter().filter(|r| r.task.context_len == tables.context_len && r.task.horizon == tables.horizon),
        |r| Some(r.task.model.clone()),
        |r| Some(r.timing.total()),
    );
    let mut out = Vec::new();
    for (k, m) in models.iter().enumerate() {
        let cov = calib.rows[k].cells[0].value;
        let crps = calib.rows[k].cells[1].value;
        let per_period: Vec<f64> = shift.rows.iter().filter_map(|r| r.cells[k].value).collect();
        let latency = cost.get(m).and_then(Acc::mean);
        let (Some(cov), Some(crps), Some(latency)) = (cov, crps, latency) else {
            continue;
        };
        let Ok(cv) = robustness_cv(&per_period) else {
            continue;
        };
        out.push(RankingInput {
            model: m.clone(),
            coverage_deviation: (cov - tables.nominal).abs(),
            crps,
            robustness_cv: cv,
            latency_seconds: latency,
        });
    }
    out
}

pub fn rank_models(records: &[EvaluationRecord], models: &[String], tables: &TableConfig) -> Result<Vec<RankedModel>, StatsError> {
    composite_ranking(&ranking_inputs(records, models, tables))
}

/// Mean MASE and 95% window CI per (model, horizon, context).
pub fn mase_curves(records: &[EvaluationRecord], tables: &TableConfig) -> BTreeMap<(String, usize, usize), (f64, Option<f64>, usize)> {
    let mut values: BTreeMap<(String, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task.is_clean() && tables.headline_periods.contains(&r.task.period)) {
        if let Some(m) = r.mase() {
            values.entry((r.task.model.clone(), r.task.horizon, r.task.context_len)).or_default().push(m);
        }
    }
    values
        .into_iter()
        .map(|(k, v)| {
            let mean = v.iter().sum::<f64>() / v.len() as f64;
            let half = window_ci(&v, 0.95).ok().map(|(_, h)| h);
            (k, (mean, half, v.len()))
        })
        .collect()
}

/// Mean absolute error per step group, over clean successful records at
/// the table cell.
pub fn step_mae<K: Ord>(
    records: &[EvaluationRecord],
    tables: &TableConfig,
    key: impl Fn(&EvaluationRecord, usize) -> K,
) -> BTreeMap<(String, K), Acc> {
    let mut out: BTreeMap<(String, K), Acc> = BTreeMap::new();
    for r in records
        .iter()
        .filter(|r| r.task.context_len == tables.context_len && r.task.horizon == tables.horizon && r.task.is_clean())
    {
        if let Some(s) = &r.steps {
            for (h, (y, p)) in s.actuals.iter().zip(&s.point).enumerate() {
                out.entry((r.task.model.clone(), key(r, h))).or_default().push((y - p).abs());
            }
        }
    }
    out
}

pub fn extreme_label_of(r: &EvaluationRecord, h: usize) -> ExtremeLabel {
    r.steps.as_ref().map_or(ExtremeLabel::Normal, |s| s.extreme[h])
}

pub fn day_type_of(r: &EvaluationRecord, h: usize) -> DayType {
    DayType::of(r.origin + Duration::hours(h as i64))
}

pub fn season_of(r: &EvaluationRecord, h: usize) -> Season {
    Season::of(r.origin + Duration::hours(h as i64))
}
