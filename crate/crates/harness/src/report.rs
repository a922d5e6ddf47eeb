//! Writes tables, figure data, significance tests and a manifest from a
//! store. Output depends only on the store contents.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::aggregate::{
    calibration, computational_cost, day_type_of, distribution_shift, extreme_label_of, mase_by_context,
    mase_curves, model_order, pairwise_dm, rank_models, render_csv, render_text, season_of, step_mae, Acc, Table,
    group_mean,
};
use crate::config::{SweepConfig, TableConfig};
use crate::store::{EvaluationRecord, Store, StoreError};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Manifest {
    pub records: usize,
    pub ok: usize,
    pub failures: BTreeMap<String, usize>,
    pub models: Vec<String>,
    /// Versions and seeds reported by each model across the store.
    pub producers: BTreeMap<String, Producer>,
    pub harness_version: String,
    pub config: Option<SweepConfig>,
    pub files: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Producer {
    pub versions: Vec<String>,
    pub seeds: Vec<u64>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &str) -> Result<(), ReportError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| ReportError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(&path, contents).map_err(|source| ReportError::Io { path, source })?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn table(&mut self, table: &Table) -> Result<(), ReportError> {
        self.put(&format!("tables/{}.csv", table.name), &render_csv(table))?;
        self.put(&format!("tables/{}.txt", table.name), &render_text(table))
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn acc_csv<K>(header: &str, groups: &BTreeMap<(String, K), Acc>, key: impl Fn(&K) -> String) -> String {
    let mut out = format!("{header},mean_abs_error,n\n");
    for ((model, k), acc) in groups {
        let _ = writeln!(out, "{model},{},{},{}", key(k), opt(acc.mean()), acc.n);
    }
    out
}

fn in_cell<'a>(records: &'a [EvaluationRecord], tables: &'a TableConfig) -> impl Iterator<Item = &'a EvaluationRecord> {
    records
        .iter()
        .filter(move |r| r.task.context_len == tables.context_len && r.task.horizon == tables.horizon)
}

/// Emits the full report for `store` into `out_dir`.
pub fn emit_report(store: &Store, out_dir: impl AsRef<Path>) -> Result<Manifest, ReportError> {
    let config = store.read_config()?;
    let records = store.to_vec();
    emit_records(&records, config.as_ref(), out_dir)
}

pub fn emit_records(
    records: &[EvaluationRecord],
    config: Option<&SweepConfig>,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest, ReportError> {
    let tables = config.map(|c| c.tables.clone()).unwrap_or_default();
    let models = model_order(records, config);
    let mut w = Writer {
        dir: out_dir.as_ref().to_path_buf(),
        files: Vec::new(),
    };
    let mut manifest = Manifest {
        records: records.len(),
        ok: records.iter().filter(|r| r.is_ok()).count(),
        models: models.clone(),
        harness_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.cloned(),
        ..Manifest::default()
    };
    for r in records {
        if let Some(p) = &r.producer {
            let entry = manifest.producers.entry(r.task.model.clone()).or_default();
            if let Some(v) = &p.version {
                if !entry.versions.contains(v) {
                    entry.versions.push(v.clone());
                }
            }
            if let Some(s) = p.seed {
                if !entry.seeds.contains(&s) {
                    entry.seeds.push(s);
                }
            }
        }
        if let Some(f) = &r.failure {
            *manifest.failures.entry(format!("{}/{:?}", r.task.model, f.kind)).or_default() += 1;
        }
    }
    if config.is_none() {
        manifest.warnings.push("store has no config; using default table settings".into());
    }
    if records.is_empty() {
        manifest.warnings.push("store is empty; no tables written".into());
        return finish(w, manifest);
    }

    for h in crate::aggregate::horizons(records) {
        let t = mase_by_context(records, &models, h, &tables);
        if t.is_empty() {
            manifest.warnings.push(format!("no clean headline-period results at H = {h}"));
        }
        w.table(&t)?;
    }
    for t in [
        calibration(records, &models, &tables),
        distribution_shift(records, &models, &tables),
        computational_cost(records, &models),
    ] {
        if t.is_empty() {
            manifest.warnings.push(format!("{} is empty", t.name));
        }
        w.table(&t)?;
    }

    figures(&mut w, records, &models, &tables)?;

    let mut dm = String::from("model_a,model_b,n,statistic,p_value,lags,error\n");
    for pair in pairwise_dm(records, &models, tables.context_len, tables.horizon) {
        match pair.result {
            Ok(r) => {
                let _ = writeln!(dm, "{},{},{},{},{},{},", pair.model_a, pair.model_b, r.n, r.statistic, r.p_value, r.hac_lags);
            }
            Err(e) => {
                let _ = writeln!(dm, "{},{},,,,,\"{}\"", pair.model_a, pair.model_b, e.replace('"', "'"));
            }
        }
    }
    w.put("dm_tests.csv", &dm)?;

    match rank_models(records, &models, &tables) {
        Ok(ranked) => {
            let mut out = String::from("model,coverage_rank,crps_rank,robustness_rank,latency_rank,composite\n");
            for r in ranked {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    r.model, r.ranks[0], r.ranks[1], r.ranks[2], r.ranks[3], r.composite
                );
            }
            w.put("ranking.csv", &out)?;
        }
        Err(e) => manifest.warnings.push(format!("ranking skipped: {e}")),
    }
    finish(w, manifest)
}

fn finish(mut w: Writer, mut manifest: Manifest) -> Result<Manifest, ReportError> {
    manifest.files = w.files.clone();
    manifest.files.push("manifest.json".into());
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    w.put("manifest.json", &(json + "\n"))?;
    Ok(manifest)
}

fn figures(w: &mut Writer, records: &[EvaluationRecord], models: &[String], tables: &TableConfig) -> Result<(), ReportError> {
    let mut out = String::from("model,horizon,context_len,mean_mase,ci95_half_width,n\n");
    for ((m, h, c), (mean, half, n)) in mase_curves(records, tables) {
        let _ = writeln!(out, "{m},{h},{c},{mean},{},{n}", opt(half));
    }
    w.put("figures/mase_vs_context.csv", &out)?;

    let clean_ok = |r: &EvaluationRecord| r.task.is_clean();
    let heat = group_mean(
        records.iter().filter(|r| clean_ok(r)),
        |r| Some((r.task.period, r.task.horizon, r.task.model.clone(), r.task.context_len)),
        |r| r.mase(),
    );
    let mut out = String::from("period,horizon,model,context_len,mean_mase,n\n");
    for ((p, h, m, c), acc) in &heat {
        let _ = writeln!(out, "{p},{h},{m},{c},{},{}", opt(acc.mean()), acc.n);
    }
    w.put("figures/heatmap.csv", &out)?;
    let contexts = crate::aggregate::context_lengths(records);
    let panels: std::collections::BTreeSet<_> = heat.keys().map(|(p, h, _, _)| (*p, *h)).collect();
    for (p, h) in panels {
        let mut out = String::from("model");
        for c in &contexts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
        for m in models {
            out.push_str(m);
            for &c in &contexts {
                let v = heat.get(&(p, h, m.clone(), c)).and_then(Acc::mean);
                let _ = write!(out, ",{}", opt(v));
            }
            out.push('\n');
        }
        w.put(&format!("figures/heatmap_{p}_h{h}.csv"), &out)?;
    }

    let mut coverage: BTreeMap<(String, u64), Acc> = BTreeMap::new();
    let mut width: BTreeMap<(String, u64), Acc> = BTreeMap::new();
    for r in in_cell(records, tables).filter(|r| clean_ok(r)) {
        if let Some(m) = &r.metrics {
            for lv in &m.coverage {
                coverage.entry((r.task.model.clone(), lv.nominal.to_bits())).or_default().push(lv.value);
            }
            for lv in &m.norm_interval_width {
                width.entry((r.task.model.clone(), lv.nominal.to_bits())).or_default().push(lv.value);
            }
        }
    }
    let nominal_csv = |name: &str, groups: &BTreeMap<(String, u64), Acc>| {
        let mut out = format!("model,nominal,{name},n\n");
        for ((m, bits), acc) in groups {
            let _ = writeln!(out, "{m},{},{},{}", f64::from_bits(*bits), opt(acc.mean()), acc.n);
        }
        out
    };
    w.put("figures/reliability.csv", &nominal_csv("empirical_coverage", &coverage))?;
    w.put("figures/interval_width.csv", &nominal_csv("normalised_width", &width))?;

    let shift = group_mean(
        in_cell(records, tables).filter(|r| clean_ok(r)),
        |r| Some((r.task.model.clone(), r.task.period)),
        |r| r.mase(),
    );
    w.put("figures/shift.csv", &acc_csv("model,period", &shift, |p| p.to_string()).replace("mean_abs_error", "mean_mase"))?;

    let missing = group_mean(
        in_cell(records, tables),
        |r| Some((r.task.model.clone(), r.task.missing_permille)),
        |r| r.mase(),
    );
    let mut out = String::from("model,missing_rate,mean_mase,n,degradation_pct\n");
    for ((m, permille), acc) in &missing {
        let base = missing.get(&(m.clone(), 0)).and_then(Acc::mean);
        let deg = match (acc.mean(), base) {
            (Some(v), Some(b)) if b > 0.0 => Some(100.0 * (v / b - 1.0)),
            _ => None,
        };
        let _ = writeln!(out, "{m},{},{},{},{}", *permille as f64 / 1000.0, opt(acc.mean()), acc.n, opt(deg));
    }
    w.put("figures/missing_data.csv", &out)?;

    let extreme = step_mae(records, tables, |r, h| format!("{:?}", extreme_label_of(r, h)).to_lowercase());
    w.put("figures/extreme_events.csv", &acc_csv("model,label", &extreme, |k| k.clone()))?;

    let timing = group_mean(records, |r| Some((r.task.model.clone(), r.task.context_len)), |r| Some(r.timing.total()));
    let mut out = String::from("model,context_len,mean_seconds,n\n");
    for ((m, c), acc) in &timing {
        let _ = writeln!(out, "{m},{c},{},{}", opt(acc.mean()), acc.n);
    }
    w.put("figures/timing_vs_context.csv", &out)?;

    let daytype = step_mae(records, tables, |r, h| format!("{:?}", day_type_of(r, h)).to_lowercase());
    w.put("figures/daytype.csv", &acc_csv("model,day_type", &daytype, |k| k.clone()))?;
    let season = step_mae(records, tables, |r, h| format!("{:?}", season_of(r, h)).to_lowercase());
    w.put("figures/season.csv", &acc_csv("model,season", &season, |k| k.clone()))?;

    Ok(())
}
