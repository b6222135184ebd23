//! Tidy tables behind the standard figures. Everything is read back from a
//! finished run directory, so plotting never needs the sampler.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::PlotKind;

#[derive(Deserialize)]
struct SummaryRow {
    age_group: String,
    year: i32,
    region: String,
    median: f64,
    lower95: f64,
    upper95: f64,
    kind: String,
}

#[derive(Deserialize)]
struct ObservationRow {
    source: String,
    age_group: String,
    year: i32,
    region: String,
    log_value: f64,
}

#[derive(Serialize)]
struct SeriesRow<'a> {
    region: &'a str,
    age_group: &'a str,
    year: i32,
    series: &'a str,
    value: f64,
    lower95: Option<f64>,
    upper95: Option<f64>,
}

#[derive(Deserialize, Serialize)]
struct BiasRow {
    age_group: String,
    region: String,
    log_survey: f64,
    log_social: f64,
    log_fitted: f64,
}

#[derive(Deserialize)]
struct RmseRow {
    model: String,
    #[serde(alias = "age_group", alias = "region", default)]
    stratum: Option<String>,
    rmse: f64,
    n_cells: usize,
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    r.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .with_context(|| format!("parsing {}", path.display()))
}

/// Writes `plots/<kind>.csv` under `run_dir` and returns its path.
pub fn export(run_dir: &Path, kind: PlotKind) -> Result<std::path::PathBuf> {
    let plots = run_dir.join("plots");
    fs::create_dir_all(&plots)?;
    let (name, path) = match kind {
        PlotKind::Timeseries => ("timeseries.csv", plots.join("timeseries.csv")),
        PlotKind::AgeDist => ("age_dist.csv", plots.join("age_dist.csv")),
        PlotKind::BiasFit => ("bias_fit.csv", plots.join("bias_fit.csv")),
        PlotKind::Rmse => ("rmse.csv", plots.join("rmse.csv")),
    };
    let mut w = csv::Writer::from_path(&path).with_context(|| format!("writing {name}"))?;
    match kind {
        PlotKind::Timeseries => {
            let summary: Vec<SummaryRow> = read_rows(&run_dir.join("summary.csv"))?;
            let observed: Vec<ObservationRow> = read_rows(&run_dir.join("observations.csv"))?;
            for r in &summary {
                w.serialize(SeriesRow {
                    region: &r.region,
                    age_group: &r.age_group,
                    year: r.year,
                    series: &r.kind,
                    value: r.median,
                    lower95: Some(r.lower95),
                    upper95: Some(r.upper95),
                })?;
            }
            for o in &observed {
                w.serialize(SeriesRow {
                    region: &o.region,
                    age_group: &o.age_group,
                    year: o.year,
                    series: &o.source,
                    value: o.log_value.exp(),
                    lower95: None,
                    upper95: None,
                })?;
            }
        }
        PlotKind::AgeDist => {
            let summary: Vec<SummaryRow> = read_rows(&run_dir.join("summary.csv"))?;
            let mut totals: BTreeMap<(&str, i32), f64> = BTreeMap::new();
            for r in &summary {
                *totals.entry((&r.region, r.year)).or_default() += r.median;
            }
            w.write_record(["region", "year", "age_group", "median", "lower95", "upper95", "share"])?;
            for r in &summary {
                let share = r.median / totals[&(r.region.as_str(), r.year)];
                w.write_record([
                    r.region.clone(),
                    r.year.to_string(),
                    r.age_group.clone(),
                    r.median.to_string(),
                    r.lower95.to_string(),
                    r.upper95.to_string(),
                    share.to_string(),
                ])?;
            }
        }
        PlotKind::BiasFit => {
            let rows: Vec<BiasRow> = read_rows(&run_dir.join("bias_fit.csv"))?;
            w.write_record(["age_group", "region", "log_social", "log_survey", "log_fitted", "residual"])?;
            for r in &rows {
                w.write_record([
                    r.age_group.clone(),
                    r.region.clone(),
                    r.log_social.to_string(),
                    r.log_survey.to_string(),
                    r.log_fitted.to_string(),
                    (r.log_survey - r.log_fitted).to_string(),
                ])?;
            }
        }
        PlotKind::Rmse => {
            w.write_record(["model", "stratum_type", "stratum", "rmse", "n_cells"])?;
            for (file, stratum_type) in [
                ("rmse_overall.csv", "overall"),
                ("rmse_by_age.csv", "age_group"),
                ("rmse_by_region.csv", "region"),
            ] {
                let rows: Vec<RmseRow> = read_rows(&run_dir.join(file))?;
                for r in rows {
                    w.write_record([
                        r.model,
                        stratum_type.to_string(),
                        r.stratum.unwrap_or_else(|| "all".to_string()),
                        r.rmse.to_string(),
                        r.n_cells.to_string(),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(path)
}
