use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{ModelError, PosteriorSamples};
use crate::ingest::AgeGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SummaryKind {
    Estimate,
    Forecast,
}

impl SummaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SummaryKind::Estimate => "estimate",
            SummaryKind::Forecast => "forecast",
        }
    }
}

/// Posterior median and central 95% interval of one cell, on the
/// proportion scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub age: AgeGroup,
    pub year: i32,
    pub region: String,
    pub kind: SummaryKind,
    pub median: f64,
    pub lower95: f64,
    pub upper95: f64,
}

/// Sample quantile with linear interpolation between order statistics
/// (the default of R and NumPy). `sorted` must be ascending.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Median and 95% interval of `exp(values)`.
pub(crate) fn summarize_log_draws(values: &mut [f64]) -> (f64, f64, f64) {
    values.sort_by(f64::total_cmp);
    let q = |p| quantile(values, p).exp();
    (q(0.5), q(0.025), q(0.975))
}

/// Summaries of `mu` for every (age, year, region) cell, pooled over chains.
/// Rows are ordered by region, age, then year.
pub fn summarize(samples: &PosteriorSamples) -> Vec<CellSummary> {
    let dims = &samples.dims;
    let draws: Vec<_> = samples.chains.iter().flatten().collect();
    if draws.is_empty() {
        return Vec::new();
    }
    let mut buffer = vec![0.0; draws.len()];
    let mut out = Vec::with_capacity(dims.n_ages() * dims.n_years() * dims.n_regions());
    for (s, region) in dims.regions.iter().enumerate() {
        for (x, &age) in dims.ages.iter().enumerate() {
            for (t, &year) in dims.years.iter().enumerate() {
                for (b, d) in buffer.iter_mut().zip(&draws) {
                    *b = d.log_mu(x, t, s, &samples.z1, &samples.z2);
                }
                let (median, lower95, upper95) = summarize_log_draws(&mut buffer);
                out.push(CellSummary {
                    age,
                    year,
                    region: region.code.clone(),
                    kind: SummaryKind::Estimate,
                    median,
                    lower95,
                    upper95,
                });
            }
        }
    }
    out
}

/// Writes `age_group,year,region,median,lower95,upper95`, with a trailing
/// `kind` column when `with_kind` is set.
pub fn write_summary_csv<W: Write>(rows: &[CellSummary], with_kind: bool, writer: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["age_group", "year", "region", "median", "lower95", "upper95"];
    if with_kind {
        header.push("kind");
    }
    w.write_record(&header)?;
    for r in rows {
        let mut record = vec![
            r.age.label(),
            r.year.to_string(),
            r.region.clone(),
            r.median.to_string(),
            r.lower95.to_string(),
            r.upper95.to_string(),
        ];
        if with_kind {
            record.push(r.kind.as_str().to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
