//! Holdout validation: forecast the final survey year with four models and
//! compare their errors against the survey.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biasadjust::{adjust_wave, fit_bias_model, AdjustedObservation, BiasError};
use crate::components::{components_from_panel, ComponentsError};
use crate::forecast::{project, ForecastError};
use crate::ingest::{AgeGroup, MigrantPanel, Source};
use crate::model::{build_inputs, run_mcmc, summarize, ModelConfig, ModelError, PosteriorSamples};

pub const MOVING_AVERAGE: &str = "moving_average";
pub const SOCIAL_ONLY: &str = "social_only";
pub const SURVEY_ONLY: &str = "survey_only";
pub const COMBINED: &str = "combined";
/// All model names in report order.
pub const MODELS: [&str; 4] = [MOVING_AVERAGE, SOCIAL_ONLY, SURVEY_ONLY, COMBINED];

/// Years averaged by the moving-average benchmark.
pub const MOVING_AVERAGE_WINDOW: usize = 3;

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("need {window} consecutive years before {holdout_year}")]
    InsufficientHistory { window: usize, holdout_year: i32 },
    #[error("no social-media waves for the cell in {0}")]
    NoWaveData(i32),
    #[error("no cells with both a prediction and a holdout observation")]
    NoOverlap,
    #[error("validation needs at least 4 survey years, got {0}")]
    TooFewYears(usize),
    #[error("no social-media observations in the holdout year {0}")]
    NoHoldoutWaves(i32),
    #[error(transparent)]
    Bias(#[from] BiasError),
    #[error(transparent)]
    Components(#[from] ComponentsError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ValidateError {
    fn from(e: std::io::Error) -> Self {
        ValidateError::Io(e.to_string())
    }
}

/// (age group, region code).
pub type CellKey = (AgeGroup, String);

/// Mean of the `window` proportions in the years just before `holdout_year`.
/// Every one of those years must be present.
pub fn moving_average(series: &BTreeMap<i32, f64>, holdout_year: i32, window: usize) -> Result<f64, ValidateError> {
    let mut sum = 0.0;
    for k in 1..=window as i32 {
        match series.get(&(holdout_year - k)) {
            Some(p) => sum += p,
            None => {
                return Err(ValidateError::InsufficientHistory {
                    window,
                    holdout_year,
                })
            }
        }
    }
    Ok(sum / window as f64)
}

/// Moving-average predictions for every survey series. Cells without
/// enough history are skipped; their count is returned alongside.
pub fn moving_average_forecast(panel: &MigrantPanel, holdout_year: i32, window: usize) -> (BTreeMap<CellKey, f64>, usize) {
    let mut series: BTreeMap<CellKey, BTreeMap<i32, f64>> = BTreeMap::new();
    for o in panel.observations().iter().filter(|o| o.source == Source::Survey && o.year < holdout_year) {
        series
            .entry((o.age, o.region.code.clone()))
            .or_default()
            .insert(o.year, o.proportion);
    }
    let mut out = BTreeMap::new();
    let mut skipped = 0;
    for (key, s) in series {
        match moving_average(&s, holdout_year, window) {
            Ok(p) => {
                out.insert(key, p);
            }
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

/// Geometric mean of the adjusted social-media values of each cell over
/// the waves in `holdout_year`.
pub fn social_only_forecast(adjusted: &[AdjustedObservation], holdout_year: i32) -> BTreeMap<CellKey, f64> {
    let mut acc: BTreeMap<CellKey, (f64, usize)> = BTreeMap::new();
    for o in adjusted.iter().filter(|o| o.year == holdout_year) {
        let e = acc.entry((o.age, o.region.code.clone())).or_default();
        e.0 += o.log_adjusted_proportion;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (sum, n))| (k, (sum / n as f64).exp())).collect()
}

/// Single-cell version of [`social_only_forecast`].
pub fn social_only_cell(log_adjusted: &[f64], holdout_year: i32) -> Result<f64, ValidateError> {
    if log_adjusted.is_empty() {
        return Err(ValidateError::NoWaveData(holdout_year));
    }
    Ok((log_adjusted.iter().sum::<f64>() / log_adjusted.len() as f64).exp())
}

/// Root mean squared error over `(prediction, truth)` pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, ValidateError> {
    if pairs.is_empty() {
        return Err(ValidateError::NoOverlap);
    }
    let sse: f64 = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum();
    Ok((sse / pairs.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StratumRmse {
    pub rmse: f64,
    pub n_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub holdout_year: i32,
    pub anchor_year: i32,
    /// Cells where every model has a prediction and the survey has truth.
    pub n_cells: usize,
    pub overall_rmse: BTreeMap<String, f64>,
    /// model -> age label -> error.
    pub by_age: BTreeMap<String, BTreeMap<String, StratumRmse>>,
    /// model -> region code -> error.
    pub by_region: BTreeMap<String, BTreeMap<String, StratumRmse>>,
    /// Holdout cells each model could not predict.
    pub skipped: BTreeMap<String, usize>,
    /// Whether each fitted model passed the R-hat check.
    pub converged: BTreeMap<String, bool>,
}

/// Scores prediction sets on their common support with `truth`.
pub fn score(
    holdout_year: i32,
    anchor_year: i32,
    truth: &BTreeMap<CellKey, f64>,
    predictions: &BTreeMap<String, BTreeMap<CellKey, f64>>,
) -> Result<ValidationReport, ValidateError> {
    let support: Vec<&CellKey> = truth
        .keys()
        .filter(|k| predictions.values().all(|p| p.contains_key(*k)))
        .collect();
    if support.is_empty() {
        return Err(ValidateError::NoOverlap);
    }
    let mut report = ValidationReport {
        holdout_year,
        anchor_year,
        n_cells: support.len(),
        overall_rmse: BTreeMap::new(),
        by_age: BTreeMap::new(),
        by_region: BTreeMap::new(),
        skipped: BTreeMap::new(),
        converged: BTreeMap::new(),
    };
    for (model, pred) in predictions {
        let pairs = |keep: &dyn Fn(&CellKey) -> bool| -> Vec<(f64, f64)> {
            support
                .iter()
                .filter(|k| keep(k))
                .map(|k| (pred[*k], truth[*k]))
                .collect()
        };
        report.overall_rmse.insert(model.clone(), rmse(&pairs(&|_| true))?);
        report
            .skipped
            .insert(model.clone(), truth.keys().filter(|k| !pred.contains_key(*k)).count());

        let ages: BTreeSet<AgeGroup> = support.iter().map(|k| k.0).collect();
        let mut by_age = BTreeMap::new();
        for age in ages {
            let p = pairs(&|k| k.0 == age);
            by_age.insert(age.label(), StratumRmse { rmse: rmse(&p)?, n_cells: p.len() });
        }
        report.by_age.insert(model.clone(), by_age);

        let regions: BTreeSet<&String> = support.iter().map(|k| &k.1).collect();
        let mut by_region = BTreeMap::new();
        for region in regions {
            let p = pairs(&|k| &k.1 == region);
            by_region.insert(region.clone(), StratumRmse { rmse: rmse(&p)?, n_cells: p.len() });
        }
        report.by_region.insert(model.clone(), by_region);
    }
    Ok(report)
}

fn medians_in_year(samples: &PosteriorSamples, year: i32) -> BTreeMap<CellKey, f64> {
    summarize(samples)
        .into_iter()
        .filter(|r| r.year == year)
        .map(|r| ((r.age, r.region), r.median))
        .collect()
}

/// Holds out the final survey year and forecasts it four ways.
///
/// The bias regression pairs the survey year before the holdout with the
/// first social-media wave. The combined model sees the truncated survey
/// plus the adjusted waves collected in the holdout year; the survey-only
/// model sees the truncated survey and is projected one year.
pub fn run_validation(survey: &MigrantPanel, social: &MigrantPanel, config: &ModelConfig) -> Result<ValidationReport, ValidateError> {
    let survey = survey.source_only(Source::Survey);
    let social = social.source_only(Source::SocialMedia);
    let n_years = survey.years().len();
    if n_years < 4 {
        return Err(ValidateError::TooFewYears(n_years));
    }
    let (first, holdout) = survey.year_range().expect("non-empty survey");
    let anchor = holdout - 1;
    let truncated = survey.in_years(first, anchor);

    let coefs = fit_bias_model(&survey.in_years(anchor, anchor), &social.first_wave())?;
    let adjusted: Vec<AdjustedObservation> = adjust_wave(&coefs, &social)?
        .into_iter()
        .filter(|o| o.year == holdout)
        .collect();
    if adjusted.is_empty() {
        return Err(ValidateError::NoHoldoutWaves(holdout));
    }
    let components = components_from_panel(&truncated, first, anchor)?;

    let combined_inputs = build_inputs(&truncated, &adjusted, coefs.sigma2_fb, &components, 1)?;
    let combined = run_mcmc(&combined_inputs, config)?;
    let survey_inputs = build_inputs(&truncated, &[], coefs.sigma2_fb, &components, 0)?;
    let survey_fit = run_mcmc(&survey_inputs, config)?;
    let survey_only: BTreeMap<CellKey, f64> = project(&survey_fit, 1, config.seed)?
        .summarize()
        .into_iter()
        .map(|r| ((r.age, r.region), r.median))
        .collect();

    let truth: BTreeMap<CellKey, f64> = survey
        .observations()
        .iter()
        .filter(|o| o.year == holdout)
        .map(|o| ((o.age, o.region.code.clone()), o.proportion))
        .collect();
    let mut predictions = BTreeMap::new();
    predictions.insert(MOVING_AVERAGE.to_string(), moving_average_forecast(&truncated, holdout, MOVING_AVERAGE_WINDOW).0);
    predictions.insert(SOCIAL_ONLY.to_string(), social_only_forecast(&adjusted, holdout));
    predictions.insert(SURVEY_ONLY.to_string(), survey_only);
    predictions.insert(COMBINED.to_string(), medians_in_year(&combined, holdout));

    let mut report = score(holdout, anchor, &truth, &predictions)?;
    report.converged.insert(COMBINED.to_string(), combined.converged);
    report.converged.insert(SURVEY_ONLY.to_string(), survey_fit.converged);
    Ok(report)
}

/// Writes `report.json`, `rmse_overall.csv`, `rmse_by_age.csv` and
/// `rmse_by_region.csv` into `dir`.
pub fn write_report(report: &ValidationReport, dir: &Path) -> Result<(), ValidateError> {
    fs::create_dir_all(dir)?;
    let io = |e: csv::Error| ValidateError::Io(e.to_string());
    let mut json = serde_json::to_string_pretty(report).map_err(|e| ValidateError::Io(e.to_string()))?;
    json.push('\n');
    fs::write(dir.join("report.json"), json)?;

    let mut w = csv::Writer::from_path(dir.join("rmse_overall.csv")).map_err(io)?;
    w.write_record(["model", "rmse", "n_cells"]).map_err(io)?;
    for (model, v) in &report.overall_rmse {
        w.write_record([model.clone(), v.to_string(), report.n_cells.to_string()]).map_err(io)?;
    }
    w.flush()?;

    for (file, column, table) in [
        ("rmse_by_age.csv", "age_group", &report.by_age),
        ("rmse_by_region.csv", "region", &report.by_region),
    ] {
        let mut w = csv::Writer::from_path(dir.join(file)).map_err(io)?;
        w.write_record(["model", column, "rmse", "n_cells"]).map_err(io)?;
        for (model, strata) in table {
            for (stratum, r) in strata {
                w.write_record([model.clone(), stratum.clone(), r.rmse.to_string(), r.n_cells.to_string()])
                    .map_err(io)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}
