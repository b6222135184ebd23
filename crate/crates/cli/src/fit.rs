use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nowcast_core::biasadjust::{adjust_wave, fit_bias_model, match_anchor, AdjustedObservation, BiasCoefficients};
use nowcast_core::components::components_from_panel;
use nowcast_core::forecast::{combine_summaries, project};
use nowcast_core::ingest::{parse_panel, MigrantPanel, Source};
use nowcast_core::model::{build_inputs, run_mcmc, summarize, write_samples, write_summary_csv, ModelConfig, PosteriorSamples};
use nowcast_core::validate::{run_validation, write_report};
use serde::Serialize;

use crate::manifest::{output_digests, write_json, InputFile, MANIFEST};
use crate::Status;

pub struct FitRequest {
    pub survey: PathBuf,
    pub social: Option<PathBuf>,
    pub anchor_year: Option<i32>,
    pub horizon: u32,
    pub out_dir: PathBuf,
    pub config: ModelConfig,
}

#[derive(Serialize)]
struct FitManifest<'a> {
    command: &'static str,
    version: &'static str,
    inputs: BTreeMap<&'static str, InputFile>,
    config: &'a ModelConfig,
    anchor_year: Option<i32>,
    horizon: u32,
    n_draws: usize,
    converged: bool,
    max_rhat: Option<f64>,
    outputs: BTreeMap<String, String>,
}

struct Calibration {
    coefs: BiasCoefficients,
    adjusted: Vec<AdjustedObservation>,
}

fn calibrate(survey: &MigrantPanel, social: &MigrantPanel, anchor_year: Option<i32>, out_dir: &Path) -> Result<Calibration> {
    let first_wave = social.first_wave();
    let anchor = match anchor_year {
        Some(y) => y,
        None => match first_wave.year_range() {
            Some((y, _)) => y - 1,
            None => bail!("social-media file has no observations"),
        },
    };
    let survey_anchor = survey.in_years(anchor, anchor);
    if survey_anchor.is_empty() {
        bail!("no survey observations in anchor year {anchor}");
    }
    let coefs = fit_bias_model(&survey_anchor, &first_wave)?;
    let adjusted = adjust_wave(&coefs, social)?;

    let (_, cells) = match_anchor(&survey_anchor, &first_wave)?;
    let mut w = csv::Writer::from_path(out_dir.join("bias_fit.csv"))?;
    w.write_record(["age_group", "region", "log_survey", "log_social", "log_fitted"])?;
    for c in &cells {
        let fitted = coefs.adjust_log(c.age, &c.region, c.log_social)?;
        w.write_record([
            c.age.label(),
            c.region.clone(),
            c.log_survey.to_string(),
            c.log_social.to_string(),
            fitted.to_string(),
        ])?;
    }
    w.flush()?;
    write_json(&coefs, &out_dir.join("bias_coefficients.json"))?;
    Ok(Calibration { coefs, adjusted })
}

fn write_observations(survey: &MigrantPanel, adjusted: &[AdjustedObservation], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source", "age_group", "year", "region", "wave_id", "log_value"])?;
    for o in survey.observations() {
        w.write_record([
            Source::Survey.as_str().to_string(),
            o.age.label(),
            o.year.to_string(),
            o.region.code.clone(),
            String::new(),
            o.proportion.ln().to_string(),
        ])?;
    }
    for o in adjusted {
        w.write_record([
            Source::SocialMedia.as_str().to_string(),
            o.age.label(),
            o.year.to_string(),
            o.region.code.clone(),
            o.wave_id.to_string(),
            o.log_adjusted_proportion.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_rhat(samples: &PosteriorSamples, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["parameter", "rhat"])?;
    for e in &samples.rhat {
        w.write_record([e.parameter.clone(), e.rhat.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn fit(req: &FitRequest) -> Result<Status> {
    let out = &req.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let survey = parse_panel(&req.survey, Source::Survey)?.source_only(Source::Survey);
    let (first, last) = survey.year_range().context("survey file has no observations")?;

    let mut inputs_meta = BTreeMap::new();
    inputs_meta.insert("survey", InputFile::from_path(&req.survey)?);
    let calibration = match &req.social {
        Some(path) => {
            inputs_meta.insert("social", InputFile::from_path(path)?);
            let social = parse_panel(path, Source::SocialMedia)?.source_only(Source::SocialMedia);
            Some(calibrate(&survey, &social, req.anchor_year, out)?)
        }
        None => None,
    };
    let (adjusted, sigma2_fb) = match &calibration {
        Some(c) => (c.adjusted.as_slice(), c.coefs.sigma2_fb),
        None => (&[][..], 0.0),
    };

    let components = components_from_panel(&survey, first, last)?;
    write_json(&components, &out.join("components.json"))?;
    write_observations(&survey, adjusted, &out.join("observations.csv"))?;

    let inputs = build_inputs(&survey, adjusted, sigma2_fb, &components, 0)?;
    let samples = run_mcmc(&inputs, &req.config)?;
    write_samples(&samples, &out.join("samples"))?;
    write_rhat(&samples, &out.join("rhat.csv"))?;

    let estimates = summarize(&samples);
    let rows = if req.horizon > 0 {
        let projection = project(&samples, req.horizon, req.config.seed)?;
        combine_summaries(&estimates, &projection.summarize())
    } else {
        estimates
    };
    write_summary_csv(&rows, true, BufWriter::new(File::create(out.join("summary.csv"))?))?;

    let manifest = FitManifest {
        command: "fit",
        version: env!("CARGO_PKG_VERSION"),
        inputs: inputs_meta,
        config: &req.config,
        anchor_year: calibration.as_ref().map(|c| c.coefs.anchor_year),
        horizon: req.horizon,
        n_draws: samples.n_draws(),
        converged: samples.converged,
        max_rhat: samples.max_rhat().map(|e| e.rhat),
        outputs: output_digests(out)?,
    };
    write_json(&manifest, &out.join(MANIFEST))?;

    match samples.check_convergence() {
        Ok(()) => Ok(Status::Ok),
        Err(e) => Ok(Status::NotConverged(e.to_string())),
    }
}

#[derive(Serialize)]
struct ValidateManifest<'a> {
    command: &'static str,
    version: &'static str,
    inputs: BTreeMap<&'static str, InputFile>,
    config: &'a ModelConfig,
    holdout_year: i32,
    anchor_year: i32,
    converged: &'a BTreeMap<String, bool>,
    outputs: BTreeMap<String, String>,
}

pub fn validate(survey_path: &Path, social_path: &Path, out: &Path, config: &ModelConfig) -> Result<Status> {
    let survey = parse_panel(survey_path, Source::Survey)?;
    let social = parse_panel(social_path, Source::SocialMedia)?;
    let report = run_validation(&survey, &social, config)?;
    write_report(&report, out)?;

    let mut inputs = BTreeMap::new();
    inputs.insert("survey", InputFile::from_path(survey_path)?);
    inputs.insert("social", InputFile::from_path(social_path)?);
    let manifest = ValidateManifest {
        command: "validate",
        version: env!("CARGO_PKG_VERSION"),
        inputs,
        config,
        holdout_year: report.holdout_year,
        anchor_year: report.anchor_year,
        converged: &report.converged,
        outputs: output_digests(out)?,
    };
    write_json(&manifest, &out.join(MANIFEST))?;

    let failed: Vec<&str> = report
        .converged
        .iter()
        .filter(|(_, ok)| !**ok)
        .map(|(m, _)| m.as_str())
        .collect();
    if failed.is_empty() {
        Ok(Status::Ok)
    } else {
        Ok(Status::NotConverged(format!("R-hat check failed for: {}", failed.join(", "))))
    }
}
