use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::biasadjust::AdjustedObservation;
use crate::components::PrincipalComponents;
use crate::ingest::{sampling_variance_social, AgeGroup, MigrantPanel, Region, Source};

/// Index grid of the model: ages x years x regions. Years are contiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dims {
    pub ages: Vec<AgeGroup>,
    pub years: Vec<i32>,
    pub regions: Vec<Region>,
}

impl Dims {
    pub fn new(ages: Vec<AgeGroup>, first_year: i32, last_year: i32, regions: Vec<Region>) -> Self {
        Self {
            ages,
            years: (first_year..=last_year).collect(),
            regions,
        }
    }

    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn n_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn year_index(&self, year: i32) -> Option<usize> {
        let first = *self.years.first()?;
        let t = usize::try_from(year - first).ok()?;
        (t < self.years.len()).then_some(t)
    }

    pub fn region_index(&self, code: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.code == code)
    }

    pub fn age_index(&self, age: AgeGroup) -> Option<usize> {
        self.ages.iter().position(|&a| a == age)
    }
}

/// One observation on the log scale, indexed into [`Dims`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelObservation {
    pub age: usize,
    pub time: usize,
    pub region: usize,
    pub log_value: f64,
    /// Sampling variance; social rows add the bias and non-sampling terms
    /// at evaluation time.
    pub sampling_variance: f64,
    pub source: Source,
    pub wave_id: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInputs {
    pub dims: Dims,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub observations: Vec<ModelObservation>,
    /// Frozen residual variance of the calibration regression.
    pub sigma2_fb: f64,
}

impl ModelInputs {
    pub fn new(
        dims: Dims,
        components: &PrincipalComponents,
        observations: Vec<ModelObservation>,
        sigma2_fb: f64,
    ) -> Result<Self, ModelError> {
        if components.age_index != dims.ages {
            return Err(ModelError::InvalidInput(
                "components are defined on a different age grid".into(),
            ));
        }
        if dims.n_years() == 0 || dims.n_regions() == 0 || dims.n_ages() == 0 {
            return Err(ModelError::InvalidInput("empty dimension".into()));
        }
        if !(sigma2_fb >= 0.0 && sigma2_fb.is_finite()) {
            return Err(ModelError::InvalidInput(format!("sigma2_fb = {sigma2_fb}")));
        }
        for (i, o) in observations.iter().enumerate() {
            if o.age >= dims.n_ages() || o.time >= dims.n_years() || o.region >= dims.n_regions() {
                return Err(ModelError::InvalidInput(format!("observation {i} out of range")));
            }
            if !o.log_value.is_finite() {
                return Err(ModelError::InvalidInput(format!("observation {i} is not finite")));
            }
            let positive = match o.source {
                Source::Survey => o.sampling_variance > 0.0,
                // sigma2_ns is floored above zero, so the total stays positive.
                Source::SocialMedia => o.sampling_variance >= 0.0,
            };
            if !positive || !o.sampling_variance.is_finite() {
                return Err(ModelError::InvalidInput(format!(
                    "observation {i} has non-positive variance {}",
                    o.sampling_variance
                )));
            }
        }
        Ok(Self {
            dims,
            z1: components.z1.clone(),
            z2: components.z2.clone(),
            observations,
            sigma2_fb,
        })
    }

    /// Observation variance given the current non-sampling variance.
    pub fn variance(&self, obs: &ModelObservation, sigma2_ns: f64) -> f64 {
        match obs.source {
            Source::Survey => obs.sampling_variance,
            Source::SocialMedia => obs.sampling_variance + self.sigma2_fb + sigma2_ns,
        }
    }

    /// Same inputs with social observations removed.
    pub fn survey_only(&self) -> ModelInputs {
        ModelInputs {
            observations: self
                .observations
                .iter()
                .filter(|o| o.source == Source::Survey)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    pub fn last_observed_year(&self) -> Option<i32> {
        self.observations.iter().map(|o| self.dims.years[o.time]).max()
    }
}

/// Assembles model inputs from survey rows and adjusted social rows.
///
/// The year axis runs from the first survey year to the later of the last
/// social year and `last survey year + horizon`. Regions are the union of
/// both sources, sorted by code.
pub fn build_inputs(
    survey: &MigrantPanel,
    adjusted_social: &[AdjustedObservation],
    sigma2_fb: f64,
    components: &PrincipalComponents,
    horizon: u32,
) -> Result<ModelInputs, ModelError> {
    let survey = survey.source_only(Source::Survey);
    let (first, last_survey) = survey.year_range().ok_or(ModelError::EmptyInputs)?;
    let last_social = adjusted_social.iter().map(|o| o.year).max();
    let last = last_social
        .unwrap_or(i32::MIN)
        .max(last_survey + horizon as i32);
    if let Some(early) = adjusted_social.iter().find(|o| o.year < first) {
        return Err(ModelError::InvalidInput(format!(
            "social observation in {} precedes the first survey year {first}",
            early.year
        )));
    }

    let regions: BTreeSet<Region> = survey
        .regions()
        .into_iter()
        .chain(adjusted_social.iter().map(|o| o.region.clone()))
        .collect();
    let dims = Dims::new(components.age_index.clone(), first, last, regions.into_iter().collect());

    let age_of = |age: AgeGroup| {
        dims.age_index(age)
            .ok_or_else(|| ModelError::AgeGridMismatch(age.label()))
    };
    let mut observations = Vec::with_capacity(survey.len() + adjusted_social.len());
    for o in survey.observations() {
        let variance = o
            .sampling_variance()
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        if !(variance > 0.0) {
            return Err(ModelError::InvalidInput(format!(
                "survey cell {} {} {} has zero variance",
                o.age, o.year, o.region
            )));
        }
        observations.push(ModelObservation {
            age: age_of(o.age)?,
            time: dims.year_index(o.year).expect("year within range"),
            region: dims.region_index(&o.region.code).expect("region collected"),
            log_value: o.proportion.ln(),
            sampling_variance: variance,
            source: Source::Survey,
            wave_id: None,
        });
    }
    for o in adjusted_social {
        let variance = sampling_variance_social(o.proportion, o.population_count)
            .map_err(|e| ModelError::InvalidInput(e.to_string()))?;
        observations.push(ModelObservation {
            age: age_of(o.age)?,
            time: dims.year_index(o.year).expect("year within range"),
            region: dims.region_index(&o.region.code).expect("region collected"),
            log_value: o.log_adjusted_proportion,
            sampling_variance: variance,
            source: Source::SocialMedia,
            wave_id: Some(o.wave_id),
        });
    }
    ModelInputs::new(dims, components, observations, sigma2_fb)
}
