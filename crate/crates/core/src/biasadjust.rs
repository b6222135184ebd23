//! Calibration of social-media proportions against the survey.
//!
//! The regression `log p_survey = a0 + a1 log p_social + age FE + region FE`
//! is fitted once on an anchor year and then frozen; subsequent waves are
//! mapped onto the survey scale with the fitted coefficients.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{AgeGroup, MigrantPanel, Region, Source};

/// Ratio of smallest to largest singular value below which the design is
/// treated as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum BiasError {
    #[error("design matrix is rank deficient (condition ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("insufficient data: {n_obs} matched cells for {n_coefficients} coefficients")]
    InsufficientData { n_obs: usize, n_coefficients: usize },
    #[error("anchor survey panel spans several years: {0:?}")]
    MixedAnchorYears(Vec<i32>),
    #[error("anchor social panel spans several waves: {0:?}")]
    MixedWaves(Vec<u32>),
    #[error("anchor panel has more than one {data_source} observation for age {age}, region {region}")]
    DuplicateCell {
        data_source: Source,
        age: AgeGroup,
        region: String,
    },
    #[error("level not seen in the anchor fit: {0}")]
    UnseenLevel(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCoefficients {
    pub alpha0: f64,
    pub alpha1: f64,
    /// Reference (first) age group maps to 0.
    pub age_effects: BTreeMap<AgeGroup, f64>,
    /// Reference (first) region code maps to 0.
    pub region_effects: BTreeMap<String, f64>,
    pub sigma2_fb: f64,
    pub anchor_year: i32,
    pub n_obs: usize,
}

impl BiasCoefficients {
    /// Coefficients that leave the social-media proportions untouched.
    pub fn identity<'a>(ages: impl IntoIterator<Item = AgeGroup>, regions: impl IntoIterator<Item = &'a str>) -> Self {
        Self {
            alpha0: 0.0,
            alpha1: 1.0,
            age_effects: ages.into_iter().map(|a| (a, 0.0)).collect(),
            region_effects: regions.into_iter().map(|r| (r.to_string(), 0.0)).collect(),
            sigma2_fb: 0.0,
            anchor_year: 0,
            n_obs: 0,
        }
    }

    pub fn n_coefficients(&self) -> usize {
        2 + self.age_effects.len().saturating_sub(1) + self.region_effects.len().saturating_sub(1)
    }

    /// Adjusted log proportion for one cell.
    pub fn adjust_log(&self, age: AgeGroup, region: &str, log_social: f64) -> Result<f64, BiasError> {
        let age_fe = self
            .age_effects
            .get(&age)
            .ok_or_else(|| BiasError::UnseenLevel(format!("age group {age}")))?;
        let region_fe = self
            .region_effects
            .get(region)
            .ok_or_else(|| BiasError::UnseenLevel(format!("region {region}")))?;
        Ok(self.alpha0 + self.alpha1 * log_social + age_fe + region_fe)
    }
}

/// A social-media observation mapped onto the survey scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustedObservation {
    pub age: AgeGroup,
    pub year: i32,
    pub region: Region,
    pub wave_id: u32,
    pub log_adjusted_proportion: f64,
    /// Raw platform proportion, kept for the sampling variance.
    pub proportion: f64,
    pub population_count: u64,
}

/// A matched (survey, social) pair at the anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorCell {
    pub age: AgeGroup,
    pub region: String,
    pub log_survey: f64,
    pub log_social: f64,
}

/// Pairs anchor-year survey cells with first-wave social cells. Cells seen
/// by only one source are dropped.
pub fn match_anchor(survey_anchor: &MigrantPanel, social_anchor: &MigrantPanel) -> Result<(i32, Vec<AnchorCell>), BiasError> {
    let survey = survey_anchor.source_only(Source::Survey);
    let social = social_anchor.source_only(Source::SocialMedia);
    let years: Vec<i32> = survey.years().into_iter().collect();
    if years.len() > 1 {
        return Err(BiasError::MixedAnchorYears(years));
    }
    let waves: Vec<u32> = social.wave_ids().into_iter().collect();
    if waves.len() > 1 {
        return Err(BiasError::MixedWaves(waves));
    }
    let mut social_by_cell: HashMap<(AgeGroup, &str), f64> = HashMap::new();
    for o in social.observations() {
        if social_by_cell
            .insert((o.age, o.region.code.as_str()), o.proportion.ln())
            .is_some()
        {
            return Err(BiasError::DuplicateCell {
                data_source: Source::SocialMedia,
                age: o.age,
                region: o.region.code.clone(),
            });
        }
    }
    let mut cells: Vec<AnchorCell> = survey
        .observations()
        .iter()
        .filter_map(|o| {
            social_by_cell
                .get(&(o.age, o.region.code.as_str()))
                .map(|&log_social| AnchorCell {
                    age: o.age,
                    region: o.region.code.clone(),
                    log_survey: o.proportion.ln(),
                    log_social,
                })
        })
        .collect();
    cells.sort_by(|a, b| (&a.region, a.age).cmp(&(&b.region, b.age)));
    Ok((years.first().copied().unwrap_or_default(), cells))
}

/// Column layout of the calibration design: intercept, log social
/// proportion, then dummies for every non-reference age and region.
#[derive(Debug, Clone)]
pub struct DesignLayout {
    pub ages: Vec<AgeGroup>,
    pub regions: Vec<String>,
}

impl DesignLayout {
    pub fn from_cells(cells: &[AnchorCell]) -> Self {
        let ages: BTreeSet<AgeGroup> = cells.iter().map(|c| c.age).collect();
        let regions: BTreeSet<String> = cells.iter().map(|c| c.region.clone()).collect();
        Self {
            ages: ages.into_iter().collect(),
            regions: regions.into_iter().collect(),
        }
    }

    pub fn n_columns(&self) -> usize {
        2 + self.ages.len().saturating_sub(1) + self.regions.len().saturating_sub(1)
    }

    pub fn matrix(&self, cells: &[AnchorCell]) -> DMatrix<f64> {
        let n_age = self.ages.len().saturating_sub(1);
        let mut x = DMatrix::zeros(cells.len(), self.n_columns());
        for (i, c) in cells.iter().enumerate() {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = c.log_social;
            if let Some(a) = self.ages.iter().position(|&a| a == c.age).filter(|&a| a > 0) {
                x[(i, 1 + a)] = 1.0;
            }
            if let Some(r) = self.regions.iter().position(|r| *r == c.region).filter(|&r| r > 0) {
                x[(i, 1 + n_age + r)] = 1.0;
            }
        }
        x
    }
}

/// Ordinary least squares fit of the calibration regression.
pub fn fit_bias_model(survey_anchor: &MigrantPanel, social_anchor: &MigrantPanel) -> Result<BiasCoefficients, BiasError> {
    let (anchor_year, cells) = match_anchor(survey_anchor, social_anchor)?;
    fit_cells(anchor_year, &cells)
}

pub fn fit_cells(anchor_year: i32, cells: &[AnchorCell]) -> Result<BiasCoefficients, BiasError> {
    let layout = DesignLayout::from_cells(cells);
    let k = layout.n_columns();
    let n = cells.len();
    if n <= k {
        return Err(BiasError::InsufficientData {
            n_obs: n,
            n_coefficients: k,
        });
    }
    let x = layout.matrix(cells);
    let y = DVector::from_iterator(n, cells.iter().map(|c| c.log_survey));

    let svd = x.clone().svd(true, true);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let ratio = if s_max > 0.0 { s_min / s_max } else { 0.0 };
    if ratio < RANK_TOLERANCE {
        return Err(BiasError::RankDeficient { ratio });
    }
    let coef = svd
        .solve(&y, 0.0)
        .map_err(|_| BiasError::RankDeficient { ratio })?;
    let resid = &y - &x * &coef;
    let sigma2_fb = resid.norm_squared() / (n - k) as f64;

    let n_age = layout.ages.len() - 1;
    let age_effects = layout
        .ages
        .iter()
        .enumerate()
        .map(|(i, &a)| (a, if i == 0 { 0.0 } else { coef[1 + i] }))
        .collect();
    let region_effects = layout
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| (r.clone(), if i == 0 { 0.0 } else { coef[1 + n_age + i] }))
        .collect();
    Ok(BiasCoefficients {
        alpha0: coef[0],
        alpha1: coef[1],
        age_effects,
        region_effects,
        sigma2_fb,
        anchor_year,
        n_obs: n,
    })
}

/// Applies frozen coefficients to every social-media observation.
pub fn adjust_wave(coefs: &BiasCoefficients, social: &MigrantPanel) -> Result<Vec<AdjustedObservation>, BiasError> {
    social
        .observations()
        .iter()
        .filter(|o| o.source == Source::SocialMedia)
        .map(|o| {
            Ok(AdjustedObservation {
                age: o.age,
                year: o.year,
                region: o.region.clone(),
                wave_id: o.wave_id.unwrap_or_default(),
                log_adjusted_proportion: coefs.adjust_log(o.age, &o.region.code, o.proportion.ln())?,
                proportion: o.proportion,
                population_count: o.population_count.unwrap_or(1),
            })
        })
        .collect()
}
