//! Synthetic survey and social-media panels drawn from known parameters.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biasadjust::BiasCoefficients;
use crate::components::PrincipalComponents;
use crate::ingest::{write_panel, AgeGroup, IngestError, MigrantPanel, Observation, Region};
use crate::model::dist::standard_normal;
use crate::model::{Dims, ParameterState};

/// Lowest and highest proportion a simulated observation may take.
pub const PROPORTION_CLAMP: (f64, f64) = (1e-8, 1.0 - 1e-8);

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid truth: {0}")]
    InvalidTruth(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for SimulateError {
    fn from(e: std::io::Error) -> Self {
        SimulateError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SimulateError {
    fn from(e: serde_json::Error) -> Self {
        SimulateError::Io(e.to_string())
    }
}

/// Layout of the synthetic panels and the scales used to draw the truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub origin: String,
    pub n_regions: usize,
    pub first_year: i32,
    /// Survey-only years before the first social-media year.
    pub n_survey_years: usize,
    pub n_social_years: usize,
    pub waves_per_year: u32,
    /// Social-media years that also get a survey release. One year of
    /// overlap gives a holdout with known truth for validation.
    pub survey_overlap_years: usize,
    /// Probability that a survey cell is left out.
    pub missing_rate: f64,

    pub beta1_start_mean: f64,
    pub beta1_start_sd: f64,
    pub phi_start_sd: f64,
    pub sigma_beta1: f64,
    pub sigma_beta: f64,
    pub sigma_phi: f64,
    pub sigma_eps: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Survey noise sd on the log scale.
    pub survey_sd: f64,

    pub alpha0: f64,
    pub alpha1: f64,
    /// Spread of the age and region calibration effects.
    pub effect_sd: f64,
    pub sigma_fb: f64,
    pub sigma_ns: f64,
    pub population_count: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            origin: "SIM".into(),
            n_regions: 10,
            first_year: 2001,
            n_survey_years: 16,
            n_social_years: 2,
            waves_per_year: 2,
            survey_overlap_years: 1,
            missing_rate: 0.0,
            beta1_start_mean: 10.5,
            beta1_start_sd: 1.0,
            phi_start_sd: 0.5,
            sigma_beta1: 0.15,
            sigma_beta: 0.2,
            sigma_phi: 0.1,
            sigma_eps: 0.05,
            rho_min: 0.3,
            rho_max: 0.9,
            survey_sd: 0.08,
            alpha0: 0.5,
            alpha1: 0.9,
            effect_sd: 0.2,
            sigma_fb: 0.05,
            sigma_ns: 0.05,
            population_count: 20_000,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: &str| Err(SimulateError::InvalidConfig(m.to_string()));
        if self.n_regions < 2 {
            return bad("need at least 2 regions");
        }
        if self.n_survey_years < 2 {
            return bad("need at least 2 survey years");
        }
        if self.n_social_years > 0 && self.waves_per_year == 0 {
            return bad("waves_per_year must be positive");
        }
        if self.survey_overlap_years > self.n_social_years {
            return bad("survey_overlap_years exceeds n_social_years");
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return bad("missing_rate must lie in [0, 1)");
        }
        if !(0.0 <= self.rho_min && self.rho_min <= self.rho_max && self.rho_max <= 1.0) {
            return bad("need 0 <= rho_min <= rho_max <= 1");
        }
        if !(self.alpha1 > 0.0) {
            return bad("alpha1 must be positive");
        }
        if self.population_count == 0 {
            return bad("population_count must be positive");
        }
        let scales = [
            self.beta1_start_sd,
            self.phi_start_sd,
            self.sigma_beta1,
            self.sigma_beta,
            self.sigma_phi,
            self.sigma_eps,
            self.survey_sd,
            self.effect_sd,
            self.sigma_fb,
            self.sigma_ns,
        ];
        if scales.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return bad("scales must be finite and non-negative");
        }
        Ok(())
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + (self.n_survey_years + self.n_social_years) as i32 - 1
    }

    pub fn last_survey_year(&self) -> i32 {
        self.first_year + (self.n_survey_years + self.survey_overlap_years) as i32 - 1
    }

    pub fn first_social_year(&self) -> i32 {
        self.first_year + self.n_survey_years as i32
    }

    pub fn region_codes(&self) -> Vec<String> {
        (1..=self.n_regions).map(|i| format!("R{i:02}")).collect()
    }
}

/// Everything needed to regenerate the panels, and what estimators are
/// scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub dims: Dims,
    pub components: PrincipalComponents,
    /// Zero variances are allowed here, unlike in a sampler state.
    pub state: ParameterState,
    /// `sigma2_fb` holds the true calibration noise variance.
    pub bias: BiasCoefficients,
    pub survey_sd: f64,
    pub population_count: u64,
}

impl Truth {
    pub fn log_mu(&self, x: usize, t: usize, s: usize) -> f64 {
        self.state.log_mu(x, t, s, &self.components.z1, &self.components.z2)
    }

    pub fn check(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::InvalidTruth(m));
        let st = &self.state;
        let (nx, nt, ns) = (self.dims.n_ages(), self.dims.n_years(), self.dims.n_regions());
        if (st.n_ages, st.n_years, st.n_regions) != (nx, nt, ns)
            || st.beta1.len() != nt * ns
            || st.beta2.len() != nt * ns
            || st.phi.len() != nt
            || st.eps.len() != nx * nt * ns
            || st.rho.len() != nx * ns
        {
            return bad("state shape does not match dims".into());
        }
        if self.components.age_index != self.dims.ages {
            return bad("components are on a different age grid".into());
        }
        let variances = st.variances();
        if variances.iter().chain([&self.bias.sigma2_fb]).any(|v| !(*v >= 0.0 && v.is_finite())) {
            return bad("variances must be finite and non-negative".into());
        }
        if st.rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return bad("rho outside [0, 1]".into());
        }
        if !(self.bias.alpha1 > 0.0) {
            return bad("alpha1 must be positive".into());
        }
        for x in 0..nx {
            for t in 0..nt {
                for s in 0..ns {
                    if !self.log_mu(x, t, s).is_finite() {
                        return bad(format!("log mu not finite at ({x}, {t}, {s})"));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Orthonormal components resembling a migrant age schedule: `z1` is a
/// negative hump peaking in the late thirties, `z2` a linear contrast that
/// changes sign near age 35.
pub fn reference_components() -> PrincipalComponents {
    let ages = AgeGroup::all();
    let g = ages.len();
    let normalise = |v: &mut Vec<f64>| {
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= n);
    };
    let mut z1: Vec<f64> = (0..g)
        .map(|x| {
            let d = (x as f64 - 4.5) / 3.0;
            -(1.0 + 0.5 * (-d * d).exp())
        })
        .collect();
    normalise(&mut z1);
    let mut z2: Vec<f64> = (0..g).map(|x| x as f64 - 4.0).collect();
    let proj: f64 = z1.iter().zip(&z2).map(|(a, b)| a * b).sum();
    z2.iter_mut().zip(&z1).for_each(|(b, a)| *b -= proj * a);
    normalise(&mut z2);
    PrincipalComponents::new(ages, z1, z2).expect("constructed orthonormal")
}

fn normal<R: Rng + ?Sized>(mean: f64, sd: f64, rng: &mut R) -> f64 {
    mean + sd * standard_normal(rng)
}

/// Draws a truth record from the config's scales.
pub fn draw_truth<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Truth, SimulateError> {
    config.validate()?;
    let ages = AgeGroup::all();
    let regions: Vec<Region> = config.region_codes().into_iter().map(Region::new).collect();
    let dims = Dims::new(ages.clone(), config.first_year, config.last_year(), regions);
    let (nx, nt, ns) = (dims.n_ages(), dims.n_years(), dims.n_regions());

    let mut st = ParameterState::zeros(nx, nt, ns);
    st.sigma2_beta1 = config.sigma_beta1.powi(2);
    st.sigma2_beta = config.sigma_beta.powi(2);
    st.sigma2_phi = config.sigma_phi.powi(2);
    st.sigma2_eps = config.sigma_eps.powi(2);
    st.sigma2_ns = config.sigma_ns.powi(2);

    for s in 0..ns {
        let mut level = normal(config.beta1_start_mean, config.beta1_start_sd, rng);
        for t in 0..nt {
            if t > 0 {
                level += normal(0.0, config.sigma_beta1, rng);
            }
            let i = st.ts(t, s);
            st.beta1[i] = level;
        }
    }
    let mut phi = normal(0.0, config.phi_start_sd, rng);
    for t in 0..nt {
        if t > 0 {
            phi += normal(0.0, config.sigma_phi, rng);
        }
        st.phi[t] = phi;
        for s in 0..ns {
            let i = st.ts(t, s);
            st.beta2[i] = normal(phi, config.sigma_beta, rng);
        }
    }
    for x in 0..nx {
        for s in 0..ns {
            let rho = config.rho_min + (config.rho_max - config.rho_min) * rng.random::<f64>();
            let i = st.xs(x, s);
            st.rho[i] = rho;
            let init_sd = config.sigma_eps * crate::model::ar_initial_factor(rho).sqrt();
            let mut e = normal(0.0, init_sd, rng);
            for t in 0..nt {
                if t > 0 {
                    e = rho * e + normal(0.0, config.sigma_eps, rng);
                }
                let j = st.xts(x, t, s);
                st.eps[j] = e;
            }
        }
    }

    let mut age_effects = BTreeMap::new();
    for (k, &a) in ages.iter().enumerate() {
        age_effects.insert(a, if k == 0 { 0.0 } else { normal(0.0, config.effect_sd, rng) });
    }
    let mut region_effects = BTreeMap::new();
    for (k, r) in dims.regions.iter().enumerate() {
        region_effects.insert(r.code.clone(), if k == 0 { 0.0 } else { normal(0.0, config.effect_sd, rng) });
    }
    let bias = BiasCoefficients {
        alpha0: config.alpha0,
        alpha1: config.alpha1,
        age_effects,
        region_effects,
        sigma2_fb: config.sigma_fb.powi(2),
        anchor_year: config.first_social_year() - 1,
        n_obs: 0,
    };
    let truth = Truth {
        dims,
        components: reference_components(),
        state: st,
        bias,
        survey_sd: config.survey_sd,
        population_count: config.population_count,
    };
    truth.check()?;
    Ok(truth)
}

fn clamp_proportion(p: f64) -> f64 {
    p.clamp(PROPORTION_CLAMP.0, PROPORTION_CLAMP.1)
}

/// Synthetic panels plus the truth they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub survey: MigrantPanel,
    pub social: MigrantPanel,
    pub truth: Truth,
}

/// Draws observations from a truth record.
///
/// Survey cells are `N(log mu, survey_sd^2)` on the log scale with
/// `se = survey_sd * p`. Social cells invert the calibration regression:
/// the clean platform value solves `log mu = alpha0 + alpha1 log p + effects`,
/// then calibration, non-sampling and binomial noise on the survey scale are
/// divided through by `alpha1`.
pub fn generate<R: Rng + ?Sized>(truth: &Truth, config: &SimConfig, rng: &mut R) -> Result<SimOutput, SimulateError> {
    config.validate()?;
    truth.check()?;
    let dims = &truth.dims;
    let year_index = |y: i32| dims.year_index(y).ok_or_else(|| SimulateError::InvalidConfig(format!("year {y} outside the truth")));

    let mut survey = Vec::new();
    for year in config.first_year..=config.last_survey_year() {
        let t = year_index(year)?;
        for (s, region) in dims.regions.iter().enumerate() {
            for (x, &age) in dims.ages.iter().enumerate() {
                let keep = rng.random::<f64>() >= config.missing_rate;
                let log_p = normal(truth.log_mu(x, t, s), truth.survey_sd, rng);
                if keep {
                    let p = clamp_proportion(log_p.exp());
                    survey.push(Observation::survey(age, year, region.clone(), p, truth.survey_sd * p));
                }
            }
        }
    }

    let b = &truth.bias;
    let sigma_fb = b.sigma2_fb.sqrt();
    let sigma_ns = truth.state.sigma2_ns.sqrt();
    let n = truth.population_count;
    let mut social = Vec::new();
    let mut wave_id = 0;
    for year in config.first_social_year()..=config.last_year() {
        let t = year_index(year)?;
        for _ in 0..config.waves_per_year {
            wave_id += 1;
            for (s, region) in dims.regions.iter().enumerate() {
                for (x, &age) in dims.ages.iter().enumerate() {
                    let offset = b.alpha0 + b.age_effects[&age] + b.region_effects[&region.code];
                    let clean = (truth.log_mu(x, t, s) - offset) / b.alpha1;
                    let p_clean = clamp_proportion(clean.exp());
                    let binomial_sd = (p_clean * (1.0 - p_clean) / n as f64).sqrt();
                    let e = normal(0.0, sigma_fb, rng) + normal(0.0, sigma_ns, rng) + normal(0.0, binomial_sd, rng);
                    let p = clamp_proportion((clean - e / b.alpha1).exp());
                    social.push(Observation::social(age, year, region.clone(), p, wave_id, n));
                }
            }
        }
    }

    Ok(SimOutput {
        survey: MigrantPanel::new(config.origin.clone(), survey)?,
        social: MigrantPanel::new(config.origin.clone(), social)?,
        truth: truth.clone(),
    })
}

/// Truth and panels from a single seed.
pub fn simulate(config: &SimConfig, seed: u64) -> Result<SimOutput, SimulateError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = draw_truth(config, &mut rng)?;
    generate(&truth, config, &mut rng)
}

/// Writes `survey.csv`, `social.csv` and `truth.json` into `dir`.
pub fn write_outputs(output: &SimOutput, dir: &Path) -> Result<(), SimulateError> {
    fs::create_dir_all(dir)?;
    write_panel(&output.survey, BufWriter::new(File::create(dir.join("survey.csv"))?))?;
    write_panel(&output.social, BufWriter::new(File::create(dir.join("social.csv"))?))?;
    let mut text = serde_json::to_string_pretty(&output.truth)?;
    text.push('\n');
    fs::write(dir.join("truth.json"), text)?;
    Ok(())
}
