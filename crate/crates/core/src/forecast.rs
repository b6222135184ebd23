//! Forward projection of the fitted processes beyond the last modelled year.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::dist::standard_normal;
use crate::model::{CellSummary, Dims, ParameterState, PosteriorSamples, SummaryKind};

/// Longest supported projection.
pub const MAX_HORIZON: u32 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum ForecastError {
    #[error("horizon must be between 1 and {MAX_HORIZON}, got {0}")]
    InvalidHorizon(u32),
    #[error("no posterior draws to project")]
    NoDraws,
}

/// Projected draws for the years after the fitted range.
///
/// Each draw is a [`ParameterState`] over the future years only; `rho` and
/// the variances are carried over from the posterior draw it extends.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub dims: Dims,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub draws: Vec<ParameterState>,
}

/// Advances one posterior draw `horizon` years: `beta1` and `phi` by their
/// random walks, `beta2` about the new `phi`, and the errors by their AR(1)
/// recursion.
pub fn project_draw<R: rand::Rng + ?Sized>(last: &ParameterState, horizon: usize, rng: &mut R) -> ParameterState {
    let (nx, nt, ns) = (last.n_ages, last.n_years, last.n_regions);
    let mut out = ParameterState::zeros(nx, horizon, ns);
    out.rho.clone_from(&last.rho);
    out.sigma2_beta1 = last.sigma2_beta1;
    out.sigma2_beta = last.sigma2_beta;
    out.sigma2_phi = last.sigma2_phi;
    out.sigma2_eps = last.sigma2_eps;
    out.sigma2_ns = last.sigma2_ns;
    let (sd_b1, sd_b, sd_phi, sd_eps) = (
        last.sigma2_beta1.sqrt(),
        last.sigma2_beta.sqrt(),
        last.sigma2_phi.sqrt(),
        last.sigma2_eps.sqrt(),
    );

    let mut phi = last.phi[nt - 1];
    for k in 0..horizon {
        phi += sd_phi * standard_normal(rng);
        out.phi[k] = phi;
    }
    for s in 0..ns {
        let mut b1 = last.beta1(nt - 1, s);
        for k in 0..horizon {
            b1 += sd_b1 * standard_normal(rng);
            let i = out.ts(k, s);
            out.beta1[i] = b1;
            out.beta2[i] = out.phi[k] + sd_b * standard_normal(rng);
        }
    }
    for x in 0..nx {
        for s in 0..ns {
            let rho = last.rho(x, s);
            let mut e = last.eps(x, nt - 1, s);
            for k in 0..horizon {
                e = rho * e + sd_eps * standard_normal(rng);
                let i = out.xts(x, k, s);
                out.eps[i] = e;
            }
        }
    }
    out
}

/// Projects every posterior draw. Draw `i` (counted across chains in
/// order) uses its own ChaCha8 stream of `seed`, so the result does not
/// depend on scheduling.
pub fn project(samples: &PosteriorSamples, horizon: u32, seed: u64) -> Result<Projection, ForecastError> {
    if !(1..=MAX_HORIZON).contains(&horizon) {
        return Err(ForecastError::InvalidHorizon(horizon));
    }
    let last: Vec<&ParameterState> = samples.draws().collect();
    if last.is_empty() {
        return Err(ForecastError::NoDraws);
    }
    let h = horizon as usize;
    let draws = last
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            project_draw(d, h, &mut rng)
        })
        .collect();
    let dims = &samples.dims;
    let last_year = *dims.years.last().expect("non-empty year axis");
    Ok(Projection {
        dims: Dims::new(dims.ages.clone(), last_year + 1, last_year + horizon as i32, dims.regions.clone()),
        z1: samples.z1.clone(),
        z2: samples.z2.clone(),
        draws,
    })
}

impl Projection {
    /// Median and 95% interval of projected `mu`, in the same row order as
    /// [`crate::model::summarize`].
    pub fn summarize(&self) -> Vec<CellSummary> {
        let dims = &self.dims;
        let mut buffer = vec![0.0; self.draws.len()];
        let mut out = Vec::new();
        for (s, region) in dims.regions.iter().enumerate() {
            for (x, &age) in dims.ages.iter().enumerate() {
                for (t, &year) in dims.years.iter().enumerate() {
                    for (b, d) in buffer.iter_mut().zip(&self.draws) {
                        *b = d.log_mu(x, t, s, &self.z1, &self.z2);
                    }
                    let (median, lower95, upper95) = crate::model::summarize_log_draws(&mut buffer);
                    out.push(CellSummary {
                        age,
                        year,
                        region: region.code.clone(),
                        kind: SummaryKind::Forecast,
                        median,
                        lower95,
                        upper95,
                    });
                }
            }
        }
        out
    }
}

/// Estimate rows followed by forecast rows, ordered by region, age, year.
pub fn combine_summaries(estimates: &[CellSummary], forecasts: &[CellSummary]) -> Vec<CellSummary> {
    let mut all: Vec<CellSummary> = estimates.iter().chain(forecasts).cloned().collect();
    all.sort_by(|a, b| (&a.region, a.age, a.year).cmp(&(&b.region, b.age, b.year)));
    all
}
