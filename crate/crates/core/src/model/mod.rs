//! Hierarchical principal-component time-series model.
//!
//! Log proportions are modelled as
//! `log mu[x,t,s] = beta1[t,s] z1[x] + beta2[t,s] z2[x] + eps[x,t,s]`
//! with a random walk on `beta1` per region, `beta2` pooled around a
//! national random walk `phi`, and AR(1) errors `eps` per (age, region).
//! Observations are Normal on the log scale with source-specific variance.

mod diagnostics;
pub mod dist;
mod inputs;
mod io;
mod sampler;
mod state;
mod summary;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use diagnostics::{gelman_rubin, monitored_parameters, split_rhat, ParamRef, RhatEntry};
pub use inputs::{build_inputs, Dims, ModelInputs, ModelObservation};
pub use io::{read_samples, write_samples, SAMPLES_MANIFEST};
pub use sampler::{initial_state, run_chain, run_mcmc, GibbsSampler, PosteriorSamples};
pub use state::{ar_initial_factor, log_posterior, log_posterior_terms, LogPosteriorTerms, ParameterState, Priors, AR_INITIAL_CAP};
pub use summary::{quantile, summarize, write_summary_csv, CellSummary, SummaryKind};
pub(crate) use summary::summarize_log_draws;

/// Variance floor applied to every sampled variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("observation age group {0} is not on the components' age grid")]
    AgeGridMismatch(String),
    #[error("no survey observations to fit")]
    EmptyInputs,
    #[error("invalid model input: {0}")]
    InvalidInput(String),
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite log density: {0}")]
    NonFiniteDensity(String),
    #[error("need at least 2 chains, got {0}")]
    TooFewChains(usize),
    #[error("need at least 10 draws per chain, got {0}")]
    TooFewDraws(usize),
    #[error("not converged: R-hat for {parameter} is {rhat:.4}")]
    NotConverged { parameter: String, rhat: f64 },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ModelError {
    fn from(e: std::io::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

impl From<csv::Error> for ModelError {
    fn from(e: csv::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for ModelError {
    fn from(e: serde_json::Error) -> Self {
        ModelError::Io(e.to_string())
    }
}

/// Sampler settings and prior scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_chains: usize,
    /// Total iterations per chain, warmup included.
    pub n_iter: usize,
    pub n_warmup: usize,
    pub thin: usize,
    pub seed: u64,
    /// Variance of the Normal priors on initial levels.
    pub prior_scale_coeff: f64,
    /// Scale of the half-Normal priors on standard deviations.
    pub prior_scale_sd: f64,
    pub rhat_threshold: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            n_iter: 10_000,
            n_warmup: 5_000,
            thin: 5,
            seed: 1,
            prior_scale_coeff: 100.0,
            prior_scale_sd: 1.0,
            rhat_threshold: 1.1,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if self.n_chains == 0 {
            return bad("n_chains must be positive");
        }
        if self.n_warmup >= self.n_iter {
            return bad("n_warmup must be smaller than n_iter");
        }
        if self.thin == 0 {
            return bad("thin must be at least 1");
        }
        if !(self.prior_scale_coeff > 0.0 && self.prior_scale_coeff.is_finite()) {
            return bad("prior_scale_coeff must be positive");
        }
        if !(self.prior_scale_sd > 0.0 && self.prior_scale_sd.is_finite()) {
            return bad("prior_scale_sd must be positive");
        }
        if !(self.rhat_threshold > 1.0) {
            return bad("rhat_threshold must exceed 1");
        }
        Ok(())
    }

    pub fn draws_per_chain(&self) -> usize {
        (self.n_iter - self.n_warmup).div_ceil(self.thin)
    }

    pub fn priors(&self) -> Priors {
        Priors {
            coeff_variance: self.prior_scale_coeff,
            scale_sd: self.prior_scale_sd,
        }
    }
}
