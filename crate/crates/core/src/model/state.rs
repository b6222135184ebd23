use serde::{Deserialize, Serialize};

use super::dist::{half_normal_log_density, normal_log_density};
use super::{ModelError, ModelInputs};

/// Cap on the stationary AR(1) variance multiplier `1 / (1 - rho^2)`.
pub const AR_INITIAL_CAP: f64 = 1e3;

/// Multiplier of the innovation variance for the first AR(1) state.
pub fn ar_initial_factor(rho: f64) -> f64 {
    let one_minus = 1.0 - rho * rho;
    if one_minus * AR_INITIAL_CAP <= 1.0 {
        AR_INITIAL_CAP
    } else {
        1.0 / one_minus
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    /// Variance of the Normal priors on `beta1[0, s]` and `phi[0]`.
    pub coeff_variance: f64,
    /// Scale of the half-Normal priors on every standard deviation.
    pub scale_sd: f64,
}

impl Default for Priors {
    fn default() -> Self {
        Self {
            coeff_variance: 100.0,
            scale_sd: 1.0,
        }
    }
}

/// One joint draw of every model parameter.
///
/// Layouts: `beta1`, `beta2` are `[t * S + s]`; `eps` is
/// `[(x * S + s) * T + t]` so each (age, region) series is contiguous;
/// `rho` is `[x * S + s]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterState {
    pub n_ages: usize,
    pub n_years: usize,
    pub n_regions: usize,
    pub beta1: Vec<f64>,
    pub beta2: Vec<f64>,
    pub phi: Vec<f64>,
    pub eps: Vec<f64>,
    pub rho: Vec<f64>,
    pub sigma2_beta1: f64,
    pub sigma2_beta: f64,
    pub sigma2_phi: f64,
    pub sigma2_eps: f64,
    pub sigma2_ns: f64,
}

impl ParameterState {
    /// All coefficients zero, `rho = 0.5`, unit variances.
    pub fn zeros(n_ages: usize, n_years: usize, n_regions: usize) -> Self {
        Self {
            n_ages,
            n_years,
            n_regions,
            beta1: vec![0.0; n_years * n_regions],
            beta2: vec![0.0; n_years * n_regions],
            phi: vec![0.0; n_years],
            eps: vec![0.0; n_ages * n_years * n_regions],
            rho: vec![0.5; n_ages * n_regions],
            sigma2_beta1: 1.0,
            sigma2_beta: 1.0,
            sigma2_phi: 1.0,
            sigma2_eps: 1.0,
            sigma2_ns: 1.0,
        }
    }

    #[inline]
    pub fn ts(&self, t: usize, s: usize) -> usize {
        t * self.n_regions + s
    }

    #[inline]
    pub fn xs(&self, x: usize, s: usize) -> usize {
        x * self.n_regions + s
    }

    #[inline]
    pub fn xts(&self, x: usize, t: usize, s: usize) -> usize {
        (x * self.n_regions + s) * self.n_years + t
    }

    pub fn beta1(&self, t: usize, s: usize) -> f64 {
        self.beta1[self.ts(t, s)]
    }

    pub fn beta2(&self, t: usize, s: usize) -> f64 {
        self.beta2[self.ts(t, s)]
    }

    pub fn eps(&self, x: usize, t: usize, s: usize) -> f64 {
        self.eps[self.xts(x, t, s)]
    }

    pub fn rho(&self, x: usize, s: usize) -> f64 {
        self.rho[self.xs(x, s)]
    }

    /// `log mu[x, t, s]`.
    #[inline]
    pub fn log_mu(&self, x: usize, t: usize, s: usize, z1: &[f64], z2: &[f64]) -> f64 {
        self.beta1(t, s) * z1[x] + self.beta2(t, s) * z2[x] + self.eps(x, t, s)
    }

    pub fn variances(&self) -> [f64; 5] {
        [
            self.sigma2_beta1,
            self.sigma2_beta,
            self.sigma2_phi,
            self.sigma2_eps,
            self.sigma2_ns,
        ]
    }

    /// Checks the structural invariants: positive variances, `rho` in
    /// `[0, 1]`, finite coefficients.
    pub fn check(&self) -> Result<(), ModelError> {
        let (x, t, s) = (self.n_ages, self.n_years, self.n_regions);
        if self.beta1.len() != t * s
            || self.beta2.len() != t * s
            || self.phi.len() != t
            || self.eps.len() != x * t * s
            || self.rho.len() != x * s
        {
            return Err(ModelError::InvalidInput("parameter state has wrong shape".into()));
        }
        if let Some(v) = self.variances().iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(ModelError::NonFiniteDensity(format!("variance {v} is not positive")));
        }
        if let Some(r) = self.rho.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(ModelError::NonFiniteDensity(format!("rho {r} outside [0, 1]")));
        }
        let all_finite = self
            .beta1
            .iter()
            .chain(&self.beta2)
            .chain(&self.phi)
            .chain(&self.eps)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(ModelError::NonFiniteDensity("non-finite coefficient".into()));
        }
        Ok(())
    }
}

/// Log posterior split into its three groups of terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogPosteriorTerms {
    /// Normal log densities of every observation.
    pub observation: f64,
    /// Random walks on `beta1` and `phi` (after the first year), pooling
    /// of `beta2` around `phi`, and the AR(1) errors.
    pub process: f64,
    /// Initial-level Normals, half-Normals on standard deviations, and the
    /// uniform on `rho` (which contributes zero).
    pub prior: f64,
}

impl LogPosteriorTerms {
    pub fn total(&self) -> f64 {
        self.observation + self.process + self.prior
    }
}

/// Unnormalised log posterior, with the scale priors expressed on the
/// standard deviations.
pub fn log_posterior(state: &ParameterState, inputs: &ModelInputs, priors: &Priors) -> Result<f64, ModelError> {
    log_posterior_terms(state, inputs, priors).map(|t| t.total())
}

pub fn log_posterior_terms(
    state: &ParameterState,
    inputs: &ModelInputs,
    priors: &Priors,
) -> Result<LogPosteriorTerms, ModelError> {
    state.check()?;
    let (nx, nt, ns) = (state.n_ages, state.n_years, state.n_regions);
    if (nx, nt, ns) != (inputs.dims.n_ages(), inputs.dims.n_years(), inputs.dims.n_regions()) {
        return Err(ModelError::InvalidInput("state and inputs disagree on dimensions".into()));
    }
    let (z1, z2) = (&inputs.z1, &inputs.z2);

    let observation: f64 = inputs
        .observations
        .iter()
        .map(|o| {
            normal_log_density(
                o.log_value,
                state.log_mu(o.age, o.time, o.region, z1, z2),
                inputs.variance(o, state.sigma2_ns),
            )
        })
        .sum();

    let mut process = 0.0;
    for s in 0..ns {
        for t in 1..nt {
            process += normal_log_density(state.beta1(t, s), state.beta1(t - 1, s), state.sigma2_beta1);
        }
        for t in 0..nt {
            process += normal_log_density(state.beta2(t, s), state.phi[t], state.sigma2_beta);
        }
    }
    for t in 1..nt {
        process += normal_log_density(state.phi[t], state.phi[t - 1], state.sigma2_phi);
    }
    for x in 0..nx {
        for s in 0..ns {
            let rho = state.rho(x, s);
            let v0 = state.sigma2_eps * ar_initial_factor(rho);
            process += normal_log_density(state.eps(x, 0, s), 0.0, v0);
            for t in 1..nt {
                process += normal_log_density(state.eps(x, t, s), rho * state.eps(x, t - 1, s), state.sigma2_eps);
            }
        }
    }

    let mut prior = 0.0;
    for s in 0..ns {
        prior += normal_log_density(state.beta1(0, s), 0.0, priors.coeff_variance);
    }
    prior += normal_log_density(state.phi[0], 0.0, priors.coeff_variance);
    for v in state.variances() {
        prior += half_normal_log_density(v.sqrt(), priors.scale_sd);
    }

    let terms = LogPosteriorTerms {
        observation,
        process,
        prior,
    };
    if !terms.total().is_finite() {
        return Err(ModelError::NonFiniteDensity(format!("{terms:?}")));
    }
    Ok(terms)
}
