use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::diagnostics::{monitored_parameters, split_rhat, RhatEntry};
use super::dist::{
    normal_log_density, sample_tridiagonal_gaussian, slice_sample, standard_normal, truncated_normal,
};
use super::state::ar_initial_factor;
use super::{Dims, ModelConfig, ModelError, ModelInputs, ParameterState, Priors, VARIANCE_FLOOR};
use crate::ingest::Source;

/// Slice width on the log standard deviation scale.
const SLICE_WIDTH: f64 = 1.0;
/// Spread of the per-chain jitter added to the least-squares start.
const INIT_JITTER_SD: f64 = 0.1;

/// Gibbs sampler over a fixed set of inputs.
///
/// Observations enter every Gaussian block only through two per-cell
/// aggregates, the summed precision and the precision-weighted sum of
/// log values. They depend on `sigma2_ns`, so [`GibbsSampler::refresh_cells`]
/// must run after it changes.
pub struct GibbsSampler<'a> {
    inputs: &'a ModelInputs,
    priors: Priors,
    obs_cell: Vec<usize>,
    social: Vec<usize>,
    precision: Vec<f64>,
    weighted: Vec<f64>,
    cells_for: Option<f64>,
}

impl<'a> GibbsSampler<'a> {
    pub fn new(inputs: &'a ModelInputs, priors: Priors) -> Self {
        let d = &inputs.dims;
        let (nt, ns) = (d.n_years(), d.n_regions());
        let obs_cell = inputs
            .observations
            .iter()
            .map(|o| (o.age * ns + o.region) * nt + o.time)
            .collect();
        let social = inputs
            .observations
            .iter()
            .enumerate()
            .filter(|(_, o)| o.source == Source::SocialMedia)
            .map(|(i, _)| i)
            .collect();
        let n_cells = d.n_ages() * nt * ns;
        Self {
            inputs,
            priors,
            obs_cell,
            social,
            precision: vec![0.0; n_cells],
            weighted: vec![0.0; n_cells],
            cells_for: None,
        }
    }

    pub fn inputs(&self) -> &ModelInputs {
        self.inputs
    }

    /// Recomputes the per-cell precision and weighted sum for `sigma2_ns`.
    pub fn refresh_cells(&mut self, sigma2_ns: f64) {
        if self.cells_for == Some(sigma2_ns) {
            return;
        }
        self.precision.iter_mut().for_each(|v| *v = 0.0);
        self.weighted.iter_mut().for_each(|v| *v = 0.0);
        for (o, &c) in self.inputs.observations.iter().zip(&self.obs_cell) {
            let p = 1.0 / self.inputs.variance(o, sigma2_ns);
            self.precision[c] += p;
            self.weighted[c] += p * o.log_value;
        }
        self.cells_for = Some(sigma2_ns);
    }

    fn cells(&self, state: &ParameterState) -> (&[f64], &[f64]) {
        debug_assert_eq!(self.cells_for, Some(state.sigma2_ns), "stale cell aggregates");
        (&self.precision, &self.weighted)
    }

    /// One full sweep in the fixed order `beta1, beta2, phi, eps, rho`,
    /// then the five standard deviations.
    pub fn sweep<R: Rng + ?Sized>(&mut self, state: &mut ParameterState, rng: &mut R) {
        self.refresh_cells(state.sigma2_ns);
        self.update_beta1(state, rng);
        self.update_beta2(state, rng);
        self.update_phi(state, rng);
        self.update_eps(state, rng);
        self.update_rho(state, rng);
        self.update_sigma2_beta1(state, rng);
        self.update_sigma2_beta(state, rng);
        self.update_sigma2_phi(state, rng);
        self.update_sigma2_eps(state, rng);
        self.update_sigma2_ns(state, rng);
    }

    /// Each region's `beta1` series jointly, from its tridiagonal Gaussian
    /// conditional.
    pub fn update_beta1<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let (p, w) = self.cells(state);
        let (z1, z2) = (&self.inputs.z1, &self.inputs.z2);
        let (nx, nt, ns) = (state.n_ages, state.n_years, state.n_regions);
        let q = 1.0 / state.sigma2_beta1;
        let mut diag = vec![0.0; nt];
        let off = vec![-q; nt.saturating_sub(1)];
        let mut lin = vec![0.0; nt];
        let mut draw = vec![0.0; nt];
        for s in 0..ns {
            for t in 0..nt {
                let (mut prec, mut b) = (0.0, 0.0);
                let beta2 = state.beta2(t, s);
                for x in 0..nx {
                    let c = state.xts(x, t, s);
                    prec += p[c] * z1[x] * z1[x];
                    b += z1[x] * (w[c] - p[c] * (beta2 * z2[x] + state.eps[c]));
                }
                let mut rw = 0.0;
                if t > 0 {
                    rw += q;
                }
                if t + 1 < nt {
                    rw += q;
                }
                if t == 0 {
                    rw += 1.0 / self.priors.coeff_variance;
                }
                diag[t] = prec + rw;
                lin[t] = b;
            }
            sample_tridiagonal_gaussian(&diag, &off, &lin, rng, &mut draw);
            for (t, v) in draw.iter().enumerate() {
                let i = state.ts(t, s);
                state.beta1[i] = *v;
            }
        }
    }

    /// Each `beta2[t, s]` from its scalar Gaussian conditional.
    pub fn update_beta2<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let (p, w) = self.cells(state);
        let (z1, z2) = (&self.inputs.z1, &self.inputs.z2);
        let q = 1.0 / state.sigma2_beta;
        for t in 0..state.n_years {
            for s in 0..state.n_regions {
                let beta1 = state.beta1(t, s);
                let (mut prec, mut b) = (q, q * state.phi[t]);
                for x in 0..state.n_ages {
                    let c = state.xts(x, t, s);
                    prec += p[c] * z2[x] * z2[x];
                    b += z2[x] * (w[c] - p[c] * (beta1 * z1[x] + state.eps[c]));
                }
                let i = state.ts(t, s);
                state.beta2[i] = b / prec + standard_normal(rng) / prec.sqrt();
            }
        }
    }

    /// The national walk `phi` jointly.
    pub fn update_phi<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let nt = state.n_years;
        let q = 1.0 / state.sigma2_phi;
        let qb = 1.0 / state.sigma2_beta;
        let mut diag = vec![0.0; nt];
        let mut lin = vec![0.0; nt];
        for t in 0..nt {
            let mut d = state.n_regions as f64 * qb;
            if t > 0 {
                d += q;
            }
            if t + 1 < nt {
                d += q;
            }
            if t == 0 {
                d += 1.0 / self.priors.coeff_variance;
            }
            diag[t] = d;
            lin[t] = (0..state.n_regions).map(|s| state.beta2(t, s)).sum::<f64>() * qb;
        }
        let off = vec![-q; nt.saturating_sub(1)];
        let mut draw = vec![0.0; nt];
        sample_tridiagonal_gaussian(&diag, &off, &lin, rng, &mut draw);
        state.phi.copy_from_slice(&draw);
    }

    /// Each (age, region) error series jointly under its AR(1) prior.
    pub fn update_eps<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let (p, w) = self.cells(state);
        let (z1, z2) = (&self.inputs.z1, &self.inputs.z2);
        let nt = state.n_years;
        let q = 1.0 / state.sigma2_eps;
        let mut diag = vec![0.0; nt];
        let mut off = vec![0.0; nt.saturating_sub(1)];
        let mut lin = vec![0.0; nt];
        let mut draw = vec![0.0; nt];
        for x in 0..state.n_ages {
            for s in 0..state.n_regions {
                let rho = state.rho(x, s);
                for t in 0..nt {
                    let c = state.xts(x, t, s);
                    let mut prior = if t == 0 { q / ar_initial_factor(rho) } else { q };
                    if t + 1 < nt {
                        prior += rho * rho * q;
                    }
                    diag[t] = p[c] + prior;
                    let fitted = state.beta1(t, s) * z1[x] + state.beta2(t, s) * z2[x];
                    lin[t] = w[c] - p[c] * fitted;
                }
                off.iter_mut().for_each(|v| *v = -rho * q);
                sample_tridiagonal_gaussian(&diag, &off, &lin, rng, &mut draw);
                let start = state.xts(x, 0, s);
                state.eps[start..start + nt].copy_from_slice(&draw);
            }
        }
    }

    /// Each `rho[x, s]` by an independence Metropolis step.
    ///
    /// The proposal is the truncated Gaussian implied by the transitions
    /// after the first year; the acceptance ratio is the density of the
    /// first error under its stationary variance.
    pub fn update_rho<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let nt = state.n_years;
        let v = state.sigma2_eps;
        for x in 0..state.n_ages {
            for s in 0..state.n_regions {
                let start = state.xts(x, 0, s);
                let e = &state.eps[start..start + nt];
                let (mut a, mut b) = (0.0, 0.0);
                for t in 1..nt {
                    a += e[t - 1] * e[t - 1];
                    b += e[t] * e[t - 1];
                }
                let proposal = if a > 0.0 {
                    truncated_normal(b / a, (v / a).sqrt(), 0.0, 1.0, rng)
                } else {
                    rng.random::<f64>()
                };
                let current = state.rho(x, s);
                let log_ratio = normal_log_density(e[0], 0.0, v * ar_initial_factor(proposal))
                    - normal_log_density(e[0], 0.0, v * ar_initial_factor(current));
                if log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio {
                    let i = state.xs(x, s);
                    state.rho[i] = proposal;
                }
            }
        }
    }

    pub fn update_sigma2_beta1<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let mut ss = 0.0;
        for s in 0..state.n_regions {
            for t in 1..state.n_years {
                ss += (state.beta1(t, s) - state.beta1(t - 1, s)).powi(2);
            }
        }
        let n = state.n_regions * (state.n_years - 1);
        state.sigma2_beta1 = self.scale_update(state.sigma2_beta1, n, ss, rng);
    }

    pub fn update_sigma2_beta<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let mut ss = 0.0;
        for t in 0..state.n_years {
            for s in 0..state.n_regions {
                ss += (state.beta2(t, s) - state.phi[t]).powi(2);
            }
        }
        let n = state.n_regions * state.n_years;
        state.sigma2_beta = self.scale_update(state.sigma2_beta, n, ss, rng);
    }

    pub fn update_sigma2_phi<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let ss: f64 = state.phi.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        state.sigma2_phi = self.scale_update(state.sigma2_phi, state.n_years - 1, ss, rng);
    }

    pub fn update_sigma2_eps<R: Rng + ?Sized>(&self, state: &mut ParameterState, rng: &mut R) {
        let nt = state.n_years;
        let mut ss = 0.0;
        for x in 0..state.n_ages {
            for s in 0..state.n_regions {
                let rho = state.rho(x, s);
                let start = state.xts(x, 0, s);
                let e = &state.eps[start..start + nt];
                ss += e[0] * e[0] / ar_initial_factor(rho);
                for t in 1..nt {
                    ss += (e[t] - rho * e[t - 1]).powi(2);
                }
            }
        }
        state.sigma2_eps = self.scale_update(state.sigma2_eps, state.eps.len(), ss, rng);
    }

    /// Slice update of `sigma_ns` against the social-media likelihood. The
    /// cell aggregates are refreshed afterwards.
    pub fn update_sigma2_ns<R: Rng + ?Sized>(&mut self, state: &mut ParameterState, rng: &mut R) {
        let (z1, z2) = (&self.inputs.z1, &self.inputs.z2);
        let terms: Vec<(f64, f64)> = self
            .social
            .iter()
            .map(|&i| {
                let o = &self.inputs.observations[i];
                let r = o.log_value - state.log_mu(o.age, o.time, o.region, z1, z2);
                (r * r, o.sampling_variance + self.inputs.sigma2_fb)
            })
            .collect();
        let tau2 = self.priors.scale_sd * self.priors.scale_sd;
        let logf = |u: f64| {
            let v = (2.0 * u).exp();
            let lik: f64 = terms
                .iter()
                .map(|&(r2, base)| {
                    let total = base + v;
                    -0.5 * (total.ln() + r2 / total)
                })
                .sum();
            lik - v / (2.0 * tau2) + u
        };
        let u = slice_sample(0.5 * state.sigma2_ns.ln(), logf, SLICE_WIDTH, rng);
        state.sigma2_ns = (2.0 * u).exp().max(VARIANCE_FLOOR);
        self.refresh_cells(state.sigma2_ns);
    }

    /// Slice update of `sigma` given `n` Gaussian terms with squared
    /// deviations summing to `ss`, under the half-Normal prior. Works on
    /// `u = log sigma`.
    fn scale_update<R: Rng + ?Sized>(&self, sigma2: f64, n: usize, ss: f64, rng: &mut R) -> f64 {
        let n = n as f64;
        let tau2 = self.priors.scale_sd * self.priors.scale_sd;
        let logf = |u: f64| {
            let v = (2.0 * u).exp();
            -n * u - ss / (2.0 * v) - v / (2.0 * tau2) + u
        };
        let u = slice_sample(0.5 * sigma2.ln(), logf, SLICE_WIDTH, rng);
        (2.0 * u).exp().max(VARIANCE_FLOOR)
    }
}

fn half_normal_draw<R: Rng + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    (scale * standard_normal(rng)).abs()
}

/// Starting point of one chain.
///
/// `beta1` and `beta2` come from a precision-weighted least-squares fit of
/// each (year, region) schedule onto the two components, carried to the
/// nearest observed year where a cell is empty, plus a small jitter. `phi`
/// is the regional mean of `beta2`, the errors start at zero, and `rho`
/// and the standard deviations are drawn from their priors.
pub fn initial_state<R: Rng + ?Sized>(inputs: &ModelInputs, priors: &Priors, rng: &mut R) -> ParameterState {
    let d = &inputs.dims;
    let (nx, nt, ns) = (d.n_ages(), d.n_years(), d.n_regions());
    let mut state = ParameterState::zeros(nx, nt, ns);
    state.sigma2_beta1 = half_normal_draw(priors.scale_sd, rng).powi(2).max(VARIANCE_FLOOR);
    state.sigma2_beta = half_normal_draw(priors.scale_sd, rng).powi(2).max(VARIANCE_FLOOR);
    state.sigma2_phi = half_normal_draw(priors.scale_sd, rng).powi(2).max(VARIANCE_FLOOR);
    state.sigma2_eps = half_normal_draw(priors.scale_sd, rng).powi(2).max(VARIANCE_FLOOR);
    state.sigma2_ns = half_normal_draw(priors.scale_sd, rng).powi(2).max(VARIANCE_FLOOR);
    for r in state.rho.iter_mut() {
        *r = rng.random::<f64>();
    }

    let mut sampler = GibbsSampler::new(inputs, *priors);
    sampler.refresh_cells(state.sigma2_ns);
    let (p, w) = (&sampler.precision, &sampler.weighted);
    let (z1, z2) = (&inputs.z1, &inputs.z2);

    // Per-cell fits; None where the schedule carries no information.
    let mut fits: Vec<Option<(f64, f64)>> = vec![None; nt * ns];
    for t in 0..nt {
        for s in 0..ns {
            let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for x in 0..nx {
                let c = state.xts(x, t, s);
                a11 += p[c] * z1[x] * z1[x];
                a12 += p[c] * z1[x] * z2[x];
                a22 += p[c] * z2[x] * z2[x];
                b1 += z1[x] * w[c];
                b2 += z2[x] * w[c];
            }
            let det = a11 * a22 - a12 * a12;
            fits[t * ns + s] = if det > 1e-10 * (a11 * a22).max(f64::MIN_POSITIVE) {
                Some(((a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det))
            } else if a11 > 0.0 {
                Some((b1 / a11, 0.0))
            } else {
                None
            };
        }
    }
    let any_fit: Vec<(f64, f64)> = fits.iter().flatten().copied().collect();
    let fallback = if any_fit.is_empty() {
        (0.0, 0.0)
    } else {
        let n = any_fit.len() as f64;
        (
            any_fit.iter().map(|f| f.0).sum::<f64>() / n,
            any_fit.iter().map(|f| f.1).sum::<f64>() / n,
        )
    };
    for s in 0..ns {
        let observed: Vec<usize> = (0..nt).filter(|&t| fits[t * ns + s].is_some()).collect();
        for t in 0..nt {
            let nearest = observed.iter().min_by_key(|&&u| (u.abs_diff(t), u)).copied();
            let (b1, b2) = nearest.and_then(|u| fits[u * ns + s]).unwrap_or(fallback);
            let i = state.ts(t, s);
            state.beta1[i] = b1 + INIT_JITTER_SD * standard_normal(rng);
            state.beta2[i] = b2 + INIT_JITTER_SD * standard_normal(rng);
        }
    }
    for t in 0..nt {
        state.phi[t] = (0..ns).map(|s| state.beta2(t, s)).sum::<f64>() / ns as f64;
    }
    state
}

/// Runs one chain and returns its post-warmup, thinned draws.
///
/// The chain's generator is ChaCha8 seeded with `config.seed` on stream
/// `chain`, so chains are independent and individually reproducible.
pub fn run_chain(inputs: &ModelInputs, config: &ModelConfig, chain: usize) -> Result<Vec<ParameterState>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(chain as u64);
    let priors = config.priors();
    let mut state = initial_state(inputs, &priors, &mut rng);
    let mut sampler = GibbsSampler::new(inputs, priors);
    let mut draws = Vec::with_capacity(config.draws_per_chain());
    for i in 0..config.n_iter {
        sampler.sweep(&mut state, &mut rng);
        if i >= config.n_warmup && (i - config.n_warmup) % config.thin == 0 {
            state.check()?;
            draws.push(state.clone());
        }
    }
    Ok(draws)
}

/// Posterior draws from every chain together with their diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub dims: Dims,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub chains: Vec<Vec<ParameterState>>,
    pub config: ModelConfig,
    pub rng_seed: u64,
    /// Split R-hat of the monitored parameters; empty when there are too
    /// few chains or draws to compute it.
    pub rhat: Vec<RhatEntry>,
    pub converged: bool,
}

impl PosteriorSamples {
    /// Builds the container and computes the diagnostics.
    pub fn new(inputs: &ModelInputs, config: ModelConfig, chains: Vec<Vec<ParameterState>>) -> Self {
        let rhat = compute_rhat(&inputs.dims, &chains).unwrap_or_default();
        let converged = !rhat.is_empty() && rhat.iter().all(|e| e.rhat < config.rhat_threshold);
        Self {
            dims: inputs.dims.clone(),
            z1: inputs.z1.clone(),
            z2: inputs.z2.clone(),
            rng_seed: config.seed,
            config,
            chains,
            rhat,
            converged,
        }
    }

    pub fn n_draws(&self) -> usize {
        self.chains.iter().map(Vec::len).sum()
    }

    pub fn draws(&self) -> impl Iterator<Item = &ParameterState> {
        self.chains.iter().flatten()
    }

    /// Largest R-hat, if diagnostics were computed.
    pub fn max_rhat(&self) -> Option<&RhatEntry> {
        self.rhat.iter().max_by(|a, b| a.rhat.total_cmp(&b.rhat))
    }

    /// Errors with the worst parameter when any R-hat reaches the threshold.
    pub fn check_convergence(&self) -> Result<(), ModelError> {
        if self.chains.len() < 2 {
            return Err(ModelError::TooFewChains(self.chains.len()));
        }
        let Some(worst) = self.max_rhat() else {
            return Err(ModelError::TooFewDraws(self.chains.iter().map(Vec::len).min().unwrap_or(0)));
        };
        if worst.rhat >= self.config.rhat_threshold {
            return Err(ModelError::NotConverged {
                parameter: worst.parameter.clone(),
                rhat: worst.rhat,
            });
        }
        Ok(())
    }
}

fn compute_rhat(dims: &Dims, chains: &[Vec<ParameterState>]) -> Result<Vec<RhatEntry>, ModelError> {
    let params = monitored_parameters(dims);
    params
        .iter()
        .map(|p| {
            let series: Vec<Vec<f64>> = chains.iter().map(|c| c.iter().map(|s| p.value(s)).collect()).collect();
            let refs: Vec<&[f64]> = series.iter().map(Vec::as_slice).collect();
            Ok(RhatEntry {
                parameter: p.name(dims),
                rhat: split_rhat(&refs)?,
            })
        })
        .collect()
}

/// Runs all chains in parallel. Results are ordered by chain index and do
/// not depend on thread scheduling.
pub fn run_mcmc(inputs: &ModelInputs, config: &ModelConfig) -> Result<PosteriorSamples, ModelError> {
    config.validate()?;
    let chains = (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(inputs, config, c))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PosteriorSamples::new(inputs, config.clone(), chains))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::PrincipalComponents;
    use crate::ingest::{AgeGroup, Region};
    use crate::model::ModelObservation;

    fn toy_inputs(n_years: usize) -> ModelInputs {
        let ages = AgeGroup::all()[..2].to_vec();
        let pc = PrincipalComponents::new(ages.clone(), vec![-1.0, 0.0], vec![0.0, 1.0]).unwrap();
        let dims = Dims::new(ages, 2001, 2000 + n_years as i32, vec![Region::new("A"), Region::new("B")]);
        let mut obs = Vec::new();
        for t in 0..n_years {
            for s in 0..2 {
                for x in 0..2 {
                    obs.push(ModelObservation {
                        age: x,
                        time: t,
                        region: s,
                        log_value: -3.0 + 0.1 * t as f64 + 0.2 * x as f64,
                        sampling_variance: 0.01,
                        source: Source::Survey,
                        wave_id: None,
                    });
                }
            }
        }
        ModelInputs::new(dims, &pc, obs, 0.0).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            n_chains: 2,
            n_iter: 300,
            n_warmup: 100,
            thin: 2,
            seed: 9,
            ..Default::default()
        }
    }

    #[test]
    fn chains_are_deterministic() {
        let inputs = toy_inputs(5);
        let a = run_mcmc(&inputs, &small_config()).unwrap();
        let b = run_mcmc(&inputs, &small_config()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.chains.len(), 2);
        assert!(a.chains.iter().all(|c| c.len() == 100));
        assert_ne!(a.chains[0], a.chains[1]);
    }

    #[test]
    fn draws_respect_invariants() {
        let inputs = toy_inputs(5);
        let samples = run_mcmc(&inputs, &small_config()).unwrap();
        for d in samples.draws() {
            d.check().unwrap();
        }
        assert!(!samples.rhat.is_empty());
    }

    #[test]
    fn initial_state_fits_schedules() {
        let inputs = toy_inputs(3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = initial_state(&inputs, &Priors::default(), &mut rng);
        // z1 = (-1, 0), z2 = (0, 1): beta1 = 3 - 0.1 t, beta2 = -2.8 + 0.1 t.
        for t in 0..3 {
            assert!((s.beta1(t, 0) - (3.0 - 0.1 * t as f64)).abs() < 0.5);
            assert!((s.beta2(t, 1) - (-2.8 + 0.1 * t as f64)).abs() < 0.5);
        }
        s.check().unwrap();
    }

    #[test]
    fn empty_years_take_nearest_fit() {
        let mut inputs = toy_inputs(4);
        inputs.observations.retain(|o| o.time != 3);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = initial_state(&inputs, &Priors::default(), &mut rng);
        assert!((s.beta1(3, 0) - s.beta1(2, 0)).abs() < 1.0);
    }
}
