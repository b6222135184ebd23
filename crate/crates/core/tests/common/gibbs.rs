//! Every conditional update run repeatedly from a fixed toy state and
//! compared with its oracle.

use nowcast_core::model::{log_posterior, GibbsSampler, ParameterState, Priors};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{gaussian_checks, gaussian_conditional, quadrature_moments, scalar_checks, toy_inputs, toy_state, MomentCheck, GAUSSIAN_BLOCKS};

type Update = fn(&mut GibbsSampler, &mut ParameterState, &mut ChaCha8Rng);

struct ScaleParam {
    name: &'static str,
    update: Update,
    slot: fn(&mut ParameterState) -> &mut f64,
}

const SCALES: [ScaleParam; 5] = [
    ScaleParam {
        name: "sigma2_beta1",
        update: |g, s, r| g.update_sigma2_beta1(s, r),
        slot: |s| &mut s.sigma2_beta1,
    },
    ScaleParam {
        name: "sigma2_beta",
        update: |g, s, r| g.update_sigma2_beta(s, r),
        slot: |s| &mut s.sigma2_beta,
    },
    ScaleParam {
        name: "sigma2_phi",
        update: |g, s, r| g.update_sigma2_phi(s, r),
        slot: |s| &mut s.sigma2_phi,
    },
    ScaleParam {
        name: "sigma2_eps",
        update: |g, s, r| g.update_sigma2_eps(s, r),
        slot: |s| &mut s.sigma2_eps,
    },
    ScaleParam {
        name: "sigma2_ns",
        update: |g, s, r| g.update_sigma2_ns(s, r),
        slot: |s| &mut s.sigma2_ns,
    },
];

const GAUSSIAN_UPDATES: [Update; 4] = [
    |g, s, r| g.update_beta1(s, r),
    |g, s, r| g.update_beta2(s, r),
    |g, s, r| g.update_phi(s, r),
    |g, s, r| g.update_eps(s, r),
];

/// Runs `n` repetitions of each update and returns every moment check.
pub fn block_checks(n: usize, seed: u64) -> Vec<MomentCheck> {
    let inputs = toy_inputs();
    let priors = Priors::default();
    let start = toy_state();
    let mut checks = Vec::new();
    let mut stream = 0;
    let mut rng_for = || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        stream += 1;
        rng
    };

    for (block, update) in GAUSSIAN_BLOCKS.iter().zip(GAUSSIAN_UPDATES) {
        let (mean, cov) = gaussian_conditional(&start, &inputs, &priors, *block);
        let mut sampler = GibbsSampler::new(&inputs, priors);
        sampler.refresh_cells(start.sigma2_ns);
        let mut state = start.clone();
        let mut rng = rng_for();
        let draws: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                update(&mut sampler, &mut state, &mut rng);
                (block.get)(&state)
            })
            .collect();
        checks.extend(gaussian_checks(block.name, &draws, &mean, &cov));
    }

    {
        let mut sampler = GibbsSampler::new(&inputs, priors);
        sampler.refresh_cells(start.sigma2_ns);
        let mut state = start.clone();
        let mut rng = rng_for();
        let mut chains = vec![Vec::with_capacity(n); start.rho.len()];
        for _ in 0..n {
            sampler.update_rho(&mut state, &mut rng);
            for (c, r) in chains.iter_mut().zip(&state.rho) {
                c.push(*r);
            }
        }
        for (i, chain) in chains.iter().enumerate() {
            let logf = |r: f64| {
                let mut s = start.clone();
                s.rho[i] = r;
                log_posterior(&s, &inputs, &priors).unwrap()
            };
            let (m, v) = quadrature_moments(logf, |r| r, 0.0, 1.0, 20_000);
            checks.extend(scalar_checks(&format!("rho[{i}]"), chain, m, v));
        }
    }

    for p in &SCALES {
        let mut sampler = GibbsSampler::new(&inputs, priors);
        sampler.refresh_cells(start.sigma2_ns);
        let mut state = start.clone();
        let mut rng = rng_for();
        let chain: Vec<f64> = (0..n)
            .map(|_| {
                (p.update)(&mut sampler, &mut state, &mut rng);
                *(p.slot)(&mut state)
            })
            .collect();
        // Density of u = log sigma; the posterior is a density in sigma.
        let logf = |u: f64| {
            let mut s = start.clone();
            *(p.slot)(&mut s) = (2.0 * u).exp();
            log_posterior(&s, &inputs, &priors).unwrap() + u
        };
        let (m, v) = quadrature_moments(logf, |u| (2.0 * u).exp(), -12.0, 3.0, 40_000);
        checks.extend(scalar_checks(p.name, &chain, m, v));
    }
    checks
}
