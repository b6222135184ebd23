//! Two routes to the first unobserved year must agree in distribution:
//! fitting with the year left empty, and fitting without it then projecting
//! each draw one step.

mod common;

use common::{batch_mean_se, observation, toy_components, toy_dims};
use nowcast_core::forecast::project;
use nowcast_core::ingest::Source;
use nowcast_core::model::{run_mcmc, ModelConfig, ModelInputs, ParameterState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const N_AGES: usize = 3;
const N_YEARS: usize = 6;
const N_REGIONS: usize = 2;

fn inputs(n_years: usize) -> ModelInputs {
    let pc = toy_components(N_AGES);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut obs = Vec::new();
    for t in 0..N_YEARS {
        for s in 0..N_REGIONS {
            for x in 0..N_AGES {
                let log_mu = (6.0 + 0.05 * t as f64 + 0.3 * s as f64) * pc.z1[x] + 0.4 * pc.z2[x];
                obs.push(observation(x, t, s, log_mu + noise.sample(&mut rng), 0.0025, Source::Survey));
            }
        }
    }
    ModelInputs::new(toy_dims(N_AGES, n_years, N_REGIONS), &pc, obs, 0.0).unwrap()
}

/// Pooled mean of `f` and its standard error over independent chains.
fn pooled(chains: &[Vec<f64>]) -> (f64, f64) {
    let per: Vec<(f64, f64)> = chains.iter().map(|c| batch_mean_se(c, 40)).collect();
    let k = per.len() as f64;
    (
        per.iter().map(|p| p.0).sum::<f64>() / k,
        per.iter().map(|p| p.1 * p.1).sum::<f64>().sqrt() / k,
    )
}

#[test]
fn empty_year_fit_matches_one_step_projection() {
    let config = ModelConfig {
        n_chains: 4,
        n_iter: 24_000,
        n_warmup: 4_000,
        thin: 1,
        seed: 8,
        ..ModelConfig::default()
    };
    let extended = inputs(N_YEARS + 1);
    let fitted = run_mcmc(&extended, &config).unwrap();
    let base = inputs(N_YEARS);
    let samples = run_mcmc(&base, &config).unwrap();
    let projected = project(&samples, 1, 5).unwrap();
    let per_chain = samples.chains[0].len();

    type Quantity = Box<dyn Fn(&ParameterState, usize) -> f64>;
    let mut quantities: Vec<(String, Quantity)> = Vec::new();
    for s in 0..N_REGIONS {
        quantities.push((format!("beta1[{s}]"), Box::new(move |d, t| d.beta1(t, s))));
        for x in 0..N_AGES {
            let (z1, z2) = (base.z1.clone(), base.z2.clone());
            quantities.push((format!("log_mu[{x},{s}]"), Box::new(move |d, t| d.log_mu(x, t, s, &z1, &z2))));
        }
    }
    for (name, f) in &quantities {
        let a: Vec<Vec<f64>> = fitted.chains.iter().map(|c| c.iter().map(|d| f(d, N_YEARS)).collect()).collect();
        let b: Vec<Vec<f64>> = projected
            .draws
            .chunks(per_chain)
            .map(|c| c.iter().map(|d| f(d, 0)).collect())
            .collect();
        let ((ma, sa), (mb, sb)) = (pooled(&a), pooled(&b));
        let se = (sa * sa + sb * sb).sqrt();
        assert!((ma - mb).abs() <= 3.0 * se, "{name}: fitted {ma} vs projected {mb} (se {se})");
    }
}
