//! Toy problems and independent oracles shared by the sampler suites.
//!
//! The Gaussian oracle never looks at the sampler's block algebra: it reads
//! the conditional precision and mean straight off `log_posterior` by
//! finite differences (exact for a quadratic). The scalar oracle integrates
//! `exp(log_posterior)` on a grid.
#![allow(dead_code)]

pub mod gibbs;

use nalgebra::{DMatrix, DVector};
use nowcast_core::components::PrincipalComponents;
use nowcast_core::ingest::{AgeGroup, Region, Source};
use nowcast_core::model::{log_posterior, run_mcmc, Dims, ModelConfig, ModelInputs, ModelObservation, ParameterState, Priors};

pub fn observation(age: usize, time: usize, region: usize, log_value: f64, variance: f64, source: Source) -> ModelObservation {
    ModelObservation {
        age,
        time,
        region,
        log_value,
        sampling_variance: variance,
        source,
        wave_id: (source == Source::SocialMedia).then_some(1),
    }
}

pub fn toy_components(n_ages: usize) -> PrincipalComponents {
    let ages = AgeGroup::all()[..n_ages].to_vec();
    // Orthonormal pair: a normalised hump and a contrast orthogonal to it.
    let raw1: Vec<f64> = (0..n_ages).map(|x| 1.0 + (x as f64 - 0.3 * n_ages as f64).powi(2) * 0.1).collect();
    let n1 = raw1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z1: Vec<f64> = raw1.iter().map(|v| -v / n1).collect();
    let raw2: Vec<f64> = (0..n_ages).map(|x| x as f64 - 0.5 * (n_ages - 1) as f64).collect();
    let proj: f64 = raw2.iter().zip(&z1).map(|(a, b)| a * b).sum();
    let raw2: Vec<f64> = raw2.iter().zip(&z1).map(|(a, b)| a - proj * b).collect();
    let n2 = raw2.iter().map(|v| v * v).sum::<f64>().sqrt();
    let z2 = raw2.iter().map(|v| v / n2).collect();
    PrincipalComponents::new(ages, z1, z2).unwrap()
}

pub fn toy_dims(n_ages: usize, n_years: usize, n_regions: usize) -> Dims {
    let regions = (0..n_regions).map(|s| Region::new(format!("R{s}"))).collect();
    Dims::new(AgeGroup::all()[..n_ages].to_vec(), 2001, 2000 + n_years as i32, regions)
}

/// Two ages, two years, one region; survey and social rows overlap in one
/// cell and one cell is seen only by the platform.
pub fn toy_inputs() -> ModelInputs {
    let obs = vec![
        observation(0, 0, 0, -3.10, 0.010, Source::Survey),
        observation(1, 0, 0, -2.70, 0.020, Source::Survey),
        observation(0, 1, 0, -3.00, 0.015, Source::Survey),
        observation(0, 1, 0, -2.90, 0.004, Source::SocialMedia),
        observation(1, 1, 0, -2.60, 0.006, Source::SocialMedia),
    ];
    ModelInputs::new(toy_dims(2, 2, 1), &toy_components(2), obs, 0.002).unwrap()
}

pub fn toy_state() -> ParameterState {
    let mut s = ParameterState::zeros(2, 2, 1);
    s.beta1 = vec![2.9, 3.0];
    s.beta2 = vec![0.30, 0.25];
    s.phi = vec![0.28, 0.27];
    s.eps = vec![0.02, -0.01, 0.03, 0.015];
    s.rho = vec![0.4, 0.7];
    s.sigma2_beta1 = 0.02;
    s.sigma2_beta = 0.03;
    s.sigma2_phi = 0.01;
    s.sigma2_eps = 0.005;
    s.sigma2_ns = 0.003;
    s
}

/// How to read and write one block of a [`ParameterState`].
#[derive(Clone, Copy)]
pub struct Block {
    pub name: &'static str,
    pub get: fn(&ParameterState) -> Vec<f64>,
    pub set: fn(&mut ParameterState, &[f64]),
}

pub const GAUSSIAN_BLOCKS: [Block; 4] = [
    Block {
        name: "beta1",
        get: |s| s.beta1.clone(),
        set: |s, v| s.beta1.copy_from_slice(v),
    },
    Block {
        name: "beta2",
        get: |s| s.beta2.clone(),
        set: |s, v| s.beta2.copy_from_slice(v),
    },
    Block {
        name: "phi",
        get: |s| s.phi.clone(),
        set: |s, v| s.phi.copy_from_slice(v),
    },
    Block {
        name: "eps",
        get: |s| s.eps.clone(),
        set: |s, v| s.eps.copy_from_slice(v),
    },
];

/// Mean and covariance of a block's Gaussian full conditional, read off the
/// log posterior: `H` from second differences, `g` from first differences,
/// mean `x0 - H^{-1} g`, covariance `-H^{-1}`.
pub fn gaussian_conditional(state: &ParameterState, inputs: &ModelInputs, priors: &Priors, block: Block) -> (DVector<f64>, DMatrix<f64>) {
    let x0 = (block.get)(state);
    let n = x0.len();
    let h = 0.25;
    let f = |delta: &[(usize, f64)]| {
        let mut x = x0.clone();
        for &(i, d) in delta {
            x[i] += d;
        }
        let mut s = state.clone();
        (block.set)(&mut s, &x);
        log_posterior(&s, inputs, priors).expect("finite log posterior")
    };
    let mut hess = DMatrix::zeros(n, n);
    let mut grad = DVector::zeros(n);
    for i in 0..n {
        grad[i] = (f(&[(i, h)]) - f(&[(i, -h)])) / (2.0 * h);
        for j in 0..n {
            hess[(i, j)] = (f(&[(i, h), (j, h)]) - f(&[(i, h), (j, -h)]) - f(&[(i, -h), (j, h)]) + f(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
        }
    }
    let cov = (-hess).try_inverse().expect("negative definite Hessian");
    let mean = DVector::from_vec(x0) + &cov * grad;
    (mean, cov)
}

/// Mean and variance of `g(u)` under the density proportional to
/// `exp(log_density(u))` on `[lo, hi]`, by Simpson's rule on `n` intervals.
pub fn quadrature_moments(log_density: impl Fn(f64) -> f64, g: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> (f64, f64) {
    let n = n + n % 2;
    let step = (hi - lo) / n as f64;
    let points: Vec<f64> = (0..=n).map(|i| lo + step * i as f64).collect();
    let logs: Vec<f64> = points.iter().map(|&u| log_density(u)).collect();
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (i, (&u, &l)) in points.iter().zip(&logs).enumerate() {
        let w = if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = w * (l - top).exp();
        let v = g(u);
        z += p;
        m1 += p * v;
        m2 += p * v * v;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}

/// Mean and batch-means standard error. Equal to the usual iid error for
/// independent draws and honest for autocorrelated chains.
pub fn batch_mean_se(xs: &[f64], n_batches: usize) -> (f64, f64) {
    let size = xs.len() / n_batches;
    let used = &xs[..size * n_batches];
    let mean = used.iter().sum::<f64>() / used.len() as f64;
    let batch_means: Vec<f64> = used.chunks(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let var = batch_means.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    (mean, (var / n_batches as f64).sqrt())
}

/// A Monte-Carlo estimate against its oracle value.
#[derive(Debug, Clone)]
pub struct MomentCheck {
    pub label: String,
    pub estimate: f64,
    pub oracle: f64,
    pub se: f64,
}

impl MomentCheck {
    pub fn z(&self) -> f64 {
        (self.estimate - self.oracle) / self.se
    }

    pub fn within(&self, n_se: f64) -> bool {
        self.z().abs() <= n_se
    }
}

/// Mean and second central moment of each coordinate, plus every
/// cross-moment, against a Gaussian oracle.
pub fn gaussian_checks(name: &str, draws: &[Vec<f64>], mean: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<MomentCheck> {
    let n = mean.len();
    let mut out = Vec::new();
    let column = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { draws.iter().map(|d| f(d)).collect() };
    for i in 0..n {
        let (m, se) = batch_mean_se(&column(&|d| d[i]), 100);
        out.push(MomentCheck {
            label: format!("{name}[{i}] mean"),
            estimate: m,
            oracle: mean[i],
            se,
        });
        for j in i..n {
            let (c, se) = batch_mean_se(&column(&|d| (d[i] - mean[i]) * (d[j] - mean[j])), 100);
            out.push(MomentCheck {
                label: format!("{name}[{i},{j}] cov"),
                estimate: c,
                oracle: cov[(i, j)],
                se,
            });
        }
    }
    out
}

/// Mean and variance of a scalar chain against oracle moments.
pub fn scalar_checks(name: &str, chain: &[f64], mean: f64, var: f64) -> Vec<MomentCheck> {
    let (m, se) = batch_mean_se(chain, 100);
    let centred: Vec<f64> = chain.iter().map(|x| (x - mean).powi(2)).collect();
    let (v, se_v) = batch_mean_se(&centred, 100);
    vec![
        MomentCheck {
            label: format!("{name} mean"),
            estimate: m,
            oracle: mean,
            se,
        },
        MomentCheck {
            label: format!("{name} var"),
            estimate: v,
            oracle: var,
            se: se_v,
        },
    ]
}

/// One cell seen by the survey and by the platform with equal sampling
/// variance: the posterior mean sits between them, nearer the survey.
pub fn source_weighting_run(seed: u64) -> (f64, f64, f64) {
    let (survey, social) = (-3.0, -2.6);
    let obs = vec![
        observation(0, 0, 0, survey, 0.01, Source::Survey),
        observation(0, 0, 0, social, 0.01, Source::SocialMedia),
    ];
    let inputs = ModelInputs::new(toy_dims(2, 1, 1), &toy_components(2), obs, 0.005).unwrap();
    let config = ModelConfig {
        n_chains: 2,
        n_iter: 4_000,
        n_warmup: 1_000,
        thin: 1,
        seed,
        ..ModelConfig::default()
    };
    let samples = run_mcmc(&inputs, &config).unwrap();
    let draws: Vec<f64> = samples.draws().map(|s| s.log_mu(0, 0, 0, &inputs.z1, &inputs.z2)).collect();
    (draws.iter().sum::<f64>() / draws.len() as f64, survey, social)
}
