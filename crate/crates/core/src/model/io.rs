//! On-disk form of posterior samples: one CSV per chain with a column per
//! scalar parameter, plus a JSON manifest.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::diagnostics::{ParamRef, RhatEntry};
use super::{Dims, ModelConfig, ModelError, ParameterState, PosteriorSamples};

/// Manifest file name inside a samples directory.
pub const SAMPLES_MANIFEST: &str = "samples.json";
const CHAINS_DIR: &str = "chains";

#[derive(Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    rng_seed: u64,
    dims: Dims,
    z1: Vec<f64>,
    z2: Vec<f64>,
    n_chains: usize,
    draws_per_chain: Vec<usize>,
    converged: bool,
    rhat: Vec<RhatEntry>,
}

/// Every scalar in storage order, used as the chain CSV columns.
fn all_parameters(dims: &Dims) -> Vec<ParamRef> {
    let (nx, nt, ns) = (dims.n_ages(), dims.n_years(), dims.n_regions());
    let mut out = Vec::new();
    for t in 0..nt {
        for s in 0..ns {
            out.push(ParamRef::Beta1 { t, s });
        }
    }
    for t in 0..nt {
        for s in 0..ns {
            out.push(ParamRef::Beta2 { t, s });
        }
    }
    out.extend((0..nt).map(|t| ParamRef::Phi { t }));
    out.extend((0..nx * nt * ns).map(|index| ParamRef::Eps { index }));
    for x in 0..nx {
        for s in 0..ns {
            out.push(ParamRef::Rho { x, s });
        }
    }
    out.extend([
        ParamRef::Sigma2Beta1,
        ParamRef::Sigma2Beta,
        ParamRef::Sigma2Phi,
        ParamRef::Sigma2Eps,
        ParamRef::Sigma2Ns,
    ]);
    out
}

fn chain_path(dir: &Path, c: usize) -> std::path::PathBuf {
    dir.join(CHAINS_DIR).join(format!("chain_{c}.csv"))
}

/// Writes `samples.json` and `chains/chain_{c}.csv` under `dir`. Values are
/// written in shortest round-trip form, so reading back is exact.
pub fn write_samples(samples: &PosteriorSamples, dir: &Path) -> Result<(), ModelError> {
    fs::create_dir_all(dir.join(CHAINS_DIR))?;
    let params = all_parameters(&samples.dims);
    for (c, chain) in samples.chains.iter().enumerate() {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(chain_path(dir, c))?));
        w.write_record(params.iter().map(|p| p.name(&samples.dims)))?;
        for state in chain {
            w.write_record(params.iter().map(|p| p.value(state).to_string()))?;
        }
        w.flush()?;
    }
    let manifest = Manifest {
        config: samples.config.clone(),
        rng_seed: samples.rng_seed,
        dims: samples.dims.clone(),
        z1: samples.z1.clone(),
        z2: samples.z2.clone(),
        n_chains: samples.chains.len(),
        draws_per_chain: samples.chains.iter().map(Vec::len).collect(),
        converged: samples.converged,
        rhat: samples.rhat.clone(),
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(dir.join(SAMPLES_MANIFEST), text)?;
    Ok(())
}

pub fn read_samples(dir: &Path) -> Result<PosteriorSamples, ModelError> {
    let manifest: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join(SAMPLES_MANIFEST))?))?;
    let dims = &manifest.dims;
    let params = all_parameters(dims);
    let expected: Vec<String> = params.iter().map(|p| p.name(dims)).collect();
    let mut chains = Vec::with_capacity(manifest.n_chains);
    for c in 0..manifest.n_chains {
        let mut r = csv::Reader::from_reader(BufReader::new(File::open(chain_path(dir, c))?));
        if r.headers()?.iter().ne(expected.iter().map(String::as_str)) {
            return Err(ModelError::Io(format!("chain {c} columns do not match the manifest")));
        }
        let mut chain = Vec::new();
        for record in r.records() {
            let record = record?;
            let mut state = ParameterState::zeros(dims.n_ages(), dims.n_years(), dims.n_regions());
            for (p, field) in params.iter().zip(record.iter()) {
                let v: f64 = field
                    .parse()
                    .map_err(|_| ModelError::Io(format!("chain {c}: bad value {field:?}")))?;
                set_value(&mut state, *p, v);
            }
            chain.push(state);
        }
        if chain.len() != manifest.draws_per_chain[c] {
            return Err(ModelError::Io(format!("chain {c} has {} draws, manifest says {}", chain.len(), manifest.draws_per_chain[c])));
        }
        chains.push(chain);
    }
    Ok(PosteriorSamples {
        dims: manifest.dims,
        z1: manifest.z1,
        z2: manifest.z2,
        chains,
        config: manifest.config,
        rng_seed: manifest.rng_seed,
        rhat: manifest.rhat,
        converged: manifest.converged,
    })
}

fn set_value(state: &mut ParameterState, p: ParamRef, v: f64) {
    match p {
        ParamRef::Beta1 { t, s } => {
            let i = state.ts(t, s);
            state.beta1[i] = v;
        }
        ParamRef::Beta2 { t, s } => {
            let i = state.ts(t, s);
            state.beta2[i] = v;
        }
        ParamRef::Phi { t } => state.phi[t] = v,
        ParamRef::Eps { index } => state.eps[index] = v,
        ParamRef::Rho { x, s } => {
            let i = state.xs(x, s);
            state.rho[i] = v;
        }
        ParamRef::Sigma2Beta1 => state.sigma2_beta1 = v,
        ParamRef::Sigma2Beta => state.sigma2_beta = v,
        ParamRef::Sigma2Phi => state.sigma2_phi = v,
        ParamRef::Sigma2Eps => state.sigma2_eps = v,
        ParamRef::Sigma2Ns => state.sigma2_ns = v,
    }
}
