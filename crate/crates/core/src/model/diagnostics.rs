use serde::{Deserialize, Serialize};

use super::{Dims, ModelError, ParameterState};

/// A scalar parameter inside a [`ParameterState`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Beta1 { t: usize, s: usize },
    Beta2 { t: usize, s: usize },
    Phi { t: usize },
    /// Flat index into `ParameterState::eps`.
    Eps { index: usize },
    Rho { x: usize, s: usize },
    Sigma2Beta1,
    Sigma2Beta,
    Sigma2Phi,
    Sigma2Eps,
    Sigma2Ns,
}

impl ParamRef {
    pub fn value(&self, state: &ParameterState) -> f64 {
        match *self {
            ParamRef::Beta1 { t, s } => state.beta1(t, s),
            ParamRef::Beta2 { t, s } => state.beta2(t, s),
            ParamRef::Phi { t } => state.phi[t],
            ParamRef::Eps { index } => state.eps[index],
            ParamRef::Rho { x, s } => state.rho(x, s),
            ParamRef::Sigma2Beta1 => state.sigma2_beta1,
            ParamRef::Sigma2Beta => state.sigma2_beta,
            ParamRef::Sigma2Phi => state.sigma2_phi,
            ParamRef::Sigma2Eps => state.sigma2_eps,
            ParamRef::Sigma2Ns => state.sigma2_ns,
        }
    }

    /// Readable name such as `beta1[2004,CA]` or `eps[25-29,2004,CA]`.
    pub fn name(&self, dims: &Dims) -> String {
        let year = |t: usize| dims.years[t];
        let region = |s: usize| dims.regions[s].code.as_str();
        match *self {
            ParamRef::Beta1 { t, s } => format!("beta1[{},{}]", year(t), region(s)),
            ParamRef::Beta2 { t, s } => format!("beta2[{},{}]", year(t), region(s)),
            ParamRef::Phi { t } => format!("phi[{}]", year(t)),
            ParamRef::Eps { index } => {
                let nt = dims.n_years();
                let t = index % nt;
                let xs = index / nt;
                let (x, s) = (xs / dims.n_regions(), xs % dims.n_regions());
                format!("eps[{},{},{}]", dims.ages[x].label(), year(t), region(s))
            }
            ParamRef::Rho { x, s } => format!("rho[{},{}]", dims.ages[x].label(), region(s)),
            ParamRef::Sigma2Beta1 => "sigma2_beta1".into(),
            ParamRef::Sigma2Beta => "sigma2_beta".into(),
            ParamRef::Sigma2Phi => "sigma2_phi".into(),
            ParamRef::Sigma2Eps => "sigma2_eps".into(),
            ParamRef::Sigma2Ns => "sigma2_ns".into(),
        }
    }
}

/// Parameters checked for convergence: every `beta1`, `beta2` and `phi`,
/// the five variances, and every tenth error term.
pub fn monitored_parameters(dims: &Dims) -> Vec<ParamRef> {
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
    out.extend([
        ParamRef::Sigma2Beta1,
        ParamRef::Sigma2Beta,
        ParamRef::Sigma2Phi,
        ParamRef::Sigma2Eps,
        ParamRef::Sigma2Ns,
    ]);
    out.extend((0..nx * nt * ns).step_by(10).map(|index| ParamRef::Eps { index }));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub parameter: String,
    /// Infinite values serialize as `null`.
    #[serde(with = "infinite_as_null")]
    pub rhat: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Potential scale reduction factor of equal-length chains, without
/// splitting.
///
/// Zero within-chain variance gives 1 when the chains agree and infinity
/// otherwise.
pub fn gelman_rubin(chains: &[&[f64]]) -> Result<f64, ModelError> {
    let m = chains.len();
    if m < 2 {
        return Err(ModelError::TooFewChains(m));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(ModelError::InvalidInput("chains differ in length".into()));
    }
    if n < 2 {
        return Err(ModelError::TooFewDraws(n));
    }
    let nf = n as f64;
    let means: Vec<f64> = chains.iter().map(|c| c.iter().sum::<f64>() / nf).collect();
    let w = chains
        .iter()
        .zip(&means)
        .map(|(c, mu)| c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (nf - 1.0))
        .sum::<f64>()
        / m as f64;
    let grand = means.iter().sum::<f64>() / m as f64;
    let b_over_n = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() / (m as f64 - 1.0);
    // Relative tolerance keeps constant chains from reading as divergent
    // through rounding in the means.
    let scale = grand.abs().max(1.0);
    if w <= (1e-14 * scale).powi(2) {
        return Ok(if b_over_n <= (1e-12 * scale).powi(2) { 1.0 } else { f64::INFINITY });
    }
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    Ok((var_plus / w).sqrt())
}

/// Split R-hat: each chain is cut in half before [`gelman_rubin`].
pub fn split_rhat(chains: &[&[f64]]) -> Result<f64, ModelError> {
    if chains.len() < 2 {
        return Err(ModelError::TooFewChains(chains.len()));
    }
    let n = chains.iter().map(|c| c.len()).min().unwrap_or(0);
    if n < 10 {
        return Err(ModelError::TooFewDraws(n));
    }
    let half = n / 2;
    let halves: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[c.len() - half..]])
        .collect();
    gelman_rubin(&halves)
}
