//! Machinery shared by the finite-mixture EM drivers: component
//! log-likelihood matrices and responsibilities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mnl::{log_sum_exp, panel_log_likelihood, ParamVector, UtilitySpec};

/// Row-major `N x K` matrix of posterior membership probabilities.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    pub n_components: usize,
    pub values: Vec<f64>,
}

impl Responsibilities {
    pub fn n_individuals(&self) -> usize {
        if self.n_components == 0 {
            0
        } else {
            self.values.len() / self.n_components
        }
    }

    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn get(&self, n: usize, k: usize) -> f64 {
        self.values[n * self.n_components + k]
    }

    /// Uniform responsibilities `1/K`.
    pub fn uniform(n: usize, k: usize) -> Self {
        Responsibilities {
            n_components: k,
            values: vec![1.0 / k as f64; n * k],
        }
    }

    /// Weights of component `k` across individuals.
    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.n_individuals()).map(|n| self.get(n, k)).collect()
    }

    /// `sum_n omega_{n,k}` for every k, accumulated in individual order.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_components];
        for row in self.values.chunks(self.n_components) {
            for (acc, w) in s.iter_mut().zip(row) {
                *acc += w;
            }
        }
        s
    }

    /// `(1/N) sum_n omega_{n,k}`.
    pub fn empirical_shares(&self) -> Vec<f64> {
        let n = self.n_individuals() as f64;
        self.column_sums().into_iter().map(|s| s / n).collect()
    }
}

/// Row-major `N x K` matrix of panel log-likelihoods `ln P(y_n | beta_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentLogLik {
    pub n_components: usize,
    pub values: Vec<f64>,
}

impl ComponentLogLik {
    pub fn row(&self, n: usize) -> &[f64] {
        &self.values[n * self.n_components..(n + 1) * self.n_components]
    }

    pub fn n_individuals(&self) -> usize {
        self.values.len() / self.n_components
    }
}

pub fn component_logliks(spec: &UtilitySpec, betas: &[ParamVector], data: &Dataset) -> Result<ComponentLogLik> {
    let k = betas.len();
    if k == 0 {
        return Err(Error::InvalidParameter("mixture needs at least one component".into()));
    }
    let rows: Vec<Result<Vec<f64>>> = data
        .individuals()
        .par_iter()
        .map(|ind| betas.iter().map(|b| panel_log_likelihood(spec, b, ind)).collect())
        .collect();
    let mut values = Vec::with_capacity(k * data.n_individuals());
    for r in rows {
        values.extend(r?);
    }
    Ok(ComponentLogLik {
        n_components: k,
        values,
    })
}

/// Normalizes `log_prior[k] + ll[n][k]` per row. Returns the
/// responsibilities and the per-individual log mixture likelihoods.
pub fn responsibilities(log_prior: &[f64], ll: &ComponentLogLik) -> Result<(Responsibilities, Vec<f64>)> {
    let k = ll.n_components;
    if log_prior.len() != k {
        return Err(Error::DimensionMismatch {
            what: "component prior",
            expected: k,
            got: log_prior.len(),
        });
    }
    let n = ll.n_individuals();
    let mut values = vec![0.0; n * k];
    let mut lse = Vec::with_capacity(n);
    let mut buf = vec![0.0; k];
    for i in 0..n {
        for (b, (lp, l)) in buf.iter_mut().zip(log_prior.iter().zip(ll.row(i))) {
            *b = lp + l;
        }
        let z = log_sum_exp(&buf);
        if !z.is_finite() {
            return Err(Error::DegenerateLikelihood(i));
        }
        for (o, b) in values[i * k..(i + 1) * k].iter_mut().zip(&buf) {
            *o = (b - z).exp();
        }
        lse.push(z);
    }
    Ok((
        Responsibilities {
            n_components: k,
            values,
        },
        lse,
    ))
}

/// `sum_n ln sum_k m_k P(y_n | beta_k)`.
pub fn mixture_log_likelihood(
    spec: &UtilitySpec,
    betas: &[ParamVector],
    masses: &[f64],
    data: &Dataset,
) -> Result<f64> {
    let ll = component_logliks(spec, betas, data)?;
    let log_m: Vec<f64> = masses.iter().map(|m| m.ln()).collect();
    let (_, lse) = responsibilities(&log_m, &ll)?;
    Ok(lse.iter().sum())
}

/// `sum_{n,k} omega_{n,k} ll_{n,k}`, skipping zero weights so that
/// `0 * -inf` contributes nothing.
pub(crate) fn expected_loglik(omega: &Responsibilities, ll: &ComponentLogLik) -> f64 {
    omega
        .values
        .iter()
        .zip(&ll.values)
        .map(|(w, l)| if *w == 0.0 { 0.0 } else { w * l })
        .sum()
}
