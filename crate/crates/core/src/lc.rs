//! Latent-class MNL estimated by EM, plus the AIC/BIC specification sweep.

use std::io::Write;

use rand::SeedableRng;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dpm::{self, ComponentStatus};
use crate::error::{Error, Result};
use crate::mixture::{self, Responsibilities};
use crate::mnl::{self, FitOptions, ParamVector, PriorSpec, UtilitySpec};

pub const EMPTY_CLASS_SHARE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LcConfig {
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    /// Independent seeded starts per fit; the best final log-likelihood wins.
    pub n_starts: usize,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for LcConfig {
    fn default() -> Self {
        LcConfig {
            rel_tol: dpm::DEFAULT_REL_TOL,
            max_iter: 1000,
            seed: 0,
            n_starts: 1,
            inner_tol: 1e-6,
            inner_max_iter: 500,
        }
    }
}

impl LcConfig {
    fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.inner_tol,
            max_iter: self.inner_max_iter,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LcModel {
    pub k: usize,
    pub spec: UtilitySpec,
    pub attribute_names: Vec<String>,
    pub pi: Vec<f64>,
    pub betas: Vec<ParamVector>,
    pub loglik: f64,
    /// Sample log-likelihood at the start of every iteration, then the final value.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub init_fallbacks: Vec<usize>,
    pub nonconverged_component_fits: usize,
    pub failed_component_fits: usize,
    #[serde(skip)]
    pub omega: Responsibilities,
}

/// One M-step for the class tastes: weighted maximum-likelihood MNL per
/// class. Classes with share below [`EMPTY_CLASS_SHARE`] are frozen.
pub fn m_step_betas(
    omega: &Responsibilities,
    pi: &[f64],
    data: &Dataset,
    spec: &UtilitySpec,
    betas_init: &[ParamVector],
    opts: &FitOptions,
) -> Vec<(ParamVector, ComponentStatus)> {
    (0..omega.n_components)
        .into_par_iter()
        .map(|k| {
            let init = &betas_init[k];
            if pi[k] < EMPTY_CLASS_SHARE {
                return (init.clone(), ComponentStatus::Converged);
            }
            let w = omega.column(k);
            match mnl::fit_weighted_mnl(spec, data, &w, &PriorSpec::None, init, opts) {
                Ok(o) => {
                    let status = if o.converged() {
                        ComponentStatus::Converged
                    } else {
                        ComponentStatus::NotConverged
                    };
                    (o.params, status)
                }
                Err(_) => (init.clone(), ComponentStatus::Failed),
            }
        })
        .collect()
}

fn fit_from(
    data: &Dataset,
    spec: &UtilitySpec,
    k: usize,
    seed: u64,
    config: &LcConfig,
) -> Result<LcModel> {
    let opts = config.fit_options();
    let transforms = mnl::transforms_for(data.attributes());
    let fallback = ParamVector::default_for(&transforms);
    let start = dpm::init_train(data, spec, k, seed, &fallback, &opts)?;
    let mut betas = start.betas;
    let mut pi = vec![1.0 / k as f64; k];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let (mut nonconv, mut failed) = (0, 0);

    let mut ll = mixture::component_logliks(spec, &betas, data)?;
    let log_pi = |pi: &[f64]| pi.iter().map(|p| p.ln()).collect::<Vec<f64>>();
    let (mut omega, mut lse) = mixture::responsibilities(&log_pi(&pi), &ll)?;
    let mut loglik: f64 = lse.iter().sum();

    for it in 0..config.max_iter {
        trace.push(loglik);
        pi = omega.empirical_shares();
        let updates = m_step_betas(&omega, &pi, data, spec, &betas, &opts);
        nonconv += updates.iter().filter(|u| u.1 == ComponentStatus::NotConverged).count();
        failed += updates.iter().filter(|u| u.1 == ComponentStatus::Failed).count();
        betas = updates.into_iter().map(|u| u.0).collect();
        ll = mixture::component_logliks(spec, &betas, data)?;
        (omega, lse) = mixture::responsibilities(&log_pi(&pi), &ll)?;
        let new_ll: f64 = lse.iter().sum();
        iterations = it + 1;
        let done = (new_ll - loglik).abs() < config.rel_tol * new_ll.abs();
        loglik = new_ll;
        if done {
            converged = true;
            break;
        }
    }
    trace.push(loglik);

    Ok(LcModel {
        k,
        spec: *spec,
        attribute_names: data.attributes().iter().map(|a| a.name.clone()).collect(),
        pi,
        betas,
        loglik,
        loglik_trace: trace,
        converged,
        iterations,
        init_fallbacks: start.fallbacks,
        nonconverged_component_fits: nonconv,
        failed_component_fits: failed,
        omega,
    })
}

/// Fits a `k`-class model. With `n_starts > 1`, additional starts use seeds
/// drawn from a stream keyed by `config.seed`.
pub fn fit_lc(data: &Dataset, spec: &UtilitySpec, k: usize, config: &LcConfig) -> Result<LcModel> {
    if k == 0 {
        return Err(Error::InvalidParameter("number of classes must be >= 1".into()));
    }
    let mut seeds = vec![config.seed];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    seeds.extend((1..config.n_starts.max(1)).map(|_| rng.next_u64()));
    let mut best: Option<LcModel> = None;
    for s in seeds {
        let m = fit_from(data, spec, k, s, config)?;
        if best.as_ref().is_none_or(|b| m.loglik > b.loglik) {
            best = Some(m);
        }
    }
    Ok(best.expect("at least one start"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformationCriteria {
    pub aic: f64,
    pub bic: f64,
    pub n_params: usize,
}

/// `n_params = K P + (K - 1)`; BIC uses the number of individuals.
pub fn information_criteria(loglik: f64, k: usize, p: usize, n_individuals: usize) -> InformationCriteria {
    let n_params = k * p + (k - 1);
    let np = n_params as f64;
    InformationCriteria {
        aic: 2.0 * np - 2.0 * loglik,
        bic: np * (n_individuals as f64).ln() - 2.0 * loglik,
        n_params,
    }
}

pub fn model_information_criteria(model: &LcModel, data: &Dataset) -> InformationCriteria {
    information_criteria(model.loglik, model.k, data.n_attributes(), data.n_individuals())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub k: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub converged: bool,
    pub aic_best: bool,
    pub bic_best: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub models: Vec<Option<LcModel>>,
}

impl Sweep {
    pub fn aic_best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.aic_best)
    }

    pub fn bic_best(&self) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.bic_best)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["k", "n_params", "loglik", "aic", "bic", "converged", "aic_best", "bic_best", "error"])?;
        for r in &self.rows {
            wtr.write_record([
                r.k.to_string(),
                r.n_params.to_string(),
                format!("{:.4}", r.loglik),
                format!("{:.4}", r.aic),
                format!("{:.4}", r.bic),
                r.converged.to_string(),
                r.aic_best.to_string(),
                r.bic_best.to_string(),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        wtr.flush().map_err(|e| Error::Io {
            path: "<csv writer>".into(),
            source: e,
        })?;
        Ok(())
    }
}

/// Fits `k_min..=k_max` classes with the same seed policy and marks the
/// AIC- and BIC-minimizing rows. Failed fits are recorded and excluded from
/// the argmin.
pub fn sweep(data: &Dataset, spec: &UtilitySpec, k_min: usize, k_max: usize, config: &LcConfig) -> Result<Sweep> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidParameter(format!(
            "invalid class range {k_min}..={k_max}"
        )));
    }
    let mut rows = Vec::new();
    let mut models = Vec::new();
    for k in k_min..=k_max {
        match fit_lc(data, spec, k, config) {
            Ok(m) => {
                let ic = model_information_criteria(&m, data);
                rows.push(SweepRow {
                    k,
                    n_params: ic.n_params,
                    loglik: m.loglik,
                    aic: ic.aic,
                    bic: ic.bic,
                    converged: m.converged,
                    aic_best: false,
                    bic_best: false,
                    error: None,
                });
                models.push(Some(m));
            }
            Err(e) => {
                rows.push(SweepRow {
                    k,
                    n_params: k * data.n_attributes() + k - 1,
                    loglik: f64::NAN,
                    aic: f64::NAN,
                    bic: f64::NAN,
                    converged: false,
                    aic_best: false,
                    bic_best: false,
                    error: Some(e.to_string()),
                });
                models.push(None);
            }
        }
    }
    let argmin = |f: fn(&SweepRow) -> f64| {
        rows.iter()
            .enumerate()
            .filter(|(_, r)| r.error.is_none() && f(r).is_finite())
            .min_by(|a, b| f(a.1).total_cmp(&f(b.1)))
            .map(|(i, _)| i)
    };
    let (ia, ib) = (argmin(|r| r.aic), argmin(|r| r.bic));
    if let Some(i) = ia {
        rows[i].aic_best = true;
    }
    if let Some(i) = ib {
        rows[i].bic_best = true;
    }
    Ok(Sweep { rows, models })
}
