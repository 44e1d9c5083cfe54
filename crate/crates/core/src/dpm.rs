//! MAP estimation of the Dirichlet process mixture of MNL kernels by EM over
//! a truncated stick-breaking prior.
//!
//! Each iteration computes responsibilities under the independent component
//! prior `P(q = k | alpha)`, then maximizes the expected complete-data log
//! posterior separately in `alpha` (one-dimensional, in `ln alpha`) and in
//! each component's taste vector (weighted MAP MNL). Iteration stops when the
//! expected log posterior changes by less than `rel_tol` of its magnitude.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::mixture::{self, ComponentLogLik, Responsibilities};
use crate::mnl::{self, FitOptions, ParamVector, PriorSpec, Transform, UtilitySpec};
use crate::stick::{self, ConcentrationPrior, GdParams};

pub const DEFAULT_TRUNCATION: usize = 150;
pub const DEFAULT_PRIOR_SCALE: f64 = 5.0;
pub const DEFAULT_REL_TOL: f64 = 1e-4;
pub const DEFAULT_EMPTY_THRESHOLD: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpmConfig {
    pub truncation: usize,
    pub alpha_prior: ConcentrationPrior,
    /// Explicit base measure; when absent, normal(0, s^2) on free and
    /// half-normal(s) on sign-constrained coefficients with `s = prior_scale`.
    pub base_measure: Option<PriorSpec>,
    pub prior_scale: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
    pub seed: u64,
    pub empty_component_weight_threshold: f64,
    /// Occupancy threshold on empirical shares; defaults to `0.5 / N`.
    pub occupancy_threshold: Option<f64>,
    pub inner_tol: f64,
    pub inner_max_iter: usize,
}

impl Default for DpmConfig {
    fn default() -> Self {
        DpmConfig {
            truncation: DEFAULT_TRUNCATION,
            alpha_prior: ConcentrationPrior::default(),
            base_measure: None,
            prior_scale: DEFAULT_PRIOR_SCALE,
            rel_tol: DEFAULT_REL_TOL,
            max_iter: 1000,
            seed: 0,
            empty_component_weight_threshold: DEFAULT_EMPTY_THRESHOLD,
            occupancy_threshold: None,
            inner_tol: 1e-6,
            inner_max_iter: 500,
        }
    }
}

impl DpmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.truncation < 1 {
            return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::InvalidParameter("rel_tol must be positive".into()));
        }
        if !(self.prior_scale > 0.0) {
            return Err(Error::InvalidParameter("prior_scale must be positive".into()));
        }
        self.alpha_prior.validate()
    }

    pub fn base_measure_for(&self, data: &Dataset) -> PriorSpec {
        self.base_measure
            .clone()
            .unwrap_or_else(|| PriorSpec::base_measure(data.attributes(), self.prior_scale))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.inner_tol,
            max_iter: self.inner_max_iter,
        }
    }
}

/// Outcome of [`init_train`].
#[derive(Clone, Debug)]
pub struct StartingValues {
    pub betas: Vec<ParamVector>,
    /// Components whose group fit failed and fell back to the prior mode.
    pub fallbacks: Vec<usize>,
}

/// Randomly partitions individuals into `k` groups and fits a plain MNL to
/// each. Groups left empty (when `N < k`) and failed fits use `fallback`.
pub fn init_train(
    data: &Dataset,
    spec: &UtilitySpec,
    k: usize,
    seed: u64,
    fallback: &ParamVector,
    opts: &FitOptions,
) -> Result<StartingValues> {
    if k == 0 {
        return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
    }
    let n = data.n_individuals();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        groups[pos % k].push(i);
    }
    let init = ParamVector::default_for(&fallback.transforms);
    let fits: Vec<Option<ParamVector>> = groups
        .par_iter()
        .map(|g| {
            if g.is_empty() {
                return None;
            }
            let mut w = vec![0.0; n];
            for &i in g {
                w[i] = 1.0;
            }
            match mnl::fit_weighted_mnl(spec, data, &w, &PriorSpec::None, &init, opts) {
                Ok(o) if o.converged() && o.params.values.iter().all(|v| v.is_finite()) => {
                    Some(o.params)
                }
                _ => None,
            }
        })
        .collect();
    let mut fallbacks = Vec::new();
    let betas = fits
        .into_iter()
        .enumerate()
        .map(|(c, f)| {
            f.unwrap_or_else(|| {
                fallbacks.push(c);
                fallback.clone()
            })
        })
        .collect();
    Ok(StartingValues { betas, fallbacks })
}

/// Posterior membership probabilities under `P(q = k | alpha)`.
pub fn e_step(
    alpha: f64,
    betas: &[ParamVector],
    data: &Dataset,
    spec: &UtilitySpec,
) -> Result<Responsibilities> {
    let ll = mixture::component_logliks(spec, betas, data)?;
    let lp = stick::log_component_prior_probs(alpha, betas.len())?;
    Ok(mixture::responsibilities(&lp, &ll)?.0)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaUpdate {
    pub alpha: f64,
    pub objective: f64,
    /// `d objective / d ln alpha` at the returned point.
    pub score: f64,
    pub converged: bool,
}

/// Tail sums `w_k = sum_{k' >= k} sum_n omega_{n,k'}`, with `w_{K+1} = 0`.
fn tail_sums(column_sums: &[f64]) -> Vec<f64> {
    let k = column_sums.len();
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = tail[i + 1] + column_sums[i];
    }
    tail
}

fn alpha_objective(alpha: f64, tail: &[f64], prior: &ConcentrationPrior) -> f64 {
    stick::gem_alpha_terms(alpha, tail) + prior.log_density(alpha)
}

fn alpha_score_log(alpha: f64, tail: &[f64], prior: &ConcentrationPrior) -> f64 {
    alpha * (stick::gem_alpha_score(alpha, tail) + (prior.shape - 1.0) / alpha - 1.0 / prior.scale)
}

/// Objective of the concentration update at `alpha` for responsibilities
/// `omega`.
pub fn alpha_m_objective(alpha: f64, omega: &Responsibilities, prior: &ConcentrationPrior) -> f64 {
    alpha_objective(alpha, &tail_sums(&omega.column_sums()), prior)
}

const LN_ALPHA_MIN: f64 = -16.0;
const LN_ALPHA_MAX: f64 = 12.0;

/// Maximizes the concentration objective over `u = ln alpha`: coarse grid
/// scan for the basin, then bisection on the score until
/// `|d/du| <= 1e-8`.
pub fn m_step_alpha(omega: &Responsibilities, prior: &ConcentrationPrior, alpha_init: f64) -> Result<AlphaUpdate> {
    prior.validate()?;
    let tail = tail_sums(&omega.column_sums());
    let obj = |u: f64| alpha_objective(u.exp(), &tail, prior);
    let score = |u: f64| alpha_score_log(u.exp(), &tail, prior);

    const GRID: usize = 560;
    let step = (LN_ALPHA_MAX - LN_ALPHA_MIN) / GRID as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let v = obj(LN_ALPHA_MIN + i as f64 * step);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let mut lo = LN_ALPHA_MIN + best_i.saturating_sub(1) as f64 * step;
    let mut hi = LN_ALPHA_MIN + (best_i + 1).min(GRID) as f64 * step;
    let mut converged = false;
    let mut u = LN_ALPHA_MIN + best_i as f64 * step;
    if score(lo) > 0.0 && score(hi) < 0.0 {
        for _ in 0..200 {
            u = 0.5 * (lo + hi);
            let s = score(u);
            if s.abs() <= 1e-8 {
                converged = true;
                break;
            }
            if s > 0.0 {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo < 1e-15 {
                converged = s.abs() <= 1e-8;
                break;
            }
        }
    } else {
        converged = score(u).abs() <= 1e-8;
    }

    let mut alpha = u.exp();
    let mut value = obj(u);
    if alpha_init > 0.0 && alpha_init.is_finite() {
        let v0 = obj(alpha_init.ln());
        if v0 > value {
            alpha = alpha_init;
            value = v0;
        }
    }
    Ok(AlphaUpdate {
        alpha,
        objective: value,
        score: score(alpha.ln()),
        converged,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComponentStatus {
    Converged,
    NotConverged,
    ResetToPriorMode,
    /// Fit errored; previous value retained.
    Failed,
}

#[derive(Clone, Debug)]
pub struct ComponentUpdate {
    pub params: ParamVector,
    pub status: ComponentStatus,
}

/// Updates every component by weighted MAP MNL with weights `omega[., k]`.
/// Components whose total weight is below `empty_threshold` are reset to the
/// prior mode without optimization.
pub fn m_step_betas(
    omega: &Responsibilities,
    data: &Dataset,
    spec: &UtilitySpec,
    base_measure: &PriorSpec,
    betas_init: &[ParamVector],
    empty_threshold: f64,
    opts: &FitOptions,
) -> Result<Vec<ComponentUpdate>> {
    if betas_init.len() != omega.n_components {
        return Err(Error::DimensionMismatch {
            what: "components",
            expected: omega.n_components,
            got: betas_init.len(),
        });
    }
    let totals = omega.column_sums();
    Ok((0..omega.n_components)
        .into_par_iter()
        .map(|k| {
            let init = &betas_init[k];
            if totals[k] < empty_threshold {
                return ComponentUpdate {
                    params: base_measure.mode(&init.transforms),
                    status: ComponentStatus::ResetToPriorMode,
                };
            }
            let w = omega.column(k);
            match mnl::fit_weighted_mnl(spec, data, &w, base_measure, init, opts) {
                Ok(o) => ComponentUpdate {
                    status: if o.converged() {
                        ComponentStatus::Converged
                    } else {
                        ComponentStatus::NotConverged
                    },
                    params: o.params,
                },
                Err(_) => ComponentUpdate {
                    params: init.clone(),
                    status: ComponentStatus::Failed,
                },
            }
        })
        .collect())
}

fn log_base_prior(betas: &[ParamVector], base_measure: &PriorSpec) -> Result<f64> {
    betas.iter().map(|b| base_measure.log_density(b)).sum()
}

fn q_from_parts(
    alpha: f64,
    betas: &[ParamVector],
    omega: &Responsibilities,
    ll: &ComponentLogLik,
    alpha_prior: &ConcentrationPrior,
    base_measure: &PriorSpec,
) -> Result<f64> {
    let counts = omega.column_sums();
    let gdm = stick::gdm_log_marginal_real(&counts, &GdParams::gem(alpha, betas.len()))?;
    Ok(gdm
        + mixture::expected_loglik(omega, ll)
        + alpha_prior.log_density(alpha)
        + log_base_prior(betas, base_measure)?)
}

/// Expected complete-data log posterior: the generalized-Dirichlet-multinomial
/// factor at expected counts, the responsibility-weighted kernel
/// log-likelihood, and the log priors of `alpha` and every `beta_k`.
pub fn surrogate_q(
    alpha: f64,
    betas: &[ParamVector],
    omega: &Responsibilities,
    data: &Dataset,
    spec: &UtilitySpec,
    alpha_prior: &ConcentrationPrior,
    base_measure: &PriorSpec,
) -> Result<f64> {
    let ll = mixture::component_logliks(spec, betas, data)?;
    q_from_parts(alpha, betas, omega, &ll, alpha_prior, base_measure)
}

fn incomplete_from_parts(
    alpha: f64,
    betas: &[ParamVector],
    ll: &ComponentLogLik,
    alpha_prior: &ConcentrationPrior,
    base_measure: &PriorSpec,
) -> Result<(f64, Responsibilities, Vec<f64>)> {
    let lp = stick::log_component_prior_probs(alpha, betas.len())?;
    let (omega, lse) = mixture::responsibilities(&lp, ll)?;
    let value = lse.iter().sum::<f64>() + alpha_prior.log_density(alpha) + log_base_prior(betas, base_measure)?;
    Ok((value, omega, lse))
}

/// `sum_n ln sum_k P(q=k|alpha) P(y_n|beta_k) + ln f(alpha) + sum_k ln g(beta_k)`.
pub fn incomplete_objective(
    alpha: f64,
    betas: &[ParamVector],
    data: &Dataset,
    spec: &UtilitySpec,
    alpha_prior: &ConcentrationPrior,
    base_measure: &PriorSpec,
) -> Result<f64> {
    let ll = mixture::component_logliks(spec, betas, data)?;
    Ok(incomplete_from_parts(alpha, betas, &ll, alpha_prior, base_measure)?.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    pub alpha: f64,
    /// Expected log posterior at the parameters entering the M-step.
    pub q_before: f64,
    /// Expected log posterior after the M-step, same responsibilities.
    pub q_after: f64,
    pub incomplete_objective: f64,
    pub nonconverged_components: usize,
    pub failed_components: usize,
    pub reset_components: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub converged: bool,
    pub iterations: usize,
    pub init_fallbacks: Vec<usize>,
    pub alpha_nonconverged_steps: usize,
    pub nonconverged_component_fits: usize,
    pub failed_component_fits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpmModel {
    pub alpha_hat: f64,
    pub truncation: usize,
    pub spec: UtilitySpec,
    pub attribute_names: Vec<String>,
    pub betas: Vec<ParamVector>,
    /// `(1/N) sum_n omega_{n,k}` at the final parameters.
    pub empirical_shares: Vec<f64>,
    /// `P(q = k | alpha_hat)`.
    pub prior_shares: Vec<f64>,
    pub occupied: usize,
    pub occupancy_threshold: f64,
    /// In-sample `sum_n ln sum_k share_k P(y_n | beta_k)` with empirical shares.
    pub loglik: f64,
    pub trace: Vec<TraceRecord>,
    pub diagnostics: Diagnostics,
    #[serde(skip)]
    pub omega: Responsibilities,
}

impl DpmModel {
    pub fn n_individuals(&self) -> usize {
        self.omega.n_individuals()
    }
}

/// Number of components with empirical share at least `threshold`.
pub fn occupied_components(model: &DpmModel, threshold: f64) -> usize {
    model.empirical_shares.iter().filter(|s| **s >= threshold).count()
}

/// Estimates the model from `init_train` starting values with equal initial
/// component weights and `alpha` at the prior mode.
pub fn fit(data: &Dataset, spec: &UtilitySpec, config: &DpmConfig) -> Result<DpmModel> {
    config.validate()?;
    if data.n_individuals() == 0 {
        return Err(Error::InvalidData("empty dataset".into()));
    }
    let k = config.truncation;
    let base = config.base_measure_for(data);
    let transforms: Vec<Transform> = mnl::transforms_for(data.attributes());
    let opts = config.fit_options();
    let start = init_train(data, spec, k, config.seed, &base.mode(&transforms), &opts)?;
    let mut betas = start.betas;
    let mut diag = Diagnostics {
        init_fallbacks: start.fallbacks,
        ..Diagnostics::default()
    };
    let prior = config.alpha_prior;
    let mut alpha = if prior.shape >= 1.0 { prior.mode().max(1e-3) } else { 1.0 };

    let mut ll = mixture::component_logliks(spec, &betas, data)?;
    let uniform = vec![-(k as f64).ln(); k];
    let mut omega = mixture::responsibilities(&uniform, &ll)?.0;
    let mut trace = Vec::new();
    let mut q_prev: Option<f64> = None;

    for iteration in 0..config.max_iter {
        let q_before = q_from_parts(alpha, &betas, &omega, &ll, &prior, &base)?;
        let a = m_step_alpha(&omega, &prior, alpha)?;
        if !a.converged {
            diag.alpha_nonconverged_steps += 1;
        }
        let updates = m_step_betas(
            &omega,
            data,
            spec,
            &base,
            &betas,
            config.empty_component_weight_threshold,
            &opts,
        )?;
        let count = |s: ComponentStatus| updates.iter().filter(|u| u.status == s).count();
        let (nonconv, failed, reset) = (
            count(ComponentStatus::NotConverged),
            count(ComponentStatus::Failed),
            count(ComponentStatus::ResetToPriorMode),
        );
        diag.nonconverged_component_fits += nonconv;
        diag.failed_component_fits += failed;
        alpha = a.alpha;
        betas = updates.into_iter().map(|u| u.params).collect();
        ll = mixture::component_logliks(spec, &betas, data)?;
        let q_after = q_from_parts(alpha, &betas, &omega, &ll, &prior, &base)?;
        let (incomplete, next_omega, _) = incomplete_from_parts(alpha, &betas, &ll, &prior, &base)?;
        trace.push(TraceRecord {
            iteration,
            alpha,
            q_before,
            q_after,
            incomplete_objective: incomplete,
            nonconverged_components: nonconv,
            failed_components: failed,
            reset_components: reset,
        });
        diag.iterations = iteration + 1;
        omega = next_omega;
        if let Some(prev) = q_prev {
            if (q_after - prev).abs() < config.rel_tol * q_after.abs() {
                diag.converged = true;
                break;
            }
        }
        q_prev = Some(q_after);
    }

    let empirical_shares = omega.empirical_shares();
    let n = data.n_individuals();
    let threshold = config.occupancy_threshold.unwrap_or(0.5 / n as f64);
    let log_shares: Vec<f64> = empirical_shares.iter().map(|s| s.ln()).collect();
    let (_, lse) = mixture::responsibilities(&log_shares, &ll)?;
    let occupied = empirical_shares.iter().filter(|s| **s >= threshold).count();
    Ok(DpmModel {
        alpha_hat: alpha,
        truncation: k,
        spec: *spec,
        attribute_names: data.attributes().iter().map(|a| a.name.clone()).collect(),
        betas,
        prior_shares: stick::component_prior_probs(alpha, k)?,
        empirical_shares,
        occupied,
        occupancy_threshold: threshold,
        loglik: lse.iter().sum(),
        trace,
        diagnostics: diag,
        omega,
    })
}
