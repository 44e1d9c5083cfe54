//! Multinomial logit kernel: utilities, choice probabilities, panel
//! likelihoods, and the weighted MAP objective solved in every M-step.
//!
//! Sign-constrained coefficients are optimized in unconstrained coordinates
//! `u`. The natural-scale coefficient is recovered by
//!
//! * identity: `beta = u`
//! * negative-exponential: `beta = -exp(u)`
//! * bounded-negative(b): `beta = b - exp(u)`
//!
//! When a prior is attached to a transformed coefficient, its density is
//! evaluated on the natural scale and the log-Jacobian `u` is added, so the
//! MAP problem is posed consistently in `u`.

use serde::{Deserialize, Serialize};

use crate::data::{AttributeSpec, ChoiceTask, Constraint, Dataset, Individual};
use crate::error::{Error, Result};
use crate::optim::{self, BfgsOptions, Termination};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilitySpace {
    Preference,
    Wtp,
}

/// Utility specification over an ordered attribute list.
///
/// Preference space: `V = sum_a x_a b_a`. WTP space with cost attribute `c`:
/// `V = (sum_{a != c} x_a b_a + x_c) b_c`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub space: UtilitySpace,
    pub n_attributes: usize,
    pub cost_index: Option<usize>,
}

impl UtilitySpec {
    pub fn new(space: UtilitySpace, attributes: &[AttributeSpec]) -> Result<Self> {
        let costs: Vec<usize> = attributes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.role == crate::data::AttributeRole::Cost)
            .map(|(i, _)| i)
            .collect();
        let cost_index = match (space, costs.as_slice()) {
            (UtilitySpace::Wtp, [c]) => Some(*c),
            (UtilitySpace::Wtp, _) => {
                return Err(Error::InvalidParameter(format!(
                    "wtp space requires exactly one cost attribute, found {}",
                    costs.len()
                )))
            }
            (UtilitySpace::Preference, [c]) => Some(*c),
            (UtilitySpace::Preference, _) => None,
        };
        Ok(UtilitySpec {
            space,
            n_attributes: attributes.len(),
            cost_index,
        })
    }

    pub fn preference(n_attributes: usize) -> Self {
        UtilitySpec {
            space: UtilitySpace::Preference,
            n_attributes,
            cost_index: None,
        }
    }

    pub fn wtp(n_attributes: usize, cost_index: usize) -> Self {
        assert!(cost_index < n_attributes);
        UtilitySpec {
            space: UtilitySpace::Wtp,
            n_attributes,
            cost_index: Some(cost_index),
        }
    }

    /// Cost index when utilities are in WTP space, `None` otherwise.
    pub fn wtp_cost(&self) -> Option<usize> {
        match self.space {
            UtilitySpace::Wtp => self.cost_index,
            UtilitySpace::Preference => None,
        }
    }

    /// Deterministic utility of one alternative.
    #[inline]
    pub fn utility(&self, x: &[f64], beta: &[f64]) -> f64 {
        match self.wtp_cost() {
            None => x.iter().zip(beta).map(|(a, b)| a * b).sum(),
            Some(c) => {
                let mut s = x[c];
                for a in 0..x.len() {
                    if a != c {
                        s += x[a] * beta[a];
                    }
                }
                s * beta[c]
            }
        }
    }

    /// Adds `scale * dV/dbeta` into `out`.
    #[inline]
    fn add_utility_gradient(&self, x: &[f64], beta: &[f64], scale: f64, out: &mut [f64]) {
        match self.wtp_cost() {
            None => {
                for (o, xa) in out.iter_mut().zip(x) {
                    *o += scale * xa;
                }
            }
            Some(c) => {
                let bc = beta[c];
                let mut s = x[c];
                for a in 0..x.len() {
                    if a != c {
                        s += x[a] * beta[a];
                        out[a] += scale * x[a] * bc;
                    }
                }
                out[c] += scale * s;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Transform {
    Identity,
    NegativeExponential,
    BoundedNegative { bound: f64 },
}

impl Transform {
    pub fn for_constraint(c: Constraint) -> Self {
        match c {
            Constraint::Free => Transform::Identity,
            Constraint::StrictlyNegative => Transform::NegativeExponential,
            Constraint::BoundedNegative { upper_bound } => {
                Transform::BoundedNegative { bound: upper_bound }
            }
        }
    }

    pub fn is_feasible(&self, beta: f64) -> bool {
        match *self {
            Transform::Identity => beta.is_finite(),
            Transform::NegativeExponential => beta < 0.0 && beta.is_finite(),
            Transform::BoundedNegative { bound } => beta < bound && beta.is_finite(),
        }
    }

    pub fn to_unconstrained(&self, beta: f64) -> Result<f64> {
        if !self.is_feasible(beta) {
            return Err(Error::Infeasible {
                value: beta,
                transform: format!("{self:?}"),
            });
        }
        Ok(match *self {
            Transform::Identity => beta,
            Transform::NegativeExponential => (-beta).ln(),
            Transform::BoundedNegative { bound } => (bound - beta).ln(),
        })
    }

    #[inline]
    pub fn from_unconstrained(&self, u: f64) -> f64 {
        match *self {
            Transform::Identity => u,
            Transform::NegativeExponential => -u.exp(),
            Transform::BoundedNegative { bound } => bound - u.exp(),
        }
    }

    /// `d beta / d u` at natural value `beta`.
    #[inline]
    fn jacobian(&self, beta: f64) -> f64 {
        match *self {
            Transform::Identity => 1.0,
            Transform::NegativeExponential => beta,
            Transform::BoundedNegative { bound } => beta - bound,
        }
    }

    fn is_identity(&self) -> bool {
        matches!(self, Transform::Identity)
    }

    /// A feasible default starting value.
    pub fn default_value(&self) -> f64 {
        self.from_unconstrained(0.0)
    }
}

/// Taste vector on the natural scale together with its reparameterization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub values: Vec<f64>,
    pub transforms: Vec<Transform>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, transforms: Vec<Transform>) -> Result<Self> {
        if values.len() != transforms.len() {
            return Err(Error::DimensionMismatch {
                what: "parameter transforms",
                expected: values.len(),
                got: transforms.len(),
            });
        }
        for (v, t) in values.iter().zip(&transforms) {
            if !t.is_feasible(*v) {
                return Err(Error::Infeasible {
                    value: *v,
                    transform: format!("{t:?}"),
                });
            }
        }
        Ok(ParamVector { values, transforms })
    }

    /// Identity transforms throughout.
    pub fn free(values: Vec<f64>) -> Self {
        let transforms = vec![Transform::Identity; values.len()];
        ParamVector { values, transforms }
    }

    /// Default feasible point for the given transforms.
    pub fn default_for(transforms: &[Transform]) -> Self {
        ParamVector {
            values: transforms.iter().map(Transform::default_value).collect(),
            transforms: transforms.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn to_unconstrained(&self) -> Result<Vec<f64>> {
        self.values
            .iter()
            .zip(&self.transforms)
            .map(|(v, t)| t.to_unconstrained(*v))
            .collect()
    }

    pub fn from_unconstrained(u: &[f64], transforms: &[Transform]) -> Self {
        ParamVector {
            values: u
                .iter()
                .zip(transforms)
                .map(|(x, t)| t.from_unconstrained(*x))
                .collect(),
            transforms: transforms.to_vec(),
        }
    }
}

pub fn transforms_for(attributes: &[AttributeSpec]) -> Vec<Transform> {
    attributes
        .iter()
        .map(|a| Transform::for_constraint(a.constraint))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum CoefPrior {
    /// Normal(0, scale^2) on the natural-scale coefficient.
    Normal { scale: f64 },
    /// Half-normal(scale) on the coefficient magnitude.
    HalfNormal { scale: f64 },
    Flat,
}

impl CoefPrior {
    fn log_density(&self, beta: f64) -> f64 {
        match *self {
            CoefPrior::Normal { scale } => {
                -0.5 * (LN_2PI + 2.0 * scale.ln()) - beta * beta / (2.0 * scale * scale)
            }
            CoefPrior::HalfNormal { scale } => {
                std::f64::consts::LN_2 - 0.5 * (LN_2PI + 2.0 * scale.ln())
                    - beta * beta / (2.0 * scale * scale)
            }
            CoefPrior::Flat => 0.0,
        }
    }

    fn d_log_density(&self, beta: f64) -> f64 {
        match *self {
            CoefPrior::Normal { scale } | CoefPrior::HalfNormal { scale } => {
                -beta / (scale * scale)
            }
            CoefPrior::Flat => 0.0,
        }
    }

    fn is_flat(&self) -> bool {
        matches!(self, CoefPrior::Flat)
    }
}

/// Prior over a taste vector: independent per-coefficient densities, or
/// none for maximum likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "coefficients")]
pub enum PriorSpec {
    None,
    Independent(Vec<CoefPrior>),
}

impl PriorSpec {
    /// Normal(0, scale^2) on free coefficients, half-normal(scale) on
    /// sign-constrained ones.
    pub fn base_measure(attributes: &[AttributeSpec], scale: f64) -> Self {
        PriorSpec::Independent(
            attributes
                .iter()
                .map(|a| match a.constraint {
                    Constraint::Free => CoefPrior::Normal { scale },
                    _ => CoefPrior::HalfNormal { scale },
                })
                .collect(),
        )
    }

    pub fn normal(p: usize, scale: f64) -> Self {
        PriorSpec::Independent(vec![CoefPrior::Normal { scale }; p])
    }

    /// Log prior density in unconstrained coordinates.
    pub fn log_density(&self, beta: &ParamVector) -> Result<f64> {
        let PriorSpec::Independent(priors) = self else {
            return Ok(0.0);
        };
        check_len("prior", beta.len(), priors.len())?;
        let mut total = 0.0;
        for ((b, t), pr) in beta.values.iter().zip(&beta.transforms).zip(priors) {
            if !t.is_feasible(*b) {
                return Err(Error::Infeasible {
                    value: *b,
                    transform: format!("{t:?}"),
                });
            }
            if pr.is_flat() {
                continue;
            }
            total += pr.log_density(*b);
            if !t.is_identity() {
                total += t.to_unconstrained(*b)?;
            }
        }
        if !total.is_finite() {
            return Err(Error::InvalidParameter("non-finite prior density".into()));
        }
        Ok(total)
    }

    /// Adds the gradient of [`PriorSpec::log_density`] w.r.t. `u` into `out`.
    fn add_gradient(&self, beta: &ParamVector, out: &mut [f64]) {
        let PriorSpec::Independent(priors) = self else {
            return;
        };
        for (a, pr) in priors.iter().enumerate() {
            if pr.is_flat() {
                continue;
            }
            let t = beta.transforms[a];
            let b = beta.values[a];
            out[a] += pr.d_log_density(b) * t.jacobian(b);
            if !t.is_identity() {
                out[a] += 1.0;
            }
        }
    }

    /// Maximizer of the log prior in unconstrained coordinates, or the
    /// transform default where the prior is flat.
    pub fn mode(&self, transforms: &[Transform]) -> ParamVector {
        let PriorSpec::Independent(priors) = self else {
            return ParamVector::default_for(transforms);
        };
        let values = transforms
            .iter()
            .zip(priors)
            .map(|(t, pr)| {
                let scale = match *pr {
                    CoefPrior::Normal { scale } | CoefPrior::HalfNormal { scale } => scale,
                    CoefPrior::Flat => return t.default_value(),
                };
                match *t {
                    Transform::Identity => 0.0,
                    // maximize u - exp(2u) / (2 s^2)
                    Transform::NegativeExponential => -scale,
                    // maximize u - (exp(u) - b)^2 / (2 s^2)
                    Transform::BoundedNegative { bound } => {
                        let e = 0.5 * (bound + (bound * bound + 4.0 * scale * scale).sqrt());
                        bound - e
                    }
                }
            })
            .collect();
        ParamVector {
            values,
            transforms: transforms.to_vec(),
        }
    }
}

fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// Choice probabilities over the available alternatives of `task`, in order.
pub fn choice_probabilities(
    spec: &UtilitySpec,
    beta: &ParamVector,
    task: &ChoiceTask,
) -> Result<Vec<f64>> {
    check_len("taste vector", spec.n_attributes, beta.len())?;
    let v: Vec<f64> = task
        .available()
        .map(|(_, a)| spec.utility(&a.attributes, &beta.values))
        .collect();
    if v.is_empty() {
        return Err(Error::InvalidData("task has no available alternatives".into()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteUtility);
    }
    Ok(softmax(&v))
}

pub fn softmax(v: &[f64]) -> Vec<f64> {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY || m == f64::INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-probability of the chosen alternative; when `grad` is given, adds
/// `weight * d/dbeta` of it.
fn task_log_prob(
    spec: &UtilitySpec,
    beta: &[f64],
    task: &ChoiceTask,
    buf: &mut Vec<f64>,
    grad: Option<(&mut [f64], f64)>,
) -> f64 {
    buf.clear();
    let mut v_chosen = 0.0;
    let mut m = f64::NEG_INFINITY;
    for (j, alt) in task.alternatives.iter().enumerate() {
        if !alt.available {
            continue;
        }
        let v = spec.utility(&alt.attributes, beta);
        if j == task.chosen {
            v_chosen = v;
        }
        m = m.max(v);
        buf.push(v);
    }
    let mut denom = 0.0;
    for v in buf.iter_mut() {
        *v = (*v - m).exp();
        denom += *v;
    }
    let lp = v_chosen - m - denom.ln();
    if let Some((g, w)) = grad {
        spec.add_utility_gradient(&task.chosen_alt().attributes, beta, w, g);
        let mut k = 0;
        for alt in &task.alternatives {
            if !alt.available {
                continue;
            }
            let p = buf[k] / denom;
            spec.add_utility_gradient(&alt.attributes, beta, -w * p, g);
            k += 1;
        }
    }
    lp
}

fn individual_loglik(spec: &UtilitySpec, beta: &[f64], ind: &Individual, buf: &mut Vec<f64>) -> f64 {
    ind.tasks
        .iter()
        .map(|t| task_log_prob(spec, beta, t, buf, None))
        .sum()
}

/// `sum_t log P(chosen_t)` for one individual.
pub fn panel_log_likelihood(
    spec: &UtilitySpec,
    beta: &ParamVector,
    individual: &Individual,
) -> Result<f64> {
    check_len("taste vector", spec.n_attributes, beta.len())?;
    let ll = individual_loglik(spec, &beta.values, individual, &mut Vec::new());
    if ll.is_nan() {
        return Err(Error::NonFiniteUtility);
    }
    Ok(ll)
}

/// Panel log-likelihood of every individual under `beta`, in dataset order.
pub fn panel_log_likelihoods(spec: &UtilitySpec, beta: &ParamVector, data: &Dataset) -> Result<Vec<f64>> {
    check_len("taste vector", spec.n_attributes, beta.len())?;
    let mut buf = Vec::new();
    let out: Vec<f64> = data
        .individuals()
        .iter()
        .map(|ind| individual_loglik(spec, &beta.values, ind, &mut buf))
        .collect();
    if out.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFiniteUtility);
    }
    Ok(out)
}

pub fn sample_log_likelihood(spec: &UtilitySpec, beta: &ParamVector, data: &Dataset) -> Result<f64> {
    Ok(panel_log_likelihoods(spec, beta, data)?.iter().sum())
}

fn check_weights(data: &Dataset, weights: &[f64]) -> Result<()> {
    check_len("case weights", data.n_individuals(), weights.len())?;
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter(
            "case weights must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

/// `sum_n w_n * LL_n(beta) + log prior(beta)`.
pub fn weighted_map_objective(
    spec: &UtilitySpec,
    beta: &ParamVector,
    data: &Dataset,
    weights: &[f64],
    prior: &PriorSpec,
) -> Result<f64> {
    check_len("taste vector", spec.n_attributes, beta.len())?;
    check_weights(data, weights)?;
    let lp = prior.log_density(beta)?;
    Ok(weighted_loglik(spec, &beta.values, data, weights, None) + lp)
}

fn weighted_loglik(
    spec: &UtilitySpec,
    beta: &[f64],
    data: &Dataset,
    weights: &[f64],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut buf = Vec::with_capacity(8);
    let mut total = 0.0;
    for (ind, &w) in data.individuals().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        for task in &ind.tasks {
            let g = grad.as_deref_mut().map(|g| (g, w));
            total += w * task_log_prob(spec, beta, task, &mut buf, g);
        }
    }
    total
}

/// Gradient of [`weighted_map_objective`] with respect to the unconstrained
/// coordinates.
pub fn weighted_map_gradient(
    spec: &UtilitySpec,
    beta: &ParamVector,
    data: &Dataset,
    weights: &[f64],
    prior: &PriorSpec,
) -> Result<Vec<f64>> {
    check_len("taste vector", spec.n_attributes, beta.len())?;
    check_weights(data, weights)?;
    prior.log_density(beta)?;
    let mut g = vec![0.0; beta.len()];
    objective_and_gradient(spec, beta, data, weights, prior, &mut g);
    Ok(g)
}

/// Objective value; writes the unconstrained gradient into `g`.
fn objective_and_gradient(
    spec: &UtilitySpec,
    beta: &ParamVector,
    data: &Dataset,
    weights: &[f64],
    prior: &PriorSpec,
    g: &mut [f64],
) -> f64 {
    g.iter_mut().for_each(|v| *v = 0.0);
    let ll = weighted_loglik(spec, &beta.values, data, weights, Some(g));
    for (a, t) in beta.transforms.iter().enumerate() {
        g[a] *= t.jacobian(beta.values[a]);
    }
    prior.add_gradient(beta, g);
    let lp = prior.log_density(beta).unwrap_or(f64::NEG_INFINITY);
    ll + lp
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-6,
            max_iter: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub params: ParamVector,
    pub objective: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub termination: Termination,
}

impl FitOutcome {
    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }
}

/// Maximizes the weighted MAP objective from `init` by BFGS in
/// unconstrained coordinates. Non-convergence is reported through
/// [`FitOutcome::termination`] with the best iterate returned.
pub fn fit_weighted_mnl(
    spec: &UtilitySpec,
    data: &Dataset,
    weights: &[f64],
    prior: &PriorSpec,
    init: &ParamVector,
    opts: &FitOptions,
) -> Result<FitOutcome> {
    check_len("taste vector", spec.n_attributes, init.len())?;
    check_weights(data, weights)?;
    let u0 = init.to_unconstrained()?;
    let transforms = init.transforms.clone();
    let res = optim::minimize(
        |u, g| {
            let beta = ParamVector::from_unconstrained(u, &transforms);
            if beta.values.iter().any(|b| !b.is_finite()) {
                return f64::NAN;
            }
            let f = objective_and_gradient(spec, &beta, data, weights, prior, g);
            g.iter_mut().for_each(|v| *v = -*v);
            -f
        },
        &u0,
        &BfgsOptions {
            grad_tol: opts.tol,
            max_iter: opts.max_iter,
            ..BfgsOptions::default()
        },
    );
    if res.termination == Termination::NonFiniteStart {
        return Err(Error::InvalidParameter(
            "objective is not finite at the starting value".into(),
        ));
    }
    let grad_norm = res.grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(FitOutcome {
        params: ParamVector::from_unconstrained(&res.x, &transforms),
        objective: -res.f,
        grad_norm,
        iterations: res.iterations,
        termination: res.termination,
    })
}

/// Plain maximum-likelihood MNL on the whole sample.
pub fn fit_mnl(spec: &UtilitySpec, data: &Dataset, init: &ParamVector, opts: &FitOptions) -> Result<FitOutcome> {
    let w = vec![1.0; data.n_individuals()];
    fit_weighted_mnl(spec, data, &w, &PriorSpec::None, init, opts)
}
