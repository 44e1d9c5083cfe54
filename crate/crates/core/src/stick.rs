//! Truncated stick-breaking prior: weights, densities, the
//! generalized-Dirichlet-multinomial marginal, and the DP/CRP samplers used
//! as validation oracles.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct StickWeights {
    pub eta: Vec<f64>,
    pub pi: Vec<f64>,
}

impl StickWeights {
    pub fn k(&self) -> usize {
        self.pi.len()
    }
}

/// Gamma prior on the concentration parameter, shape-scale convention:
/// density proportional to `alpha^(shape-1) exp(-alpha/scale)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationPrior {
    pub shape: f64,
    pub scale: f64,
}

impl Default for ConcentrationPrior {
    fn default() -> Self {
        ConcentrationPrior {
            shape: 2.0,
            scale: 2.0,
        }
    }
}

impl ConcentrationPrior {
    pub fn from_shape_rate(shape: f64, rate: f64) -> Self {
        ConcentrationPrior {
            shape,
            scale: 1.0 / rate,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.shape > 0.0 && self.scale > 0.0) {
            return Err(Error::InvalidParameter(
                "concentration prior shape and scale must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn log_density(&self, alpha: f64) -> f64 {
        (self.shape - 1.0) * alpha.ln() - alpha / self.scale
            - ln_gamma(self.shape)
            - self.shape * self.scale.ln()
    }

    /// Mode, when `shape >= 1`.
    pub fn mode(&self) -> f64 {
        ((self.shape - 1.0) * self.scale).max(0.0)
    }
}

/// Generalized Dirichlet parameters; the GEM(alpha) case is `a = 1, b = alpha`.
#[derive(Clone, Debug, PartialEq)]
pub struct GdParams {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl GdParams {
    pub fn gem(alpha: f64, k: usize) -> Self {
        GdParams {
            a: vec![1.0; k.saturating_sub(1)],
            b: vec![alpha; k.saturating_sub(1)],
        }
    }
}

/// `pi_k = eta_k prod_{l<k} (1 - eta_l)` with the residual mass on the last
/// component.
pub fn gem_weights(eta: &[f64], k: usize) -> Result<StickWeights> {
    if k == 0 || eta.len() + 1 != k {
        return Err(Error::DimensionMismatch {
            what: "stick proportions",
            expected: k.saturating_sub(1),
            got: eta.len(),
        });
    }
    if let Some(e) = eta.iter().find(|e| !(**e > 0.0 && **e < 1.0)) {
        return Err(Error::InvalidParameter(format!(
            "stick proportion {e} outside (0, 1)"
        )));
    }
    Ok(StickWeights {
        eta: eta.to_vec(),
        pi: break_sticks(eta),
    })
}

fn break_sticks(eta: &[f64]) -> Vec<f64> {
    let mut pi = Vec::with_capacity(eta.len() + 1);
    let mut remaining = 1.0;
    for &e in eta {
        pi.push(e * remaining);
        remaining *= 1.0 - e;
    }
    let used: f64 = pi.iter().sum();
    pi.push((1.0 - used).max(0.0));
    pi
}

/// `ln P(q = k | alpha)` for `k = 1..K`: `(k-1) ln alpha - k ln(1+alpha)`,
/// with the residual `(K-1) ln(alpha / (1+alpha))` at `K`.
pub fn log_component_prior_probs(alpha: f64, k: usize) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "concentration must be positive, got {alpha}"
        )));
    }
    if k == 0 {
        return Err(Error::InvalidParameter("truncation level must be >= 1".into()));
    }
    let la = alpha.ln();
    let l1a = alpha.ln_1p();
    let mut out: Vec<f64> = (0..k - 1)
        .map(|i| i as f64 * la - (i + 1) as f64 * l1a)
        .collect();
    out.push((k - 1) as f64 * (la - l1a));
    Ok(out)
}

/// Prior component-membership probabilities under truncated GEM(alpha).
/// Computed by repeated multiplication, so dyadic cases such as `alpha = 1`
/// are exact.
pub fn component_prior_probs(alpha: f64, k: usize) -> Result<Vec<f64>> {
    log_component_prior_probs(alpha, k)?;
    let r = alpha / (1.0 + alpha);
    let mut out = Vec::with_capacity(k);
    let mut p = 1.0 / (1.0 + alpha);
    for _ in 0..k - 1 {
        out.push(p);
        p *= r;
    }
    // residual mass r^(K-1)
    out.push(r.powi(k as i32 - 1));
    Ok(out)
}

/// Joint log-density of iid Beta(1, alpha) stick proportions.
pub fn log_eta_density(eta: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "concentration must be positive, got {alpha}"
        )));
    }
    let mut s = 0.0;
    for &e in eta {
        if !(0.0..=1.0).contains(&e) {
            return Err(Error::InvalidParameter(format!(
                "stick proportion {e} outside [0, 1]"
            )));
        }
        if e == 1.0 {
            if alpha < 1.0 {
                return Err(Error::InvalidParameter(
                    "density unbounded at eta = 1 for alpha < 1".into(),
                ));
            }
            if alpha > 1.0 {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        s += (1.0 - e).ln();
    }
    Ok(eta.len() as f64 * alpha.ln() + (alpha - 1.0) * s)
}

/// Log mass of the generalized-Dirichlet-multinomial distribution at the
/// integer count vector `counts`.
pub fn gdm_log_marginal(counts: &[u64], params: &GdParams) -> Result<f64> {
    let x: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
    gdm_log_marginal_real(&x, params)
}

/// [`gdm_log_marginal`] extended to real-valued (expected) counts through
/// log-Gamma.
pub fn gdm_log_marginal_real(counts: &[f64], params: &GdParams) -> Result<f64> {
    let k = counts.len();
    if k == 0 || params.a.len() + 1 != k || params.b.len() + 1 != k {
        return Err(Error::DimensionMismatch {
            what: "generalized Dirichlet parameters",
            expected: k.saturating_sub(1),
            got: params.a.len(),
        });
    }
    if counts.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::InvalidParameter("negative count".into()));
    }
    if params.a.iter().chain(&params.b).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter(
            "generalized Dirichlet parameters must be positive".into(),
        ));
    }
    // tail sums m_k = sum_{k' >= k} x_k'
    let mut tail = vec![0.0; k + 1];
    for i in (0..k).rev() {
        tail[i] = tail[i + 1] + counts[i];
    }
    let n = tail[0];
    let mut out = ln_gamma(n + 1.0) - counts.iter().map(|x| ln_gamma(x + 1.0)).sum::<f64>();
    for i in 0..k - 1 {
        let (a, b) = (params.a[i], params.b[i]);
        out += ln_gamma(a + counts[i]) + ln_gamma(b + tail[i + 1]) - ln_gamma(a + b + tail[i])
            + ln_gamma(a + b)
            - ln_gamma(a)
            - ln_gamma(b);
    }
    Ok(out)
}

/// `d/dalpha` of the alpha-dependent part of the GEM(alpha) GDM log mass at
/// expected counts with tail sums `tail` (length K+1, `tail[K] = 0`).
pub(crate) fn gem_alpha_score(alpha: f64, tail: &[f64]) -> f64 {
    let k = tail.len() - 1;
    let mut s = (k - 1) as f64 / alpha;
    for i in 0..k - 1 {
        s += digamma(alpha + tail[i + 1]) - digamma(1.0 + alpha + tail[i]);
    }
    s
}

/// Alpha-dependent part of the GEM(alpha) GDM log mass:
/// `(K-1) ln alpha + sum_{k<K} [lnG(alpha + m_{k+1}) - lnG(1 + alpha + m_k)]`.
pub(crate) fn gem_alpha_terms(alpha: f64, tail: &[f64]) -> f64 {
    let k = tail.len() - 1;
    let mut s = (k - 1) as f64 * alpha.ln();
    for i in 0..k - 1 {
        s += ln_gamma(alpha + tail[i + 1]) - ln_gamma(1.0 + alpha + tail[i]);
    }
    s
}

fn beta_one_alpha<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> f64 {
    // inverse CDF of Beta(1, alpha): 1 - U^(1/alpha)
    let u: f64 = rng.random();
    1.0 - u.powf(1.0 / alpha)
}

/// Draws `n_draws` samples from one realization of a truncated stick-breaking
/// DP(alpha, G0), where `base` samples from G0.
pub fn sample_stick_dp<R, F>(alpha: f64, mut base: F, k: usize, n_draws: usize, rng: &mut R) -> Result<Vec<f64>>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> f64,
{
    if !(alpha > 0.0) || k == 0 {
        return Err(Error::InvalidParameter(
            "sample_stick_dp needs alpha > 0 and K >= 1".into(),
        ));
    }
    let atoms: Vec<f64> = (0..k).map(|_| base(rng)).collect();
    let eta: Vec<f64> = (0..k - 1).map(|_| beta_one_alpha(alpha, rng)).collect();
    let pi = break_sticks(&eta);
    let mut cdf = Vec::with_capacity(k);
    let mut acc = 0.0;
    for p in &pi {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    Ok((0..n_draws)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * total;
            let idx = cdf.partition_point(|c| *c <= u).min(k - 1);
            atoms[idx]
        })
        .collect())
}

/// Chinese restaurant process partition of `n` customers; labels are
/// assigned in order of table creation starting at 0.
pub fn sample_crp_partition<R: Rng + ?Sized>(alpha: f64, n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if !(alpha > 0.0) || n == 0 {
        return Err(Error::InvalidParameter(
            "sample_crp_partition needs alpha > 0 and N >= 1".into(),
        ));
    }
    let mut labels = Vec::with_capacity(n);
    let mut sizes: Vec<usize> = Vec::new();
    for i in 0..n {
        // customer i+1 opens a table with probability alpha / (alpha + i)
        let u: f64 = rng.random::<f64>() * (alpha + i as f64);
        let label = if u < alpha {
            sizes.push(0);
            sizes.len() - 1
        } else {
            let mut r = u - alpha;
            let mut chosen = sizes.len() - 1;
            for (t, &s) in sizes.iter().enumerate() {
                if r < s as f64 {
                    chosen = t;
                    break;
                }
                r -= s as f64;
            }
            chosen
        };
        sizes[label] += 1;
        labels.push(label);
    }
    Ok(labels)
}

/// `sum_{n=1}^{N} alpha / (alpha + n - 1)`.
pub fn expected_occupied_components(alpha: f64, n: usize) -> f64 {
    (0..n).map(|i| alpha / (alpha + i as f64)).sum()
}
