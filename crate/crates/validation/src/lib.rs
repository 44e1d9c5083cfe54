//! Shared measurements for the acceptance suite: kernel-density modes of a
//! fitted mixture, finite-difference gradients and paired cross-validation
//! gaps.

use dpmnl::data::Dataset;
use dpmnl::evaluate::{implicit_values, kde_2d, local_modes_2d, sample_mixture, CvReport, FittedMixture, Grid};
use dpmnl::mnl::{self, ParamVector, PriorSpec, UtilitySpec};
use dpmnl::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Grid spacing for 2-D density tables.
pub const KDE_STEP: f64 = 0.25;

/// Local maxima of a bandwidth-`bw` Gaussian KDE over `draws` samples of the
/// first two implicit values, sorted by decreasing density. The grid covers
/// the sample range padded by three bandwidths.
pub fn mixture_kde_modes(mixture: &FittedMixture, draws: usize, bw: f64, seed: u64) -> Result<Vec<(f64, f64, f64)>> {
    let (values, _) = implicit_values(mixture)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts: Vec<[f64; 2]> = sample_mixture(&values, draws, &mut rng)
        .into_iter()
        .map(|p| [p[0], p[1]])
        .collect();
    let axis = |d: usize| {
        let lo = pts.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min) - 3.0 * bw;
        let hi = pts.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max) + 3.0 * bw;
        let lo = (lo / KDE_STEP).floor() * KDE_STEP;
        let n = ((hi - lo) / KDE_STEP).ceil() as usize + 1;
        Grid { lo, hi: lo + (n - 1) as f64 * KDE_STEP, n }
    };
    let (gx, gy) = (axis(0), axis(1));
    let table = kde_2d(&pts, bw, &gx, &gy)?;
    Ok(local_modes_2d(&table, gx.n, gy.n))
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

/// Central differences of the weighted MAP objective in unconstrained
/// coordinates, step `1e-5` relative.
pub fn fd_gradient(spec: &UtilitySpec, beta: &ParamVector, data: &Dataset, w: &[f64], prior: &PriorSpec) -> Vec<f64> {
    let u = beta.to_unconstrained().expect("feasible beta");
    let f = |v: &[f64]| {
        mnl::weighted_map_objective(spec, &ParamVector::from_unconstrained(v, &beta.transforms), data, w, prior)
            .expect("finite objective")
    };
    (0..u.len())
        .map(|a| {
            let h = 1e-5 * u[a].abs().max(1.0);
            let mut up = u.clone();
            let mut dn = u.clone();
            up[a] += h;
            dn[a] -= h;
            (f(&up) - f(&dn)) / (2.0 * h)
        })
        .collect()
}

/// Mean and standard error of the per-fold differences `a - b` over folds
/// where both fits succeeded. Both reports must come from the same split.
pub fn paired_gap(a: &CvReport, b: &CvReport) -> (f64, f64) {
    assert_eq!(a.fold_sizes, b.fold_sizes, "reports come from different splits");
    let d: Vec<f64> = a
        .fold_loglik
        .iter()
        .zip(&b.fold_loglik)
        .filter_map(|(x, y)| Some((*x)? - (*y)?))
        .collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
