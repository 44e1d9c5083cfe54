//! Out-of-sample validation and summaries of estimated discrete mixing
//! distributions: implicit values, weighted quantiles, ECDFs, kernel density
//! grids and mixture sampling.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{split_folds, Dataset};
use crate::dpm::{self, DpmConfig, DpmModel};
use crate::error::{Error, Result};
use crate::lc::{self, LcConfig, LcModel};
use crate::mixture;
use crate::mnl::{self, FitOptions, ParamVector, UtilitySpace, UtilitySpec};

pub const DEFAULT_BANDWIDTH: f64 = 2.5;
pub const DEFAULT_PERCENTILES: [f64; 5] = [10.0, 25.0, 50.0, 75.0, 90.0];

/// A fitted discrete mixture of MNL kernels, the common view of MNL, LC and
/// DPM models for prediction and summaries.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedMixture {
    pub spec: UtilitySpec,
    pub attribute_names: Vec<String>,
    pub betas: Vec<ParamVector>,
    pub masses: Vec<f64>,
}

impl FittedMixture {
    pub fn single(spec: UtilitySpec, attribute_names: Vec<String>, beta: ParamVector) -> Self {
        FittedMixture {
            spec,
            attribute_names,
            betas: vec![beta],
            masses: vec![1.0],
        }
    }
}

impl From<&LcModel> for FittedMixture {
    fn from(m: &LcModel) -> Self {
        FittedMixture {
            spec: m.spec,
            attribute_names: m.attribute_names.clone(),
            betas: m.betas.clone(),
            masses: m.pi.clone(),
        }
    }
}

impl From<&DpmModel> for FittedMixture {
    /// Uses the empirical shares as mixing masses.
    fn from(m: &DpmModel) -> Self {
        FittedMixture {
            spec: m.spec,
            attribute_names: m.attribute_names.clone(),
            betas: m.betas.clone(),
            masses: m.empirical_shares.clone(),
        }
    }
}

impl DpmModel {
    /// Mixture weighted by the prior-implied `P(q = k | alpha_hat)` instead of
    /// the empirical shares.
    pub fn prior_weighted_mixture(&self) -> FittedMixture {
        FittedMixture {
            masses: self.prior_shares.clone(),
            ..FittedMixture::from(self)
        }
    }
}

/// `sum_{n in holdout} ln sum_k m_k P(y_n | beta_k)`.
pub fn predictive_loglik(model: &FittedMixture, holdout: &Dataset) -> Result<f64> {
    let names: Vec<&str> = holdout.attributes().iter().map(|a| a.name.as_str()).collect();
    if names != model.attribute_names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::InvalidData(format!(
            "attribute mismatch: model has {:?}, holdout has {:?}",
            model.attribute_names, names
        )));
    }
    mixture::mixture_log_likelihood(&model.spec, &model.betas, &model.masses, holdout)
}

/// Estimator plus configuration, fitted afresh on every training fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
pub enum ModelRecipe {
    Mnl { space: UtilitySpace },
    Lc { space: UtilitySpace, k: usize, config: LcConfig },
    Dpm { space: UtilitySpace, config: DpmConfig },
}

impl ModelRecipe {
    pub fn space(&self) -> UtilitySpace {
        match self {
            ModelRecipe::Mnl { space } | ModelRecipe::Lc { space, .. } | ModelRecipe::Dpm { space, .. } => *space,
        }
    }

    pub fn fit(&self, data: &Dataset) -> Result<FittedMixture> {
        let spec = UtilitySpec::new(self.space(), data.attributes())?;
        let names: Vec<String> = data.attributes().iter().map(|a| a.name.clone()).collect();
        match self {
            ModelRecipe::Mnl { .. } => {
                let init = ParamVector::default_for(&mnl::transforms_for(data.attributes()));
                let fit = mnl::fit_mnl(&spec, data, &init, &FitOptions::default())?;
                if !fit.converged() {
                    return Err(Error::InvalidParameter(format!(
                        "MNL fit did not converge ({:?})",
                        fit.termination
                    )));
                }
                Ok(FittedMixture::single(spec, names, fit.params))
            }
            ModelRecipe::Lc { k, config, .. } => Ok(FittedMixture::from(&lc::fit_lc(data, &spec, *k, config)?)),
            ModelRecipe::Dpm { config, .. } => Ok(FittedMixture::from(&dpm::fit(data, &spec, config)?)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    /// Holdout log-likelihood per fold; `None` when the fold's fit failed.
    pub fold_loglik: Vec<Option<f64>>,
    pub fold_errors: Vec<Option<String>>,
    pub fold_sizes: Vec<usize>,
    /// Mean over successful folds.
    pub mean: f64,
    /// Standard error of the mean over successful folds.
    pub std_error: f64,
    pub complete: bool,
}

impl CvReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["fold", "n_holdout", "loglik", "error"])?;
        for (f, ((ll, err), size)) in self
            .fold_loglik
            .iter()
            .zip(&self.fold_errors)
            .zip(&self.fold_sizes)
            .enumerate()
        {
            wtr.write_record([
                f.to_string(),
                size.to_string(),
                ll.map(|v| format!("{v:.6}")).unwrap_or_default(),
                err.clone().unwrap_or_default(),
            ])?;
        }
        wtr.write_record(["mean", "", &format!("{:.6}", self.mean), ""])?;
        wtr.write_record(["std_error", "", &format!("{:.6}", self.std_error), ""])?;
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// K-fold cross-validation by individual. Folds whose training fit fails are
/// reported and excluded from the mean.
pub fn cross_validate(data: &Dataset, recipe: &ModelRecipe, n_folds: usize, seed: u64) -> Result<CvReport> {
    let folds = split_folds(data, n_folds, seed)?;
    let mut fold_loglik = Vec::with_capacity(n_folds);
    let mut fold_errors = Vec::with_capacity(n_folds);
    let mut fold_sizes = Vec::with_capacity(n_folds);
    for f in 0..n_folds {
        let hold = folds.holdout(f);
        let train = folds.training(f);
        debug_assert!(hold.iter().all(|i| !train.contains(i)));
        if hold.iter().any(|i| train.binary_search(i).is_ok()) {
            return Err(Error::InvalidData("training and holdout sets overlap".into()));
        }
        fold_sizes.push(hold.len());
        let result = recipe
            .fit(&data.subset(&train))
            .and_then(|m| predictive_loglik(&m, &data.subset(&hold)));
        match result {
            Ok(v) => {
                fold_loglik.push(Some(v));
                fold_errors.push(None);
            }
            Err(e) => {
                fold_loglik.push(None);
                fold_errors.push(Some(e.to_string()));
            }
        }
    }
    let ok: Vec<f64> = fold_loglik.iter().flatten().copied().collect();
    let mean = ok.iter().sum::<f64>() / ok.len() as f64;
    let std_error = if ok.len() > 1 {
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (ok.len() - 1) as f64;
        (var / ok.len() as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(CvReport {
        complete: ok.len() == n_folds,
        fold_loglik,
        fold_errors,
        fold_sizes,
        mean,
        std_error,
    })
}

/// Probability-weighted point masses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMixture {
    pub points: Vec<Vec<f64>>,
    pub masses: Vec<f64>,
}

impl DiscreteMixture {
    pub fn new(points: Vec<Vec<f64>>, masses: Vec<f64>) -> Result<Self> {
        if points.len() != masses.len() || points.is_empty() {
            return Err(Error::InvalidParameter("mixture needs matching, non-empty points and masses".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) || (masses.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParameter("mixture masses must form a simplex".into()));
        }
        if points.iter().flatten().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("mixture points must be finite".into()));
        }
        Ok(DiscreteMixture { points, masses })
    }

    pub fn scalar(points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        Self::new(points.into_iter().map(|x| vec![x]).collect(), masses)
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    /// Scalar mixture of coordinate `d`.
    pub fn marginal(&self, d: usize) -> DiscreteMixture {
        DiscreteMixture {
            points: self.points.iter().map(|p| vec![p[d]]).collect(),
            masses: self.masses.clone(),
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for (p, w) in self.points.iter().zip(&self.masses) {
            for (a, x) in m.iter_mut().zip(p) {
                *a += w * x;
            }
        }
        m
    }

    fn scalar_points(&self) -> Result<Vec<f64>> {
        if self.dim() != 1 {
            return Err(Error::InvalidParameter("operation needs a scalar mixture".into()));
        }
        Ok(self.points.iter().map(|p| p[0]).collect())
    }
}

/// Implicit attribute values per component: the non-cost coefficients
/// themselves in WTP space, `beta_a / beta_cost` in preference space.
/// Returns the mixture and the attribute names of its coordinates.
pub fn implicit_values(model: &FittedMixture) -> Result<(DiscreteMixture, Vec<String>)> {
    let cost = model
        .spec
        .cost_index
        .ok_or_else(|| Error::InvalidParameter("implicit values need a cost attribute".into()))?;
    let names = model
        .attribute_names
        .iter()
        .enumerate()
        .filter(|(a, _)| *a != cost)
        .map(|(_, n)| n.clone())
        .collect();
    let mut points = Vec::with_capacity(model.betas.len());
    for b in &model.betas {
        let v = &b.values;
        let point: Vec<f64> = match model.spec.space {
            UtilitySpace::Wtp => (0..v.len()).filter(|a| *a != cost).map(|a| v[a]).collect(),
            UtilitySpace::Preference => {
                if v[cost] == 0.0 {
                    return Err(Error::InvalidParameter("zero cost coefficient".into()));
                }
                (0..v.len()).filter(|a| *a != cost).map(|a| v[a] / v[cost]).collect()
            }
        };
        points.push(point);
    }
    Ok((DiscreteMixture::new(points, model.masses.clone())?, names))
}

/// Smallest support point whose cumulative mass reaches `p`.
pub fn weighted_quantile(mixture: &DiscreteMixture, p: f64) -> Result<f64> {
    let ecdf = export_ecdf(mixture)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level {p} outside (0, 1)")));
    }
    // tolerate rounding in accumulated masses
    let target = p - 1e-12;
    Ok(ecdf
        .iter()
        .find(|(_, f)| *f >= target)
        .map_or(ecdf[ecdf.len() - 1].0, |(x, _)| *x))
}

/// Weighted ECDF as sorted `(x, F(x))` steps; duplicate points are merged
/// and the final value is exactly 1.
pub fn export_ecdf(mixture: &DiscreteMixture) -> Result<Vec<(f64, f64)>> {
    let xs = mixture.scalar_points()?;
    let mut pairs: Vec<(f64, f64)> = xs.into_iter().zip(mixture.masses.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
    let mut acc = 0.0;
    for (x, m) in pairs {
        acc += m;
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 = acc,
            _ => out.push((x, acc)),
        }
    }
    if let Some(last) = out.last_mut() {
        last.1 = 1.0;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WtpSummary {
    pub attribute: String,
    pub percentiles: Vec<(f64, f64)>,
    pub iqr: f64,
    pub idr: f64,
    pub mean: f64,
}

/// Percentiles, interquartile and interdecile ranges of each implicit value.
/// `percentiles` are in percent; 10, 25, 75 and 90 are always computed for
/// the ranges.
pub fn summarize_wtp(model: &FittedMixture, percentiles: &[f64]) -> Result<Vec<WtpSummary>> {
    let (mix, names) = implicit_values(model)?;
    let mut out = Vec::with_capacity(names.len());
    for (d, name) in names.into_iter().enumerate() {
        let marg = mix.marginal(d);
        let q = |p: f64| weighted_quantile(&marg, p / 100.0);
        out.push(WtpSummary {
            attribute: name,
            percentiles: percentiles.iter().map(|p| Ok((*p, q(*p)?))).collect::<Result<_>>()?,
            iqr: q(75.0)? - q(25.0)?,
            idr: q(90.0)? - q(10.0)?,
            mean: marg.mean()[0],
        });
    }
    Ok(out)
}

pub fn write_wtp_summary<W: Write>(rows: &[WtpSummary], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["attribute".to_string()];
    if let Some(r) = rows.first() {
        header.extend(r.percentiles.iter().map(|(p, _)| format!("p{p}")));
    }
    header.extend(["iqr", "idr", "mean"].map(String::from));
    wtr.write_record(&header)?;
    for r in rows {
        let mut rec = vec![r.attribute.clone()];
        rec.extend(r.percentiles.iter().map(|(_, v)| format!("{v:.6}")));
        rec.extend([r.iqr, r.idr, r.mean].map(|v| format!("{v:.6}")));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Draws `n` support points with probabilities `masses`.
pub fn sample_mixture<R: Rng + ?Sized>(mixture: &DiscreteMixture, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    let mut cdf = Vec::with_capacity(mixture.masses.len());
    let mut acc = 0.0;
    for m in &mixture.masses {
        acc += m;
        cdf.push(acc);
    }
    let last = cdf.len() - 1;
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let i = cdf.partition_point(|c| *c <= u).min(last);
            mixture.points[i].clone()
        })
        .collect()
}

/// Evenly spaced grid of `n` points on `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lo + i as f64 * step).collect()
    }
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian kernel density estimate on a 1-D grid.
pub fn kde_1d(draws: &[f64], bandwidth: f64, grid: &Grid) -> Result<Vec<(f64, f64)>> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("kde needs at least one draw".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    let norm = INV_SQRT_2PI / (bandwidth * draws.len() as f64);
    Ok(grid
        .points()
        .into_iter()
        .map(|x| {
            let s: f64 = draws
                .iter()
                .map(|d| (-0.5 * ((x - d) / bandwidth).powi(2)).exp())
                .sum();
            (x, s * norm)
        })
        .collect())
}

/// Product-Gaussian kernel density estimate on a 2-D grid with a shared
/// bandwidth. Returns `(x, y, density)` with `y` varying fastest.
pub fn kde_2d(draws: &[[f64; 2]], bandwidth: f64, gx: &Grid, gy: &Grid) -> Result<Vec<(f64, f64, f64)>> {
    if draws.is_empty() {
        return Err(Error::InvalidParameter("kde needs at least one draw".into()));
    }
    if !(bandwidth > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    let norm = INV_SQRT_2PI * INV_SQRT_2PI / (bandwidth * bandwidth * draws.len() as f64);
    let ys = gy.points();
    let mut out = Vec::with_capacity(gx.n * gy.n);
    for x in gx.points() {
        let kx: Vec<f64> = draws
            .iter()
            .map(|d| (-0.5 * ((x - d[0]) / bandwidth).powi(2)).exp())
            .collect();
        for &y in &ys {
            let s: f64 = draws
                .iter()
                .zip(&kx)
                .map(|(d, k)| k * (-0.5 * ((y - d[1]) / bandwidth).powi(2)).exp())
                .sum();
            out.push((x, y, s * norm));
        }
    }
    Ok(out)
}

/// Grid cells of a 2-D density table that are strict local maxima among
/// their (up to eight) neighbours, sorted by decreasing density.
pub fn local_modes_2d(table: &[(f64, f64, f64)], nx: usize, ny: usize) -> Vec<(f64, f64, f64)> {
    let at = |i: usize, j: usize| table[i * ny + j].2;
    let mut modes = Vec::new();
    for i in 0..nx {
        for j in 0..ny {
            let v = at(i, j);
            let mut is_max = v > 0.0;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if a < 0 || b < 0 || a >= nx as i64 || b >= ny as i64 {
                        continue;
                    }
                    if at(a as usize, b as usize) >= v {
                        is_max = false;
                    }
                }
            }
            if is_max {
                modes.push(table[i * ny + j]);
            }
        }
    }
    modes.sort_by(|a, b| b.2.total_cmp(&a.2));
    modes
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_convention() {
        let m = DiscreteMixture::scalar(vec![-1.0, 1.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(weighted_quantile(&m, 0.5).unwrap(), -1.0);
        assert_eq!(weighted_quantile(&m, 0.75).unwrap(), 1.0);
        assert!(weighted_quantile(&m, 0.0).is_err());
    }

    #[test]
    fn ecdf_examples() {
        let m = DiscreteMixture::scalar(vec![4.0], vec![1.0]).unwrap();
        assert_eq!(export_ecdf(&m).unwrap(), vec![(4.0, 1.0)]);
        let m = DiscreteMixture::scalar(vec![1.0, 0.0], vec![0.7, 0.3]).unwrap();
        assert_eq!(export_ecdf(&m).unwrap(), vec![(0.0, 0.3), (1.0, 1.0)]);
        let m = DiscreteMixture::scalar(vec![2.0, 2.0, 1.0], vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(export_ecdf(&m).unwrap(), vec![(1.0, 0.5), (2.0, 1.0)]);
    }

    #[test]
    fn kde_single_bump() {
        let g = Grid { lo: 0.0, hi: 0.0, n: 1 };
        let d = kde_1d(&[0.0], 1.0, &g).unwrap();
        assert!((d[0].1 - INV_SQRT_2PI).abs() < 1e-15);
        assert!(kde_1d(&[], 1.0, &g).is_err());
        assert!(kde_1d(&[0.0], 0.0, &g).is_err());
    }

    #[test]
    fn kde_symmetric() {
        let g = Grid { lo: -5.0, hi: 5.0, n: 101 };
        let d = kde_1d(&[-1.3, 1.3], 0.8, &g).unwrap();
        for i in 0..101 {
            assert!((d[i].1 - d[100 - i].1).abs() < 1e-15);
        }
    }

    #[test]
    fn mixture_mean() {
        let m = DiscreteMixture::scalar(vec![1.0, 3.0], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.mean(), vec![2.0]);
    }

    #[test]
    fn local_modes_of_two_bumps() {
        let draws = [[0.0, 0.0], [10.0, 10.0], [10.0, 10.0]];
        let g = Grid { lo: -5.0, hi: 15.0, n: 41 };
        let t = kde_2d(&draws, 1.0, &g, &g).unwrap();
        let modes = local_modes_2d(&t, 41, 41);
        assert_eq!(modes.len(), 2);
        assert_eq!((modes[0].0, modes[0].1), (10.0, 10.0));
        assert_eq!((modes[1].0, modes[1].1), (0.0, 0.0));
    }
}
