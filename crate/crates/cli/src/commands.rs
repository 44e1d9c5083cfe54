use std::fs;
use std::path::{Path, PathBuf};

use dpmnl::data::{self, Dataset};
use dpmnl::dpm::{self, DpmConfig, DpmModel};
use dpmnl::evaluate::{
    self, cross_validate, export_ecdf, implicit_values, kde_1d, kde_2d, local_modes_2d, sample_mixture,
    summarize_wtp, FittedMixture, Grid, ModelRecipe, DEFAULT_BANDWIDTH, DEFAULT_PERCENTILES,
};
use dpmnl::lc::{self, LcConfig, LcModel};
use dpmnl::mnl::{self, FitOptions, ParamVector, UtilitySpace, UtilitySpec};
use dpmnl::simgen::{self, ExperimentSpec, SimConfig};
use dpmnl::stick;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::config::{merge, ModelConfig, ModelKind, RunConfig};
use crate::{
    Command, CrossvalArgs, DpDemoArgs, EstimateArgs, ModelArgs, SimulateArgs, SummarizeArgs, CliError,
};

const DEFAULT_SEED: u64 = 1;
const DEFAULT_FOLDS: usize = 10;
const DEFAULT_DRAWS: usize = 2000;
const DEFAULT_GRID_POINTS: usize = 201;
const DP_DEMO_ALPHAS: [f64; 4] = [1.0, 10.0, 100.0, 1000.0];
const DP_DEMO_DRAWS: usize = 1000;
const DP_DEMO_BINS: usize = 40;
const DP_DEMO_RANGE: [f64; 2] = [-4.0, 4.0];

type CliResult<T = ()> = Result<T, CliError>;

pub fn dispatch(command: Command, cfg: RunConfig, out: &Path) -> CliResult {
    match command {
        Command::Simulate(a) => simulate(a, cfg, out),
        Command::Estimate(a) => estimate(a, cfg, out),
        Command::Crossval(a) => crossval(a, cfg, out),
        Command::Summarize(a) => summarize(a, cfg, out),
        Command::DpDemo(a) => dp_demo(a, cfg, out),
    }
}

// ---------------------------------------------------------------- output

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| CliError::Failure(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::Failure(e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

fn write_with<F>(path: &Path, f: F) -> CliResult
where
    F: FnOnce(&mut Vec<u8>) -> dpmnl::Result<()>,
{
    let mut buf = Vec::new();
    f(&mut buf)?;
    write_bytes(path, &buf)
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Failure(e.to_string());
    wtr.write_record(header).map_err(csv_err)?;
    for r in rows {
        wtr.write_record(&r).map_err(csv_err)?;
    }
    let buf = wtr.into_inner().map_err(|e| CliError::Failure(e.to_string()))?;
    write_bytes(path, &buf)
}

fn num(v: f64) -> String {
    v.to_string()
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct SimulationReport {
    experiment: simgen::ExperimentId,
    n_individuals: usize,
    n_tasks: usize,
    n_alternatives: usize,
    seed: u64,
    error_rate: f64,
}

fn simulate(args: SimulateArgs, mut cfg: RunConfig, out: &Path) -> CliResult {
    let s = &mut cfg.simulate;
    merge(&mut s.experiment, args.experiment);
    merge(&mut s.n_individuals, args.n);
    merge(&mut s.n_tasks, args.t);
    merge(&mut s.n_alternatives, args.j);
    let experiment = s
        .experiment
        .ok_or_else(|| CliError::Usage("simulate needs --experiment (I, II, III or IV)".into()))?;
    let defaults = SimConfig::default();
    let sc = SimConfig {
        n_individuals: s.n_individuals.unwrap_or(defaults.n_individuals),
        n_tasks: s.n_tasks.unwrap_or(defaults.n_tasks),
        n_alternatives: s.n_alternatives.unwrap_or(defaults.n_alternatives),
        seed: cfg.seed.unwrap_or(defaults.seed),
    };
    if sc.n_individuals == 0 || sc.n_tasks == 0 || sc.n_alternatives < 2 {
        return Err(CliError::Usage("need --n >= 1, --t >= 1 and --j >= 2".into()));
    }
    let sim = simgen::simulate(&ExperimentSpec::published(experiment), &sc)?;
    data::save_csv(&sim.dataset, out.join("data.csv"))?;
    simgen::save_truth(&sim.tastes, out.join("truth.csv"))?;
    write_json(
        &out.join("simulation.json"),
        &SimulationReport {
            experiment,
            n_individuals: sc.n_individuals,
            n_tasks: sc.n_tasks,
            n_alternatives: sc.n_alternatives,
            seed: sc.seed,
            error_rate: sim.error_rate,
        },
    )?;
    write_json(&out.join("run_config.json"), &cfg)
}

// ---------------------------------------------------------------- models

fn merge_model(m: &mut ModelConfig, cfg_data: &mut Option<PathBuf>, a: ModelArgs) {
    merge(cfg_data, a.data);
    merge(&mut m.kind, a.model);
    merge(&mut m.space, a.space.map(UtilitySpace::from));
    merge(&mut m.k, a.k);
    merge(&mut m.k_min, a.k_min);
    merge(&mut m.k_max, a.k_max);
    merge(&mut m.n_starts, a.n_starts);
    merge(&mut m.truncation, a.truncation);
    merge(&mut m.prior_scale, a.prior_scale);
    merge(&mut m.rel_tol, a.rel_tol);
    merge(&mut m.max_iter, a.max_iter);
}

fn load_data(cfg: &RunConfig) -> CliResult<Dataset> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| CliError::Usage("no dataset given (--data)".into()))?;
    let attributes = cfg.data.attributes.clone().unwrap_or_else(simgen::attribute_specs);
    Ok(data::load_csv(path, &attributes)?)
}

fn space_for(m: &ModelConfig, data: &Dataset) -> UtilitySpace {
    m.space.unwrap_or(if data.cost_index().is_some() { UtilitySpace::Wtp } else { UtilitySpace::Preference })
}

fn dpm_config(m: &ModelConfig, seed: u64) -> CliResult<DpmConfig> {
    let d = DpmConfig::default();
    let c = DpmConfig {
        truncation: m.truncation.unwrap_or(d.truncation),
        alpha_prior: m.alpha_prior.unwrap_or(d.alpha_prior),
        prior_scale: m.prior_scale.unwrap_or(d.prior_scale),
        rel_tol: m.rel_tol.unwrap_or(d.rel_tol),
        max_iter: m.max_iter.unwrap_or(d.max_iter),
        inner_tol: m.inner_tol.unwrap_or(d.inner_tol),
        inner_max_iter: m.inner_max_iter.unwrap_or(d.inner_max_iter),
        occupancy_threshold: m.occupancy_threshold.or(d.occupancy_threshold),
        seed,
        ..d
    };
    c.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(c)
}

fn lc_config(m: &ModelConfig, seed: u64) -> LcConfig {
    let d = LcConfig::default();
    LcConfig {
        rel_tol: m.rel_tol.unwrap_or(d.rel_tol),
        max_iter: m.max_iter.unwrap_or(d.max_iter),
        n_starts: m.n_starts.unwrap_or(d.n_starts),
        inner_tol: m.inner_tol.unwrap_or(d.inner_tol),
        inner_max_iter: m.inner_max_iter.unwrap_or(d.inner_max_iter),
        seed,
    }
}

/// How the number of latent classes is chosen.
enum ClassCount {
    Fixed(usize),
    Sweep(usize, usize),
}

fn class_count(m: &ModelConfig) -> CliResult<ClassCount> {
    match (m.k, m.k_min, m.k_max) {
        (_, Some(lo), Some(hi)) => {
            if lo == 0 || lo > hi {
                return Err(CliError::Usage(format!("invalid K range {lo}..={hi}")));
            }
            Ok(ClassCount::Sweep(lo, hi))
        }
        (Some(k), None, None) if k >= 1 => Ok(ClassCount::Fixed(k)),
        (Some(_), None, None) => Err(CliError::Usage("--k must be at least 1".into())),
        (None, None, None) => Err(CliError::Usage("lc needs --k or --k-min/--k-max".into())),
        _ => Err(CliError::Usage("give both --k-min and --k-max".into())),
    }
}

fn coefficient_rows(mixture: &FittedMixture, extra: Option<&[f64]>) -> Vec<Vec<String>> {
    mixture
        .betas
        .iter()
        .zip(&mixture.masses)
        .enumerate()
        .map(|(k, (b, m))| {
            let mut row = vec![(k + 1).to_string(), num(*m)];
            if let Some(e) = extra {
                row.push(num(e[k]));
            }
            row.extend(b.values.iter().map(|v| num(*v)));
            row
        })
        .collect()
}

fn write_coefficients(out: &Path, mixture: &FittedMixture, prior_shares: Option<&[f64]>) -> CliResult {
    let mut header = vec!["component", "mass"];
    if prior_shares.is_some() {
        header.push("prior_mass");
    }
    header.extend(mixture.attribute_names.iter().map(String::as_str));
    write_rows(&out.join("coefficients.csv"), &header, coefficient_rows(mixture, prior_shares))
}

/// Artifacts shared by every fitted model.
fn write_mixture_outputs(out: &Path, mixture: &FittedMixture, prior_shares: Option<&[f64]>) -> CliResult {
    write_json(&out.join("mixture.json"), mixture)?;
    write_coefficients(out, mixture, prior_shares)?;
    if mixture.spec.cost_index.is_some() {
        let rows = summarize_wtp(mixture, &DEFAULT_PERCENTILES)?;
        write_with(&out.join("wtp_summary.csv"), |w| evaluate::write_wtp_summary(&rows, w))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MnlReport<'a> {
    model: &'static str,
    params: &'a ParamVector,
    attribute_names: &'a [String],
    loglik: f64,
    grad_norm: f64,
    iterations: usize,
    termination: String,
    converged: bool,
}

#[derive(Serialize)]
struct LcReport<'a> {
    model: &'static str,
    information_criteria: lc::InformationCriteria,
    #[serde(flatten)]
    fit: &'a LcModel,
}

#[derive(Serialize)]
struct DpmReport<'a> {
    model: &'static str,
    #[serde(flatten)]
    fit: &'a DpmModel,
}

#[derive(Serialize)]
struct OccupancyReport<'a> {
    truncation: usize,
    occupied: usize,
    threshold: f64,
    expected_occupied: f64,
    alpha_hat: f64,
    empirical_shares: &'a [f64],
}

fn estimate(args: EstimateArgs, mut cfg: RunConfig, out: &Path) -> CliResult {
    merge_model(&mut cfg.model, &mut cfg.data.path, args.model);
    let kind = cfg.model.kind.unwrap_or(ModelKind::Dpm);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let data = load_data(&cfg)?;
    let space = space_for(&cfg.model, &data);
    let spec = UtilitySpec::new(space, data.attributes())?;
    write_json(&out.join("run_config.json"), &cfg)?;
    match kind {
        ModelKind::Mnl => {
            let init = ParamVector::default_for(&mnl::transforms_for(data.attributes()));
            let fit = mnl::fit_mnl(&spec, &data, &init, &FitOptions::default())?;
            let names: Vec<String> = data.attributes().iter().map(|a| a.name.clone()).collect();
            let loglik = mnl::sample_log_likelihood(&spec, &fit.params, &data)?;
            write_json(
                &out.join("model.json"),
                &MnlReport {
                    model: "mnl",
                    params: &fit.params,
                    attribute_names: &names,
                    loglik,
                    grad_norm: fit.grad_norm,
                    iterations: fit.iterations,
                    termination: format!("{:?}", fit.termination),
                    converged: fit.converged(),
                },
            )?;
            let mixture = FittedMixture::single(spec, names, fit.params.clone());
            write_mixture_outputs(out, &mixture, None)?;
            if !fit.converged() {
                return Err(CliError::NonConvergence(format!("MNL fit ended with {:?}", fit.termination)));
            }
        }
        ModelKind::Lc => {
            let lc_cfg = lc_config(&cfg.model, seed);
            let (model, all_converged) = match class_count(&cfg.model)? {
                ClassCount::Fixed(k) => {
                    let m = lc::fit_lc(&data, &spec, k, &lc_cfg)?;
                    let c = m.converged;
                    (m, c)
                }
                ClassCount::Sweep(lo, hi) => {
                    let sweep = lc::sweep(&data, &spec, lo, hi, &lc_cfg)?;
                    write_with(&out.join("sweep.csv"), |w| sweep.write_csv(w))?;
                    let best = sweep
                        .rows
                        .iter()
                        .position(|r| r.bic_best)
                        .and_then(|i| sweep.models[i].clone())
                        .ok_or_else(|| CliError::Failure("no latent-class fit in the sweep succeeded".into()))?;
                    let c = sweep.rows.iter().all(|r| r.converged && r.error.is_none());
                    (best, c)
                }
            };
            let ic = lc::model_information_criteria(&model, &data);
            write_json(&out.join("model.json"), &LcReport { model: "lc", information_criteria: ic, fit: &model })?;
            write_rows(
                &out.join("trace.csv"),
                &["iteration", "loglik"],
                model.loglik_trace.iter().enumerate().map(|(i, v)| vec![i.to_string(), num(*v)]),
            )?;
            write_mixture_outputs(out, &FittedMixture::from(&model), None)?;
            if !all_converged {
                return Err(CliError::NonConvergence("latent-class EM hit its iteration limit".into()));
            }
        }
        ModelKind::Dpm => {
            let dc = dpm_config(&cfg.model, seed)?;
            let model = dpm::fit(&data, &spec, &dc)?;
            write_json(&out.join("model.json"), &DpmReport { model: "dpm", fit: &model })?;
            write_rows(
                &out.join("trace.csv"),
                &[
                    "iteration",
                    "alpha",
                    "q_before",
                    "q_after",
                    "incomplete_objective",
                    "nonconverged_components",
                    "failed_components",
                    "reset_components",
                ],
                model.trace.iter().map(|r| {
                    vec![
                        r.iteration.to_string(),
                        num(r.alpha),
                        num(r.q_before),
                        num(r.q_after),
                        num(r.incomplete_objective),
                        r.nonconverged_components.to_string(),
                        r.failed_components.to_string(),
                        r.reset_components.to_string(),
                    ]
                }),
            )?;
            write_json(
                &out.join("occupied.json"),
                &OccupancyReport {
                    truncation: model.truncation,
                    occupied: model.occupied,
                    threshold: model.occupancy_threshold,
                    expected_occupied: stick::expected_occupied_components(model.alpha_hat, data.n_individuals()),
                    alpha_hat: model.alpha_hat,
                    empirical_shares: &model.empirical_shares,
                },
            )?;
            write_mixture_outputs(out, &FittedMixture::from(&model), Some(&model.prior_shares))?;
            if !model.diagnostics.converged {
                return Err(CliError::NonConvergence(format!(
                    "DPM EM stopped after {} iterations without meeting the tolerance",
                    model.diagnostics.iterations
                )));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- crossval

#[derive(Serialize)]
struct CrossvalOutput<'a> {
    recipe: &'a ModelRecipe,
    folds: usize,
    seed: u64,
    #[serde(flatten)]
    report: &'a evaluate::CvReport,
}

fn crossval(args: CrossvalArgs, mut cfg: RunConfig, out: &Path) -> CliResult {
    merge_model(&mut cfg.model, &mut cfg.data.path, args.model);
    merge(&mut cfg.crossval.folds, args.folds);
    let folds = cfg.crossval.folds.unwrap_or(DEFAULT_FOLDS);
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    let data = load_data(&cfg)?;
    if folds < 2 || folds > data.n_individuals() {
        return Err(CliError::Usage(format!(
            "--folds must be between 2 and the number of individuals ({}), got {folds}",
            data.n_individuals()
        )));
    }
    let space = space_for(&cfg.model, &data);
    let recipe = match cfg.model.kind.unwrap_or(ModelKind::Dpm) {
        ModelKind::Mnl => ModelRecipe::Mnl { space },
        ModelKind::Dpm => ModelRecipe::Dpm { space, config: dpm_config(&cfg.model, seed)? },
        ModelKind::Lc => {
            let config = lc_config(&cfg.model, seed);
            let k = match class_count(&cfg.model)? {
                ClassCount::Fixed(k) => k,
                ClassCount::Sweep(lo, hi) => {
                    // K is chosen once on the full sample, then held fixed across folds
                    let spec = UtilitySpec::new(space, data.attributes())?;
                    let sweep = lc::sweep(&data, &spec, lo, hi, &config)?;
                    write_with(&out.join("sweep.csv"), |w| sweep.write_csv(w))?;
                    sweep
                        .bic_best()
                        .ok_or_else(|| CliError::Failure("no latent-class fit in the sweep succeeded".into()))?
                        .k
                }
            };
            ModelRecipe::Lc { space, k, config }
        }
    };
    write_json(&out.join("run_config.json"), &cfg)?;
    let report = cross_validate(&data, &recipe, folds, seed)?;
    write_with(&out.join("cv.csv"), |w| report.write_csv(w))?;
    write_json(&out.join("cv.json"), &CrossvalOutput { recipe: &recipe, folds, seed, report: &report })?;
    if !report.complete {
        return Err(CliError::NonConvergence("some fold fits failed; see cv.csv".into()));
    }
    Ok(())
}

// ---------------------------------------------------------------- summarize

fn summarize(args: SummarizeArgs, mut cfg: RunConfig, out: &Path) -> CliResult {
    let s = &mut cfg.summarize;
    merge(&mut s.mixture, args.mixture);
    merge(&mut s.percentiles, args.percentiles);
    merge(&mut s.draws, args.draws);
    merge(&mut s.bandwidth, args.bandwidth);
    let path = s
        .mixture
        .clone()
        .ok_or_else(|| CliError::Usage("summarize needs --mixture (a mixture.json from estimate)".into()))?;
    let percentiles = s.percentiles.clone().unwrap_or_else(|| DEFAULT_PERCENTILES.to_vec());
    if percentiles.iter().any(|p| !(*p > 0.0 && *p < 100.0)) {
        return Err(CliError::Usage("percentiles must lie strictly between 0 and 100".into()));
    }
    let draws = s.draws.unwrap_or(DEFAULT_DRAWS);
    let bandwidth = s.bandwidth.unwrap_or(DEFAULT_BANDWIDTH);
    let grid_points = s.grid_points.unwrap_or(DEFAULT_GRID_POINTS);
    if draws == 0 || !(bandwidth > 0.0) || grid_points < 3 {
        return Err(CliError::Usage("need draws >= 1, bandwidth > 0 and grid_points >= 3".into()));
    }
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);

    let text = fs::read_to_string(&path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let mixture: FittedMixture =
        serde_json::from_str(&text).map_err(|e| CliError::Data(format!("invalid mixture {}: {e}", path.display())))?;

    write_json(&out.join("run_config.json"), &cfg)?;
    let rows = summarize_wtp(&mixture, &percentiles)?;
    write_with(&out.join("wtp_summary.csv"), |w| evaluate::write_wtp_summary(&rows, w))?;

    let (values, names) = implicit_values(&mixture)?;
    let mut ecdf_rows = Vec::new();
    let mut kde_rows = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = sample_mixture(&values, draws, &mut rng);
    let mut grids = Vec::with_capacity(names.len());
    for (d, name) in names.iter().enumerate() {
        for (x, f) in export_ecdf(&values.marginal(d))? {
            ecdf_rows.push(vec![name.clone(), num(x), num(f)]);
        }
        let col: Vec<f64> = sample.iter().map(|p| p[d]).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * bandwidth;
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * bandwidth;
        let grid = Grid { lo, hi, n: grid_points };
        for (x, dens) in kde_1d(&col, bandwidth, &grid)? {
            kde_rows.push(vec![name.clone(), num(x), num(dens)]);
        }
        grids.push(grid);
    }
    write_rows(&out.join("ecdf.csv"), &["attribute", "value", "cdf"], ecdf_rows)?;
    write_rows(&out.join("kde_1d.csv"), &["attribute", "value", "density"], kde_rows)?;

    if names.len() >= 2 {
        let pairs: Vec<[f64; 2]> = sample.iter().map(|p| [p[0], p[1]]).collect();
        let table = kde_2d(&pairs, bandwidth, &grids[0], &grids[1])?;
        let header = [names[0].as_str(), names[1].as_str(), "density"];
        write_rows(
            &out.join("kde_2d.csv"),
            &header,
            table.iter().map(|(x, y, d)| vec![num(*x), num(*y), num(*d)]),
        )?;
        let modes = local_modes_2d(&table, grid_points, grid_points);
        write_rows(
            &out.join("modes.csv"),
            &["rank", names[0].as_str(), names[1].as_str(), "density"],
            modes
                .iter()
                .enumerate()
                .map(|(i, (x, y, d))| vec![(i + 1).to_string(), num(*x), num(*y), num(*d)]),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- dp-demo

fn dp_demo(args: DpDemoArgs, mut cfg: RunConfig, out: &Path) -> CliResult {
    let s = &mut cfg.dp_demo;
    merge(&mut s.alphas, args.alphas);
    merge(&mut s.draws, args.draws);
    merge(&mut s.truncation, args.truncation);
    merge(&mut s.bins, args.bins);
    let alphas = s.alphas.clone().unwrap_or_else(|| DP_DEMO_ALPHAS.to_vec());
    let draws = s.draws.unwrap_or(DP_DEMO_DRAWS);
    let truncation = s.truncation.unwrap_or(dpm::DEFAULT_TRUNCATION);
    let bins = s.bins.unwrap_or(DP_DEMO_BINS);
    let [lo, hi] = s.range.unwrap_or(DP_DEMO_RANGE);
    if alphas.is_empty() || alphas.iter().any(|a| !(*a > 0.0)) {
        return Err(CliError::Usage("alphas must be positive".into()));
    }
    if draws == 0 || truncation == 0 || bins == 0 || !(hi > lo) {
        return Err(CliError::Usage("need draws, truncation, bins >= 1 and a non-empty range".into()));
    }
    let seed = cfg.seed.unwrap_or(DEFAULT_SEED);
    write_json(&out.join("run_config.json"), &cfg)?;

    let width = (hi - lo) / bins as f64;
    let mut rows = Vec::new();
    for (i, alpha) in alphas.iter().enumerate() {
        // one stream per panel, so adding a panel leaves the others unchanged
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let sample = stick::sample_stick_dp(
            *alpha,
            |r: &mut ChaCha8Rng| StandardNormal.sample(r),
            truncation,
            draws,
            &mut rng,
        )?;
        let mut counts = vec![0usize; bins];
        let (mut below, mut above) = (0usize, 0usize);
        for x in &sample {
            if *x < lo {
                below += 1;
            } else if *x >= hi {
                above += 1;
            } else {
                counts[(((x - lo) / width) as usize).min(bins - 1)] += 1;
            }
        }
        let a = num(*alpha);
        rows.push(vec![a.clone(), "-inf".into(), num(lo), below.to_string()]);
        for (b, c) in counts.iter().enumerate() {
            rows.push(vec![a.clone(), num(lo + b as f64 * width), num(lo + (b + 1) as f64 * width), c.to_string()]);
        }
        rows.push(vec![a, num(hi), "inf".into(), above.to_string()]);
    }
    write_rows(&out.join("dp_demo.csv"), &["alpha", "bin_lo", "bin_hi", "count"], rows)
}
