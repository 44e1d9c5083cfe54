//! Synthetic route-choice panels for the four Monte Carlo experiments.
//!
//! Covariates per task: distance `s ~ U(2,20)` km; per alternative speed
//! `v ~ U(10,40)` km/h, `ivtt = 60 s / v` min, `ovtt ~ U(0,30)` min and
//! `cost = U(0,2) + U(0,0.7) s`. Tastes are in WTP space ($/h for the time
//! attributes) so utilities use travel times in hours:
//! `U = (ivtt_h b_ivtt + ovtt_h b_ovtt + cost) b_cost + eps`.

use std::io::Write;
use std::path::Path;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Alternative, AttributeSpec, ChoiceTask, Constraint, Dataset, Individual};
use crate::error::{Error, Result};

/// Disturbances are standard Gumbel (location 0, scale 1), whose variance
/// is `pi^2 / 6`.
pub const GUMBEL_SCALE: f64 = 1.0;
pub const COST_LOG_SCALE: f64 = 0.25;
pub const ATTRIBUTE_NAMES: [&str; 3] = ["ivtt", "ovtt", "cost"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentId {
    I,
    II,
    III,
    IV,
}

impl std::str::FromStr for ExperimentId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "I" | "1" => Ok(ExperimentId::I),
            "II" | "2" => Ok(ExperimentId::II),
            "III" | "3" => Ok(ExperimentId::III),
            "IV" | "4" => Ok(ExperimentId::IV),
            _ => Err(Error::InvalidParameter(format!(
                "unknown experiment `{s}` (expected I, II, III or IV)"
            ))),
        }
    }
}

/// Bivariate normal for `(b_ivtt, b_ovtt)` with `Sigma = D Omega D`.
#[derive(Clone, Debug, PartialEq)]
pub struct Bivariate {
    pub mean: [f64; 2],
    pub scale: [f64; 2],
    pub correlation: f64,
}

impl Bivariate {
    pub fn covariance(&self) -> Matrix2<f64> {
        let d = Matrix2::from_diagonal(&Vector2::new(self.scale[0], self.scale[1]));
        let omega = Matrix2::new(1.0, self.correlation, self.correlation, 1.0);
        d * omega * d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub id: ExperimentId,
    pub weights: Vec<f64>,
    pub components: Vec<Bivariate>,
    /// Exponentiate the ovtt coordinate after sampling.
    pub log_normal_ovtt: bool,
    /// `-b_cost ~ LogNormal(cost_location, COST_LOG_SCALE^2)`.
    pub cost_location: f64,
}

impl ExperimentSpec {
    pub fn published(id: ExperimentId) -> Self {
        let bv = |mean: [f64; 2], scale: [f64; 2], correlation: f64| Bivariate {
            mean,
            scale,
            correlation,
        };
        match id {
            ExperimentId::I => ExperimentSpec {
                id,
                weights: vec![1.0],
                components: vec![bv([10.0, 15.0], [1.5, 2.0], 0.5)],
                log_normal_ovtt: false,
                cost_location: 0.75,
            },
            ExperimentId::II => ExperimentSpec {
                id,
                weights: vec![1.0],
                components: vec![bv([12.0, 2.8], [1.5, 0.3], 0.3)],
                log_normal_ovtt: true,
                cost_location: 0.60,
            },
            ExperimentId::III => ExperimentSpec {
                id,
                weights: vec![0.75, 0.25],
                components: vec![
                    bv([12.0, 16.0], [1.0, 2.0], 0.2),
                    bv([6.0, 10.0], [1.0, 2.0], -0.4),
                ],
                log_normal_ovtt: false,
                cost_location: 0.80,
            },
            ExperimentId::IV => ExperimentSpec {
                id,
                weights: vec![0.35, 0.25, 0.40],
                components: vec![
                    bv([10.0, 15.0], [2.0, 2.0], 0.0),
                    bv([0.88, 24.12], [1.2, 1.2], 0.0),
                    bv([19.12, 24.12], [1.8, 1.2], 0.0),
                ],
                log_normal_ovtt: false,
                cost_location: 0.60,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.components.len() || self.weights.is_empty() {
            return Err(Error::InvalidParameter("mixture weights/components mismatch".into()));
        }
        if (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidParameter("mixture weights must form a simplex".into()));
        }
        for c in &self.components {
            if c.scale.iter().any(|s| !(*s > 0.0)) || !(c.correlation.abs() < 1.0) {
                return Err(Error::InvalidParameter("covariance is not positive definite".into()));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n_individuals: usize,
    pub n_tasks: usize,
    pub n_alternatives: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_individuals: 2000,
            n_tasks: 8,
            n_alternatives: 3,
            seed: 1,
        }
    }
}

/// Attribute levels indexed by `((n * T) + t) * J + j`; times in minutes.
#[derive(Clone, Debug, PartialEq)]
pub struct Covariates {
    pub n_individuals: usize,
    pub n_tasks: usize,
    pub n_alternatives: usize,
    pub distance: Vec<f64>,
    pub ivtt: Vec<f64>,
    pub ovtt: Vec<f64>,
    pub cost: Vec<f64>,
}

impl Covariates {
    fn idx(&self, n: usize, t: usize, j: usize) -> usize {
        (n * self.n_tasks + t) * self.n_alternatives + j
    }

    /// `(ivtt_h, ovtt_h, cost)` for one alternative.
    pub fn attributes(&self, n: usize, t: usize, j: usize) -> [f64; 3] {
        let i = self.idx(n, t, j);
        [self.ivtt[i] / 60.0, self.ovtt[i] / 60.0, self.cost[i]]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tastes {
    pub ivtt: f64,
    pub ovtt: f64,
    pub cost: f64,
    pub component: usize,
}

impl Tastes {
    pub fn utility(&self, x: [f64; 3]) -> f64 {
        (x[0] * self.ivtt + x[1] * self.ovtt + x[2]) * self.cost
    }
}

pub fn ivtt_minutes(distance_km: f64, speed_kmh: f64) -> f64 {
    60.0 * distance_km / speed_kmh
}

pub fn gen_covariates<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Result<Covariates> {
    validate_config(config)?;
    let (n, t, j) = (config.n_individuals, config.n_tasks, config.n_alternatives);
    let total = n * t * j;
    let mut cov = Covariates {
        n_individuals: n,
        n_tasks: t,
        n_alternatives: j,
        distance: Vec::with_capacity(n * t),
        ivtt: Vec::with_capacity(total),
        ovtt: Vec::with_capacity(total),
        cost: Vec::with_capacity(total),
    };
    for _ in 0..n * t {
        let s = rng.random_range(2.0..=20.0);
        cov.distance.push(s);
        for _ in 0..j {
            let v = rng.random_range(10.0..=40.0);
            cov.ivtt.push(ivtt_minutes(s, v));
            cov.ovtt.push(rng.random_range(0.0..=30.0));
            let c = rng.random_range(0.0..=2.0) + rng.random_range(0.0..=0.7) * s;
            cov.cost.push(c);
        }
    }
    Ok(cov)
}

fn validate_config(config: &SimConfig) -> Result<()> {
    if config.n_individuals == 0 || config.n_tasks == 0 || config.n_alternatives < 2 {
        return Err(Error::InvalidParameter(
            "simulation needs N >= 1, T >= 1 and J >= 2".into(),
        ));
    }
    Ok(())
}

pub fn gen_tastes<R: Rng + ?Sized>(experiment: &ExperimentSpec, n: usize, rng: &mut R) -> Result<Vec<Tastes>> {
    experiment.validate()?;
    let factors = experiment
        .components
        .iter()
        .map(|c| {
            c.covariance()
                .cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let component = if experiment.weights.len() == 1 {
            0
        } else {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut chosen = experiment.weights.len() - 1;
            for (k, w) in experiment.weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    chosen = k;
                    break;
                }
            }
            chosen
        };
        let c = &experiment.components[component];
        let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let draw = Vector2::new(c.mean[0], c.mean[1]) + factors[component] * z;
        let ovtt = if experiment.log_normal_ovtt {
            draw[1].exp()
        } else {
            draw[1]
        };
        let z_cost: f64 = StandardNormal.sample(rng);
        out.push(Tastes {
            ivtt: draw[0],
            ovtt,
            cost: -(experiment.cost_location + COST_LOG_SCALE * z_cost).exp(),
            component,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    Gumbel,
    /// Deterministic utility maximization; test hook.
    None,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Chosen alternative per `(n, t)`, indexed `n * T + t`.
pub fn gen_choices<R: Rng + ?Sized>(
    covariates: &Covariates,
    tastes: &[Tastes],
    noise: Noise,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if tastes.len() != covariates.n_individuals {
        return Err(Error::DimensionMismatch {
            what: "tastes",
            expected: covariates.n_individuals,
            got: tastes.len(),
        });
    }
    let gumbel = Gumbel::new(0.0, GUMBEL_SCALE).expect("valid Gumbel");
    let j = covariates.n_alternatives;
    let mut u = vec![0.0; j];
    let mut out = Vec::with_capacity(covariates.n_individuals * covariates.n_tasks);
    for (n, b) in tastes.iter().enumerate() {
        for t in 0..covariates.n_tasks {
            for (a, ua) in u.iter_mut().enumerate() {
                let eps = match noise {
                    Noise::Gumbel => gumbel.sample(rng),
                    Noise::None => 0.0,
                };
                *ua = b.utility(covariates.attributes(n, t, a)) + eps;
            }
            out.push(argmax(&u));
        }
    }
    Ok(out)
}

/// Fraction of tasks where the choice differs from the deterministic-utility
/// argmax.
pub fn measure_error_rate(covariates: &Covariates, tastes: &[Tastes], choices: &[usize]) -> f64 {
    let j = covariates.n_alternatives;
    let mut v = vec![0.0; j];
    let mut errors = 0usize;
    for (n, b) in tastes.iter().enumerate() {
        for t in 0..covariates.n_tasks {
            for (a, va) in v.iter_mut().enumerate() {
                *va = b.utility(covariates.attributes(n, t, a));
            }
            if argmax(&v) != choices[n * covariates.n_tasks + t] {
                errors += 1;
            }
        }
    }
    errors as f64 / choices.len() as f64
}

pub fn attribute_specs() -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::free(ATTRIBUTE_NAMES[0]),
        AttributeSpec::free(ATTRIBUTE_NAMES[1]),
        AttributeSpec::cost(ATTRIBUTE_NAMES[2], Constraint::StrictlyNegative),
    ]
}

/// Assembles the long-format dataset (times in hours).
pub fn assemble_dataset(covariates: &Covariates, choices: &[usize]) -> Result<Dataset> {
    let individuals = (0..covariates.n_individuals)
        .map(|n| Individual {
            id: (n + 1).to_string(),
            tasks: (0..covariates.n_tasks)
                .map(|t| ChoiceTask {
                    task_id: (t + 1).to_string(),
                    alternatives: (0..covariates.n_alternatives)
                        .map(|j| Alternative {
                            alt_id: (j + 1).to_string(),
                            available: true,
                            attributes: covariates.attributes(n, t, j).to_vec(),
                        })
                        .collect(),
                    chosen: choices[n * covariates.n_tasks + t],
                })
                .collect(),
        })
        .collect();
    Dataset::new(individuals, attribute_specs())
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: Dataset,
    pub covariates: Covariates,
    pub tastes: Vec<Tastes>,
    pub choices: Vec<usize>,
    pub error_rate: f64,
}

/// Full pipeline: covariates, tastes, then Gumbel choices, from one seeded
/// stream.
pub fn simulate(experiment: &ExperimentSpec, config: &SimConfig) -> Result<Simulation> {
    simulate_with_noise(experiment, config, Noise::Gumbel)
}

pub fn simulate_with_noise(experiment: &ExperimentSpec, config: &SimConfig, noise: Noise) -> Result<Simulation> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let covariates = gen_covariates(config, &mut rng)?;
    let tastes = gen_tastes(experiment, config.n_individuals, &mut rng)?;
    let choices = gen_choices(&covariates, &tastes, noise, &mut rng)?;
    let error_rate = measure_error_rate(&covariates, &tastes, &choices);
    let dataset = assemble_dataset(&covariates, &choices)?;
    Ok(Simulation {
        dataset,
        covariates,
        tastes,
        choices,
        error_rate,
    })
}

pub fn write_truth<W: Write>(tastes: &[Tastes], writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["individual_id", "beta_ivtt", "beta_ovtt", "beta_cost", "component"])?;
    for (n, b) in tastes.iter().enumerate() {
        wtr.write_record([
            (n + 1).to_string(),
            b.ivtt.to_string(),
            b.ovtt.to_string(),
            b.cost.to_string(),
            (b.component + 1).to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_truth(tastes: &[Tastes], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_truth(tastes, std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ivtt_example() {
        assert_eq!(ivtt_minutes(20.0, 40.0), 30.0);
    }

    #[test]
    fn covariate_ranges() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cfg = SimConfig { n_individuals: 300, ..SimConfig::default() };
        let c = gen_covariates(&cfg, &mut rng).unwrap();
        assert!(c.ivtt.iter().all(|x| (3.0..=120.0).contains(x)));
        assert!(c.ovtt.iter().all(|x| (0.0..=30.0).contains(x)));
        assert!(c.cost.iter().all(|x| *x >= 0.0));
        assert_eq!(c.ivtt.len(), 300 * 8 * 3);
    }

    #[test]
    fn zero_noise_has_no_errors() {
        let cfg = SimConfig { n_individuals: 200, ..SimConfig::default() };
        let sim = simulate_with_noise(&ExperimentSpec::published(ExperimentId::I), &cfg, Noise::None).unwrap();
        assert_eq!(sim.error_rate, 0.0);
    }

    #[test]
    fn cost_always_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for id in [ExperimentId::I, ExperimentId::II, ExperimentId::III, ExperimentId::IV] {
            let t = gen_tastes(&ExperimentSpec::published(id), 2000, &mut rng).unwrap();
            assert!(t.iter().all(|b| b.cost < 0.0));
            if id == ExperimentId::II {
                assert!(t.iter().all(|b| b.ovtt > 0.0));
            }
        }
    }

    #[test]
    fn experiment_ids() {
        assert_eq!("III".parse::<ExperimentId>().unwrap(), ExperimentId::III);
        assert!("V".parse::<ExperimentId>().is_err());
    }
}
