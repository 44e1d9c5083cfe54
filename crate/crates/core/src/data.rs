//! Panel choice data: loading, validation, covariate scaling and fold splits.
//!
//! Data are held in long format semantics: one [`ChoiceTask`] per (individual,
//! task) with the alternatives in file order. A [`Dataset`] is validated on
//! construction and is immutable afterwards.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const COL_INDIVIDUAL: &str = "individual_id";
pub const COL_TASK: &str = "task_id";
pub const COL_ALT: &str = "alt_id";
pub const COL_AVAILABLE: &str = "available";
pub const COL_CHOSEN: &str = "chosen";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttributeRole {
    GenericAttribute,
    Cost,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Constraint {
    Free,
    StrictlyNegative,
    BoundedNegative { upper_bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributeSpec {
    pub name: String,
    pub role: AttributeRole,
    pub constraint: Constraint,
}

impl AttributeSpec {
    pub fn free(name: impl Into<String>) -> Self {
        AttributeSpec {
            name: name.into(),
            role: AttributeRole::GenericAttribute,
            constraint: Constraint::Free,
        }
    }

    pub fn cost(name: impl Into<String>, constraint: Constraint) -> Self {
        AttributeSpec {
            name: name.into(),
            role: AttributeRole::Cost,
            constraint,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alternative {
    pub alt_id: String,
    pub available: bool,
    pub attributes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceTask {
    pub task_id: String,
    pub alternatives: Vec<Alternative>,
    /// Position of the chosen alternative within `alternatives`.
    pub chosen: usize,
}

impl ChoiceTask {
    pub fn chosen_alt(&self) -> &Alternative {
        &self.alternatives[self.chosen]
    }

    pub fn available(&self) -> impl Iterator<Item = (usize, &Alternative)> {
        self.alternatives
            .iter()
            .enumerate()
            .filter(|(_, a)| a.available)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: String,
    pub tasks: Vec<ChoiceTask>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    individuals: Vec<Individual>,
    attributes: Vec<AttributeSpec>,
}

impl Dataset {
    /// Validates and wraps individuals. Fails on any invariant violation.
    pub fn new(individuals: Vec<Individual>, attributes: Vec<AttributeSpec>) -> Result<Self> {
        if attributes.is_empty() {
            return Err(Error::InvalidData("no attributes declared".into()));
        }
        let n_cost = attributes
            .iter()
            .filter(|a| a.role == AttributeRole::Cost)
            .count();
        if n_cost > 1 {
            return Err(Error::InvalidData(format!(
                "{n_cost} cost attributes declared, at most one allowed"
            )));
        }
        for a in &attributes {
            if let Constraint::BoundedNegative { upper_bound } = a.constraint {
                if !(upper_bound < 0.0) {
                    return Err(Error::InvalidData(format!(
                        "attribute {}: bounded-negative upper bound must be < 0",
                        a.name
                    )));
                }
            }
        }
        let p = attributes.len();
        let mut seen = HashSet::new();
        for ind in &individuals {
            if !seen.insert(ind.id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate individual id {}",
                    ind.id
                )));
            }
            if ind.tasks.is_empty() {
                return Err(Error::InvalidData(format!(
                    "individual {} has no tasks",
                    ind.id
                )));
            }
            for task in &ind.tasks {
                validate_task(&ind.id, task, p)?;
            }
        }
        Ok(Dataset {
            individuals,
            attributes,
        })
    }

    pub fn individuals(&self) -> &[Individual] {
        &self.individuals
    }

    pub fn attributes(&self) -> &[AttributeSpec] {
        &self.attributes
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn n_tasks(&self) -> usize {
        self.individuals.iter().map(|i| i.tasks.len()).sum()
    }

    pub fn n_rows(&self) -> usize {
        self.individuals
            .iter()
            .flat_map(|i| &i.tasks)
            .map(|t| t.alternatives.len())
            .sum()
    }

    pub fn cost_index(&self) -> Option<usize> {
        self.attributes
            .iter()
            .position(|a| a.role == AttributeRole::Cost)
    }

    /// Dataset restricted to the given individual indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            individuals: indices.iter().map(|&i| self.individuals[i].clone()).collect(),
            attributes: self.attributes.clone(),
        }
    }

    /// Copy with every value of attribute `a` multiplied by `factors[a]`.
    pub fn with_scaled_attributes(&self, factors: &[f64]) -> Dataset {
        let mut out = self.clone();
        for alt in out
            .individuals
            .iter_mut()
            .flat_map(|i| i.tasks.iter_mut())
            .flat_map(|t| t.alternatives.iter_mut())
        {
            for (x, f) in alt.attributes.iter_mut().zip(factors) {
                *x *= f;
            }
        }
        out
    }
}

fn validate_task(individual: &str, task: &ChoiceTask, p: usize) -> Result<()> {
    if task.chosen >= task.alternatives.len() {
        return Err(Error::InvalidData(format!(
            "individual {individual}, task {}: chosen index out of range",
            task.task_id
        )));
    }
    if !task.alternatives[task.chosen].available {
        return Err(Error::ChosenUnavailable {
            individual: individual.to_string(),
            task: task.task_id.clone(),
        });
    }
    let n_avail = task.alternatives.iter().filter(|a| a.available).count();
    if n_avail < 2 {
        return Err(Error::InvalidData(format!(
            "individual {individual}, task {}: fewer than two available alternatives",
            task.task_id
        )));
    }
    for alt in &task.alternatives {
        if alt.attributes.len() != p {
            return Err(Error::DimensionMismatch {
                what: "attribute vector",
                expected: p,
                got: alt.attributes.len(),
            });
        }
        if alt.attributes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "individual {individual}, task {}: non-finite attribute value",
                task.task_id
            )));
        }
    }
    Ok(())
}

/// Reads a long-format CSV file. See [`read_csv`].
pub fn load_csv(path: impl AsRef<Path>, attributes: &[AttributeSpec]) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, attributes)
}

/// Parses long-format choice data: one row per alternative per task with
/// columns `individual_id, task_id, alt_id, available, chosen` and one column
/// per attribute. `available` may be omitted, in which case every
/// alternative is available. Individuals and tasks keep first-seen order.
pub fn read_csv<R: Read>(reader: R, attributes: &[AttributeSpec]) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let require = |name: &str| col(name).ok_or_else(|| Error::MissingColumn(name.to_string()));

    let i_ind = require(COL_INDIVIDUAL)?;
    let i_task = require(COL_TASK)?;
    let i_alt = require(COL_ALT)?;
    let i_chosen = require(COL_CHOSEN)?;
    let i_avail = col(COL_AVAILABLE);
    let i_attrs = attributes
        .iter()
        .map(|a| require(&a.name))
        .collect::<Result<Vec<_>>>()?;

    struct TaskAcc {
        task_id: String,
        alternatives: Vec<Alternative>,
        chosen: Vec<usize>,
    }
    let mut individuals: Vec<(String, Vec<TaskAcc>)> = Vec::new();
    let mut ind_index: HashMap<String, usize> = HashMap::new();
    let mut task_index: HashMap<(usize, String), usize> = HashMap::new();
    let mut seen_alts: HashSet<(usize, usize, String)> = HashSet::new();

    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let row = row_no + 2;
        let field = |i: usize| record.get(i).unwrap_or("").trim();
        let flag = |i: usize, name: &str| -> Result<bool> {
            let v = field(i);
            match v {
                "1" | "true" | "TRUE" | "True" => Ok(true),
                "0" | "false" | "FALSE" | "False" => Ok(false),
                _ => Err(Error::NonNumeric {
                    row,
                    column: name.to_string(),
                    value: v.to_string(),
                }),
            }
        };

        let ind_id = field(i_ind).to_string();
        let task_id = field(i_task).to_string();
        let alt_id = field(i_alt).to_string();
        let available = match i_avail {
            Some(i) => flag(i, COL_AVAILABLE)?,
            None => true,
        };
        let chosen = flag(i_chosen, COL_CHOSEN)?;
        let mut values = Vec::with_capacity(i_attrs.len());
        for (spec, &i) in attributes.iter().zip(&i_attrs) {
            let raw = field(i);
            let x: f64 = raw.parse().map_err(|_| Error::NonNumeric {
                row,
                column: spec.name.clone(),
                value: raw.to_string(),
            })?;
            values.push(x);
        }

        let n = *ind_index.entry(ind_id.clone()).or_insert_with(|| {
            individuals.push((ind_id.clone(), Vec::new()));
            individuals.len() - 1
        });
        let t = *task_index
            .entry((n, task_id.clone()))
            .or_insert_with(|| {
                individuals[n].1.push(TaskAcc {
                    task_id: task_id.clone(),
                    alternatives: Vec::new(),
                    chosen: Vec::new(),
                });
                individuals[n].1.len() - 1
            });
        if !seen_alts.insert((n, t, alt_id.clone())) {
            return Err(Error::DuplicateAlternative {
                individual: ind_id,
                task: task_id,
                alt: alt_id,
            });
        }
        if chosen && !available {
            return Err(Error::ChosenUnavailable {
                individual: ind_id,
                task: task_id,
            });
        }
        let acc = &mut individuals[n].1[t];
        if chosen {
            acc.chosen.push(acc.alternatives.len());
        }
        acc.alternatives.push(Alternative {
            alt_id,
            available,
            attributes: values,
        });
    }

    let mut out = Vec::with_capacity(individuals.len());
    for (id, tasks) in individuals {
        let mut built = Vec::with_capacity(tasks.len());
        for acc in tasks {
            if acc.chosen.len() != 1 {
                return Err(Error::InvalidData(format!(
                    "individual {id}, task {}: expected exactly one chosen alternative, found {}",
                    acc.task_id,
                    acc.chosen.len()
                )));
            }
            built.push(ChoiceTask {
                task_id: acc.task_id,
                alternatives: acc.alternatives,
                chosen: acc.chosen[0],
            });
        }
        out.push(Individual { id, tasks: built });
    }
    Dataset::new(out, attributes.to_vec())
}

pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec![COL_INDIVIDUAL, COL_TASK, COL_ALT, COL_AVAILABLE, COL_CHOSEN];
    header.extend(data.attributes.iter().map(|a| a.name.as_str()));
    wtr.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for ind in &data.individuals {
        for task in &ind.tasks {
            for (j, alt) in task.alternatives.iter().enumerate() {
                row.clear();
                row.push(ind.id.clone());
                row.push(task.task_id.clone());
                row.push(alt.alt_id.clone());
                row.push(u8::from(alt.available).to_string());
                row.push(u8::from(j == task.chosen).to_string());
                row.extend(alt.attributes.iter().map(|x| x.to_string()));
                wtr.write_record(&row)?;
            }
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_csv(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(data, std::io::BufWriter::new(file))
}

/// Per-attribute multipliers applied by [`scale_covariates`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    /// `factors[a]` multiplies attribute `a`; coefficients divide by it.
    pub factors: Vec<f64>,
    /// Attributes left unscaled because their reference coefficient was zero
    /// or non-finite.
    pub skipped: Vec<usize>,
}

impl Scaling {
    pub fn identity(p: usize) -> Self {
        Scaling {
            factors: vec![1.0; p],
            skipped: Vec::new(),
        }
    }

    /// Maps coefficients estimated on scaled data back to original units.
    ///
    /// In preference space `beta_a = beta'_a * f_a`. In WTP space with cost
    /// index `c`, `beta_c = beta'_c * f_c` and `beta_a = beta'_a * f_a / f_c`.
    pub fn unscale(&self, scaled: &[f64], wtp_cost_index: Option<usize>) -> Vec<f64> {
        match wtp_cost_index {
            None => scaled.iter().zip(&self.factors).map(|(b, f)| b * f).collect(),
            Some(c) => {
                let fc = self.factors[c];
                scaled
                    .iter()
                    .zip(&self.factors)
                    .enumerate()
                    .map(|(a, (b, f))| if a == c { b * f } else { b * f / fc })
                    .collect()
            }
        }
    }
}

/// Power of ten `f` such that `|coef / f|` lies in `[0.1, 1)`.
pub fn decade_factor(coef: f64) -> Option<f64> {
    let m = coef.abs();
    if !(m > 0.0) || !m.is_finite() {
        return None;
    }
    let mut e = m.log10().floor() as i32 + 1;
    // floor(log10) can be off by one near exact powers of ten
    if m / 10f64.powi(e) >= 1.0 {
        e += 1;
    } else if m / 10f64.powi(e) < 0.1 {
        e -= 1;
    }
    Some(10f64.powi(e))
}

/// Rescales each attribute by a power of ten so that the corresponding
/// reference (plain MNL, preference-space) coefficient lands in `[0.1, 1)`.
pub fn scale_covariates(data: &Dataset, reference_coefs: &[f64]) -> Result<(Dataset, Scaling)> {
    if reference_coefs.len() != data.n_attributes() {
        return Err(Error::DimensionMismatch {
            what: "reference coefficients",
            expected: data.n_attributes(),
            got: reference_coefs.len(),
        });
    }
    let mut scaling = Scaling::identity(data.n_attributes());
    for (a, &c) in reference_coefs.iter().enumerate() {
        match decade_factor(c) {
            Some(f) => scaling.factors[a] = f,
            None => scaling.skipped.push(a),
        }
    }
    Ok((data.with_scaled_attributes(&scaling.factors), scaling))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub n_folds: usize,
    /// Fold index per individual, aligned with `Dataset::individuals()`.
    pub folds: Vec<usize>,
    pub ids: Vec<String>,
}

impl FoldAssignment {
    pub fn holdout(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    pub fn training(&self, fold: usize) -> Vec<usize> {
        (0..self.folds.len())
            .filter(|&i| self.folds[i] != fold)
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.folds {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["individual_id", "fold"])?;
        for (id, f) in self.ids.iter().zip(&self.folds) {
            wtr.write_record([id.as_str(), &f.to_string()])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Randomly partitions individuals into `n_folds` folds whose sizes differ
/// by at most one. Deterministic for a fixed seed.
pub fn split_folds(data: &Dataset, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let n = data.n_individuals();
    if n_folds == 0 || n_folds > n {
        return Err(Error::TooManyFolds {
            folds: n_folds,
            individuals: n,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        folds[i] = pos % n_folds;
    }
    Ok(FoldAssignment {
        n_folds,
        folds,
        ids: data.individuals.iter().map(|i| i.id.clone()).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attrs() -> Vec<AttributeSpec> {
        vec![
            AttributeSpec::free("time"),
            AttributeSpec::cost("cost", Constraint::StrictlyNegative),
        ]
    }

    const MINIMAL: &str = "\
individual_id,task_id,alt_id,available,chosen,time,cost
1,1,a,1,1,0.5,2.0
1,1,b,1,0,0.7,1.0
2,1,a,1,0,0.3,3.0
2,1,b,1,1,0.9,0.5
";

    #[test]
    fn loads_minimal_file() {
        let d = read_csv(MINIMAL.as_bytes(), &attrs()).unwrap();
        assert_eq!(d.n_individuals(), 2);
        assert!(d.individuals().iter().all(|i| i.tasks.len() == 1));
        assert_eq!(d.individuals()[1].tasks[0].chosen, 1);
        assert_eq!(d.cost_index(), Some(1));
    }

    #[test]
    fn rejects_chosen_unavailable() {
        let text = MINIMAL.replace("1,1,a,1,1,", "1,1,a,0,1,");
        let err = read_csv(text.as_bytes(), &attrs()).unwrap_err();
        assert!(err.to_string().contains("chosen alternative unavailable"), "{err}");
    }

    #[test]
    fn rejects_missing_column() {
        let text = MINIMAL.replace(",cost", ",price");
        assert!(matches!(
            read_csv(text.as_bytes(), &attrs()),
            Err(Error::MissingColumn(c)) if c == "cost"
        ));
    }

    #[test]
    fn rejects_duplicate_triple() {
        let text = format!("{MINIMAL}1,1,a,1,0,0.1,0.1\n");
        assert!(matches!(
            read_csv(text.as_bytes(), &attrs()),
            Err(Error::DuplicateAlternative { .. })
        ));
    }

    #[test]
    fn rejects_non_numeric() {
        let text = MINIMAL.replace("0.7", "slow");
        assert!(matches!(
            read_csv(text.as_bytes(), &attrs()),
            Err(Error::NonNumeric { row: 3, .. })
        ));
    }

    #[test]
    fn availability_defaults_to_true() {
        let text = "\
individual_id,task_id,alt_id,chosen,time,cost
1,1,a,1,0.5,2.0
1,1,b,0,0.7,1.0
";
        let d = read_csv(text.as_bytes(), &attrs()).unwrap();
        assert!(d.individuals()[0].tasks[0]
            .alternatives
            .iter()
            .all(|a| a.available));
    }

    #[test]
    fn csv_round_trip() {
        let d = read_csv(MINIMAL.as_bytes(), &attrs()).unwrap();
        let mut buf = Vec::new();
        write_csv(&d, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), &attrs()).unwrap();
        assert_eq!(d, back);
    }

    #[test]
    fn decade_factors() {
        assert_eq!(decade_factor(-0.003), Some(1e-2));
        assert_eq!(decade_factor(0.5), Some(1.0));
        assert_eq!(decade_factor(12.0), Some(1e2));
        assert_eq!(decade_factor(0.1), Some(1.0));
        assert_eq!(decade_factor(1.0), Some(10.0));
        assert_eq!(decade_factor(0.0), None);
        for c in [-0.003, 0.5, 12.0, 0.1, 1.0, 9.99, 123456.0, -7e-9] {
            let r = (c / decade_factor(c).unwrap()).abs();
            assert!((0.1..1.0).contains(&r), "{c} -> {r}");
        }
    }

    #[test]
    fn zero_reference_left_unscaled() {
        let d = read_csv(MINIMAL.as_bytes(), &attrs()).unwrap();
        let (scaled, s) = scale_covariates(&d, &[0.0, -0.003]).unwrap();
        assert_eq!(s.factors, vec![1.0, 1e-2]);
        assert_eq!(s.skipped, vec![0]);
        let x = scaled.individuals()[0].tasks[0].alternatives[0].attributes.clone();
        assert_eq!(x[0], 0.5);
        assert!((x[1] - 0.02).abs() < 1e-15);
    }

    #[test]
    fn fold_sizes_455() {
        let inds: Vec<_> = (0..455)
            .map(|n| Individual {
                id: n.to_string(),
                tasks: vec![ChoiceTask {
                    task_id: "1".into(),
                    alternatives: vec![
                        Alternative { alt_id: "a".into(), available: true, attributes: vec![0.0, 1.0] },
                        Alternative { alt_id: "b".into(), available: true, attributes: vec![1.0, 0.0] },
                    ],
                    chosen: 0,
                }],
            })
            .collect();
        let d = Dataset::new(inds, attrs()).unwrap();
        let f = split_folds(&d, 10, 42).unwrap();
        let mut sizes = f.fold_sizes();
        sizes.sort();
        assert_eq!(sizes, [vec![45; 5], vec![46; 5]].concat());
        assert_eq!(f, split_folds(&d, 10, 42).unwrap());
        assert!(matches!(split_folds(&d, 456, 1), Err(Error::TooManyFolds { .. })));

        let small = d.subset(&(0..10).collect::<Vec<_>>());
        assert_eq!(split_folds(&small, 10, 3).unwrap().fold_sizes(), vec![1; 10]);
    }
}
