#![allow(dead_code)]

use dpmnl::data::{Alternative, AttributeSpec, ChoiceTask, Constraint, Dataset, Individual};
use dpmnl::mnl::{ParamVector, Transform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Two free attributes plus a cost attribute with the given constraint.
pub fn attrs_with_cost(constraint: Constraint) -> Vec<AttributeSpec> {
    vec![
        AttributeSpec::free("x1"),
        AttributeSpec::free("x2"),
        AttributeSpec::cost("cost", constraint),
    ]
}

/// Random panel with attribute levels in `[0, 1)` (cost in `[0, 2)`),
/// occasional unavailable alternatives and uniformly random choices.
pub fn random_dataset(seed: u64, n: usize, t: usize, j: usize, attributes: Vec<AttributeSpec>) -> Dataset {
    let mut r = rng(seed);
    let p = attributes.len();
    let individuals = (0..n)
        .map(|i| Individual {
            id: format!("i{i}"),
            tasks: (0..t)
                .map(|tt| {
                    let mut alternatives: Vec<Alternative> = (0..j)
                        .map(|jj| Alternative {
                            alt_id: format!("a{jj}"),
                            available: true,
                            attributes: (0..p)
                                .map(|a| {
                                    let x: f64 = r.random();
                                    if attributes[a].name == "cost" { 2.0 * x } else { x }
                                })
                                .collect(),
                        })
                        .collect();
                    if j > 2 && r.random::<f64>() < 0.2 {
                        let k = r.random_range(0..j);
                        alternatives[k].available = false;
                    }
                    let avail: Vec<usize> = (0..j).filter(|k| alternatives[*k].available).collect();
                    let chosen = avail[r.random_range(0..avail.len())];
                    ChoiceTask {
                        task_id: format!("t{tt}"),
                        alternatives,
                        chosen,
                    }
                })
                .collect(),
        })
        .collect();
    Dataset::new(individuals, attributes).unwrap()
}

/// Random feasible taste vector for the given transforms.
pub fn random_beta<R: Rng>(r: &mut R, transforms: &[Transform]) -> ParamVector {
    let u: Vec<f64> = transforms.iter().map(|_| r.random_range(-1.5..1.5)).collect();
    ParamVector::from_unconstrained(&u, transforms)
}
