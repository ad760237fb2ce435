//! Shared fixtures for the benchmarks.

use dirac_core::scenario::fixtures::s1;
use dirac_core::{
    GrowthFamily, GrowthModel, InitialExponent, MutationCosts, ResourceWeights, Scenario, TraitSpace,
};

/// `n` chemostat traits on one resource with uniform unit costs.
pub fn chemostat_ladder(n: usize) -> Scenario {
    let psi: Vec<f64> = (0..n).map(|i| 1.0 - 0.3 * i as f64 / n as f64).collect();
    let h: Vec<f64> = (0..n).map(|i| 0.1 * i as f64).collect();
    Scenario::new(
        TraitSpace::numbered(n).unwrap(),
        MutationCosts::uniform(n, 1.0).unwrap(),
        ResourceWeights::new(vec![psi]).unwrap(),
        GrowthModel::new(GrowthFamily::Chemostat {
            d: vec![1.0; n],
            c: vec![2.0; n],
            alpha: vec![1.0],
        }),
        InitialExponent::new(h).unwrap(),
    )
    .unwrap()
}

pub fn canonical() -> Scenario {
    s1()
}
