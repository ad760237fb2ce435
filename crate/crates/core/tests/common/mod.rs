use dirac_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Chemostat scenarios on 3 or 4 traits with one resource, kept only if they
/// validate and every subset has a unique hyperbolic admissible state.
pub fn random_scenarios(count: usize, seed: u64) -> Vec<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count {
        attempts += 1;
        assert!(attempts < 50 * count, "generator rejects too many scenarios");
        let n = rng.random_range(3..=4usize);
        let costs: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 0.0 } else { rng.random_range(0.65..1.2) }).collect())
            .collect();
        let psi: Vec<f64> = (0..n).map(|_| rng.random_range(0.6..=1.0)).collect();
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(1.6..2.4)).collect();
        let mut h: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.6)).collect();
        h[rng.random_range(0..n)] = 0.0;
        let Ok(s) = Scenario::new(
            TraitSpace::numbered(n).unwrap(),
            MutationCosts::new(costs).unwrap(),
            ResourceWeights::new(vec![psi]).unwrap(),
            GrowthModel::new(GrowthFamily::Chemostat {
                d: vec![1.0; n],
                c,
                alpha: vec![1.0],
            }),
            InitialExponent::new(h).unwrap(),
        ) else {
            continue;
        };
        if !validate_scenario(&s, 200).passed() {
            continue;
        }
        let all_h = Subset::full(n)
            .subsets()
            .filter(|a| !a.is_empty())
            .all(|a| Subsystem::new(&s, a).and_then(|a| check_hypothesis_h(&s, a)).is_ok());
        if all_h {
            out.push(s);
        }
    }
    out
}
