//! Fixtures shared by the benchmarks.

use fdivkit_core::experiment::DiscreteExperiment;
use fdivkit_core::rng;

/// Deterministic random experiment with k classes over m outcomes.
pub fn experiment(k: usize, m: usize, seed: u64) -> DiscreteExperiment {
    let mut r = rng::stream(seed, 0);
    let prior = rng::simplex(&mut r, k);
    let conds = (0..k).map(|_| rng::simplex(&mut r, m)).collect();
    DiscreteExperiment::new(prior, conds).expect("valid experiment")
}
