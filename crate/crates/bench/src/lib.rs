//! Shared fixtures for the benchmarks.

use fairtrade::instances::{example_mhr, example_regular, random_discrete_instance, rng};
use fairtrade::{DiscreteInstance, Instance};

pub fn regular_instance() -> Instance {
    example_regular(25.0).expect("K = 25 is valid").instance
}

pub fn mhr_instance() -> Instance {
    example_mhr().expect("example is valid").instance
}

/// `count` seeded two-sided instances with at most `max_support` points per side.
pub fn discrete_instances(count: usize, max_support: usize, seed: u64) -> Vec<DiscreteInstance> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| random_discrete_instance(&mut r, max_support))
        .collect()
}
