//! Seeded workloads shared by the criterion benchmarks.

use ncpgmr::random::random_mixture;
use ncpgmr::{Mixture, Scenario};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random pair of mixtures with `components` components each.
pub fn random_pair(dim: usize, components: usize, seed: u64) -> (Mixture, Mixture) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (
        random_mixture(&mut rng, dim, components),
        random_mixture(&mut rng, dim, components),
    )
}

/// Random mixture of `components` components, for greedy sweeps.
pub fn random_input(dim: usize, components: usize, seed: u64) -> Mixture {
    random_mixture(&mut ChaCha8Rng::seed_from_u64(seed), dim, components)
}

/// The bundled ten-component scenario mixture.
pub fn scenario() -> Mixture {
    Scenario::bundled().original
}
