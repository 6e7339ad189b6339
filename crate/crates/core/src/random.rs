//! Seeded random mixtures for property tests, sweeps, and benchmarks.

use nalgebra::DMatrix;
use rand::Rng;

use crate::mixture::{Covariance, GaussianComponent, MeanVector, Mixture};

/// Random SPD matrix `A Aᵀ + 0.05·I` with `A` uniform in `[-scale, scale]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-scale..scale));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.05
}

pub fn random_component<R: Rng>(rng: &mut R, dim: usize) -> GaussianComponent {
    let mean = MeanVector::new((0..dim).map(|_| rng.random_range(-3.0..3.0)).collect())
        .expect("finite mean");
    let scale = rng.random_range(0.2..1.2);
    let cov = Covariance::new(random_spd(rng, dim, scale)).expect("SPD by construction");
    GaussianComponent::new(mean, cov).expect("matching dimensions")
}

/// Mixture with `components` random components in `dim` dimensions. Weights
/// are bounded away from zero.
pub fn random_mixture<R: Rng>(rng: &mut R, dim: usize, components: usize) -> Mixture {
    let raw: Vec<f64> = (0..components).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let weights = raw.iter().map(|w| w / total).collect();
    let comps = (0..components).map(|_| random_component(rng, dim)).collect();
    Mixture::new(weights, comps).expect("valid by construction")
}
