//! The NCP probability metric between densities, its closed form for
//! Gaussian mixtures, and optimization-based greedy Gaussian mixture
//! reduction.
//!
//! For densities `p`, `q` the normalized cross-information potential is
//! `K(p, q) = ∫pq / √(∫p² ∫q²)` and the metric is `d(p, q) = √(2 − 2K)`,
//! bounded by `√2`. For mixtures every integral reduces to sums of Gaussian
//! product integrals, so `d` is exact and cheap.
//!
//! Reduction runs a greedy merge pass ([`greedy::greedy_reduce`]) and then
//! refines the result under a chosen measure ([`refine::refine`]); the
//! combination is [`refine::oggmr`].

pub mod dissimilarity;
pub mod error;
pub mod greedy;
pub mod linalg;
pub mod mixture;
pub mod optim;
pub mod oracle;
pub mod potentials;
pub mod random;
pub mod refine;

pub use dissimilarity::{cs_divergence, evaluate, ise, kl_numeric, nise, KlConfig, MeasureId};
pub use error::{GmrError, Result};
pub use greedy::{greedy_reduce, merge_pair, MergeTrace};
pub use mixture::{
    moment_match, pdf_eval, validate_mixture, Covariance, GaussianComponent, MeanVector, Mixture,
    MixtureFile, Scenario, ScenarioFile,
};
pub use optim::OptimizerSettings;
pub use oracle::{Estimate, OracleConfig};
pub use potentials::{
    cross_information_potential, ncp_distance, ncp_kernel, product_integral_log, psi_matrix,
    PotentialMatrix, Potentials, ReferenceMixture,
};
pub use refine::{greedy_only, oggmr, refine, ReductionResult, Stage};
