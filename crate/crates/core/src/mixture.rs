//! Gaussian components, simplex-weighted mixtures, density evaluation, moment
//! matching, and the structured-text file formats.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dissimilarity::MeasureId;
use crate::error::{GmrError, Result};
use crate::linalg::{self, SYMMETRY_RTOL};

/// Weights whose sum deviates from one by at most this much are renormalized.
pub const RENORMALIZE_TOL: f64 = 1e-9;
/// Sum-of-weights tolerance every validated mixture satisfies.
pub const SIMPLEX_TOL: f64 = 1e-12;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Mean vector of a Gaussian component.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanVector(DVector<f64>);

impl MeanVector {
    pub fn new(entries: Vec<f64>) -> Result<Self> {
        if entries.is_empty() {
            return Err(GmrError::DimensionMismatch {
                index: None,
                expected: 1,
                found: 0,
            });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(GmrError::NonFinite {
                index: 0,
                field: "mean",
            });
        }
        Ok(Self(DVector::from_vec(entries)))
    }

    pub fn scalar(value: f64) -> Self {
        Self(DVector::from_element(1, value))
    }

    pub(crate) fn from_vector(v: DVector<f64>) -> Self {
        Self(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_vector(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Symmetric positive-definite covariance, stored with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance {
    matrix: DMatrix<f64>,
    factor: DMatrix<f64>,
    logdet: f64,
}

impl Covariance {
    /// Validates symmetry (relative tolerance 1e-9), symmetrizes, and factorizes.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(GmrError::DimensionMismatch {
                index: None,
                expected: matrix.nrows(),
                found: matrix.ncols(),
            });
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(GmrError::NonFinite {
                index: 0,
                field: "cov",
            });
        }
        let gap = linalg::relative_asymmetry(&matrix);
        if gap > SYMMETRY_RTOL {
            return Err(GmrError::AsymmetricCovariance { index: 0, gap });
        }
        let matrix = linalg::symmetrize(&matrix);
        let factor = linalg::spd_cholesky(&matrix)?;
        let logdet = linalg::logdet_from_factor(&factor);
        Ok(Self {
            matrix,
            factor,
            logdet,
        })
    }

    /// Builds `L Lᵀ` from a lower-triangular factor with a positive diagonal.
    pub fn from_factor(factor: DMatrix<f64>) -> Result<Self> {
        if !factor.is_square() {
            return Err(GmrError::DimensionMismatch {
                index: None,
                expected: factor.nrows(),
                found: factor.ncols(),
            });
        }
        let factor = factor.lower_triangle();
        if factor
            .diagonal()
            .iter()
            .any(|d| !(*d > 0.0) || !d.is_finite())
            || factor.iter().any(|v| !v.is_finite())
        {
            return Err(GmrError::NotPositiveDefinite { index: None });
        }
        let matrix = linalg::symmetrize(&(&factor * factor.transpose()));
        let logdet = linalg::logdet_from_factor(&factor);
        Ok(Self {
            matrix,
            factor,
            logdet,
        })
    }

    pub fn scalar(variance: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, variance))
    }

    pub fn identity(n: usize) -> Self {
        Self::new(DMatrix::identity(n, n)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Lower Cholesky factor.
    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    /// Solves `Σ x = v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        linalg::solve_with_factor(&self.factor, v)
    }

    /// `vᵀ Σ⁻¹ v` via the factor.
    pub fn mahalanobis_sq(&self, v: &DVector<f64>) -> f64 {
        self.mahalanobis_between(v.as_slice(), &vec![0.0; v.len()])
    }

    /// `(x − μ)ᵀ Σ⁻¹ (x − μ)` by forward substitution without allocating for
    /// small dimensions.
    fn mahalanobis_between(&self, x: &[f64], mu: &[f64]) -> f64 {
        let n = self.dim();
        if n == 1 {
            let d = x[0] - mu[0];
            return d * d / self.matrix[(0, 0)];
        }
        let mut stack = [0.0; 8];
        let mut heap = Vec::new();
        let z: &mut [f64] = if n <= stack.len() {
            &mut stack[..n]
        } else {
            heap.resize(n, 0.0);
            &mut heap
        };
        let l = &self.factor;
        let mut total = 0.0;
        for i in 0..n {
            let mut acc = x[i] - mu[i];
            for j in 0..i {
                acc -= l[(i, j)] * z[j];
            }
            z[i] = acc / l[(i, i)];
            total += z[i] * z[i];
        }
        total
    }
}

/// A multivariate normal `N(mean, cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    mean: MeanVector,
    cov: Covariance,
}

impl GaussianComponent {
    pub fn new(mean: MeanVector, cov: Covariance) -> Result<Self> {
        if mean.dim() != cov.dim() {
            return Err(GmrError::DimensionMismatch {
                index: None,
                expected: mean.dim(),
                found: cov.dim(),
            });
        }
        Ok(Self { mean, cov })
    }

    /// One-dimensional `N(mean, variance)`.
    pub fn univariate(mean: f64, variance: f64) -> Result<Self> {
        Self::new(MeanVector::scalar(mean), Covariance::scalar(variance)?)
    }

    pub fn standard(n: usize) -> Self {
        Self {
            mean: MeanVector(DVector::zeros(n)),
            cov: Covariance::identity(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.dim()
    }

    pub fn mean(&self) -> &MeanVector {
        &self.mean
    }

    pub fn cov(&self) -> &Covariance {
        &self.cov
    }

    /// Log density at `x`.
    pub fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        let maha = self.cov.mahalanobis_between(x.as_slice(), self.mean.as_slice());
        -0.5 * (n * LN_2PI + self.cov.logdet + maha)
    }
}

/// A finite Gaussian mixture with weights on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    weights: Vec<f64>,
    components: Vec<GaussianComponent>,
}

impl Mixture {
    /// Builds a mixture from already-validated components, checking the weight
    /// and dimension invariants.
    pub fn new(weights: Vec<f64>, components: Vec<GaussianComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(GmrError::EmptyMixture);
        }
        if weights.len() != components.len() {
            return Err(GmrError::NonSimplexWeights {
                index: None,
                reason: format!(
                    "{} weights for {} components",
                    weights.len(),
                    components.len()
                ),
            });
        }
        let dim = components[0].dim();
        for (i, c) in components.iter().enumerate() {
            if c.dim() != dim {
                return Err(GmrError::DimensionMismatch {
                    index: Some(i),
                    expected: dim,
                    found: c.dim(),
                });
            }
        }
        let weights = check_simplex(weights)?;
        Ok(Self {
            weights,
            components,
        })
    }

    /// Single-component mixture with weight one.
    pub fn single(component: GaussianComponent) -> Self {
        Self {
            weights: vec![1.0],
            components: vec![component],
        }
    }

    /// One-dimensional mixture from weight, mean, and variance lists.
    pub fn univariate(weights: &[f64], means: &[f64], variances: &[f64]) -> Result<Self> {
        if means.len() != weights.len() || variances.len() != weights.len() {
            return Err(GmrError::InvalidArgument(
                "weights, means, and variances must have equal length".into(),
            ));
        }
        let components = means
            .iter()
            .zip(variances)
            .enumerate()
            .map(|(i, (&m, &v))| GaussianComponent::univariate(m, v).map_err(|e| e.at(i)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(weights.to_vec(), components)
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, &GaussianComponent)> {
        self.weights.iter().copied().zip(self.components.iter())
    }

    pub(crate) fn check_dim(&self, x_dim: usize) -> Result<()> {
        if x_dim != self.dim() {
            return Err(GmrError::DimensionMismatch {
                index: None,
                expected: self.dim(),
                found: x_dim,
            });
        }
        Ok(())
    }

    /// Log density at `x`, combined across components with log-sum-exp.
    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.log_pdf_unchecked(x))
    }

    pub(crate) fn log_pdf_unchecked(&self, x: &DVector<f64>) -> f64 {
        let mut stack = [0.0; 16];
        let mut heap;
        let terms: &mut [f64] = if self.len() <= stack.len() {
            &mut stack[..self.len()]
        } else {
            heap = vec![0.0; self.len()];
            &mut heap
        };
        for (t, (w, c)) in terms.iter_mut().zip(self.iter()) {
            *t = w.ln() + c.log_pdf(x);
        }
        log_sum_exp(terms)
    }

    /// Overall mean of the mixture.
    pub fn mean(&self) -> DVector<f64> {
        let order = canonical_order(self);
        let mut mu = DVector::zeros(self.dim());
        for &i in &order {
            mu += self.components[i].mean.as_vector() * self.weights[i];
        }
        mu
    }

    /// Overall covariance of the mixture (law of total covariance).
    pub fn covariance(&self) -> DMatrix<f64> {
        let order = canonical_order(self);
        let mu = self.mean();
        let n = self.dim();
        let mut cov = DMatrix::zeros(n, n);
        for &i in &order {
            let c = &self.components[i];
            let d = c.mean.as_vector() - &mu;
            cov += (c.cov.matrix() + &d * d.transpose()) * self.weights[i];
        }
        linalg::symmetrize(&cov)
    }

    pub fn to_file(&self) -> MixtureFile {
        MixtureFile {
            dim: self.dim(),
            components: self
                .iter()
                .map(|(w, c)| ComponentRecord {
                    weight: w,
                    mean: c.mean.as_slice().to_vec(),
                    cov: (0..c.dim())
                        .map(|r| c.cov.matrix().row(r).iter().copied().collect())
                        .collect(),
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("mixture serializes")
    }

    /// Parses and validates a mixture document.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: MixtureFile =
            serde_json::from_str(text).map_err(|e| GmrError::Parse(e.to_string()))?;
        validate_mixture(&raw)
    }
}

impl fmt::Display for Mixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mixture: {} components, dim {}", self.len(), self.dim())?;
        for (i, (w, c)) in self.iter().enumerate() {
            writeln!(
                f,
                "  [{i}] w={w:.6} mean={:?} cov={:?}",
                c.mean.as_slice(),
                c.cov.matrix().as_slice()
            )?;
        }
        Ok(())
    }
}

fn check_simplex(mut weights: Vec<f64>) -> Result<Vec<f64>> {
    for (i, w) in weights.iter().enumerate() {
        if !w.is_finite() || *w < 0.0 {
            return Err(GmrError::NonSimplexWeights {
                index: Some(i),
                reason: format!("weight {w} is negative or not finite"),
            });
        }
    }
    let sum: f64 = weights.iter().sum();
    let dev = (sum - 1.0).abs();
    if dev > RENORMALIZE_TOL {
        return Err(GmrError::NonSimplexWeights {
            index: None,
            reason: format!("weights sum to {sum}"),
        });
    }
    if dev > SIMPLEX_TOL {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(weights)
}

/// Component visiting order that depends only on component values, so that
/// sums over components are exactly permutation invariant.
pub(crate) fn canonical_order(m: &Mixture) -> Vec<usize> {
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| {
        let (ca, cb) = (&m.components[a], &m.components[b]);
        m.weights[a]
            .total_cmp(&m.weights[b])
            .then_with(|| cmp_slices(ca.mean.as_slice(), cb.mean.as_slice()))
            .then_with(|| cmp_slices(ca.cov.matrix().as_slice(), cb.cov.matrix().as_slice()))
    });
    order
}

fn cmp_slices(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Numerically stable `log Σ exp(t)`. Terms are summed in sorted order so the
/// result does not depend on their input order. Returns `-inf` when every
/// term is `-inf`.
pub(crate) fn log_sum_exp(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| a.total_cmp(b));
    let max = match terms.last() {
        Some(m) => *m,
        None => return f64::NEG_INFINITY,
    };
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = terms.iter().map(|t| (t - max).exp()).sum();
    max + s.ln()
}

/// Validates a raw mixture document: dimensions, finiteness, symmetry,
/// positive definiteness, and simplex weights.
pub fn validate_mixture(raw: &MixtureFile) -> Result<Mixture> {
    if raw.components.is_empty() {
        return Err(GmrError::EmptyMixture);
    }
    let dim = raw.dim;
    let mut weights = Vec::with_capacity(raw.components.len());
    let mut components = Vec::with_capacity(raw.components.len());
    for (i, rec) in raw.components.iter().enumerate() {
        if rec.mean.len() != dim {
            return Err(GmrError::DimensionMismatch {
                index: Some(i),
                expected: dim,
                found: rec.mean.len(),
            });
        }
        if rec.cov.len() != dim {
            return Err(GmrError::DimensionMismatch {
                index: Some(i),
                expected: dim,
                found: rec.cov.len(),
            });
        }
        if let Some(row) = rec.cov.iter().find(|r| r.len() != dim) {
            return Err(GmrError::DimensionMismatch {
                index: Some(i),
                expected: dim,
                found: row.len(),
            });
        }
        if rec.mean.iter().any(|v| !v.is_finite()) {
            return Err(GmrError::NonFinite {
                index: i,
                field: "mean",
            });
        }
        let flat: Vec<f64> = rec.cov.iter().flatten().copied().collect();
        let cov = Covariance::new(DMatrix::from_row_slice(dim, dim, &flat)).map_err(|e| {
            match e {
                GmrError::AsymmetricCovariance { gap, .. } => {
                    GmrError::AsymmetricCovariance { index: i, gap }
                }
                GmrError::NonFinite { field, .. } => GmrError::NonFinite { index: i, field },
                other => other.at(i),
            }
        })?;
        let mean = MeanVector::new(rec.mean.clone()).map_err(|e| e.at(i))?;
        components.push(GaussianComponent { mean, cov });
        weights.push(rec.weight);
    }
    Mixture::new(weights, components)
}

/// Mixture density `Σ π_m N(x | μ_m, Σ_m)`.
pub fn pdf_eval(m: &Mixture, x: &MeanVector) -> Result<f64> {
    Ok(m.log_pdf(x.as_vector())?.exp())
}

/// Single Gaussian with the same mean and covariance as the mixture.
pub fn moment_match(m: &Mixture) -> GaussianComponent {
    let mean = MeanVector(m.mean());
    let cov = Covariance::new(m.covariance())
        .expect("weighted sum of SPD matrices plus PSD spread terms is SPD");
    GaussianComponent { mean, cov }
}

/// One component as it appears in a mixture or scenario document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentRecord {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Unvalidated mixture document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureFile {
    pub dim: usize,
    pub components: Vec<ComponentRecord>,
}

/// Unvalidated scenario document: a mixture plus reduction targets and measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub name: String,
    pub dim: usize,
    pub components: Vec<ComponentRecord>,
    pub targets: Vec<usize>,
    pub measures: Vec<String>,
}

/// A named mixture with the component counts and measures to reduce it under.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub original: Mixture,
    pub targets: Vec<usize>,
    pub measures: Vec<MeasureId>,
}

const BUNDLED_SCENARIO: &str = include_str!("../fixtures/scenario_10.json");

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ScenarioFile =
            serde_json::from_str(text).map_err(|e| GmrError::Parse(e.to_string()))?;
        Self::from_file(raw)
    }

    pub fn from_file(raw: ScenarioFile) -> Result<Self> {
        let original = validate_mixture(&MixtureFile {
            dim: raw.dim,
            components: raw.components,
        })?;
        let measures = raw
            .measures
            .iter()
            .map(|s| s.parse::<MeasureId>())
            .collect::<Result<Vec<_>>>()?;
        for &t in &raw.targets {
            if t == 0 || t > original.len() {
                return Err(GmrError::InvalidTarget {
                    target: t,
                    available: original.len(),
                });
            }
        }
        Ok(Self {
            name: raw.name,
            original,
            targets: raw.targets,
            measures,
        })
    }

    pub fn to_file(&self) -> ScenarioFile {
        let m = self.original.to_file();
        ScenarioFile {
            name: self.name.clone(),
            dim: m.dim,
            components: m.components,
            targets: self.targets.clone(),
            measures: self.measures.iter().map(|m| m.to_string()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("scenario serializes")
    }

    /// The ten-component one-dimensional reduction scenario shipped with the crate.
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED_SCENARIO).expect("bundled scenario is valid")
    }

    pub fn bundled_json() -> &'static str {
        BUNDLED_SCENARIO
    }
}

/// Density of a one-dimensional normal; used by tests and the density table.
pub fn normal_pdf_1d(x: f64, mean: f64, variance: f64) -> f64 {
    let d = x - mean;
    (-0.5 * d * d / variance).exp() / (2.0 * PI * variance).sqrt()
}
