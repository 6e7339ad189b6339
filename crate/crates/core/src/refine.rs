//! Constrained refinement of a reduced mixture, and the full
//! greedy-then-refine reduction.
//!
//! The simplex constraint on the weights and the SPD constraint on each
//! covariance are removed by reparameterization: weights are the softmax of
//! free logits and each covariance is `L Lᵀ` with `L` lower triangular and a
//! log-parameterized diagonal. Any parameter vector therefore decodes to a
//! valid mixture, and the problem is minimized with an unconstrained
//! quasi-Newton method.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dissimilarity::MeasureId;
use crate::error::{GmrError, Result};
use crate::greedy::greedy_reduce;
use crate::mixture::{Covariance, GaussianComponent, MeanVector, Mixture};
use crate::optim::{self, OptimizerSettings, Termination};
use crate::potentials::ReferenceMixture;

/// Lower bound on the log of each covariance-factor diagonal entry.
pub const LOG_DIAG_FLOOR: f64 = -30.0;
/// Smallest weight used when taking logs to initialize logits.
pub const WEIGHT_FLOOR: f64 = 1e-12;

/// Unconstrained parameters of an `N`-component mixture in `n` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeParameters {
    pub weight_logits: Vec<f64>,
    pub means: Vec<Vec<f64>>,
    /// Row-major lower triangle of each factor; diagonal entries are logs.
    pub cov_factors: Vec<Vec<f64>>,
    dim: usize,
}

fn tri_len(n: usize) -> usize {
    n * (n + 1) / 2
}

impl FreeParameters {
    /// Exact warm start from a valid mixture.
    pub fn encode(m: &Mixture) -> Self {
        let n = m.dim();
        let weight_logits = m.weights().iter().map(|w| w.max(WEIGHT_FLOOR).ln()).collect();
        let means = m
            .components()
            .iter()
            .map(|c| c.mean().as_slice().to_vec())
            .collect();
        let cov_factors = m
            .components()
            .iter()
            .map(|c| {
                let l = c.cov().factor();
                let mut v = Vec::with_capacity(tri_len(n));
                for r in 0..n {
                    for col in 0..=r {
                        v.push(if r == col { l[(r, r)].ln() } else { l[(r, col)] });
                    }
                }
                v
            })
            .collect();
        Self {
            weight_logits,
            means,
            cov_factors,
            dim: n,
        }
    }

    pub fn components(&self) -> usize {
        self.weight_logits.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Length of the flat parameter vector.
    pub fn len(&self) -> usize {
        Self::flat_len(self.components(), self.dim)
    }

    pub fn is_empty(&self) -> bool {
        self.weight_logits.is_empty()
    }

    pub fn flat_len(components: usize, dim: usize) -> usize {
        components * (1 + dim + tri_len(dim))
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        v.extend_from_slice(&self.weight_logits);
        self.means.iter().for_each(|m| v.extend_from_slice(m));
        self.cov_factors.iter().for_each(|f| v.extend_from_slice(f));
        v
    }

    pub fn from_vec(flat: &[f64], components: usize, dim: usize) -> Result<Self> {
        if flat.len() != Self::flat_len(components, dim) {
            return Err(GmrError::InvalidArgument(format!(
                "expected {} parameters, got {}",
                Self::flat_len(components, dim),
                flat.len()
            )));
        }
        let (logits, rest) = flat.split_at(components);
        let (means, factors) = rest.split_at(components * dim);
        Ok(Self {
            weight_logits: logits.to_vec(),
            means: means.chunks(dim).map(<[f64]>::to_vec).collect(),
            cov_factors: factors.chunks(tri_len(dim)).map(<[f64]>::to_vec).collect(),
            dim,
        })
    }

    fn nonfinite_block(&self) -> Option<String> {
        if self.weight_logits.iter().any(|v| !v.is_finite()) {
            return Some("weight_logits".into());
        }
        if let Some(k) = self.means.iter().position(|m| m.iter().any(|v| !v.is_finite())) {
            return Some(format!("means[{k}]"));
        }
        self.cov_factors
            .iter()
            .position(|f| f.iter().any(|v| !v.is_finite()))
            .map(|k| format!("cov_factors[{k}]"))
    }

    /// Softmax weights, means, and `L Lᵀ` covariances.
    pub fn decode(&self) -> Result<Mixture> {
        if let Some(block) = self.nonfinite_block() {
            return Err(GmrError::NonFiniteObjective { block });
        }
        let n = self.dim;
        let max = self
            .weight_logits
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let exps: Vec<f64> = self.weight_logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let weights = exps.iter().map(|e| e / total).collect();

        let mut comps = Vec::with_capacity(self.components());
        for (k, (mean, raw)) in self.means.iter().zip(&self.cov_factors).enumerate() {
            let mut l = DMatrix::zeros(n, n);
            let mut it = raw.iter();
            for r in 0..n {
                for c in 0..=r {
                    let v = *it.next().expect("factor length checked");
                    l[(r, c)] = if r == c { v.max(LOG_DIAG_FLOOR).exp() } else { v };
                }
            }
            // Factor the product again so a decoded mixture is exactly what
            // validation would accept; numerically singular products are
            // rejected here.
            let cov = Covariance::new(&l * l.transpose()).map_err(|e| e.at(k))?;
            let mean = MeanVector::new(mean.clone()).map_err(|_| GmrError::NonFiniteObjective {
                block: format!("means[{k}]"),
            })?;
            comps.push(GaussianComponent::new(mean, cov)?);
        }
        Mixture::new(weights, comps)
    }
}

fn closed_form(measure: MeasureId) -> Result<MeasureId> {
    if measure.is_closed_form() {
        Ok(measure)
    } else {
        Err(GmrError::NotClosedForm(measure.as_str()))
    }
}

fn evaluate_against(reference: &ReferenceMixture, q: &Mixture, measure: MeasureId) -> Result<f64> {
    let v = measure.from_potentials(&reference.potentials(q)?)?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(GmrError::NonFiniteObjective {
            block: "measure".into(),
        })
    }
}

/// The reduction objective: decode `params` and compare against `p`.
pub fn objective(p: &Mixture, params: &FreeParameters, measure: MeasureId) -> Result<f64> {
    let measure = closed_form(measure)?;
    let reference = ReferenceMixture::new(p.clone())?;
    evaluate_against(&reference, &params.decode()?, measure)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GreedyOnly,
    Refined,
}

/// Outcome of a reduction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReductionResult {
    #[serde(skip)]
    pub reduced: Mixture,
    pub measure: MeasureId,
    pub objective: f64,
    /// Objective of the greedy (or supplied) starting mixture.
    pub initial_objective: f64,
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub wall_time: f64,
    pub stage: Stage,
    pub termination: Option<Termination>,
    /// Non-finite objective evaluations met (and rejected) during the search.
    pub warnings: usize,
}

/// Refines `init` toward `p` under a closed-form measure.
pub fn refine(
    p: &Mixture,
    init: &Mixture,
    measure: MeasureId,
    opts: &OptimizerSettings,
) -> Result<ReductionResult> {
    let start = Instant::now();
    let measure = closed_form(measure)?;
    if init.dim() != p.dim() {
        return Err(GmrError::InvalidInit(format!(
            "dimension {} does not match original dimension {}",
            init.dim(),
            p.dim()
        )));
    }
    if init.len() > p.len() {
        return Err(GmrError::InvalidInit(format!(
            "{} components exceed the original {}",
            init.len(),
            p.len()
        )));
    }
    let reference = ReferenceMixture::new(p.clone())?;
    let initial_objective = evaluate_against(&reference, init, measure)?;

    if initial_objective <= 0.0 {
        return Ok(ReductionResult {
            reduced: init.clone(),
            measure,
            objective: 0.0,
            initial_objective,
            objective_trace: vec![0.0],
            iterations: 0,
            wall_time: start.elapsed().as_secs_f64(),
            stage: Stage::Refined,
            termination: Some(Termination::AtLowerBound),
            warnings: 0,
        });
    }

    let params = FreeParameters::encode(init);
    let (count, dim) = (params.components(), params.dim());
    let f = |x: &[f64]| -> f64 {
        FreeParameters::from_vec(x, count, dim)
            .and_then(|fp| fp.decode())
            .and_then(|q| evaluate_against(&reference, &q, measure))
            .unwrap_or(f64::NAN)
    };
    let min = optim::minimize(f, &params.to_vec(), opts);

    let candidate = FreeParameters::from_vec(&min.x, count, dim)?.decode()?;
    let candidate_objective = evaluate_against(&reference, &candidate, measure)?;
    let (reduced, objective, trace) = if candidate_objective <= initial_objective {
        (candidate, candidate_objective, min.trace)
    } else {
        // Round-off in the warm start can leave the decoded optimum a hair
        // above the supplied mixture; keep the better of the two.
        (init.clone(), initial_objective, vec![initial_objective])
    };
    Ok(ReductionResult {
        reduced,
        measure,
        objective,
        initial_objective,
        objective_trace: trace,
        iterations: min.iterations,
        wall_time: start.elapsed().as_secs_f64(),
        stage: Stage::Refined,
        termination: Some(min.termination),
        warnings: min.nonfinite_evals,
    })
}

/// Greedy initialization only.
pub fn greedy_only(p: &Mixture, target: usize, measure: MeasureId) -> Result<ReductionResult> {
    let start = Instant::now();
    let measure = closed_form(measure)?;
    let (reduced, _) = greedy_reduce(p, target)?;
    let reference = ReferenceMixture::new(p.clone())?;
    let objective = evaluate_against(&reference, &reduced, measure)?;
    Ok(ReductionResult {
        reduced,
        measure,
        objective,
        initial_objective: objective,
        objective_trace: vec![objective],
        iterations: 0,
        wall_time: start.elapsed().as_secs_f64(),
        stage: Stage::GreedyOnly,
        termination: None,
        warnings: 0,
    })
}

/// Greedy initialization followed by refinement.
pub fn oggmr(
    p: &Mixture,
    target: usize,
    measure: MeasureId,
    opts: &OptimizerSettings,
) -> Result<ReductionResult> {
    let start = Instant::now();
    let measure = closed_form(measure)?;
    let (init, _) = greedy_reduce(p, target)?;
    let mut result = refine(p, &init, measure, opts)?;
    result.wall_time = start.elapsed().as_secs_f64();
    Ok(result)
}
