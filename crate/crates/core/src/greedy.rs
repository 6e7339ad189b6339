//! Greedy mixture reduction by repeated moment-preserving merges.
//!
//! Each pass picks the component with the smallest weight per unit of
//! `√|Σ|` as the candidate, finds the partner most similar to it under the
//! normalized cross-information potential, and replaces the pair with a single
//! Gaussian that keeps their combined first two moments. Passes repeat until
//! the requested number of components remains.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{GmrError, Result};
use crate::linalg;
use crate::mixture::{Covariance, GaussianComponent, MeanVector, Mixture};
use crate::potentials::product_integral_log;

/// `π / √|Σ|`, evaluated as `exp(log π − ½ log|Σ|)`.
pub fn normalized_weight(weight: f64, cov: &Covariance) -> Result<f64> {
    if !(weight >= 0.0) {
        return Err(GmrError::InvalidArgument(format!(
            "weight {weight} must be non-negative"
        )));
    }
    Ok((weight.ln() - 0.5 * cov.logdet()).exp())
}

/// `log K_NCP` between two single components.
pub fn log_component_similarity(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    let ab = product_integral_log(a, b)?;
    let aa = product_integral_log(a, a)?;
    let bb = product_integral_log(b, b)?;
    Ok((ab - 0.5 * (aa + bb)).min(0.0))
}

/// Normalized cross-information potential between two components, in `(0, 1]`.
pub fn component_similarity(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    Ok(log_component_similarity(a, b)?.exp())
}

/// Moment-preserving merge of two weighted components.
pub fn merge_pair(
    wi: f64,
    a: &GaussianComponent,
    wj: f64,
    b: &GaussianComponent,
) -> Result<(f64, GaussianComponent)> {
    if a.dim() != b.dim() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if !(wi > 0.0 && wj > 0.0) {
        return Err(GmrError::InvalidArgument(format!(
            "merge weights must be positive (got {wi}, {wj})"
        )));
    }
    let w = wi + wj;
    let (fi, fj) = (wi / w, wj / w);
    let (ma, mb) = (a.mean().as_vector(), b.mean().as_vector());
    let mean = ma * fi + mb * fj;
    let delta = ma - mb;
    let cov: DMatrix<f64> =
        a.cov().matrix() * fi + b.cov().matrix() * fj + (&delta * delta.transpose()) * (fi * fj);
    let cov = Covariance::new(linalg::symmetrize(&cov))?;
    Ok((w, GaussianComponent::new(MeanVector::from_vector(mean), cov)?))
}

/// One merge of the greedy loop.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MergeStep {
    /// Candidate index in the pool at the time of the step.
    pub candidate: usize,
    /// Partner index in the pool at the time of the step.
    pub partner: usize,
    pub candidate_normalized_weight: f64,
    pub similarity: f64,
    pub merged_weight: f64,
    pub merged_mean: Vec<f64>,
    pub merged_cov: Vec<Vec<f64>>,
}

/// Record of every merge performed by [`greedy_reduce`].
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MergeTrace {
    pub steps: Vec<MergeStep>,
}

impl MergeTrace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serializes")
    }
}

/// Index of the minimum; ties resolve to the lowest index.
fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

/// Reduces `p` to `target` components. The candidate slot is overwritten by
/// the merged component and the partner slot is removed.
pub fn greedy_reduce(p: &Mixture, target: usize) -> Result<(Mixture, MergeTrace)> {
    if target < 1 || target > p.len() {
        return Err(GmrError::InvalidTarget {
            target,
            available: p.len(),
        });
    }
    let mut weights = p.weights().to_vec();
    let mut comps = p.components().to_vec();
    let mut trace = MergeTrace::default();

    while comps.len() > target {
        // Log-scale scores avoid underflow for tiny weights or large covariances.
        let scores: Vec<f64> = weights
            .iter()
            .zip(&comps)
            .map(|(w, c)| w.ln() - 0.5 * c.cov().logdet())
            .collect();
        let cand = argmin(&scores);

        let mut partner = None::<(usize, f64)>;
        for j in (0..comps.len()).filter(|&j| j != cand) {
            let s = log_component_similarity(&comps[cand], &comps[j])?;
            if partner.is_none_or(|(_, best)| s > best) {
                partner = Some((j, s));
            }
        }
        let (partner, log_s) = partner.expect("pool has at least two components");

        let (w, merged) = merge_pair(weights[cand], &comps[cand], weights[partner], &comps[partner])?;
        trace.steps.push(MergeStep {
            candidate: cand,
            partner,
            candidate_normalized_weight: scores[cand].exp(),
            similarity: log_s.exp(),
            merged_weight: w,
            merged_mean: merged.mean().as_slice().to_vec(),
            merged_cov: (0..merged.dim())
                .map(|r| merged.cov().matrix().row(r).iter().copied().collect())
                .collect(),
        });
        weights[cand] = w;
        comps[cand] = merged;
        weights.remove(partner);
        comps.remove(partner);
    }
    Ok((Mixture::new(weights, comps)?, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{moment_match, Scenario};

    #[test]
    fn normalized_weight_examples() {
        let v = normalized_weight(0.03, &Covariance::scalar(0.0487).unwrap()).unwrap();
        assert!((v - 0.135_942_976).abs() < 1e-8);
        assert_eq!(normalized_weight(1.0, &Covariance::identity(3)).unwrap(), 1.0);
        assert!(normalized_weight(-0.1, &Covariance::identity(1)).is_err());
    }

    #[test]
    fn scenario_candidate_by_brute_force() {
        let p = Scenario::bundled().original;
        let ratios: Vec<f64> = p
            .iter()
            .map(|(w, c)| w / c.cov().matrix()[(0, 0)].sqrt())
            .collect();
        let brute = ratios
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(p.weights()[brute], 0.02);
        assert!((ratios[brute] - 0.116_444_502).abs() < 1e-8);

        let (_, trace) = greedy_reduce(&p, 5).unwrap();
        assert_eq!(trace.steps[0].candidate, brute);
        assert!((trace.steps[0].candidate_normalized_weight - ratios[brute]).abs() < 1e-14);
    }

    #[test]
    fn similarity_examples() {
        let a = GaussianComponent::standard(1);
        assert_eq!(component_similarity(&a, &a).unwrap(), 1.0);
        let b = GaussianComponent::univariate(0.0, 2.0).unwrap();
        assert!((component_similarity(&a, &b).unwrap() - 0.970_983_543).abs() < 1e-9);
        let c = GaussianComponent::univariate(100.0, 1.0).unwrap();
        assert!(component_similarity(&a, &c).unwrap() <= 1e-12);
        // Far partners still rank by log similarity.
        let d = GaussianComponent::univariate(120.0, 1.0).unwrap();
        assert!(
            log_component_similarity(&a, &c).unwrap() > log_component_similarity(&a, &d).unwrap()
        );
    }

    #[test]
    fn merge_examples() {
        let a = GaussianComponent::univariate(0.0, 1.0).unwrap();
        let b = GaussianComponent::univariate(2.0, 1.0).unwrap();
        let (w, m) = merge_pair(0.5, &a, 0.5, &b).unwrap();
        assert_eq!(w, 1.0);
        assert_eq!(m.mean().as_slice(), &[1.0]);
        assert_eq!(m.cov().matrix()[(0, 0)], 2.0);

        let (w, m) = merge_pair(0.3, &a, 0.3, &a).unwrap();
        assert_eq!(w, 0.6);
        assert_eq!(m, a);
    }

    #[test]
    fn merge_matches_moment_match() {
        let a = GaussianComponent::new(
            MeanVector::new(vec![0.3, -1.0]).unwrap(),
            Covariance::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5])).unwrap(),
        )
        .unwrap();
        let b = GaussianComponent::new(
            MeanVector::new(vec![2.0, 0.5]).unwrap(),
            Covariance::new(DMatrix::from_row_slice(2, 2, &[0.2, -0.1, -0.1, 0.9])).unwrap(),
        )
        .unwrap();
        let (w, m) = merge_pair(0.15, &a, 0.35, &b).unwrap();
        let pair = Mixture::new(vec![0.3, 0.7], vec![a, b]).unwrap();
        let oracle = moment_match(&pair);
        assert_eq!(w, 0.5);
        assert!((m.mean().as_vector() - oracle.mean().as_vector()).abs().max() < 1e-12);
        assert!((m.cov().matrix() - oracle.cov().matrix()).abs().max() < 1e-12);
    }

    #[test]
    fn target_bounds() {
        let p = Scenario::bundled().original;
        assert!(matches!(
            greedy_reduce(&p, 0),
            Err(GmrError::InvalidTarget { .. })
        ));
        assert!(matches!(
            greedy_reduce(&p, 11),
            Err(GmrError::InvalidTarget { .. })
        ));
        let (same, trace) = greedy_reduce(&p, 10).unwrap();
        assert_eq!(same, p);
        assert!(trace.is_empty());
    }

    #[test]
    fn reduce_to_one_is_moment_match() {
        let p = Scenario::bundled().original;
        let (q, trace) = greedy_reduce(&p, 1).unwrap();
        assert_eq!(trace.len(), 9);
        let mm = moment_match(&p);
        let g = &q.components()[0];
        assert!((g.mean().as_slice()[0] - mm.mean().as_slice()[0]).abs() < 1e-10);
        assert!((g.cov().matrix()[(0, 0)] - mm.cov().matrix()[(0, 0)]).abs() < 1e-10);
    }

    #[test]
    fn scenario_five_components() {
        let p = Scenario::bundled().original;
        let (q, trace) = greedy_reduce(&p, 5).unwrap();
        assert_eq!(q.len(), 5);
        assert_eq!(trace.len(), 5);
        // Frozen from an independent numpy run of the same procedure.
        let mut got: Vec<(f64, f64, f64)> = q
            .iter()
            .map(|(w, c)| (w, c.mean().as_slice()[0], c.cov().matrix()[(0, 0)]))
            .collect();
        got.sort_by(|a, b| a.1.total_cmp(&b.1));
        let expected = [
            (0.19, 0.48, 0.0174),
            (0.40, 0.85, 0.06948),
            (0.15, 1.435_333_333, 0.039_604_89),
            (0.18, 2.20, 0.0305),
            (0.08, 2.77, 0.0115),
        ];
        for (g, e) in got.iter().zip(expected.iter()) {
            assert!((g.0 - e.0).abs() < 1e-12, "{g:?} vs {e:?}");
            assert!((g.1 - e.1).abs() < 1e-8, "{g:?} vs {e:?}");
            assert!((g.2 - e.2).abs() < 1e-8, "{g:?} vs {e:?}");
        }
    }

    #[test]
    fn deterministic_trace() {
        let p = Scenario::bundled().original;
        assert_eq!(greedy_reduce(&p, 3).unwrap(), greedy_reduce(&p, 3).unwrap());
    }
}
