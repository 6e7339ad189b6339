//! Closed-form information potentials between Gaussian mixtures.
//!
//! The product of two normal densities integrates to a normal density
//! evaluated at the difference of the means:
//!
//! ```text
//! ∫ N(x|μa,Σa) N(x|μb,Σb) dx = N(μa − μb | 0, Σa + Σb)
//! ```
//!
//! so the cross-information potential `∫ P Q` of two mixtures is a weighted
//! sum over component pairs. Everything here is kept in log space; the only
//! exponentiation happens when a normalized kernel value is formed.

use nalgebra::DMatrix;

use crate::error::{GmrError, Result};
use crate::linalg;
use crate::mixture::{log_sum_exp, GaussianComponent, Mixture};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// `log ∫ N_a N_b dx`.
pub fn product_integral_log(a: &GaussianComponent, b: &GaussianComponent) -> Result<f64> {
    let n = a.dim();
    if b.dim() != n {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: n,
            found: b.dim(),
        });
    }
    if n == 1 {
        let s = a.cov().matrix()[(0, 0)] + b.cov().matrix()[(0, 0)];
        let d = a.mean().as_slice()[0] - b.mean().as_slice()[0];
        return Ok(-0.5 * (LN_2PI + s.ln() + d * d / s));
    }
    let sum = a.cov().matrix() + b.cov().matrix();
    let factor = linalg::spd_cholesky(&sum)?;
    let delta = a.mean().as_vector() - b.mean().as_vector();
    let z = factor
        .solve_lower_triangular(&delta)
        .expect("factor diagonal is strictly positive");
    Ok(-0.5 * (n as f64 * LN_2PI + linalg::logdet_from_factor(&factor) + z.norm_squared()))
}

/// Pairwise log product integrals between the components of two mixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialMatrix {
    log_entries: DMatrix<f64>,
    same_mixture: bool,
}

impl PotentialMatrix {
    pub fn log_entries(&self) -> &DMatrix<f64> {
        &self.log_entries
    }

    /// Entry-wise exponential.
    pub fn exp(&self) -> DMatrix<f64> {
        self.log_entries.map(f64::exp)
    }

    pub fn is_self_potential(&self) -> bool {
        self.same_mixture
    }

    pub fn shape(&self) -> (usize, usize) {
        self.log_entries.shape()
    }

    /// `log(aᵀ Ψ b)` for weight vectors `a` (rows) and `b` (columns).
    pub fn log_quadratic_form(&self, a: &[f64], b: &[f64]) -> f64 {
        let (r, c) = self.shape();
        let mut terms = Vec::with_capacity(r * c);
        for i in 0..r {
            for k in 0..c {
                terms.push(a[i].ln() + b[k].ln() + self.log_entries[(i, k)]);
            }
        }
        log_sum_exp(&mut terms)
    }
}

fn check_dims(p: &Mixture, q: &Mixture) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

/// Ψ between two mixtures. When `p` and `q` are the same object each
/// unordered pair is evaluated once and mirrored.
pub fn psi_matrix(p: &Mixture, q: &Mixture) -> Result<PotentialMatrix> {
    check_dims(p, q)?;
    let same = std::ptr::eq(p, q) || p == q;
    let (m, n) = (p.len(), q.len());
    let mut log_entries = DMatrix::zeros(m, n);
    for i in 0..m {
        let start = if same { i } else { 0 };
        for k in start..n {
            let v = product_integral_log(&p.components()[i], &q.components()[k])?;
            log_entries[(i, k)] = v;
            if same {
                log_entries[(k, i)] = v;
            }
        }
    }
    Ok(PotentialMatrix {
        log_entries,
        same_mixture: same,
    })
}

/// `log ∫ P Q dx`, assembled by log-sum-exp over component pairs.
pub fn log_cross_information_potential(p: &Mixture, q: &Mixture) -> Result<f64> {
    check_dims(p, q)?;
    let mut terms = Vec::with_capacity(p.len() * q.len());
    for (wp, cp) in p.iter() {
        for (wq, cq) in q.iter() {
            terms.push(wp.ln() + wq.ln() + product_integral_log(cp, cq)?);
        }
    }
    Ok(log_sum_exp(&mut terms))
}

/// `∫ P Q dx`.
pub fn cross_information_potential(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(log_cross_information_potential(p, q)?.exp())
}

/// The three log potentials every closed-form measure is built from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Potentials {
    pub log_pp: f64,
    pub log_qq: f64,
    pub log_pq: f64,
}

impl Potentials {
    pub fn between(p: &Mixture, q: &Mixture) -> Result<Self> {
        check_dims(p, q)?;
        Ok(Self {
            log_pp: log_cross_information_potential(p, p)?,
            log_qq: log_cross_information_potential(q, q)?,
            log_pq: log_cross_information_potential(p, q)?,
        })
    }

    /// `log K_NCP`, before clamping.
    pub fn log_kernel(&self) -> f64 {
        self.log_pq - 0.5 * (self.log_pp + self.log_qq)
    }

    /// Normalized cross-information potential, clamped to `[0, 1]`.
    pub fn kernel(&self) -> f64 {
        self.log_kernel().exp().clamp(0.0, 1.0)
    }

    /// `√(2 − 2K)` with the radicand clamped at zero.
    pub fn ncp_distance(&self) -> f64 {
        (2.0 - 2.0 * self.kernel()).max(0.0).sqrt()
    }
}

/// A fixed mixture with its self-potential computed once. Reductions compare
/// many candidates against the same original, so `∫ P²` is reused.
#[derive(Debug, Clone)]
pub struct ReferenceMixture {
    mixture: Mixture,
    log_self: f64,
}

impl ReferenceMixture {
    pub fn new(mixture: Mixture) -> Result<Self> {
        let log_self = log_cross_information_potential(&mixture, &mixture)?;
        Ok(Self { mixture, log_self })
    }

    pub fn mixture(&self) -> &Mixture {
        &self.mixture
    }

    pub fn log_self_potential(&self) -> f64 {
        self.log_self
    }

    /// Potentials between this reference (as `P`) and a candidate `Q`.
    pub fn potentials(&self, q: &Mixture) -> Result<Potentials> {
        check_dims(&self.mixture, q)?;
        Ok(Potentials {
            log_pp: self.log_self,
            log_qq: log_cross_information_potential(q, q)?,
            log_pq: log_cross_information_potential(&self.mixture, q)?,
        })
    }
}

/// Normalized cross-information potential `K_NCP(P, Q)` in `[0, 1]`.
pub fn ncp_kernel(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(Potentials::between(p, q)?.kernel())
}

/// The NCP metric `√(2 − 2 K_NCP(P, Q))`, bounded by `√2`.
pub fn ncp_distance(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(Potentials::between(p, q)?.ncp_distance())
}
