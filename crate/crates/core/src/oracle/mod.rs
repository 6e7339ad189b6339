//! Numeric estimators that check the closed forms without using them:
//! adaptive quadrature in one dimension and seeded Monte Carlo elsewhere.
//!
//! Sampling uses ChaCha8 with one stream per fixed-size chunk of draws
//! (`seed_from_u64(seed)` then `set_stream(chunk)`), so results depend only on
//! `(seed, n_samples)` and not on how chunks are scheduled across threads.

pub mod quadrature;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::dissimilarity::MeasureId;
use crate::error::{GmrError, Result};
use crate::mixture::Mixture;

/// Draws per RNG stream.
pub const CHUNK: usize = 1 << 16;
/// Half-width of each component's integration window in standard deviations.
pub const WINDOW_SIGMAS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    Quadrature,
    ImportanceSampling,
}

/// A numeric estimate with its uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    /// Sampling standard error; zero for quadrature.
    pub standard_error: f64,
    pub method: EstimateMethod,
    /// Quadrature: integrand evaluations. Sampling: number of draws.
    pub samples_or_evals: usize,
    /// Requested absolute tolerance (quadrature only).
    pub abs_tol: f64,
    pub seed: Option<u64>,
}

/// Settings shared by the oracle estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub abs_tol: f64,
    pub n_samples: usize,
    pub seed: u64,
    pub window_sigmas: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            n_samples: 1_000_000,
            seed: 0,
            window_sigmas: WINDOW_SIGMAS,
        }
    }
}

/// Union of `mean ± k·σ` windows over every component of the given mixtures.
pub fn support_window(mixtures: &[&Mixture], sigmas: f64) -> Vec<(f64, f64)> {
    let intervals = mixtures
        .iter()
        .flat_map(|m| m.components().iter())
        .map(|c| {
            let mu = c.mean().as_slice()[0];
            let sd = c.cov().matrix()[(0, 0)].sqrt();
            (mu - sigmas * sd, mu + sigmas * sd)
        })
        .collect();
    quadrature::union_of_intervals(intervals)
}

/// `mean + k·σ` for a ladder of `k` per component, so every component's
/// bulk gets its own initial segments.
fn breakpoint_hints(mixtures: &[&Mixture], window_sigmas: f64) -> Vec<f64> {
    const LADDER: [f64; 9] = [-1.0, -0.4, -0.2, -0.1, 0.0, 0.1, 0.2, 0.4, 1.0];
    mixtures
        .iter()
        .flat_map(|m| m.components().iter())
        .flat_map(|c| {
            let mu = c.mean().as_slice()[0];
            let sd = c.cov().matrix()[(0, 0)].sqrt();
            LADDER.iter().map(move |k| mu + k * window_sigmas * sd)
        })
        .collect()
}

fn require_1d(m: &Mixture) -> Result<()> {
    if m.dim() != 1 {
        return Err(GmrError::UnsupportedDimension(m.dim()));
    }
    Ok(())
}

fn check_pair(p: &Mixture, q: &Mixture) -> Result<()> {
    if p.dim() != q.dim() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: p.dim(),
            found: q.dim(),
        });
    }
    Ok(())
}

fn density_1d(m: &Mixture) -> impl Fn(f64) -> f64 + '_ {
    move |x| {
        m.log_pdf_unchecked(&DVector::from_element(1, x))
            .exp()
    }
}

/// Quadrature of `∫ f` over the `±window_sigmas` support of the given mixtures.
pub fn quad_over_support<F: Fn(f64) -> f64>(
    f: F,
    mixtures: &[&Mixture],
    abs_tol: f64,
    window_sigmas: f64,
) -> Estimate {
    let window = support_window(mixtures, window_sigmas);
    let hints = breakpoint_hints(mixtures, window_sigmas);
    let r = quadrature::integrate_union(f, &window, &hints, abs_tol, 0.0);
    Estimate {
        value: r.value,
        standard_error: 0.0,
        method: EstimateMethod::Quadrature,
        samples_or_evals: r.evals,
        abs_tol,
        seed: None,
    }
}

/// Quadrature estimate of `∫ P Q dx` for one-dimensional mixtures.
pub fn quad_cross_potential(p: &Mixture, q: &Mixture, abs_tol: f64) -> Result<Estimate> {
    quad_cross_potential_window(p, q, abs_tol, WINDOW_SIGMAS)
}

pub fn quad_cross_potential_window(
    p: &Mixture,
    q: &Mixture,
    abs_tol: f64,
    window_sigmas: f64,
) -> Result<Estimate> {
    require_1d(p)?;
    require_1d(q)?;
    if !(abs_tol > 0.0) {
        return Err(GmrError::InvalidArgument("abs_tol must be positive".into()));
    }
    let (fp, fq) = (density_1d(p), density_1d(q));
    Ok(quad_over_support(
        |x| fp(x) * fq(x),
        &[p, q],
        abs_tol,
        window_sigmas,
    ))
}

/// Draws `x ~ P` deterministically.
pub fn sample_mixture(p: &Mixture, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut pick = p.len() - 1;
    for (i, w) in p.weights().iter().enumerate() {
        acc += w;
        if u < acc {
            pick = i;
            break;
        }
    }
    let c = &p.components()[pick];
    let z = DVector::from_fn(p.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
    c.mean().as_vector() + c.cov().factor() * z
}

/// Monte-Carlo mean of `f(x)` for `x ~ P` with its standard error.
pub fn sample_mean<F>(p: &Mixture, n_samples: usize, seed: u64, f: F) -> (f64, f64)
where
    F: Fn(&DVector<f64>) -> f64 + Sync,
{
    let chunks = n_samples.div_ceil(CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = CHUNK.min(n_samples - k * CHUNK);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..count {
                let v = f(&sample_mixture(p, &mut rng));
                s += v;
                s2 += v * v;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partials
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = n_samples as f64;
    let mean = s / n;
    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo estimate of `∫ P Q dx` by importance sampling from the
/// defensive proposal `g = ½P + ½Q`, averaging `P(x) Q(x) / g(x)`. The
/// integrand is bounded by `2 min(P, Q)`, so nearly disjoint pairs keep a
/// usable standard error.
pub fn mc_cross_potential(p: &Mixture, q: &Mixture, n_samples: usize, seed: u64) -> Result<Estimate> {
    check_pair(p, q)?;
    if n_samples < 100 {
        return Err(GmrError::InvalidArgument(
            "at least 100 samples are required".into(),
        ));
    }
    let weights = p.weights().iter().chain(q.weights()).map(|w| 0.5 * w).collect();
    let comps = p.components().iter().chain(q.components()).cloned().collect();
    let proposal = Mixture::new(weights, comps)?;
    let (value, se) = sample_mean(&proposal, n_samples, seed, |x| {
        let (lp, lq) = (p.log_pdf_unchecked(x), q.log_pdf_unchecked(x));
        let hi = lp.max(lq);
        if hi == f64::NEG_INFINITY {
            return 0.0;
        }
        // log g = log(½ e^lp + ½ e^lq)
        let lg = hi + ((lp - hi).exp() + (lq - hi).exp()).ln() - std::f64::consts::LN_2;
        (lp + lq - lg).exp()
    });
    Ok(Estimate {
        value,
        standard_error: se,
        method: EstimateMethod::ImportanceSampling,
        samples_or_evals: n_samples,
        abs_tol: 0.0,
        seed: Some(seed),
    })
}

/// Oracle estimates of `∫P²`, `∫Q²`, `∫PQ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OraclePotentials {
    pub pp: Estimate,
    pub qq: Estimate,
    pub pq: Estimate,
}

/// Estimates the three potentials, by quadrature in 1D and by sampling
/// otherwise. Each sampled integral uses its own sub-seed.
pub fn oracle_potentials(p: &Mixture, q: &Mixture, cfg: &OracleConfig) -> Result<OraclePotentials> {
    check_pair(p, q)?;
    if p.dim() == 1 {
        Ok(OraclePotentials {
            pp: quad_cross_potential_window(p, p, cfg.abs_tol, cfg.window_sigmas)?,
            qq: quad_cross_potential_window(q, q, cfg.abs_tol, cfg.window_sigmas)?,
            pq: quad_cross_potential_window(p, q, cfg.abs_tol, cfg.window_sigmas)?,
        })
    } else {
        let base = cfg.seed.wrapping_mul(3);
        Ok(OraclePotentials {
            pp: mc_cross_potential(p, p, cfg.n_samples, base)?,
            qq: mc_cross_potential(q, q, cfg.n_samples, base.wrapping_add(1))?,
            pq: mc_cross_potential(p, q, cfg.n_samples, base.wrapping_add(2))?,
        })
    }
}

/// Evaluates a closed-form measure purely from oracle integrals. Sampling
/// standard errors are propagated to first order.
pub fn oracle_measure(p: &Mixture, q: &Mixture, measure: MeasureId, cfg: &OracleConfig) -> Result<Estimate> {
    if !measure.is_closed_form() {
        return Err(GmrError::NotClosedForm(measure.as_str()));
    }
    let pot = oracle_potentials(p, q, cfg)?;
    measure_from_potentials(&pot, measure, p.dim() == 1, cfg)
}

/// Combines oracle potentials into a closed-form measure. `quadrature` tells
/// whether `pot` came from quadrature or from sampling with `cfg`.
pub fn measure_from_potentials(
    pot: &OraclePotentials,
    measure: MeasureId,
    quadrature: bool,
    cfg: &OracleConfig,
) -> Result<Estimate> {
    if !measure.is_closed_form() {
        return Err(GmrError::NotClosedForm(measure.as_str()));
    }
    let (a, b, c) = (pot.pq.value, pot.pp.value, pot.qq.value);
    let (sa, sb, sc) = (
        pot.pq.standard_error,
        pot.pp.standard_error,
        pot.qq.standard_error,
    );
    let kernel = (a / (b * c).sqrt()).clamp(0.0, 1.0);
    let se_log_k = ((sa / a).powi(2) + 0.25 * (sb / b).powi(2) + 0.25 * (sc / c).powi(2)).sqrt();
    let ise = b - 2.0 * a + c;
    let se_ise = (4.0 * sa * sa + sb * sb + sc * sc).sqrt();
    let (value, se) = match measure {
        MeasureId::Ncp => {
            let d = (2.0 - 2.0 * kernel).max(0.0).sqrt();
            let se = if d > 0.0 { kernel * se_log_k / d } else { 0.0 };
            (d, se)
        }
        MeasureId::Cs => (-kernel.max(1e-300).ln(), se_log_k),
        MeasureId::Ise => (ise.max(0.0), se_ise),
        MeasureId::Nise => {
            let den = b + c;
            let v = (ise / den).clamp(0.0, 1.0);
            // d(ise/den)/da = -2/den; d/db = d/dc = (den - ise)/den².
            let g = (den - ise) / (den * den);
            let se = ((2.0 * sa / den).powi(2) + (g * sb).powi(2) + (g * sc).powi(2)).sqrt();
            (v, se)
        }
        MeasureId::Kl => unreachable!("rejected above"),
    };
    let (method, count) = if quadrature {
        (
            EstimateMethod::Quadrature,
            pot.pp.samples_or_evals + pot.qq.samples_or_evals + pot.pq.samples_or_evals,
        )
    } else {
        (EstimateMethod::ImportanceSampling, cfg.n_samples)
    };
    Ok(Estimate {
        value,
        standard_error: se,
        method,
        samples_or_evals: count,
        abs_tol: if quadrature { cfg.abs_tol } else { 0.0 },
        seed: (!quadrature).then_some(cfg.seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{GaussianComponent, Scenario};
    use crate::potentials::{cross_information_potential, product_integral_log};
    use std::f64::consts::PI;

    fn n1(mean: f64, var: f64) -> Mixture {
        Mixture::single(GaussianComponent::univariate(mean, var).unwrap())
    }

    #[test]
    fn quad_standard_normal_self() {
        let s = n1(0.0, 1.0);
        let e = quad_cross_potential(&s, &s, 1e-10).unwrap();
        assert!((e.value - 1.0 / (2.0 * PI.sqrt())).abs() < 1e-10);
        assert_eq!(e.standard_error, 0.0);
        assert_eq!(e.method, EstimateMethod::Quadrature);
    }

    #[test]
    fn quad_freezes_shifted_pair_value() {
        let e = quad_cross_potential(&n1(0.0, 1.0), &n1(3.0, 1.0), 1e-13).unwrap();
        assert!((e.value - 0.029_732_572_3).abs() < 1e-10, "{}", e.value);
        let closed = product_integral_log(
            &GaussianComponent::standard(1),
            &GaussianComponent::univariate(3.0, 1.0).unwrap(),
        )
        .unwrap()
        .exp();
        assert!((e.value - closed).abs() < 1e-12);
    }

    #[test]
    fn quad_scenario_self_potential() {
        let p = Scenario::bundled().original;
        let e = quad_cross_potential(&p, &p, 1e-12).unwrap();
        let closed = cross_information_potential(&p, &p).unwrap();
        assert!(((e.value - closed) / closed).abs() < 1e-8);
    }

    #[test]
    fn quad_disjoint_supports() {
        let e = quad_cross_potential(&n1(-50.0, 1.0), &n1(50.0, 1.0), 1e-14).unwrap();
        assert!(e.value <= 1e-12);
    }

    #[test]
    fn quad_rejects_multivariate() {
        let m = Mixture::single(GaussianComponent::standard(2));
        assert_eq!(
            quad_cross_potential(&m, &m, 1e-10),
            Err(GmrError::UnsupportedDimension(2))
        );
    }

    #[test]
    fn wider_window_changes_less_than_tolerance() {
        let p = Scenario::bundled().original;
        let q = n1(1.0, 0.3);
        let a = quad_cross_potential_window(&p, &q, 1e-11, 10.0).unwrap();
        let b = quad_cross_potential_window(&p, &q, 1e-11, 12.0).unwrap();
        assert!((a.value - b.value).abs() < 1e-11);
    }

    #[test]
    fn mc_is_deterministic_and_close() {
        let s = n1(0.0, 1.0);
        let a = mc_cross_potential(&s, &s, 1_000_000, 42).unwrap();
        let b = mc_cross_potential(&s, &s, 1_000_000, 42).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let exact = 1.0 / (2.0 * PI.sqrt());
        assert!((a.value - exact).abs() <= 4.0 * a.standard_error);
        assert!(mc_cross_potential(&s, &s, 10, 1).is_err());
    }

    #[test]
    fn oracle_ncp_examples() {
        let cfg = OracleConfig::default();
        let s = n1(0.0, 1.0);
        let e = oracle_measure(&s, &s, MeasureId::Ncp, &cfg).unwrap();
        assert!(e.value <= 1e-8);
        let e = oracle_measure(&s, &n1(0.0, 2.0), MeasureId::Ncp, &cfg).unwrap();
        assert!((e.value - 0.240_900_214).abs() < 1e-7, "{}", e.value);
        assert!(oracle_measure(&s, &s, MeasureId::Kl, &cfg).is_err());
    }
}
