//! Comparison measures between mixtures: the NCP metric, integral squared
//! error (plain and normalized), Cauchy–Schwarz divergence, and a numeric
//! Kullback–Leibler estimate.
//!
//! All closed-form measures are functions of the same three potentials
//! `∫P²`, `∫Q²`, `∫PQ`, so they share one evaluation path.

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{GmrError, Result};
use crate::mixture::Mixture;
use crate::oracle::{self, Estimate, EstimateMethod};
use crate::potentials::Potentials;

/// Floor applied to the kernel before taking `-log` in the CS divergence.
pub const CS_KERNEL_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeasureId {
    Ncp,
    Ise,
    Nise,
    Cs,
    Kl,
}

impl MeasureId {
    pub const ALL: [MeasureId; 5] = [
        MeasureId::Ncp,
        MeasureId::Ise,
        MeasureId::Nise,
        MeasureId::Cs,
        MeasureId::Kl,
    ];
    pub const CLOSED_FORM: [MeasureId; 4] =
        [MeasureId::Ncp, MeasureId::Ise, MeasureId::Nise, MeasureId::Cs];

    pub fn as_str(self) -> &'static str {
        match self {
            MeasureId::Ncp => "ncp",
            MeasureId::Ise => "ise",
            MeasureId::Nise => "nise",
            MeasureId::Cs => "cs",
            MeasureId::Kl => "kl",
        }
    }

    /// `kl` is the only measure evaluated numerically.
    pub fn is_closed_form(self) -> bool {
        !matches!(self, MeasureId::Kl)
    }

    /// Evaluates a closed-form measure from precomputed potentials.
    pub fn from_potentials(self, pot: &Potentials) -> Result<f64> {
        match self {
            MeasureId::Ncp => Ok(pot.ncp_distance()),
            MeasureId::Ise => Ok(ise_from(pot)),
            MeasureId::Nise => Ok(nise_from(pot)),
            MeasureId::Cs => Ok(cs_from(pot)),
            MeasureId::Kl => Err(GmrError::NotClosedForm("kl")),
        }
    }
}

impl fmt::Display for MeasureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MeasureId {
    type Err = GmrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ncp" => Ok(MeasureId::Ncp),
            "ise" => Ok(MeasureId::Ise),
            "nise" => Ok(MeasureId::Nise),
            "cs" => Ok(MeasureId::Cs),
            "kl" => Ok(MeasureId::Kl),
            other => Err(GmrError::UnknownMeasure(other.to_string())),
        }
    }
}

fn ise_from(pot: &Potentials) -> f64 {
    let (pp, qq, pq) = (pot.log_pp.exp(), pot.log_qq.exp(), pot.log_pq.exp());
    // Sum the self-potentials first so swapping P and Q is bit-identical.
    ((pp + qq) - 2.0 * pq).max(0.0)
}

fn nise_from(pot: &Potentials) -> f64 {
    let den = pot.log_pp.exp() + pot.log_qq.exp();
    (ise_from(pot) / den).clamp(0.0, 1.0)
}

fn cs_from(pot: &Potentials) -> f64 {
    // `0 - ln K` keeps K = 1 at +0 rather than -0.
    0.0 - pot.kernel().max(CS_KERNEL_FLOOR).ln()
}

/// Integral squared error `∫(P − Q)²`.
pub fn ise(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(ise_from(&Potentials::between(p, q)?))
}

/// ISE normalized by `∫P² + ∫Q²`; lies in `[0, 1]`.
pub fn nise(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(nise_from(&Potentials::between(p, q)?))
}

/// Cauchy–Schwarz divergence `−log K_NCP(P, Q)`.
pub fn cs_divergence(p: &Mixture, q: &Mixture) -> Result<f64> {
    Ok(cs_from(&Potentials::between(p, q)?))
}

/// Settings for the numeric KL estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KlConfig {
    /// Absolute tolerance of the 1D quadrature.
    pub abs_tol: f64,
    /// Draws for the importance-sampling estimate in two or more dimensions.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for KlConfig {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            n_samples: 200_000,
            seed: 0,
        }
    }
}

/// Source densities below this are ignored when checking for underflow of the
/// reference density.
const KL_MASS_FLOOR: f64 = 1e-12;

/// Numeric estimate of `KL(P ‖ Q) = ∫ P log(P / Q)`.
///
/// One-dimensional inputs use adaptive quadrature over the union of all
/// component `±10σ` windows; otherwise `x ~ P` is sampled and the standard
/// error is reported with the estimate.
pub fn kl_numeric(p: &Mixture, q: &Mixture, cfg: &KlConfig) -> Result<Estimate> {
    if p.dim() != q.dim() {
        return Err(GmrError::DimensionMismatch {
            index: None,
            expected: p.dim(),
            found: q.dim(),
        });
    }
    let underflow = std::cell::Cell::new(None::<(f64, f64)>);
    let integrand = |x: &DVector<f64>| -> f64 {
        let lp = p.log_pdf_unchecked(x);
        let lq = q.log_pdf_unchecked(x);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        if !lq.is_finite() {
            let mass = lp.exp();
            if mass >= KL_MASS_FLOOR && underflow.get().is_none() {
                underflow.set(Some((x[0], mass)));
            }
            return 0.0;
        }
        lp - lq
    };

    let est = if p.dim() == 1 {
        let e = oracle::quad_over_support(
            |x| {
                let v = DVector::from_element(1, x);
                let lp = p.log_pdf_unchecked(&v);
                lp.exp() * integrand(&v)
            },
            &[p, q],
            cfg.abs_tol,
            oracle::WINDOW_SIGMAS,
        );
        if let Some((x, mass)) = underflow.get() {
            return Err(GmrError::SupportUnderflow { x, mass });
        }
        e
    } else {
        let bad = std::sync::Mutex::new(None::<(f64, f64)>);
        let (value, se) = oracle::sample_mean(p, cfg.n_samples, cfg.seed, |x| {
            let lp = p.log_pdf_unchecked(x);
            let lq = q.log_pdf_unchecked(x);
            if !lq.is_finite() {
                let mut slot = bad.lock().expect("poisoned");
                slot.get_or_insert((x[0], lp.exp()));
                return 0.0;
            }
            lp - lq
        });
        if let Some((x, mass)) = *bad.lock().expect("poisoned") {
            return Err(GmrError::SupportUnderflow { x, mass });
        }
        Estimate {
            value,
            standard_error: se,
            method: EstimateMethod::ImportanceSampling,
            samples_or_evals: cfg.n_samples,
            abs_tol: 0.0,
            seed: Some(cfg.seed),
        }
    };
    Ok(Estimate {
        value: est.value.max(0.0),
        ..est
    })
}

/// Evaluates any measure on `(p, q)`; `kl` goes through [`kl_numeric`].
pub fn evaluate(measure: MeasureId, p: &Mixture, q: &Mixture, kl: &KlConfig) -> Result<f64> {
    match measure {
        MeasureId::Kl => Ok(kl_numeric(p, q, kl)?.value),
        m => m.from_potentials(&Potentials::between(p, q)?),
    }
}
