//! Unconstrained quasi-Newton minimization (BFGS inverse-Hessian updates,
//! backtracking Armijo line search, central finite-difference gradients).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Sufficient-decrease constant of the Armijo condition.
pub const ARMIJO_C1: f64 = 1e-4;
/// Maximum step halvings per line search.
pub const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Stop when an accepted step lowers the objective by less than this
    /// fraction of its magnitude.
    pub rel_tol: f64,
    /// Stop when the gradient infinity norm drops below this.
    pub grad_tol: f64,
    /// Relative finite-difference step: `h_i = fd_step · max(|x_i|, 1)`.
    pub fd_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            max_iters: 500,
            rel_tol: 1e-10,
            grad_tol: 1e-8,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    GradientTolerance,
    RelativeDecrease,
    IterationCap,
    LineSearchFailed,
    /// The start point already attains the objective's lower bound of zero.
    AtLowerBound,
}

impl Termination {
    /// Whether the run stopped without meeting a convergence test.
    pub fn is_warning(self) -> bool {
        matches!(self, Termination::IterationCap | Termination::LineSearchFailed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective at the start point and after every accepted step.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// Objective evaluations that returned a non-finite value.
    pub nonfinite_evals: usize,
    pub termination: Termination,
}

struct Counted<F> {
    f: F,
    nonfinite: usize,
}

impl<F: FnMut(&[f64]) -> f64> Counted<F> {
    fn eval(&mut self, x: &[f64]) -> f64 {
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            self.nonfinite += 1;
            f64::INFINITY
        }
    }
}

/// Central-difference gradient with per-coordinate step `fd_step · max(|x_i|, 1)`.
/// Falls back to a one-sided difference when one side is not finite.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(f: &mut F, x: &[f64], fx: f64, fd_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = fd_step * x[i].abs().max(1.0);
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            match (up.is_finite(), down.is_finite()) {
                (true, true) => (up - down) / (2.0 * h),
                (true, false) => (up - fx) / h,
                (false, true) => (fx - down) / h,
                (false, false) => 0.0,
            }
        })
        .collect()
}

/// Minimizes `f` from `x0`. Every accepted step satisfies the Armijo condition,
/// so the returned trace never increases.
pub fn minimize<F: FnMut(&[f64]) -> f64>(f: F, x0: &[f64], settings: &OptimizerSettings) -> Minimum {
    let n = x0.len();
    let mut obj = Counted { f, nonfinite: 0 };
    let mut x = DVector::from_column_slice(x0);
    let mut fx = obj.eval(x.as_slice());
    let mut trace = vec![fx];
    let grad_of = |obj: &mut Counted<F>, x: &DVector<f64>, fx: f64| {
        DVector::from_vec(fd_gradient(&mut |p| obj.eval(p), x.as_slice(), fx, settings.fd_step))
    };
    let mut g = grad_of(&mut obj, &x, fx);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut fresh = true;
    let mut iterations = 0;

    let termination = loop {
        if g.amax() < settings.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= settings.max_iters {
            break Termination::IterationCap;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = g.dot(&dir);
        if !(slope < 0.0) {
            h_inv.fill_with_identity();
            fresh = true;
            dir = -g.clone();
            slope = g.dot(&dir);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = &x + &dir * step;
            let ft = obj.eval(trial.as_slice());
            if ft <= fx + ARMIJO_C1 * step * slope {
                accepted = Some((trial, ft));
                break;
            }
            step *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else {
            if fresh {
                break Termination::LineSearchFailed;
            }
            // Curvature model has gone stale; retry along the gradient.
            h_inv.fill_with_identity();
            fresh = true;
            continue;
        };

        iterations += 1;
        let g_new = grad_of(&mut obj, &x_new, f_new);
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if fresh {
                h_inv *= sy / y.norm_squared();
            }
            let rho = 1.0 / sy;
            let hy = &h_inv * &y;
            let yhy = y.dot(&hy);
            // H⁺ = H − ρ(s·(Hy)ᵀ + (Hy)·sᵀ) + (ρ²·yᵀHy + ρ) s sᵀ
            h_inv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h_inv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            fresh = false;
        }

        let decrease = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        trace.push(fx);
        if decrease <= settings.rel_tol * fx.abs().max(f64::MIN_POSITIVE) {
            break Termination::RelativeDecrease;
        }
    };

    Minimum {
        x: x.as_slice().to_vec(),
        value: fx,
        trace,
        iterations,
        nonfinite_evals: obj.nonfinite,
        termination,
    }
}
