//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

// 15-point Kronrod nodes on [0, 1] (symmetric), with weights for the
// Kronrod rule and the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Result of a quadrature run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &wk)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kron += wk * pair;
        // Gauss nodes sit at the odd Kronrod positions.
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).abs();
    (value, error)
}

/// Integrates `f` over `[a, b]` until the estimated absolute error is at most
/// `max(abs_tol, rel_tol·|I|)` or `max_segments` is reached.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> QuadResult {
    integrate_segments(f, &[a, b], abs_tol, rel_tol, max_segments)
}

/// Like [`integrate`], starting from the segments between consecutive sorted
/// `breakpoints`. Breakpoints let narrow features inside a wide range be seen
/// by the first pass.
pub fn integrate_segments<F: Fn(f64) -> f64>(
    f: F,
    breakpoints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_segments: usize,
) -> QuadResult {
    let mut heap = BinaryHeap::new();
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut evals = 0;
    for w in breakpoints.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            continue;
        }
        let (value, error) = kronrod(&f, a, b);
        evals += 15;
        total += value;
        total_err += error;
        heap.push(Segment { a, b, value, error });
    }
    if heap.is_empty() {
        return QuadResult {
            value: 0.0,
            error: 0.0,
            evals: 0,
            converged: true,
        };
    }
    let max_segments = max_segments.max(heap.len());
    while total_err > abs_tol.max(rel_tol * total.abs()) && heap.len() < max_segments {
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(worst);
            break;
        }
        let (v1, e1) = kronrod(&f, worst.a, mid);
        let (v2, e2) = kronrod(&f, mid, worst.b);
        evals += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
    }
    // Re-sum from segments to shed drift from the running updates.
    let value: f64 = heap.iter().map(|s| s.value).sum();
    let error: f64 = heap.iter().map(|s| s.error).sum();
    QuadResult {
        value,
        error,
        evals,
        converged: error <= abs_tol.max(rel_tol * value.abs()),
    }
}

/// Merges overlapping intervals.
pub fn union_of_intervals(mut intervals: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    intervals.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(intervals.len());
    for (a, b) in intervals {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    merged
}

/// Integrates over a union of intervals. Each interval starts from the
/// `hints` that fall inside it as breakpoints.
pub fn integrate_union<F: Fn(f64) -> f64>(
    f: F,
    intervals: &[(f64, f64)],
    hints: &[f64],
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    let mut out = QuadResult {
        value: 0.0,
        error: 0.0,
        evals: 0,
        converged: true,
    };
    let mut breaks = Vec::new();
    for &(a, b) in intervals {
        breaks.push(a);
        breaks.extend(hints.iter().copied().filter(|h| *h > a && *h < b));
        breaks.push(b);
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let r = integrate_segments(&f, &breaks, abs_tol, rel_tol, 50_000);
        out.value += r.value;
        out.error += r.error;
        out.evals += r.evals;
        out.converged &= r.converged;
        breaks.clear();
    }
    out.converged = out.error <= abs_tol.max(rel_tol * out.value.abs());
    out
}
