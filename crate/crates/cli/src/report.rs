//! Benchmark report: one cell per (target, measure) with objective and timing.

use std::fmt::Write as _;

use ncpgmr::optim::Termination;
use ncpgmr::{MeasureId, OptimizerSettings};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkCell {
    pub target: usize,
    pub measure: MeasureId,
    pub objective: Option<f64>,
    pub greedy_objective: Option<f64>,
    pub iterations: Option<usize>,
    pub termination: Option<Termination>,
    /// Mean wall time of the reduction call, seconds.
    pub time_mean: f64,
    /// Sample standard deviation of the wall time; 0 for a single run.
    pub time_stddev: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: String,
    /// SHA-256 of the scenario file bytes.
    pub fixture_sha256: String,
    pub seed: u64,
    pub runs: usize,
    pub optimizer: OptimizerSettings,
    pub cells: Vec<BenchmarkCell>,
}

/// Mean and sample standard deviation.
pub fn mean_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl BenchmarkReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "target,measure,objective,greedy_objective,iterations,time_mean,time_stddev,error\n",
        );
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.target,
                c.measure,
                opt(c.objective),
                opt(c.greedy_objective),
                c.iterations.map(|i| i.to_string()).unwrap_or_default(),
                c.time_mean,
                c.time_stddev,
                c.error.as_deref().unwrap_or("").replace(',', ";"),
            );
        }
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "scenario {} (sha256 {}), runs {}, seed {}\n",
            self.scenario,
            &self.fixture_sha256[..12.min(self.fixture_sha256.len())],
            self.runs,
            self.seed
        );
        let _ = writeln!(
            out,
            "{:>3}  {:<5} {:>12} {:>12} {:>6}  {:>21}",
            "N", "meas", "objective", "greedy", "iters", "time (s)"
        );
        for c in &self.cells {
            match &c.error {
                Some(e) => {
                    let _ = writeln!(out, "{:>3}  {:<5} error: {e}", c.target, c.measure.as_str());
                }
                None => {
                    let _ = writeln!(
                        out,
                        "{:>3}  {:<5} {:>12} {:>12} {:>6}  {:>10.6} ± {:<8.6}{}",
                        c.target,
                        c.measure.as_str(),
                        c.objective.map(crate::sig6).unwrap_or_default(),
                        c.greedy_objective.map(crate::sig6).unwrap_or_default(),
                        c.iterations.map(|i| i.to_string()).unwrap_or_default(),
                        c.time_mean,
                        c.time_stddev,
                        match c.termination {
                            Some(t) if t.is_warning() => "  (optimizer warning)",
                            _ => "",
                        }
                    );
                }
            }
        }
        out
    }
}
