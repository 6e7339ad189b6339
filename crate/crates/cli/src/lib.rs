//! Command implementations behind the `ncpgmr` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 dimension error, 4 optimizer
//! warning (the best iterate is still written).

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use ncpgmr::greedy::greedy_reduce;
use ncpgmr::refine::{greedy_only, refine};
use ncpgmr::{
    evaluate, kl_numeric, GmrError, KlConfig, MeasureId, Mixture, OptimizerSettings,
    ReductionResult, Scenario,
};
use sha2::{Digest, Sha256};

pub mod report;

use report::{mean_stddev, BenchmarkCell, BenchmarkReport};

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_DIMENSION: i32 = 3;
pub const EXIT_OPTIMIZER: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ncpgmr", version, about = "NCP distances and Gaussian mixture reduction")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check that a mixture or scenario file is well formed.
    Validate { file: PathBuf },
    /// Print a dissimilarity between two mixtures.
    Distance {
        p: PathBuf,
        q: PathBuf,
        #[arg(long, default_value = "ncp")]
        measure: MeasureId,
        /// Seed for sampled estimates (kl above one dimension).
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reduce a mixture to fewer components.
    Reduce {
        input: PathBuf,
        /// Number of components to keep.
        #[arg(long = "n", short = 'n')]
        n: usize,
        #[arg(long, default_value = "ncp")]
        measure: MeasureId,
        /// Stop after greedy merging.
        #[arg(long)]
        no_refine: bool,
        /// Print the merge sequence and the objective trace.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the reduced mixture here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reduce every (target, measure) pair of a scenario and time it.
    Benchmark {
        /// Scenario file; the bundled ten-component scenario if omitted.
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        optimizer: OptimizerArgs,
        /// Machine-readable report; `.csv` selects CSV, anything else JSON.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate one-dimensional densities on a uniform grid as CSV.
    Density {
        original: PathBuf,
        reduced: Vec<PathBuf>,
        #[arg(long, allow_hyphen_values = true)]
        x_min: Option<f64>,
        #[arg(long, allow_hyphen_values = true)]
        x_max: Option<f64>,
        #[arg(long, default_value_t = 200)]
        points: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, Args)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = OptimizerSettings::default().max_iters)]
    pub max_iters: usize,
    /// Relative-decrease stopping tolerance.
    #[arg(long, default_value_t = OptimizerSettings::default().rel_tol)]
    pub tol: f64,
    #[arg(long, default_value_t = OptimizerSettings::default().fd_step)]
    pub fd_step: f64,
}

impl OptimizerArgs {
    pub fn settings(&self) -> Result<OptimizerSettings, CliError> {
        if !(self.tol >= 0.0 && self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(CliError::input(format!(
                "--tol must be >= 0 and --fd-step > 0 (got {}, {})",
                self.tol, self.fd_step
            )));
        }
        Ok(OptimizerSettings {
            max_iters: self.max_iters,
            rel_tol: self.tol,
            fd_step: self.fd_step,
            ..OptimizerSettings::default()
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INPUT,
            message: message.into(),
        }
    }

    fn from_gmr(context: &str, e: GmrError) -> Self {
        Self {
            code: if e.is_dimension_error() {
                EXIT_DIMENSION
            } else {
                EXIT_INPUT
            },
            message: if context.is_empty() {
                e.to_string()
            } else {
                format!("{context}: {e}")
            },
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::input(format!("{}: {e}", path.display()))
    }
}

type CliResult<T> = Result<T, CliError>;

/// Formats with six significant digits; zero prints as `0.000000`.
pub fn sig6(v: f64) -> String {
    if v == 0.0 {
        return "0.000000".into();
    }
    if !v.is_finite() {
        return v.to_string();
    }
    let magnitude = v.abs().log10().floor() as i32;
    if !(-5..=15).contains(&magnitude) {
        return format!("{v:.5e}");
    }
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{v:.decimals$}")
}

/// Either kind of document accepted wherever a mixture is expected.
enum Loaded {
    Mixture(Mixture),
    Scenario(Scenario),
}

fn load(path: &Path) -> CliResult<(Loaded, String)> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let ctx = path.display().to_string();
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::from_gmr(&ctx, GmrError::Parse(e.to_string())))?;
    let loaded = if value.get("targets").is_some() {
        Loaded::Scenario(Scenario::from_json(&text).map_err(|e| CliError::from_gmr(&ctx, e))?)
    } else {
        Loaded::Mixture(Mixture::from_json(&text).map_err(|e| CliError::from_gmr(&ctx, e))?)
    };
    Ok((loaded, text))
}

fn load_mixture(path: &Path) -> CliResult<Mixture> {
    Ok(match load(path)?.0 {
        Loaded::Mixture(m) => m,
        Loaded::Scenario(s) => s.original,
    })
}

fn write_output(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Runs a parsed command. `Ok` carries the exit code (0 or 4).
pub fn run<O: Write, E: Write>(cli: Cli, out: &mut O, err: &mut E) -> CliResult<i32> {
    let mut buf = String::new();
    let mut log = String::new();
    let code = match cli.command {
        Command::Validate { file } => cmd_validate(&file, &mut buf)?,
        Command::Distance {
            p,
            q,
            measure,
            seed,
        } => cmd_distance(&p, &q, measure, seed, &mut buf)?,
        Command::Reduce {
            input,
            n,
            measure,
            no_refine,
            trace,
            optimizer,
            seed,
            out: out_path,
        } => {
            let opts = optimizer.settings()?;
            let (reduced, summary, code) =
                cmd_reduce(&input, n, measure, !no_refine, &opts, trace, seed)?;
            match out_path {
                Some(path) => {
                    write_output(&path, &reduced)?;
                    buf.push_str(&summary);
                }
                None => {
                    buf.push_str(&reduced);
                    log.push_str(&summary);
                }
            }
            code
        }
        Command::Benchmark {
            scenario,
            runs,
            seed,
            optimizer,
            out: out_path,
        } => {
            let opts = optimizer.settings()?;
            let report = cmd_benchmark(scenario.as_deref(), runs, seed, &opts)?;
            buf.push_str(&report.to_table());
            if let Some(path) = out_path {
                let text = if path.extension().is_some_and(|e| e == "csv") {
                    report.to_csv()
                } else {
                    report.to_json()
                };
                write_output(&path, &text)?;
            }
            0
        }
        Command::Density {
            original,
            reduced,
            x_min,
            x_max,
            points,
            out: out_path,
        } => {
            let csv = cmd_density(&original, &reduced, x_min, x_max, points)?;
            match out_path {
                Some(path) => write_output(&path, &csv)?,
                None => buf.push_str(&csv),
            }
            0
        }
    };
    out.write_all(buf.as_bytes())
        .and_then(|_| err.write_all(log.as_bytes()))
        .map_err(|e| CliError::input(format!("write failed: {e}")))?;
    Ok(code)
}

pub fn cmd_validate(path: &Path, out: &mut String) -> CliResult<i32> {
    match load(path)?.0 {
        Loaded::Mixture(m) => {
            let _ = writeln!(
                out,
                "ok: mixture with {} components in {} dimension(s)",
                m.len(),
                m.dim()
            );
        }
        Loaded::Scenario(s) => {
            let measures: Vec<&str> = s.measures.iter().map(|m| m.as_str()).collect();
            let _ = writeln!(
                out,
                "ok: scenario {} with {} components in {} dimension(s), targets {:?}, measures [{}]",
                s.name,
                s.original.len(),
                s.original.dim(),
                s.targets,
                measures.join(", ")
            );
        }
    }
    Ok(0)
}

pub fn cmd_distance(p: &Path, q: &Path, measure: MeasureId, seed: u64, out: &mut String) -> CliResult<i32> {
    let (pm, qm) = (load_mixture(p)?, load_mixture(q)?);
    let kl = KlConfig {
        seed,
        ..KlConfig::default()
    };
    let value = evaluate(measure, &pm, &qm, &kl).map_err(|e| CliError::from_gmr("", e))?;
    let _ = writeln!(out, "{}", sig6(value));
    Ok(0)
}

/// The measure refinement optimizes; `kl` has no closed form and rides on `ncp`.
fn driving_measure(measure: MeasureId) -> MeasureId {
    if measure.is_closed_form() {
        measure
    } else {
        MeasureId::Ncp
    }
}

/// KL of the reduced mixture against the original.
fn reported_kl(original: &Mixture, reduced: &Mixture, seed: u64) -> CliResult<f64> {
    let cfg = KlConfig {
        seed,
        ..KlConfig::default()
    };
    Ok(kl_numeric(reduced, original, &cfg)
        .map_err(|e| CliError::from_gmr("", e))?
        .value)
}

/// Returns (reduced mixture document, summary text, exit code).
pub fn cmd_reduce(
    input: &Path,
    n: usize,
    measure: MeasureId,
    refine_flag: bool,
    opts: &OptimizerSettings,
    trace: bool,
    seed: u64,
) -> CliResult<(String, String, i32)> {
    let p = load_mixture(input)?;
    let drive = driving_measure(measure);
    let gmr = |e| CliError::from_gmr("", e);
    let (init, merges) = greedy_reduce(&p, n).map_err(gmr)?;
    let result: ReductionResult = if refine_flag {
        refine(&p, &init, drive, opts).map_err(gmr)?
    } else {
        greedy_only(&p, n, drive).map_err(gmr)?
    };

    let mut summary = String::new();
    let (before, after) = if measure == MeasureId::Kl {
        (reported_kl(&p, &init, seed)?, reported_kl(&p, &result.reduced, seed)?)
    } else {
        (result.initial_objective, result.objective)
    };
    let _ = writeln!(summary, "greedy objective ({measure}): {}", sig6(before));
    if refine_flag {
        let _ = writeln!(summary, "refined objective ({measure}): {}", sig6(after));
        let _ = writeln!(summary, "iterations: {}", result.iterations);
        if let Some(t) = result.termination {
            let _ = writeln!(summary, "termination: {}", serde_json::to_string(&t).unwrap().trim_matches('"'));
        }
        if drive != measure {
            let _ = writeln!(summary, "refined under {drive}");
        }
    }
    if trace {
        let _ = writeln!(summary, "merge trace: {}", serde_json::to_string(&merges).unwrap());
        let _ = writeln!(
            summary,
            "objective trace: {}",
            serde_json::to_string(&result.objective_trace).unwrap()
        );
    }
    let code = match result.termination {
        Some(t) if t.is_warning() => {
            let _ = writeln!(
                summary,
                "warning: optimizer stopped early ({}); best iterate written",
                serde_json::to_string(&t).unwrap().trim_matches('"')
            );
            EXIT_OPTIMIZER
        }
        _ => 0,
    };
    let mut doc = result.reduced.to_json();
    doc.push('\n');
    Ok((doc, summary, code))
}

pub fn cmd_benchmark(
    scenario: Option<&Path>,
    runs: usize,
    seed: u64,
    opts: &OptimizerSettings,
) -> CliResult<BenchmarkReport> {
    if runs == 0 {
        return Err(CliError::input("--runs must be at least 1"));
    }
    let (sc, bytes) = match scenario {
        Some(path) => match load(path)? {
            (Loaded::Scenario(s), text) => (s, text),
            (Loaded::Mixture(_), _) => {
                return Err(CliError::input(format!(
                    "{}: expected a scenario file (with name, targets, measures)",
                    path.display()
                )))
            }
        },
        None => (Scenario::bundled(), Scenario::bundled_json().to_string()),
    };
    let hash = Sha256::digest(bytes.as_bytes());
    let fixture_sha256 = hash.iter().map(|b| format!("{b:02x}")).collect();

    let mut cells = Vec::new();
    for &target in &sc.targets {
        for &measure in &sc.measures {
            cells.push(benchmark_cell(&sc.original, target, measure, runs, seed, opts));
        }
    }
    Ok(BenchmarkReport {
        scenario: sc.name,
        fixture_sha256,
        seed,
        runs,
        optimizer: *opts,
        cells,
    })
}

fn benchmark_cell(
    p: &Mixture,
    target: usize,
    measure: MeasureId,
    runs: usize,
    seed: u64,
    opts: &OptimizerSettings,
) -> BenchmarkCell {
    let mut cell = BenchmarkCell {
        target,
        measure,
        objective: None,
        greedy_objective: None,
        iterations: None,
        termination: None,
        time_mean: 0.0,
        time_stddev: 0.0,
        error: None,
    };
    let drive = driving_measure(measure);
    let mut times = Vec::with_capacity(runs);
    let mut first: Option<ReductionResult> = None;
    for _ in 0..runs {
        let start = Instant::now();
        let r = ncpgmr::oggmr(p, target, drive, opts);
        times.push(start.elapsed().as_secs_f64());
        match r {
            Ok(r) => match &first {
                Some(f) if f.objective != r.objective => {
                    cell.error = Some("objective changed between runs".into());
                    return cell;
                }
                Some(_) => {}
                None => first = Some(r),
            },
            Err(e) => {
                cell.error = Some(e.to_string());
                return cell;
            }
        }
    }
    let r = first.expect("runs >= 1");
    let values = if measure == MeasureId::Kl {
        let init = greedy_reduce(p, target).map(|(m, _)| m);
        match init.map_err(|e| CliError::from_gmr("", e)).and_then(|init| {
            Ok((reported_kl(p, &r.reduced, seed)?, reported_kl(p, &init, seed)?))
        }) {
            Ok(v) => v,
            Err(e) => {
                cell.error = Some(e.message);
                return cell;
            }
        }
    } else {
        (r.objective, r.initial_objective)
    };
    let (mean, sd) = mean_stddev(&times);
    cell.objective = Some(values.0);
    cell.greedy_objective = Some(values.1);
    cell.iterations = Some(r.iterations);
    cell.termination = r.termination;
    cell.time_mean = mean;
    cell.time_stddev = sd;
    cell
}

fn file_label(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn cmd_density(
    original: &Path,
    reduced: &[PathBuf],
    x_min: Option<f64>,
    x_max: Option<f64>,
    points: usize,
) -> CliResult<String> {
    let mut paths = vec![original.to_path_buf()];
    paths.extend(reduced.iter().cloned());
    let mixtures = paths
        .iter()
        .map(|p| load_mixture(p))
        .collect::<CliResult<Vec<_>>>()?;
    for (path, m) in paths.iter().zip(&mixtures) {
        if m.dim() != 1 {
            return Err(CliError::from_gmr(
                &path.display().to_string(),
                GmrError::UnsupportedDimension(m.dim()),
            ));
        }
    }
    if points < 2 {
        return Err(CliError::input("--points must be at least 2"));
    }
    // Default range: four standard deviations around every component.
    let comps = || mixtures.iter().flat_map(|m| m.components().iter());
    let spread = |c: &ncpgmr::GaussianComponent| 4.0 * c.cov().matrix()[(0, 0)].sqrt();
    let lo = x_min.unwrap_or_else(|| {
        comps()
            .map(|c| c.mean().as_slice()[0] - spread(c))
            .fold(f64::INFINITY, f64::min)
    });
    let hi = x_max.unwrap_or_else(|| {
        comps()
            .map(|c| c.mean().as_slice()[0] + spread(c))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    if !(lo < hi) {
        return Err(CliError::input(format!("empty range [{lo}, {hi}]")));
    }

    let mut csv = String::from("x");
    for p in &paths {
        csv.push(',');
        csv.push_str(&file_label(p));
    }
    csv.push('\n');
    let step = (hi - lo) / (points - 1) as f64;
    for i in 0..points {
        let x = if i == points - 1 { hi } else { lo + step * i as f64 };
        csv.push_str(&x.to_string());
        let at = ncpgmr::MeanVector::scalar(x);
        for m in &mixtures {
            let v = ncpgmr::pdf_eval(m, &at).expect("dimension checked");
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    Ok(csv)
}
