//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ncpgmr::oracle::{self, OracleConfig};
use ncpgmr::random::random_mixture;
use ncpgmr::{
    cs_divergence, greedy_reduce, ise, kl_numeric, moment_match, ncp_distance, nise, oggmr,
    KlConfig, MeasureId, Mixture, OptimizerSettings, ReductionResult, Scenario,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn report(id: &str, title: &str, elapsed: Duration, o: &Outcome) -> bool {
    println!(
        "{id} {} {title}: {} [{:.2} s]",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    o.pass
}

fn timed<F: FnOnce() -> Outcome>(limit: Option<f64>, f: F) -> (Duration, Outcome) {
    let start = Instant::now();
    let mut o = f();
    let elapsed = start.elapsed();
    if let Some(limit) = limit {
        if elapsed.as_secs_f64() >= limit {
            o.pass = false;
            o.detail.push_str(&format!("; runtime {:.2} s exceeds {limit} s", elapsed.as_secs_f64()));
        }
    }
    (elapsed, o)
}

fn scenario() -> Mixture {
    Scenario::bundled().original
}

fn metric_axioms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sqrt2 = 2f64.sqrt();
    let mut worst_triangle = f64::NEG_INFINITY;
    let mut worst_self = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..1000 {
        let dim = rng.random_range(1..=3);
        let draw = |rng: &mut ChaCha8Rng| {
            let k = rng.random_range(1..=8);
            random_mixture(rng, dim, k)
        };
        let (p, q, r) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
        let pq = ncp_distance(&p, &q).unwrap();
        let qp = ncp_distance(&q, &p).unwrap();
        let pr = ncp_distance(&p, &r).unwrap();
        let qr = ncp_distance(&q, &r).unwrap();
        let pp = ncp_distance(&p, &p).unwrap();
        worst_self = worst_self.max(pp);
        worst_triangle = worst_triangle.max(pr - (pq + qr));
        if pq != qp {
            failures.push(format!("trial {trial}: asymmetric {pq} vs {qp}"));
        }
        for d in [pq, pr, qr] {
            if !(0.0..=sqrt2 + 1e-12).contains(&d) {
                failures.push(format!("trial {trial}: out of range {d}"));
            }
        }
        if pp > 1e-9 {
            failures.push(format!("trial {trial}: d(P,P) = {pp:e}"));
        }
        if pr > pq + qr + 1e-9 {
            failures.push(format!("trial {trial}: triangle violated by {:e}", pr - pq - qr));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "1000 triples, max d(P,P) {worst_self:.1e}, max triangle excess {worst_triangle:.1e}{}",
            failures.first().map(|f| format!(", first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn closed_form_vs_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_abs = 0.0f64;
    let mut failures = Vec::new();
    for trial in 0..200 {
        let (kp, kq) = (rng.random_range(1..=6), rng.random_range(1..=6));
        let p = random_mixture(&mut rng, 1, kp);
        let q = random_mixture(&mut rng, 1, kq);
        let cfg = OracleConfig::default();
        for m in MeasureId::CLOSED_FORM {
            let exact = m.from_potentials(&ncpgmr::Potentials::between(&p, &q).unwrap()).unwrap();
            let est = oracle::oracle_measure(&p, &q, m, &cfg).unwrap();
            let err = (exact - est.value).abs();
            worst_abs = worst_abs.max(err);
            if err > 1e-7 {
                failures.push(format!("1D trial {trial} {m}: {exact} vs {}", est.value));
            }
        }
    }
    let mut worst_z = 0.0f64;
    for trial in 0..50u64 {
        let dim = rng.random_range(2..=3);
        let (kp, kq) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let p = random_mixture(&mut rng, dim, kp);
        let q = random_mixture(&mut rng, dim, kq);
        let cfg = OracleConfig {
            n_samples: 1_000_000,
            seed: 1000 + trial,
            ..OracleConfig::default()
        };
        let pot = oracle::oracle_potentials(&p, &q, &cfg).unwrap();
        let exact = ncpgmr::Potentials::between(&p, &q).unwrap();
        for m in MeasureId::CLOSED_FORM {
            let value = m.from_potentials(&exact).unwrap();
            let est = oracle::measure_from_potentials(&pot, m, false, &cfg).unwrap();
            let z = (value - est.value).abs() / est.standard_error;
            worst_z = worst_z.max(z);
            if z > 4.0 {
                failures.push(format!("{dim}D trial {trial} {m}: z = {z:.2}"));
            }
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "200 1D pairs max |closed - quadrature| {worst_abs:.1e}; 50 2-3D pairs max z {worst_z:.2}{}",
            failures.first().map(|f| format!(", first failure: {f}")).unwrap_or_default()
        ),
    )
}

const TABLE_N1: [(MeasureId, f64); 4] = [
    (MeasureId::Ise, 0.11084),
    (MeasureId::Nise, 0.11237),
    (MeasureId::Cs, 0.11479),
    (MeasureId::Ncp, 0.46572),
];
const TABLE_N1_KL: f64 = 0.4256;

fn closed_form_value(m: MeasureId, p: &Mixture, q: &Mixture) -> f64 {
    match m {
        MeasureId::Ise => ise(p, q).unwrap(),
        MeasureId::Nise => nise(p, q).unwrap(),
        MeasureId::Cs => cs_divergence(p, q).unwrap(),
        MeasureId::Ncp => ncp_distance(p, q).unwrap(),
        MeasureId::Kl => unreachable!(),
    }
}

fn single_gaussian_row() -> Outcome {
    let p = scenario();
    let mm = Mixture::single(moment_match(&p));
    let mut pass = true;
    let mut cells = Vec::new();
    for (m, expected) in TABLE_N1 {
        let v = closed_form_value(m, &p, &mm);
        let ok = (v - expected).abs() <= 5e-4;
        pass &= ok;
        cells.push(format!("{m} {v:.5} (want {expected}{})", if ok { "" } else { " x" }));
    }
    let kl = kl_numeric(&mm, &p, &KlConfig::default()).unwrap().value;
    let ok = (kl - TABLE_N1_KL).abs() <= 2e-2;
    pass &= ok;
    cells.push(format!("kl {kl:.4} (want {TABLE_N1_KL}{})", if ok { "" } else { " x" }));
    Outcome::new(pass, format!("moment match: {}", cells.join(", ")))
}

/// Per-measure single-Gaussian optimum. Informational; not a criterion.
fn single_gaussian_optima() -> String {
    let p = scenario();
    let opts = OptimizerSettings::default();
    TABLE_N1
        .iter()
        .map(|&(m, expected)| {
            let r = oggmr(&p, 1, m, &opts).unwrap();
            format!("{m} {:.5} (table {expected})", r.objective)
        })
        .collect::<Vec<_>>()
        .join(", ")
}

const TABLE_BOUNDS: [(usize, MeasureId, f64); 5] = [
    (3, MeasureId::Ncp, 0.2300),
    (5, MeasureId::Ncp, 0.0200),
    (3, MeasureId::Cs, 0.0260),
    (5, MeasureId::Cs, 2e-4),
    (5, MeasureId::Ise, 1.5e-3),
];

fn table_rows(runs: &mut Vec<(Mixture, ReductionResult)>) -> Outcome {
    let p = scenario();
    let opts = OptimizerSettings::default();
    let mut pass = true;
    let mut cells = Vec::new();
    for (n, m, bound) in TABLE_BOUNDS {
        let r = oggmr(&p, n, m, &opts).unwrap();
        let ok = r.objective <= bound;
        pass &= ok;
        cells.push(format!("N={n} {m} {:.5} (<= {bound}{})", r.objective, if ok { "" } else { " x" }));
        runs.push((p.clone(), r));
    }
    Outcome::new(pass, cells.join(", "))
}

fn moments_close(a: &Mixture, b: &Mixture) -> f64 {
    let dm = (a.mean() - b.mean()).abs().max();
    let dc = (a.covariance() - b.covariance()).abs().max();
    dm.max(dc)
}

fn greedy_moments() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mixtures = vec![scenario()];
    for _ in 0..200 {
        let dim = rng.random_range(1..=3);
        let k = rng.random_range(1..=10);
        mixtures.push(random_mixture(&mut rng, dim, k));
    }
    let mut worst = 0.0f64;
    for p in &mixtures {
        for n in 1..=p.len() {
            let (q, _) = greedy_reduce(p, n).unwrap();
            worst = worst.max(moments_close(p, &q));
            if n == 1 {
                let mm = moment_match(p);
                let g = &q.components()[0];
                let dm = (g.mean().as_vector() - mm.mean().as_vector()).abs().max();
                let dc = (g.cov().matrix() - mm.cov().matrix()).abs().max();
                worst = worst.max(dm.max(dc));
            }
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("{} mixtures at every target, max moment deviation {worst:.1e}", mixtures.len()),
    )
}

fn random_refinements(runs: &mut Vec<(Mixture, ReductionResult)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let opts = OptimizerSettings::default();
    for i in 0..100 {
        let dim = rng.random_range(1..=2);
        let k = rng.random_range(3..=8);
        let p = random_mixture(&mut rng, dim, k);
        let n = rng.random_range(1..k);
        let m = MeasureId::CLOSED_FORM[i % 4];
        let r = oggmr(&p, n, m, &opts).unwrap();
        runs.push((p, r));
    }
}

fn monotone_refinement(runs: &[(Mixture, ReductionResult)]) -> Outcome {
    let mut failures = Vec::new();
    for (i, (_, r)) in runs.iter().enumerate() {
        if r.objective_trace.windows(2).any(|w| w[1] > w[0] + 1e-12) {
            failures.push(format!("run {i}: trace increases"));
        }
        if r.objective > r.initial_objective {
            failures.push(format!(
                "run {i}: final {} above greedy {}",
                r.objective, r.initial_objective
            ));
        }
    }
    Outcome::new(
        failures.is_empty(),
        format!(
            "{} refined runs{}",
            runs.len(),
            failures.first().map(|f| format!(", first failure: {f}")).unwrap_or_default()
        ),
    )
}

fn cs_ncp_identity(runs: &[(Mixture, ReductionResult)]) -> Outcome {
    let mut worst = 0.0f64;
    for (p, r) in runs {
        let cs = cs_divergence(p, &r.reduced).unwrap();
        let ncp = ncp_distance(p, &r.reduced).unwrap();
        worst = worst.max(((2.0 - 2.0 * (-cs).exp()).sqrt() - ncp).abs());
    }
    let table = (2.0 - 2.0 * (-0.11479f64).exp()).sqrt();
    let table_ok = (table - 0.46572).abs() <= 5e-4;
    Outcome::new(
        worst <= 1e-9 && table_ok,
        format!(
            "{} results, max deviation {worst:.1e}; table columns map to {table:.5}",
            runs.len()
        ),
    )
}

fn runtime_scale() -> Outcome {
    let p = scenario();
    let opts = OptimizerSettings::default();
    let runs = 20;
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let start = Instant::now();
        let r = oggmr(&p, 5, MeasureId::Ncp, &opts).unwrap();
        times.push(start.elapsed().as_secs_f64());
        std::hint::black_box(r);
    }
    let worst = times.iter().copied().fold(0.0, f64::max);
    let mean = times.iter().sum::<f64>() / runs as f64;

    let (q, _) = greedy_reduce(&p, 5).unwrap();
    let reps = 2000;
    let start = Instant::now();
    for _ in 0..reps {
        std::hint::black_box(ncp_distance(&p, &q).unwrap());
    }
    let closed = start.elapsed().as_secs_f64() / reps as f64;
    let start = Instant::now();
    let samples = 100_000;
    for (a, b, seed) in [(&p, &p, 0), (&q, &q, 1), (&p, &q, 2)] {
        std::hint::black_box(oracle::mc_cross_potential(a, b, samples, seed).unwrap());
    }
    let mc = start.elapsed().as_secs_f64();
    let ratio = mc / closed;
    Outcome::new(
        worst < 1.0 && ratio >= 100.0,
        format!(
            "N=5 ncp mean {mean:.4} s, max {worst:.4} s over {runs} runs; closed form {:.2} us vs Monte Carlo ({samples} samples) {:.1} ms, ratio {ratio:.0}x",
            closed * 1e6,
            mc * 1e3
        ),
    )
}

fn main() -> ExitCode {
    let mut all = true;
    let mut runs = Vec::new();

    let (t, o) = timed(Some(30.0), metric_axioms);
    all &= report("A1", "metric axioms", t, &o);
    let (t, o) = timed(Some(120.0), closed_form_vs_oracle);
    all &= report("A2", "closed form vs oracle", t, &o);
    let (t, o) = timed(Some(1.0), single_gaussian_row);
    all &= report("A3", "single-Gaussian row", t, &o);
    let start = Instant::now();
    println!(
        "   note: per-measure single-Gaussian optima: {} [{:.2} s]",
        single_gaussian_optima(),
        start.elapsed().as_secs_f64()
    );
    let (t, o) = timed(Some(30.0), || table_rows(&mut runs));
    all &= report("A4", "reduction to 3 and 5 components", t, &o);
    let (t, o) = timed(None, greedy_moments);
    all &= report("A5", "greedy moment preservation", t, &o);
    let (t, o) = timed(None, || {
        random_refinements(&mut runs);
        monotone_refinement(&runs)
    });
    all &= report("A6", "refinement monotonicity", t, &o);
    let (t, o) = timed(None, || cs_ncp_identity(&runs));
    all &= report("A7", "cs/ncp identity", t, &o);
    let (t, o) = timed(None, runtime_scale);
    all &= report("A8", "runtime scale", t, &o);

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
