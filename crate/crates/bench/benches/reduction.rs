use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ncpgmr::oracle::mc_cross_potential;
use ncpgmr::{
    cross_information_potential, greedy_reduce, ncp_distance, oggmr, MeasureId, OptimizerSettings,
};
use ncpgmr_bench::{random_input, random_pair, scenario};

fn closed_form(c: &mut Criterion) {
    let mut group = c.benchmark_group("ncp_distance");
    for (dim, n) in [(1, 10), (2, 10), (3, 20), (3, 50)] {
        let (p, q) = random_pair(dim, n, 1);
        group.bench_with_input(BenchmarkId::new(format!("d{dim}"), n), &(p, q), |b, (p, q)| {
            b.iter(|| ncp_distance(black_box(p), black_box(q)).unwrap())
        });
    }
    group.finish();
}

fn greedy(c: &mut Criterion) {
    let mut group = c.benchmark_group("greedy_reduce");
    for n in [10, 25, 50] {
        let p = random_input(2, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &p, |b, p| {
            b.iter(|| greedy_reduce(black_box(p), 3).unwrap())
        });
    }
    group.finish();
}

fn refinement(c: &mut Criterion) {
    let p = scenario();
    let opts = OptimizerSettings::default();
    let mut group = c.benchmark_group("oggmr_scenario");
    group.sample_size(20);
    for m in [MeasureId::Ncp, MeasureId::Cs, MeasureId::Ise] {
        group.bench_function(BenchmarkId::new(m.as_str(), 5), |b| {
            b.iter(|| oggmr(black_box(&p), 5, m, &opts).unwrap())
        });
    }
    group.finish();
}

fn closed_form_vs_sampling(c: &mut Criterion) {
    let (p, q) = random_pair(2, 5, 3);
    let mut group = c.benchmark_group("cross_potential");
    group.bench_function("closed_form", |b| {
        b.iter(|| cross_information_potential(black_box(&p), black_box(&q)).unwrap())
    });
    group.sample_size(10);
    group.bench_function("monte_carlo_1e5", |b| {
        b.iter(|| mc_cross_potential(black_box(&p), black_box(&q), 100_000, 7).unwrap())
    });
    group.finish();
}

criterion_group!(benches, closed_form, greedy, refinement, closed_form_vs_sampling);
criterion_main!(benches);
