use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rscm_bench::{data, weight};
use rscm_core::estimator::{solve_robust, trace_map, RobustOptions, SymmetricFamily};
use rscm_core::DiagonalWeights;

fn bench_trace_map(c: &mut Criterion) {
    let mut group = c.benchmark_group("trace_map");
    // p < n uses the primal path, p > n the dual one.
    for (p, n) in [(100, 200), (200, 100), (400, 320)] {
        let s = SymmetricFamily::rank_one(data(p, n, 1));
        let delta = DiagonalWeights::ones(n);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{p}x{n}")), &s, |b, s| {
            b.iter(|| trace_map(s, &delta, 1.0).unwrap())
        });
    }
    group.finish();
}

fn bench_solve_robust(c: &mut Criterion) {
    let mut group = c.benchmark_group("solve_robust");
    group.sample_size(10);
    let u = weight();
    for (p, n) in [(100, 80), (500, 400)] {
        let x = data(p, n, 2);
        group.bench_with_input(BenchmarkId::from_parameter(format!("{p}x{n}")), &x, |b, x| {
            b.iter(|| solve_robust(x, &u, &RobustOptions::new(1.0)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_trace_map, bench_solve_robust);
criterion_main!(benches);
