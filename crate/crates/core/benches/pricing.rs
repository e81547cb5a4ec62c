//! Pricing on one worker thread against the default rayon pool. Build with
//! `--no-default-features` to time the sequential code path itself.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use inthedge_core::grid::{grid_backward_price, GridSpec};
use inthedge_core::pricer::one_step_function;
use inthedge_core::{backward_price, PiecewiseAffine, SupportModel};
use rayon::{ThreadPool, ThreadPoolBuilder};

fn pools() -> Vec<(&'static str, ThreadPool)> {
    vec![
        (
            "one_thread",
            ThreadPoolBuilder::new().num_threads(1).build().unwrap(),
        ),
        ("default_pool", ThreadPoolBuilder::new().build().unwrap()),
    ]
}

fn call() -> PiecewiseAffine {
    PiecewiseAffine::call(500.0).unwrap()
}

fn exact(c: &mut Criterion) {
    let mut group = c.benchmark_group("exact");
    group.sample_size(10);
    let wide = call().scale(200.0);
    let model = SupportModel::constant(0.9, 1.2, 10).unwrap();
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("one_step_n200", name), |b| {
            b.iter(|| pool.install(|| one_step_function(&wide, 0.9, 1.2).unwrap()))
        });
        group.bench_function(BenchmarkId::new("backward_T10_n10", name), |b| {
            b.iter(|| pool.install(|| backward_price(&call(), 10, &model).unwrap()))
        });
    }
    group.finish();
}

fn grid(c: &mut Criterion) {
    let mut group = c.benchmark_group("grid");
    group.sample_size(10);
    let model = SupportModel::constant(0.99, 1.01, 20).unwrap();
    let spec = GridSpec::new(0.1, 1000.0).unwrap();
    for (name, pool) in pools() {
        group.bench_function(BenchmarkId::new("backward_T20", name), |b| {
            b.iter(|| pool.install(|| grid_backward_price(&call(), 1, &model, &spec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, exact, grid);
criterion_main!(benches);
