//! Parallel core against its sequential path on the same inputs.
//!
//! With the `parallel` feature each workload runs twice: inside a
//! one-thread rayon pool, where every call site takes its sequential
//! branch, and on the default global pool. Without the feature only the
//! sequential fallback is measured, so the two builds can also be compared
//! with `--no-default-features`.

use std::time::Duration;

use criterion::measurement::WallTime;
use criterion::{criterion_group, criterion_main, BenchmarkGroup, BenchmarkId, Criterion};
use roughcadlag::dyadic::{self, Reference};
use roughcadlag::extension;
use roughcadlag::lift::{self, LiftConfig};
use roughcadlag::pvar;
use roughcadlag::simulate::{GeneratorSpec, Model, PathGenerator};
use roughcadlag::CadlagPath;

fn brownian(steps: usize, seed: u64) -> CadlagPath {
    PathGenerator::new(&GeneratorSpec::new(Model::Brownian, 2, 1.0, steps, seed))
        .unwrap()
        .sample(seed)
}

fn configure(group: &mut BenchmarkGroup<'_, WallTime>) {
    group.sample_size(10);
    group.warm_up_time(Duration::from_millis(500));
    group.measurement_time(Duration::from_secs(3));
}

/// Runs `work` under each available execution mode.
fn modes<F: Fn() + Sync>(group: &mut BenchmarkGroup<'_, WallTime>, size: usize, work: F) {
    #[cfg(feature = "parallel")]
    {
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        group.bench_with_input(BenchmarkId::new("sequential", size), &size, |b, _| {
            single.install(|| b.iter(&work))
        });
        let label = format!("parallel-{}", rayon::current_num_threads());
        group.bench_with_input(BenchmarkId::new(label, size), &size, |b, _| b.iter(&work));
    }
    #[cfg(not(feature = "parallel"))]
    group.bench_with_input(BenchmarkId::new("sequential-fallback", size), &size, |b, _| b.iter(&work));
}

fn bench_p_variation(c: &mut Criterion) {
    let mut group = c.benchmark_group("p_variation");
    configure(&mut group);
    for steps in [2048, 8192] {
        let x = brownian(steps, 1);
        modes(&mut group, steps, || {
            std::hint::black_box(pvar::p_variation(&x, 2.5).unwrap());
        });
    }
    group.finish();
}

fn bench_ito_lift(c: &mut Criterion) {
    let mut group = c.benchmark_group("ito_lift");
    configure(&mut group);
    for steps in [1 << 12, 1 << 15] {
        let x = brownian(steps, 2);
        modes(&mut group, steps, || {
            std::hint::black_box(lift::ito_lift(&x, &LiftConfig::default()).unwrap());
        });
    }
    group.finish();
}

fn bench_rate_fit(c: &mut Criterion) {
    let mut group = c.benchmark_group("fit_rate");
    configure(&mut group);
    let steps = 1 << 16;
    let x = brownian(steps, 3);
    let ts = dyadic::default_check_set(1.0, 16);
    modes(&mut group, steps, || {
        std::hint::black_box(dyadic::fit_rate_default(&x, Reference::Fine, &ts, 3, 10).unwrap());
    });
    group.finish();
}

fn bench_batch_generation(c: &mut Criterion) {
    let mut group = c.benchmark_group("generate_batch");
    configure(&mut group);
    let gen = PathGenerator::new(&GeneratorSpec { hurst: 0.75, ..GeneratorSpec::new(Model::Fbm, 2, 1.0, 1024, 0) }).unwrap();
    let seeds: Vec<u64> = (0..64).collect();
    modes(&mut group, seeds.len(), || {
        std::hint::black_box(gen.sample_batch(&seeds));
    });
    group.finish();
}

fn bench_holder_reparam(c: &mut Criterion) {
    let mut group = c.benchmark_group("holder_reparam");
    configure(&mut group);
    let x = brownian(4096, 4);
    modes(&mut group, 4096, || {
        std::hint::black_box(extension::holder_reparam(&x, 2.5).unwrap());
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_p_variation,
    bench_ito_lift,
    bench_rate_fit,
    bench_batch_generation,
    bench_holder_reparam,
);
criterion_main!(benches);
