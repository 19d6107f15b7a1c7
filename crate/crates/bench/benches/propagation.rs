use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use elver_bench::random_field;
use elver_core::{propagate_angular_spectrum, propagate_fresnel_scaled};

fn bench_angular_spectrum(c: &mut Criterion) {
    let mut group = c.benchmark_group("angular_spectrum");
    for n in [128usize, 256, 512] {
        let field = random_field(n, 0.5e-9, 1);
        group.bench_with_input(BenchmarkId::from_parameter(n), &field, |b, f| {
            b.iter(|| propagate_angular_spectrum(black_box(f), 2e-6, 10e-12).unwrap())
        });
    }
    group.finish();
}

fn bench_fresnel_scaled(c: &mut Criterion) {
    let mut group = c.benchmark_group("fresnel_scaled");
    for n in [128usize, 256, 512] {
        let field = random_field(n, 0.5e-9, 2);
        group.bench_with_input(BenchmarkId::from_parameter(n), &field, |b, f| {
            b.iter(|| propagate_fresnel_scaled(black_box(f), 1e-3, 10e-12).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_angular_spectrum, bench_fresnel_scaled);
criterion_main!(benches);
