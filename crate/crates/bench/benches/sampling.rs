use criterion::{criterion_group, criterion_main, Criterion};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use elver_core::*;

fn test_distribution(n: usize, t: f64) -> ScreenDistribution {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let intensity = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
    let total: f64 = intensity.iter().sum();
    ScreenDistribution::new(
        intensity,
        1e-4,
        total / t,
        ChannelTransmission { specimen: t, element: 1.0 },
    )
    .unwrap()
}

fn bench_sample_event(c: &mut Criterion) {
    let dist = test_distribution(256, 0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    c.bench_function("sample_event_256x256", |b| {
        b.iter(|| sample_event(black_box(&dist), &mut rng))
    });
}

fn bench_run_trial(c: &mut Criterion) {
    // mildly informative pair so trials take a realistic number of events
    let n = 128;
    let mut right = Array2::from_elem((n, n), 1.0);
    right[[64, 64]] = 400.0;
    let rt: f64 = right.iter().sum();
    let right = right.mapv(|v| v / rt);
    let wrong = Array2::from_elem((n, n), 1.0 / (n * n) as f64);
    let mk = |pmf: Array2<f64>| {
        let total: f64 = pmf.iter().sum();
        ScreenDistribution::new(
            pmf,
            1e-4,
            total / 0.5,
            ChannelTransmission { specimen: 0.7, element: 0.5 / 0.7 },
        )
        .unwrap()
    };
    let pair = HypothesisPair::new(mk(right), mk(wrong), 0.5).unwrap();
    c.bench_function("run_trial", |b| {
        let mut stream = 0;
        b.iter(|| {
            stream += 1;
            let mut rng = trial_rng(11, stream);
            run_trial(
                Orientation::Right,
                &pair,
                0.95,
                100_000,
                &mut rng,
                UpdateMode::DetectionsOnly,
            )
            .unwrap()
        })
    });
}

criterion_group!(benches, bench_sample_event, bench_run_trial);
criterion_main!(benches);
