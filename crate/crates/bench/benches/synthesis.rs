use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use elver_core::*;

fn doe_inputs(n: usize) -> (ComplexField, ComplexField) {
    let energy = 15_000.0;
    let lambda = electron_wavelength(energy).unwrap();
    let pixel = 0.5e-9;
    let z1 = 40e-9 * (n as f64 * pixel) / lambda;
    let geometry = ChainGeometry {
        specimen_to_doe: z1,
        doe_to_screen: 0.1,
        beam_diameter_factor: 1.2,
    };
    let phantom = generate_phantom(1, 25e-9, n, pixel, &PhantomParams::default()).unwrap();
    let at_doe = detection::object_wave_at_doe(
        &phantom,
        Orientation::Right,
        &geometry,
        energy,
        &AbsorptionModel::disabled(),
    )
    .unwrap();
    let psi_s = target_wave(n, n, at_doe.wave.pixel_size(), 0.1, (0.0, 0.0), lambda).unwrap();
    (at_doe.wave, psi_s)
}

fn bench_synthesize(c: &mut Criterion) {
    let (psi_o, psi_s) = doe_inputs(256);
    c.bench_function("synthesize_continuous_256", |b| {
        b.iter(|| {
            synthesize_continuous(black_box(&psi_o), black_box(&psi_s), &SynthesisParams::default())
                .unwrap()
        })
    });
}

fn bench_binarize(c: &mut Criterion) {
    let (psi_o, psi_s) = doe_inputs(256);
    let element = synthesize_continuous(&psi_o, &psi_s, &SynthesisParams::default()).unwrap();
    c.bench_function("binarize_median_256", |b| {
        b.iter(|| binarize(black_box(&element), BinarizePolicy::KeptMedian).unwrap())
    });
}

fn bench_phantom(c: &mut Criterion) {
    c.bench_function("generate_phantom_256", |b| {
        let mut seed = 0;
        b.iter(|| {
            seed += 1;
            generate_phantom(seed, 25e-9, 256, 0.5e-9, &PhantomParams::default()).unwrap()
        })
    });
}

criterion_group!(benches, bench_synthesize, bench_binarize, bench_phantom);
criterion_main!(benches);
