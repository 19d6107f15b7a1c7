//! Shared fixtures for the criterion benches.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use elver_core::ComplexField;

/// Seeded random complex field.
pub fn random_field(n: usize, pixel: f64, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((n, n), |_| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    ComplexField::from_values(values, pixel).unwrap()
}
