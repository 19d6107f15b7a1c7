//! Complex scalar wavefields, electron beam parameters, and paraxial
//! free-space propagation.
//!
//! Two propagators cover the whole simulation chain:
//!
//! * [`propagate_angular_spectrum`] — same-grid hops. Exact transfer
//!   function `exp(i z sqrt(k0^2 - kx^2 - ky^2))`, unitary within the
//!   propagating band, valid while the transfer-function phase is sampled
//!   below Nyquist (see [`angular_spectrum_max_distance`]).
//! * [`propagate_fresnel_scaled`] — single-transform Fresnel propagator
//!   whose output pixel is `lambda*z/(n*dx)`. This is what bridges the
//!   nm-scale specimen grid to the um-scale element plane and the mm-scale
//!   screen in one hop.
//!
//! Global phase is never constrained; compare fields with
//! [`rms_diff_mod_phase`].

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::constants::{ELECTRON_MASS, ELEMENTARY_CHARGE, LIGHT_SPEED, PLANCK};
use crate::error::{CoreError, Result};
use crate::fft::{fft2_centered, Direction};

/// Relativistic de Broglie wavelength of an electron, in meters.
///
/// `lambda = h / sqrt(2 m0 e V (1 + e V / (2 m0 c^2)))` with `V` the
/// accelerating voltage in volts (numerically equal to the kinetic
/// energy in eV).
pub fn electron_wavelength(energy_ev: f64) -> Result<f64> {
    if !(energy_ev > 0.0) || !energy_ev.is_finite() {
        return Err(CoreError::Domain(format!(
            "electron energy must be positive and finite, got {energy_ev} eV"
        )));
    }
    let ev = energy_ev * ELEMENTARY_CHARGE;
    let rel = 1.0 + ev / (2.0 * ELECTRON_MASS * LIGHT_SPEED * LIGHT_SPEED);
    Ok(PLANCK / (2.0 * ELECTRON_MASS * ev * rel).sqrt())
}

/// Electron beam energy and the derived wavelength.
#[derive(Debug, Clone, Copy)]
pub struct BeamParameters {
    pub energy_ev: f64,
    pub wavelength: f64,
}

impl BeamParameters {
    pub fn new(energy_ev: f64) -> Result<Self> {
        Ok(Self {
            energy_ev,
            wavelength: electron_wavelength(energy_ev)?,
        })
    }
}

/// A 2D complex amplitude grid with a physical pixel size.
///
/// Values are stored row-major as `(ny, nx)`; the optical axis crosses the
/// grid at pixel `(ny/2, nx/2)`. Fields are immutable after construction:
/// every operation returns a new field.
#[derive(Debug, Clone)]
pub struct ComplexField {
    nx: usize,
    ny: usize,
    pixel_size: f64,
    values: Array2<Complex64>,
}

impl ComplexField {
    /// Wrap a value grid. Validates dimensions, pixel size, and finiteness.
    pub fn from_values(values: Array2<Complex64>, pixel_size: f64) -> Result<Self> {
        let (ny, nx) = values.dim();
        if nx == 0 || ny == 0 {
            return Err(CoreError::Shape("field must be non-empty".into()));
        }
        if !(pixel_size > 0.0) || !pixel_size.is_finite() {
            return Err(CoreError::Domain(format!(
                "pixel size must be positive and finite, got {pixel_size}"
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(CoreError::Domain("field contains NaN or Inf".into()));
        }
        Ok(Self { nx, ny, pixel_size, values })
    }

    /// Uniform field of the given amplitude.
    pub fn uniform(ny: usize, nx: usize, pixel_size: f64, value: Complex64) -> Result<Self> {
        Self::from_values(Array2::from_elem((ny, nx), value), pixel_size)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    /// Physical x coordinate of column `ix`, measured from the grid center.
    pub fn x_at(&self, ix: usize) -> f64 {
        (ix as f64 - (self.nx / 2) as f64) * self.pixel_size
    }

    /// Physical y coordinate of row `iy`, measured from the grid center.
    pub fn y_at(&self, iy: usize) -> f64 {
        (iy as f64 - (self.ny / 2) as f64) * self.pixel_size
    }

    /// Per-pixel intensity `|psi|^2`.
    pub fn intensity(&self) -> Array2<f64> {
        self.values.mapv(|v| v.norm_sqr())
    }

    /// Sum of `|psi|^2` over the grid.
    pub fn total_intensity(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Pointwise product with another field on the same grid.
    pub fn multiply(&self, other: &ComplexField) -> Result<ComplexField> {
        self.check_same_grid(other)?;
        ComplexField::from_values(&self.values * &other.values, self.pixel_size)
    }

    /// Pointwise quotient by another field on the same grid.
    ///
    /// The caller is responsible for the denominator being nonzero
    /// everywhere it matters; exact zeros produce a domain error.
    pub fn divide(&self, other: &ComplexField) -> Result<ComplexField> {
        self.check_same_grid(other)?;
        if other.values.iter().any(|v| v.re == 0.0 && v.im == 0.0) {
            return Err(CoreError::Domain(
                "division by a field with exact zeros".into(),
            ));
        }
        ComplexField::from_values(&self.values / &other.values, self.pixel_size)
    }

    /// Error unless `other` has identical dimensions and pixel size.
    pub fn check_same_grid(&self, other: &ComplexField) -> Result<()> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(CoreError::Shape(format!(
                "grid dims differ: {}x{} vs {}x{}",
                self.nx, self.ny, other.nx, other.ny
            )));
        }
        let rel = (self.pixel_size - other.pixel_size).abs() / self.pixel_size;
        if rel > 1e-9 {
            return Err(CoreError::Shape(format!(
                "pixel sizes differ: {} vs {}",
                self.pixel_size, other.pixel_size
            )));
        }
        Ok(())
    }
}

/// Largest |distance| for which the angular-spectrum transfer function is
/// sampled without aliasing on this grid.
///
/// The transfer phase is `z*sqrt(k0^2 - k^2)`; its local frequency in `k`
/// must stay below half the spectral sampling step `dk = 2*pi/(n*dx)`,
/// i.e. `|z| k_max / sqrt(k0^2 - k_max^2) * dk <= pi` at the band corner.
pub fn angular_spectrum_max_distance(field: &ComplexField, wavelength: f64) -> f64 {
    let k0 = 2.0 * PI / wavelength;
    let kx_max = PI / field.pixel_size;
    let k_corner = (2.0f64).sqrt() * kx_max;
    if k_corner >= k0 {
        return 0.0;
    }
    // the shorter axis has the coarser spectral step and aliases first
    let n = field.nx.min(field.ny) as f64;
    let dk = 2.0 * PI / (n * field.pixel_size);
    PI * (k0 * k0 - k_corner * k_corner).sqrt() / (k_corner * dk)
}

/// Free-space propagation by the angular spectrum method (same grid in,
/// same grid out; distance may be negative).
///
/// Evanescent components (`k > k0`) are removed; with electron wavelengths
/// far below the pixel size the whole grid band is propagating and the
/// operation is unitary.
pub fn propagate_angular_spectrum(
    field: &ComplexField,
    distance: f64,
    wavelength: f64,
) -> Result<ComplexField> {
    if !(wavelength > 0.0) {
        return Err(CoreError::Domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if distance == 0.0 {
        return Ok(field.clone());
    }
    let z_max = angular_spectrum_max_distance(field, wavelength);
    if distance.abs() > z_max {
        return Err(CoreError::Geometry(format!(
            "angular-spectrum propagation over {:.3e} m aliases on this grid \
             (pixel {:.3e} m, wavelength {:.3e} m): |distance| must be <= {:.3e} m; \
             use the scaled Fresnel propagator for long hops",
            distance, field.pixel_size, wavelength, z_max
        )));
    }

    let k0 = 2.0 * PI / wavelength;
    let (ny, nx) = (field.ny, field.nx);
    let spectrum = fft2_centered(field.values(), Direction::Forward);
    let dkx = 2.0 * PI / (nx as f64 * field.pixel_size);
    let dky = 2.0 * PI / (ny as f64 * field.pixel_size);
    let filtered = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let kx = (ix as f64 - (nx / 2) as f64) * dkx;
        let ky = (iy as f64 - (ny / 2) as f64) * dky;
        let kz_sq = k0 * k0 - kx * kx - ky * ky;
        if kz_sq > 0.0 {
            spectrum[[iy, ix]] * Complex64::from_polar(1.0, distance * kz_sq.sqrt())
        } else {
            Complex64::new(0.0, 0.0)
        }
    });
    let out = fft2_centered(&filtered, Direction::Inverse);
    ComplexField::from_values(out, field.pixel_size)
}

/// Output pixel size of the scaled Fresnel propagator.
pub fn fresnel_output_pixel(n: usize, pixel_size: f64, distance: f64, wavelength: f64) -> f64 {
    wavelength * distance / (n as f64 * pixel_size)
}

/// Single-transform Fresnel propagation onto a rescaled grid.
///
/// `u2 = chirp2 * FFT[u1 * chirp1]` with `chirp_j = exp(i pi r^2/(lambda z))`
/// evaluated on the respective plane; output pixel is `lambda*z/(n*dx)`.
/// The transform is unitary, so total intensity is conserved exactly.
/// Requires a square grid and `distance > 0` (short or negative hops
/// belong to the angular-spectrum propagator).
pub fn propagate_fresnel_scaled(
    field: &ComplexField,
    distance: f64,
    wavelength: f64,
) -> Result<ComplexField> {
    if !(distance > 0.0) {
        return Err(CoreError::Domain(format!(
            "scaled Fresnel propagation needs distance > 0, got {distance}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(CoreError::Domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    if field.nx != field.ny {
        return Err(CoreError::Shape(format!(
            "scaled Fresnel propagation needs a square grid, got {}x{}",
            field.nx, field.ny
        )));
    }
    let n = field.nx;
    let dx_in = field.pixel_size;
    let dx_out = fresnel_output_pixel(n, dx_in, distance, wavelength);

    let inv_lz = 1.0 / (wavelength * distance);
    let chirped = Array2::from_shape_fn((n, n), |(iy, ix)| {
        let x = field.x_at(ix);
        let y = field.y_at(iy);
        field.values[[iy, ix]] * Complex64::from_polar(1.0, PI * inv_lz * (x * x + y * y))
    });
    let spectrum = fft2_centered(&chirped, Direction::Forward);
    let out = Array2::from_shape_fn((n, n), |(iy, ix)| {
        let x = (ix as f64 - (n / 2) as f64) * dx_out;
        let y = (iy as f64 - (n / 2) as f64) * dx_out;
        spectrum[[iy, ix]] * Complex64::from_polar(1.0, PI * inv_lz * (x * x + y * y))
    });
    ComplexField::from_values(out, dx_out)
}

/// Paraxial illumination from an on-axis point source, or a plane wave
/// when `source_distance` is `None`.
///
/// Uniform unit amplitude with phase `pi r^2 / (lambda z)`; the on-axis
/// pixel has phase zero.
pub fn point_source_illumination(
    ny: usize,
    nx: usize,
    pixel_size: f64,
    source_distance: Option<f64>,
    wavelength: f64,
) -> Result<ComplexField> {
    if !(wavelength > 0.0) {
        return Err(CoreError::Domain(format!(
            "wavelength must be positive, got {wavelength}"
        )));
    }
    let z = match source_distance {
        None => {
            return ComplexField::uniform(ny, nx, pixel_size, Complex64::new(1.0, 0.0));
        }
        Some(z) => {
            if !(z > 0.0) {
                return Err(CoreError::Domain(format!(
                    "source distance must be positive, got {z}"
                )));
            }
            z
        }
    };
    let inv_lz = 1.0 / (wavelength * z);
    let values = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let x = (ix as f64 - (nx / 2) as f64) * pixel_size;
        let y = (iy as f64 - (ny / 2) as f64) * pixel_size;
        Complex64::from_polar(1.0, PI * inv_lz * (x * x + y * y))
    });
    ComplexField::from_values(values, pixel_size)
}

/// RMS difference between two fields after removing the best-fit global
/// phase, normalized by the RMS amplitude of `reference`.
pub fn rms_diff_mod_phase(a: &ComplexField, reference: &ComplexField) -> Result<f64> {
    a.check_same_grid(reference)?;
    let inner: Complex64 = a
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(x, y)| x * y.conj())
        .sum();
    let phase = if inner.norm() > 0.0 {
        inner / inner.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let diff: f64 = a
        .values
        .iter()
        .zip(reference.values.iter())
        .map(|(x, y)| (x - phase * y).norm_sqr())
        .sum();
    let norm = reference.total_intensity();
    if norm == 0.0 {
        return Ok(diff.sqrt());
    }
    Ok((diff / norm).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(n: usize, pixel: f64, seed: u64) -> ComplexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
        });
        ComplexField::from_values(values, pixel).unwrap()
    }

    // Frozen values evaluated from the relativistic de Broglie relation
    // with CODATA 2018 constants.
    #[test]
    fn wavelength_reference_values() {
        let lam_149 = electron_wavelength(149.0).unwrap();
        assert!((lam_149 - 100.465407e-12).abs() < 1e-15);
        assert!(lam_149 > 0.073e-9 && lam_149 < 0.13e-9);

        let lam_90 = electron_wavelength(90.0).unwrap();
        assert!((lam_90 - 129.270956e-12).abs() < 1e-15);

        let lam_100k = electron_wavelength(100_000.0).unwrap();
        assert!((lam_100k - 3.701437e-12).abs() < 1e-15);

        let lam_15k = electron_wavelength(15_000.0).unwrap();
        assert!((lam_15k - 9.941039e-12).abs() < 1e-15);
    }

    #[test]
    fn wavelength_rejects_nonpositive_energy() {
        assert!(electron_wavelength(0.0).is_err());
        assert!(electron_wavelength(-5.0).is_err());
    }

    #[test]
    fn beam_parameters_carry_derived_wavelength() {
        let beam = BeamParameters::new(15_000.0).unwrap();
        assert_eq!(beam.energy_ev, 15_000.0);
        assert_eq!(beam.wavelength, electron_wavelength(15_000.0).unwrap());
        assert!(BeamParameters::new(-1.0).is_err());
    }

    #[test]
    fn wavelength_monotone_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 0..1000 {
            // log-spaced samples over [1 eV, 300 keV]
            let e = 1.0 * (300_000.0f64 / 1.0).powf(i as f64 / 999.0);
            let lam = electron_wavelength(e).unwrap();
            assert!(lam < prev, "not monotone at {e} eV");
            assert!(lam > 0.0);
            prev = lam;
        }
    }

    #[test]
    fn angular_spectrum_zero_distance_is_identity() {
        let f = random_field(32, 0.5e-9, 1);
        let out = propagate_angular_spectrum(&f, 0.0, 10e-12).unwrap();
        assert_eq!(out.values(), f.values());
    }

    #[test]
    fn angular_spectrum_plane_wave_eigenfunction() {
        let f = ComplexField::uniform(32, 32, 0.5e-9, Complex64::new(0.7, 0.2)).unwrap();
        let out = propagate_angular_spectrum(&f, 0.4e-6, 10e-12).unwrap();
        // uniform amplitude up to a global phase
        let target = out.values()[[16, 16]];
        for v in out.values().iter() {
            assert!((v - target).norm() < 1e-10);
        }
        assert!((out.total_intensity() - f.total_intensity()).abs() / f.total_intensity() < 1e-12);
    }

    #[test]
    fn angular_spectrum_round_trip() {
        // centered Gaussian spot there and back
        let n = 64;
        let pixel = 0.5e-9;
        let values = Array2::from_shape_fn((n, n), |(iy, ix)| {
            let x = (ix as f64 - 32.0) * pixel;
            let y = (iy as f64 - 32.0) * pixel;
            Complex64::new((-(x * x + y * y) / (2.0 * (3e-9f64).powi(2))).exp(), 0.0)
        });
        let f = ComplexField::from_values(values, pixel).unwrap();
        let z = 0.8e-6;
        let there = propagate_angular_spectrum(&f, z, 10e-12).unwrap();
        let back = propagate_angular_spectrum(&there, -z, 10e-12).unwrap();
        assert!(rms_diff_mod_phase(&back, &f).unwrap() < 1e-8);
    }

    #[test]
    fn angular_spectrum_rejects_aliasing_distance() {
        let f = random_field(32, 0.5e-9, 2);
        let z_max = angular_spectrum_max_distance(&f, 10e-12);
        let err = propagate_angular_spectrum(&f, z_max * 2.0, 10e-12).unwrap_err();
        assert!(matches!(err, CoreError::Geometry(_)));
    }

    #[test]
    fn aliasing_bound_set_by_shorter_axis() {
        let wide = ComplexField::from_values(
            Array2::from_elem((16, 64), Complex64::new(1.0, 0.0)),
            0.5e-9,
        )
        .unwrap();
        let square = ComplexField::from_values(
            Array2::from_elem((16, 16), Complex64::new(1.0, 0.0)),
            0.5e-9,
        )
        .unwrap();
        assert_eq!(
            angular_spectrum_max_distance(&wide, 10e-12),
            angular_spectrum_max_distance(&square, 10e-12)
        );
    }

    #[test]
    fn fresnel_output_pixel_reference() {
        // 512 x 0.5 nm grid, 10 pm, 1.024 mm -> exactly 40 nm
        let px = fresnel_output_pixel(512, 0.5e-9, 1.024e-3, 10e-12);
        assert!((px - 40e-9).abs() < 1e-20);
    }

    #[test]
    fn fresnel_conserves_intensity() {
        let f = random_field(64, 0.5e-9, 3);
        let out = propagate_fresnel_scaled(&f, 1e-3, 10e-12).unwrap();
        let rel = (out.total_intensity() - f.total_intensity()).abs() / f.total_intensity();
        assert!(rel < 1e-8, "intensity drift {rel}");
    }

    #[test]
    fn fresnel_rejects_nonpositive_distance() {
        let f = random_field(16, 0.5e-9, 4);
        assert!(propagate_fresnel_scaled(&f, 0.0, 10e-12).is_err());
        assert!(propagate_fresnel_scaled(&f, -1e-3, 10e-12).is_err());
    }

    #[test]
    fn fresnel_point_source_is_radially_symmetric() {
        // small centered Gaussian -> Airy-like spreading, symmetric
        let n = 64;
        let pixel = 0.5e-9;
        let values = Array2::from_shape_fn((n, n), |(iy, ix)| {
            let x = (ix as f64 - 32.0) * pixel;
            let y = (iy as f64 - 32.0) * pixel;
            Complex64::new((-(x * x + y * y) / (2.0 * (1e-9f64).powi(2))).exp(), 0.0)
        });
        let f = ComplexField::from_values(values, pixel).unwrap();
        let out = propagate_fresnel_scaled(&f, 1e-3, 10e-12).unwrap();
        let i = out.intensity();
        let c = n / 2;
        let peak = i[[c, c]];
        for d in 1..(n / 2 - 1) {
            let asym = ((i[[c, c + d]] - i[[c, c - d]]).abs()
                + (i[[c + d, c]] - i[[c - d, c]]).abs())
                / peak;
            assert!(asym < 1e-6, "asymmetry {asym} at offset {d}");
        }
    }

    #[test]
    fn point_source_phase_profile() {
        let lam = 0.1e-9;
        let z = 360e-6;
        let f = point_source_illumination(64, 64, 20e-9, Some(z), lam).unwrap();
        // on-axis phase zero
        assert!((f.values()[[32, 32]] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        // matches pi r^2/(lambda z) pointwise
        for iy in 0..64 {
            for ix in 0..64 {
                let r2 = f.x_at(ix).powi(2) + f.y_at(iy).powi(2);
                let expect = Complex64::from_polar(1.0, PI * r2 / (lam * z));
                assert!((f.values()[[iy, ix]] - expect).norm() < 1e-9);
            }
        }
        // phase at radius r doubles when r -> sqrt(2) r: via the quadratic form
        let p1 = PI * f.x_at(40).powi(2) / (lam * z);
        let p2 = PI * (f.x_at(40) * (2.0f64).sqrt()).powi(2) / (lam * z);
        assert!((p2 - 2.0 * p1).abs() < 1e-9);
    }

    #[test]
    fn point_source_infinite_distance_is_plane_wave() {
        let f = point_source_illumination(16, 16, 1e-9, None, 0.1e-9).unwrap();
        for v in f.values().iter() {
            assert_eq!(*v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn field_rejects_nan() {
        let mut values = Array2::from_elem((4, 4), Complex64::new(1.0, 0.0));
        values[[1, 1]] = Complex64::new(f64::NAN, 0.0);
        assert!(ComplexField::from_values(values, 1e-9).is_err());
    }
}
