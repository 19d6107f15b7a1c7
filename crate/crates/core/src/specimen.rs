//! Projected phase-and-amplitude specimen model and test phantom generation.
//!
//! The specimen is a single projected plane: a thickness map `t(x,y)` with a
//! mean inner potential `V0` (scaled by an effective density factor) and an
//! energy-dependent inelastic mean free path `Lambda(E)`. The exit wave is
//!
//! `psi = psi_in * exp(i sigma(E) V0 rho t) * exp(-t / (2 Lambda(E)))`
//!
//! with the absorption factor present only when the absorption model is
//! enabled.

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

use crate::constants::ELECTRON_REST_ENERGY_EV;
use crate::error::{CoreError, Result};
use crate::field::{electron_wavelength, ComplexField};

/// Relativistic electron-specimen interaction constant, rad/(V m).
///
/// `sigma = (2 pi / (lambda V)) * (m0 c^2 + e V) / (2 m0 c^2 + e V)`.
pub fn interaction_constant(energy_ev: f64) -> Result<f64> {
    let lambda = electron_wavelength(energy_ev)?;
    let m = ELECTRON_REST_ENERGY_EV;
    Ok(2.0 * PI / (lambda * energy_ev) * (m + energy_ev) / (2.0 * m + energy_ev))
}

/// Inelastic mean free path versus energy, log-log interpolated.
///
/// The shipped default is a smooth stand-in for carbonaceous material at
/// unit density scale; override it from a two-column CSV when better data
/// for a specific specimen is available.
#[derive(Debug, Clone)]
pub struct MfpTable {
    /// (energy_eV, lambda_m), strictly increasing in energy.
    entries: Vec<(f64, f64)>,
}

/// Default mean free path table: energy_eV -> lambda_m.
const DEFAULT_MFP: &[(f64, f64)] = &[
    (1.0e2, 0.6e-9),
    (5.0e2, 1.2e-9),
    (1.0e3, 2.0e-9),
    (5.0e3, 7.5e-9),
    (1.0e4, 13.5e-9),
    (1.5e4, 18.0e-9),
    (3.0e4, 33.0e-9),
    (6.0e4, 58.0e-9),
    (1.0e5, 88.0e-9),
    (2.0e5, 145.0e-9),
    (3.0e5, 182.0e-9),
];

impl MfpTable {
    pub fn new(entries: Vec<(f64, f64)>) -> Result<Self> {
        if entries.len() < 2 {
            return Err(CoreError::Domain(
                "mean free path table needs at least two entries".into(),
            ));
        }
        for w in entries.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(CoreError::Domain(
                    "mean free path table energies must be strictly increasing".into(),
                ));
            }
        }
        if entries.iter().any(|&(e, l)| !(e > 0.0) || !(l > 0.0)) {
            return Err(CoreError::Domain(
                "mean free path table entries must be positive".into(),
            ));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(f64, f64)] {
        &self.entries
    }

    /// Mean free path at `energy_ev`, by log-log interpolation.
    pub fn lookup(&self, energy_ev: f64) -> Result<f64> {
        let first = self.entries.first().unwrap();
        let last = self.entries.last().unwrap();
        if energy_ev < first.0 || energy_ev > last.0 {
            return Err(CoreError::Domain(format!(
                "energy {energy_ev} eV outside mean free path table range [{}, {}]",
                first.0, last.0
            )));
        }
        let i = self
            .entries
            .partition_point(|&(e, _)| e <= energy_ev)
            .clamp(1, self.entries.len() - 1);
        let (e0, l0) = self.entries[i - 1];
        let (e1, l1) = self.entries[i];
        let f = (energy_ev.ln() - e0.ln()) / (e1.ln() - e0.ln());
        Ok((l0.ln() + f * (l1.ln() - l0.ln())).exp())
    }
}

impl Default for MfpTable {
    fn default() -> Self {
        Self::new(DEFAULT_MFP.to_vec()).expect("default table is valid")
    }
}

/// Inelastic absorption model: a mean free path table plus an enable flag.
#[derive(Debug, Clone, Default)]
pub struct AbsorptionModel {
    pub enabled: bool,
    pub table: MfpTable,
}

impl AbsorptionModel {
    pub fn disabled() -> Self {
        Self { enabled: false, table: MfpTable::default() }
    }

    pub fn enabled_with_default_table() -> Self {
        Self { enabled: true, table: MfpTable::default() }
    }
}

/// Which of the two candidate in-plane orientations the specimen is in.
/// `Wrong` is `Right` rotated by 90 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Orientation {
    Right,
    Wrong,
}

/// Projected thickness map plus the interaction parameters.
#[derive(Debug, Clone)]
pub struct Phantom {
    thickness: Array2<f64>,
    pixel_size: f64,
    /// Mean inner potential of the reference material, volts.
    pub inner_potential: f64,
    /// Effective density relative to the reference material.
    pub density_scale: f64,
    /// Characteristic support diameter, meters.
    pub extent: f64,
}

impl Phantom {
    pub fn new(
        thickness: Array2<f64>,
        pixel_size: f64,
        inner_potential: f64,
        density_scale: f64,
        extent: f64,
    ) -> Result<Self> {
        if !(pixel_size > 0.0) {
            return Err(CoreError::Domain("pixel size must be positive".into()));
        }
        if !(inner_potential > 0.0) || !(density_scale > 0.0) || !(extent > 0.0) {
            return Err(CoreError::Domain(
                "inner potential, density scale, and extent must be positive".into(),
            ));
        }
        if thickness.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(CoreError::Domain(
                "thickness map must be nonnegative and finite".into(),
            ));
        }
        let (ny, nx) = thickness.dim();
        if nx != ny {
            return Err(CoreError::Shape(format!(
                "phantom grid must be square for orientation operations, got {nx}x{ny}"
            )));
        }
        Ok(Self { thickness, pixel_size, inner_potential, density_scale, extent })
    }

    pub fn thickness(&self) -> &Array2<f64> {
        &self.thickness
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn n(&self) -> usize {
        self.thickness.dim().0
    }

    /// The thickness map rotated by 90 degrees in-plane (exact pixel
    /// permutation; no resampling).
    pub fn rotated90(&self) -> Phantom {
        let n = self.n();
        let rotated = Array2::from_shape_fn((n, n), |(iy, ix)| self.thickness[[ix, n - 1 - iy]]);
        Phantom { thickness: rotated, ..self.clone() }
    }

    /// Thickness map for an orientation: `Right` is the map as stored,
    /// `Wrong` is the 90-degree rotation.
    pub fn oriented(&self, orientation: Orientation) -> Phantom {
        match orientation {
            Orientation::Right => self.clone(),
            Orientation::Wrong => self.rotated90(),
        }
    }

    /// Normalized RMS difference between the map and its 90-degree rotation.
    pub fn rotation_asymmetry(&self) -> f64 {
        let rot = self.rotated90();
        let num: f64 = self
            .thickness
            .iter()
            .zip(rot.thickness.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let den: f64 = self.thickness.iter().map(|t| t * t).sum();
        if den == 0.0 {
            return 0.0;
        }
        (num / den).sqrt()
    }
}

/// Tunables for [`generate_phantom`]. The defaults produce a bulky,
/// clearly asymmetric particle.
#[derive(Debug, Clone)]
pub struct PhantomParams {
    pub inner_potential: f64,
    pub density_scale: f64,
    pub peak_thickness: f64,
    /// Reject draws whose 90-degree rotation asymmetry is below this.
    pub min_asymmetry: f64,
    /// Reject draws whose mean thickness inside the support disk is below
    /// this fraction of the peak.
    pub min_fill: f64,
}

impl Default for PhantomParams {
    fn default() -> Self {
        Self {
            // Amorphous-carbon inner potential (electron holography
            // measurements cluster near 9 V), scaled down for protein-like
            // effective density. Both are stand-ins and configurable.
            inner_potential: 9.09,
            density_scale: 0.8,
            peak_thickness: 25e-9,
            min_asymmetry: 0.55,
            min_fill: 0.32,
        }
    }
}

/// Deterministically generate an asymmetric multi-lobed test phantom.
///
/// 3-6 anisotropic Gaussian lobes, softly saturated so the particle has
/// plateau-like bulk, windowed to a disk of diameter `extent` and
/// normalized to the peak thickness. Draws are re-sampled
/// (deterministically, salted from the seed) until the map is both
/// asymmetric under 90-degree rotation and bulky enough to act as a
/// phase-and-amplitude object.
pub fn generate_phantom(
    seed: u64,
    extent: f64,
    n: usize,
    pixel_size: f64,
    params: &PhantomParams,
) -> Result<Phantom> {
    if !(extent > 0.0) {
        return Err(CoreError::Domain("extent must be positive".into()));
    }
    let field_width = n as f64 * pixel_size;
    if extent > 0.75 * field_width {
        return Err(CoreError::Geometry(format!(
            "extent {extent} m needs a >= 25% guard band on a {field_width} m field"
        )));
    }
    let radius = extent / 2.0;

    for salt in 0..200u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let n_lobes = rng.random_range(3..=6);
        let mut lobes = Vec::with_capacity(n_lobes);
        for _ in 0..n_lobes {
            let cr = rng.random_range(0.05..0.60) * radius;
            let ca = rng.random_range(0.0..2.0 * PI);
            let sx = rng.random_range(0.20..0.45) * radius;
            let sy = sx * rng.random_range(0.35..1.0);
            let th = rng.random_range(0.0..PI);
            let w = rng.random_range(0.5..1.0);
            lobes.push((cr * ca.cos(), cr * ca.sin(), sx, sy, th, w));
        }

        let mut thickness = Array2::from_shape_fn((n, n), |(iy, ix)| {
            let x = (ix as f64 - (n / 2) as f64) * pixel_size;
            let y = (iy as f64 - (n / 2) as f64) * pixel_size;
            let r = (x * x + y * y).sqrt();
            let mut s = 0.0;
            for &(cx, cy, sx, sy, th, w) in &lobes {
                let dx = x - cx;
                let dy = y - cy;
                let xr = dx * th.cos() + dy * th.sin();
                let yr = -dx * th.sin() + dy * th.cos();
                s += w * (-0.5 * ((xr / sx).powi(2) + (yr / sy).powi(2))).exp();
            }
            // soft saturation: overlapping lobes merge into a plateau
            // instead of stacking into a narrow spike
            let t = 1.0 - (-s / 0.6).exp();
            // half-cosine window to zero at the support radius
            let win = ((radius - r) / (0.20 * radius)).clamp(0.0, 1.0);
            t * 0.5 * (1.0 - (PI * win).cos())
        });

        let peak = thickness.iter().cloned().fold(0.0f64, f64::max);
        if peak <= 0.0 {
            continue;
        }
        thickness.mapv_inplace(|t| t * params.peak_thickness / peak);

        let phantom = Phantom::new(
            thickness,
            pixel_size,
            params.inner_potential,
            params.density_scale,
            extent,
        )?;

        // mean thickness inside the support disk
        let mut sum = 0.0;
        let mut count = 0usize;
        for ((iy, ix), &t) in phantom.thickness.indexed_iter() {
            let x = (ix as f64 - (n / 2) as f64) * pixel_size;
            let y = (iy as f64 - (n / 2) as f64) * pixel_size;
            if x * x + y * y < radius * radius {
                sum += t;
                count += 1;
            }
        }
        let fill = sum / (count as f64 * params.peak_thickness);

        if phantom.rotation_asymmetry() >= params.min_asymmetry && fill >= params.min_fill {
            return Ok(phantom);
        }
    }
    Err(CoreError::Domain(
        "phantom generation failed to satisfy asymmetry/fill constraints".into(),
    ))
}

/// Compute the specimen exit wave from the incident field.
///
/// Phase advance `sigma(E) * V0 * density_scale * t`; amplitude factor
/// `exp(-t / (2 Lambda(E)))` when absorption is enabled.
pub fn exit_wave(
    incident: &ComplexField,
    phantom: &Phantom,
    orientation: Orientation,
    energy_ev: f64,
    absorption: &AbsorptionModel,
) -> Result<ComplexField> {
    let (ny, nx) = phantom.thickness.dim();
    if incident.nx() != nx || incident.ny() != ny {
        return Err(CoreError::Shape(format!(
            "incident grid {}x{} does not match phantom grid {}x{}",
            incident.nx(),
            incident.ny(),
            nx,
            ny
        )));
    }
    let rel = (incident.pixel_size() - phantom.pixel_size).abs() / phantom.pixel_size;
    if rel > 1e-9 {
        return Err(CoreError::Shape(
            "incident and phantom pixel sizes differ".into(),
        ));
    }
    let oriented = phantom.oriented(orientation);
    // beam support must cover the specimen support
    let eps_t = 1e-15 * oriented.thickness.iter().cloned().fold(0.0f64, f64::max);
    for ((iy, ix), &t) in oriented.thickness.indexed_iter() {
        if t > eps_t && incident.values()[[iy, ix]].norm_sqr() == 0.0 {
            return Err(CoreError::Domain(
                "illuminating beam does not cover the specimen support".into(),
            ));
        }
    }

    let sigma = interaction_constant(energy_ev)?;
    let phase_per_m = sigma * phantom.inner_potential * phantom.density_scale;
    let inv_two_lambda = if absorption.enabled {
        0.5 / absorption.table.lookup(energy_ev)?
    } else {
        0.0
    };
    let values = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let t = oriented.thickness[[iy, ix]];
        let factor = Complex64::from_polar((-t * inv_two_lambda).exp(), phase_per_m * t);
        incident.values()[[iy, ix]] * factor
    });
    ComplexField::from_values(values, incident.pixel_size())
}

/// Illuminating beam matched to a phantom: a disk of diameter
/// `beam_factor * extent` with unit amplitude, flat out to 80% of its
/// radius and a half-cosine edge beyond.
pub fn matched_beam(
    phantom: &Phantom,
    beam_factor: f64,
) -> Result<ComplexField> {
    if !(beam_factor >= 1.0) {
        return Err(CoreError::Domain(
            "beam diameter factor must be >= 1 to cover the specimen".into(),
        ));
    }
    let n = phantom.n();
    let pixel = phantom.pixel_size;
    let rb = 0.5 * beam_factor * phantom.extent;
    let flat = 0.8 * rb;
    let values = Array2::from_shape_fn((n, n), |(iy, ix)| {
        let x = (ix as f64 - (n / 2) as f64) * pixel;
        let y = (iy as f64 - (n / 2) as f64) * pixel;
        let r = (x * x + y * y).sqrt();
        let a = if r <= flat {
            1.0
        } else if r < rb {
            0.5 * (1.0 + (PI * (r - flat) / (rb - flat)).cos())
        } else {
            0.0
        };
        Complex64::new(a, 0.0)
    });
    ComplexField::from_values(values, pixel)
}
