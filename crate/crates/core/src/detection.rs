//! Screen intensity distributions per hypothesis and Monte Carlo sampling
//! of single-electron detection events.
//!
//! The full chain for one orientation is: matched illuminating beam ->
//! specimen exit wave -> Fresnel hop to the element plane -> element
//! transmission -> Fresnel hop to the screen -> `|psi|^2`. The detection
//! probability `T` is the screen total over the incident total, which
//! factors exactly into specimen and element channel transmissions.

use ndarray::Array2;
use rand::Rng;

use crate::doe::{apply, DiffractiveElement};
use crate::error::{CoreError, Result};
use crate::field::{electron_wavelength, propagate_fresnel_scaled, ComplexField};
use crate::specimen::{exit_wave, matched_beam, AbsorptionModel, Orientation, Phantom};

/// Distances and beam shaping for the specimen -> element -> screen chain.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ChainGeometry {
    /// Specimen plane to element plane, meters.
    pub specimen_to_doe: f64,
    /// Element plane to screen, meters.
    pub doe_to_screen: f64,
    /// Beam diameter as a multiple of the phantom extent.
    pub beam_diameter_factor: f64,
}

impl ChainGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.specimen_to_doe > 0.0) || !(self.doe_to_screen > 0.0) {
            return Err(CoreError::Domain(
                "chain distances must be positive".into(),
            ));
        }
        if !(self.beam_diameter_factor >= 1.0) {
            return Err(CoreError::Domain(
                "beam diameter factor must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

impl Default for ChainGeometry {
    fn default() -> Self {
        Self {
            specimen_to_doe: 1.03e-3,
            doe_to_screen: 0.1,
            beam_diameter_factor: 1.2,
        }
    }
}

/// Channel-resolved transmissions of one chain evaluation.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ChannelTransmission {
    /// Specimen transmission: exit intensity over incident intensity.
    pub specimen: f64,
    /// Element transmission: post-element intensity over pre-element.
    pub element: f64,
}

/// The object wave arriving at the element plane, with bookkeeping needed
/// downstream (incident power, specimen transmission).
pub struct ObjectWaveAtDoe {
    pub wave: ComplexField,
    pub incident_power: f64,
    pub specimen_transmission: f64,
}

/// Propagate the matched beam through the specimen to the element plane.
pub fn object_wave_at_doe(
    phantom: &Phantom,
    orientation: Orientation,
    geometry: &ChainGeometry,
    energy_ev: f64,
    absorption: &AbsorptionModel,
) -> Result<ObjectWaveAtDoe> {
    geometry.validate()?;
    let wavelength = electron_wavelength(energy_ev)?;
    let beam = matched_beam(phantom, geometry.beam_diameter_factor)?;
    let incident_power = beam.total_intensity();
    let exit = exit_wave(&beam, phantom, orientation, energy_ev, absorption)?;
    let specimen_transmission = exit.total_intensity() / incident_power;
    let wave = propagate_fresnel_scaled(&exit, geometry.specimen_to_doe, wavelength)?;
    Ok(ObjectWaveAtDoe { wave, incident_power, specimen_transmission })
}

/// Screen-plane intensity map with the per-pixel detection probabilities.
#[derive(Debug, Clone)]
pub struct ScreenDistribution {
    intensity: Array2<f64>,
    pixel_size: f64,
    /// Probability that an incident electron reaches the screen at all.
    detect_prob: f64,
    /// Per-pixel probabilities conditioned on detection (sums to 1).
    pmf: Array2<f64>,
    /// Flattened cumulative table for inverse-CDF sampling.
    cdf: Vec<f64>,
    /// Channel-resolved transmissions behind `detect_prob`.
    pub channels: ChannelTransmission,
}

impl ScreenDistribution {
    /// Build from a screen intensity map and the incident power it derives
    /// from. `channels` records how the losses split between specimen and
    /// element.
    pub fn new(
        intensity: Array2<f64>,
        pixel_size: f64,
        incident_power: f64,
        channels: ChannelTransmission,
    ) -> Result<Self> {
        if !(pixel_size > 0.0) || !(incident_power > 0.0) {
            return Err(CoreError::Domain(
                "pixel size and incident power must be positive".into(),
            ));
        }
        if intensity.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(CoreError::Domain(
                "screen intensity must be nonnegative and finite".into(),
            ));
        }
        let total: f64 = intensity.iter().sum();
        let detect_prob = total / incident_power;
        if !(0.0..=1.0 + 1e-9).contains(&detect_prob) {
            return Err(CoreError::Domain(format!(
                "detection probability {detect_prob} outside [0,1]"
            )));
        }
        // a loss-free chain has T = 1 exactly; remove unitary-transform dust
        let detect_prob = if detect_prob > 1.0 - 1e-12 { 1.0 } else { detect_prob };
        let pmf = if total > 0.0 {
            intensity.mapv(|v| v / total)
        } else {
            intensity.clone()
        };
        let mut cdf = Vec::with_capacity(pmf.len());
        let mut acc = 0.0;
        for &p in pmf.iter() {
            acc += p;
            cdf.push(acc);
        }
        if let Some(last) = cdf.last_mut() {
            *last = last.max(1.0);
        }
        Ok(Self { intensity, pixel_size, detect_prob, pmf, cdf, channels })
    }

    pub fn intensity(&self) -> &Array2<f64> {
        &self.intensity
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn detect_prob(&self) -> f64 {
        self.detect_prob
    }

    pub fn pmf(&self) -> &Array2<f64> {
        &self.pmf
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pmf.dim()
    }

    /// Total pmf mass inside a disk of `radius_px` pixels around `center`.
    pub fn window_mass(&self, center: (usize, usize), radius_px: usize) -> f64 {
        let (ny, nx) = self.pmf.dim();
        let r2 = (radius_px * radius_px) as i64;
        let mut mass = 0.0;
        for iy in center.0.saturating_sub(radius_px)..(center.0 + radius_px + 1).min(ny) {
            for ix in center.1.saturating_sub(radius_px)..(center.1 + radius_px + 1).min(nx) {
                let dy = iy as i64 - center.0 as i64;
                let dx = ix as i64 - center.1 as i64;
                if dy * dy + dx * dx <= r2 {
                    mass += self.pmf[[iy, ix]];
                }
            }
        }
        mass
    }

    /// Fraction of the grid covered by that disk window.
    pub fn window_area_fraction(&self, radius_px: usize) -> f64 {
        let (ny, nx) = self.pmf.dim();
        let r2 = (radius_px * radius_px) as i64;
        let mut count = 0usize;
        for dy in -(radius_px as i64)..=(radius_px as i64) {
            for dx in -(radius_px as i64)..=(radius_px as i64) {
                if dy * dy + dx * dx <= r2 {
                    count += 1;
                }
            }
        }
        count as f64 / (nx * ny) as f64
    }
}

/// Outcome of one incident electron.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionEvent {
    /// Lost to inelastic absorption in the specimen or blocked by the
    /// element; never reaches the screen.
    Absorbed,
    /// Arrived at screen pixel (row, col).
    Detected { y: usize, x: usize },
}

/// Draw one detection event: absorbed with probability `1 - T`, otherwise
/// a screen pixel by inverse-CDF over the precomputed cumulative table.
pub fn sample_event<R: Rng + ?Sized>(dist: &ScreenDistribution, rng: &mut R) -> DetectionEvent {
    let reach: f64 = rng.random();
    if reach >= dist.detect_prob {
        return DetectionEvent::Absorbed;
    }
    let u: f64 = rng.random();
    let idx = dist.cdf.partition_point(|&c| c < u).min(dist.cdf.len() - 1);
    let (_, nx) = dist.pmf.dim();
    DetectionEvent::Detected { y: idx / nx, x: idx % nx }
}

/// Full forward chain for one orientation through a fixed element.
pub fn screen_distribution(
    phantom: &Phantom,
    orientation: Orientation,
    element: &DiffractiveElement,
    geometry: &ChainGeometry,
    energy_ev: f64,
    absorption: &AbsorptionModel,
) -> Result<ScreenDistribution> {
    let wavelength = electron_wavelength(energy_ev)?;
    let at_doe = object_wave_at_doe(phantom, orientation, geometry, energy_ev, absorption)?;
    let pre_element = at_doe.wave.total_intensity();
    let after = apply(&at_doe.wave, element)?;
    let element_transmission = if pre_element > 0.0 {
        after.total_intensity() / pre_element
    } else {
        0.0
    };
    let screen = propagate_fresnel_scaled(&after, geometry.doe_to_screen, wavelength)?;
    ScreenDistribution::new(
        screen.intensity(),
        screen.pixel_size(),
        at_doe.incident_power,
        ChannelTransmission {
            specimen: at_doe.specimen_transmission,
            element: element_transmission,
        },
    )
}
