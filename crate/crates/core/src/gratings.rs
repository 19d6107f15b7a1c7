//! Point-projection diffraction from hole-array gratings: pattern
//! simulation, first-order angle extraction, and the wavelength sweep.
//!
//! A grating is an array of slits at pitch `slit_spacing`, each slit
//! approximated by a column of round holes (better mechanical strength
//! than true slits). Illumination is a spherical wave from a point source
//! `source_to_element` upstream; the screen sits at `source_to_screen`.
//! First-order angles are measured operationally from peak positions, the
//! way they would be read off a recorded pattern.

use ndarray::Array2;

use crate::detection::{ChannelTransmission, ScreenDistribution};
use crate::doe::{DiffractiveElement, ElementKind};
use crate::error::{CoreError, Result};
use crate::field::{electron_wavelength, point_source_illumination, propagate_fresnel_scaled};

/// Hole-array grating description.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct GratingSpec {
    /// Slit-to-slit distance (the grating period along the dispersion
    /// axis), meters.
    pub slit_spacing: f64,
    /// Hole diameter, meters.
    pub hole_diameter: f64,
    /// Holes per slit (vertical count).
    pub rows: usize,
    /// Number of slits (horizontal count).
    pub cols: usize,
    /// Vertical hole-to-hole pitch; defaults to `slit_spacing`.
    pub pitch_y: f64,
    /// One grating (centered) or two (at +-`pair_offset`).
    pub n_gratings: usize,
    /// Transverse center offset of each grating in the two-grating
    /// configuration, meters.
    pub pair_offset: f64,
}

impl GratingSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.slit_spacing > 0.0) || !(self.hole_diameter > 0.0) {
            return Err(CoreError::Domain(
                "grating spacing and hole diameter must be positive".into(),
            ));
        }
        if self.hole_diameter >= self.slit_spacing {
            return Err(CoreError::Domain(
                "hole diameter must be smaller than the slit spacing".into(),
            ));
        }
        if !(self.pitch_y > 0.0) {
            return Err(CoreError::Domain("vertical pitch must be positive".into()));
        }
        if self.n_gratings != 1 && self.n_gratings != 2 {
            return Err(CoreError::Domain("n_gratings must be 1 or 2".into()));
        }
        if self.n_gratings == 2 && !(self.pair_offset > 0.0) {
            return Err(CoreError::Domain(
                "two-grating configuration needs a positive pair offset".into(),
            ));
        }
        Ok(())
    }
}

impl Default for GratingSpec {
    fn default() -> Self {
        Self {
            slit_spacing: 100e-9,
            hole_diameter: 20e-9,
            rows: 4,
            cols: 4,
            pitch_y: 100e-9,
            n_gratings: 1,
            pair_offset: 0.0,
        }
    }
}

/// Source / element / screen distances plus the simulation grid.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ProjectionGeometry {
    pub source_to_element: f64,
    pub source_to_screen: f64,
    /// Simulation grid (square).
    pub grid_n: usize,
    pub grid_pixel: f64,
}

impl ProjectionGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.source_to_element > 0.0)
            || !(self.source_to_screen > self.source_to_element)
        {
            return Err(CoreError::Domain(
                "need 0 < source_to_element < source_to_screen".into(),
            ));
        }
        if self.grid_n < 16 || !(self.grid_pixel > 0.0) {
            return Err(CoreError::Domain("grid too small".into()));
        }
        Ok(())
    }

    pub fn element_to_screen(&self) -> f64 {
        self.source_to_screen - self.source_to_element
    }
}

impl Default for ProjectionGeometry {
    fn default() -> Self {
        Self {
            source_to_element: 360e-6,
            source_to_screen: 100e-3,
            grid_n: 512,
            grid_pixel: 4e-9,
        }
    }
}

/// Grating pair offset that makes the two inner first orders land on the
/// optical axis (the merged-orders condition) at the given wavelength.
pub fn merging_pair_offset(geometry: &ProjectionGeometry, wavelength: f64, spacing: f64) -> f64 {
    let s = geometry.source_to_element;
    let l = geometry.element_to_screen();
    wavelength * s * l / (spacing * geometry.source_to_screen)
}

/// Rasterize the hole array into a binary transmission mask.
///
/// Each pixel is supersampled 4x4; a pixel opens when at least half its
/// subsamples fall inside a hole, which keeps the open area within a few
/// percent of the analytic value.
pub fn build_grating_mask(
    spec: &GratingSpec,
    geometry: &ProjectionGeometry,
) -> Result<DiffractiveElement> {
    spec.validate()?;
    geometry.validate()?;
    if spec.hole_diameter < 4.0 * geometry.grid_pixel {
        return Err(CoreError::Geometry(format!(
            "grid pixel {} m too coarse: holes of {} m need >= 4 pixels across",
            geometry.grid_pixel, spec.hole_diameter
        )));
    }
    let n = geometry.grid_n;
    let pixel = geometry.grid_pixel;
    let r = spec.hole_diameter / 2.0;
    let centers: Vec<f64> = match spec.n_gratings {
        1 => vec![0.0],
        _ => vec![-spec.pair_offset, spec.pair_offset],
    };
    // hole centers for all gratings
    let mut holes = Vec::new();
    for &gc in &centers {
        for col in 0..spec.cols {
            for row in 0..spec.rows {
                let hx = gc + (col as f64 - (spec.cols as f64 - 1.0) / 2.0) * spec.slit_spacing;
                let hy = (row as f64 - (spec.rows as f64 - 1.0) / 2.0) * spec.pitch_y;
                holes.push((hx, hy));
            }
        }
    }
    let half_field = 0.5 * n as f64 * pixel;
    for &(hx, hy) in &holes {
        if hx.abs() + r > half_field || hy.abs() + r > half_field {
            return Err(CoreError::Geometry(
                "grating does not fit inside the simulation field".into(),
            ));
        }
    }

    let mut mask = Array2::zeros((n, n));
    for ((iy, ix), v) in mask.indexed_iter_mut() {
        let x0 = (ix as f64 - (n / 2) as f64) * pixel;
        let y0 = (iy as f64 - (n / 2) as f64) * pixel;
        let mut inside = 0u32;
        for sy in 0..4 {
            for sx in 0..4 {
                let x = x0 + (sx as f64 - 1.5) / 4.0 * pixel;
                let y = y0 + (sy as f64 - 1.5) / 4.0 * pixel;
                if holes
                    .iter()
                    .any(|&(hx, hy)| (x - hx).powi(2) + (y - hy).powi(2) <= r * r)
                {
                    inside += 1;
                }
            }
        }
        if inside >= 8 {
            *v = 1.0;
        }
    }
    let support = Array2::from_elem((n, n), true);
    DiffractiveElement::new(mask, support, pixel, ElementKind::Binary)
}

/// First-order plane-wave grating deflection angle `theta = lambda / a`.
pub fn grating_equation(wavelength: f64, spacing: f64) -> Result<f64> {
    if !(wavelength > 0.0) || !(spacing > 0.0) {
        return Err(CoreError::Domain(
            "wavelength and spacing must be positive".into(),
        ));
    }
    if wavelength >= spacing {
        return Err(CoreError::Geometry(format!(
            "wavelength {wavelength} m >= spacing {spacing} m violates the paraxial regime"
        )));
    }
    Ok(wavelength / spacing)
}

/// Illumination for the projection experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Illumination {
    /// Spherical wave from the point source at `source_to_element`.
    PointSource,
    /// Plane-wave control (removes projection magnification).
    PlaneWave,
}

/// Simulate the screen pattern: illuminate the mask and propagate to the
/// screen with the scaled Fresnel propagator.
pub fn simulate_pattern(
    spec: &GratingSpec,
    geometry: &ProjectionGeometry,
    energy_ev: f64,
    illumination: Illumination,
) -> Result<ScreenDistribution> {
    let wavelength = electron_wavelength(energy_ev)?;
    let mask = build_grating_mask(spec, geometry)?;
    let n = geometry.grid_n;
    let source = match illumination {
        Illumination::PointSource => Some(geometry.source_to_element),
        Illumination::PlaneWave => None,
    };
    // the source-chirp must be resolvable out to the grid corner
    if let Some(s) = source {
        let r_corner = std::f64::consts::SQRT_2 * 0.5 * n as f64 * geometry.grid_pixel;
        let local_period = wavelength * s / r_corner;
        if local_period < 2.0 * geometry.grid_pixel {
            return Err(CoreError::Geometry(format!(
                "grid too coarse for the source distance: spherical-wave fringes \
                 reach {local_period} m at the field corner, below 2 px"
            )));
        }
    }
    let illum = point_source_illumination(n, n, geometry.grid_pixel, source, wavelength)?;
    let masked = crate::doe::apply(&illum, &mask)?;
    let incident = illum.total_intensity();
    let open = masked.total_intensity();
    let screen = propagate_fresnel_scaled(&masked, geometry.element_to_screen(), wavelength)?;
    ScreenDistribution::new(
        screen.intensity(),
        screen.pixel_size(),
        incident,
        ChannelTransmission { specimen: 1.0, element: open / incident },
    )
}

/// Result of first-order angle extraction.
#[derive(Debug, Clone, serde::Serialize)]
pub enum AngleExtraction {
    Resolved {
        /// First-order angle measured from the element plane, radians.
        angle_rad: f64,
        /// Zeroth-order peak positions on the screen, meters.
        zeroth_positions: Vec<f64>,
        /// First-order peak positions on the screen, meters.
        first_positions: Vec<f64>,
    },
    /// The first-order spots have merged into a single central one.
    Merged,
}

/// Band-integrated profile along the dispersion axis.
fn dispersion_profile(dist: &ScreenDistribution) -> Vec<f64> {
    let (ny, nx) = dist.dims();
    let band = 10usize.min(ny / 4);
    let c = ny / 2;
    (0..nx)
        .map(|ix| {
            (c - band..=c + band)
                .map(|iy| dist.intensity()[[iy, ix]])
                .sum()
        })
        .collect()
}

/// 3-point boxcar; kills coherent-fringe substructure before peak finding.
fn smooth3(profile: &[f64]) -> Vec<f64> {
    let n = profile.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 1).min(n - 1);
            (profile[lo] + profile[i] + profile[hi]) / 3.0
        })
        .collect()
}

/// Local maxima of the smoothed profile above `rel_threshold` of its
/// global maximum, merged within `min_sep` pixels, refined by a 5-pixel
/// centroid on the raw profile. Returns (fractional pixel, smoothed height).
fn find_peaks(profile: &[f64], rel_threshold: f64, min_sep: usize) -> Vec<(f64, f64)> {
    let n = profile.len();
    let smooth = smooth3(profile);
    let peak_max = smooth.iter().cloned().fold(0.0f64, f64::max);
    let threshold = rel_threshold * peak_max;
    let mut raw: Vec<(usize, f64)> = Vec::new();
    for i in 1..n - 1 {
        if smooth[i] >= threshold && smooth[i] >= smooth[i - 1] && smooth[i] > smooth[i + 1] {
            match raw.last() {
                Some(&(j, v)) if i - j < min_sep => {
                    if smooth[i] > v {
                        *raw.last_mut().unwrap() = (i, smooth[i]);
                    }
                }
                _ => raw.push((i, smooth[i])),
            }
        }
    }
    raw.iter().map(|&(i, v)| (centroid(profile, i), v)).collect()
}

/// Locate zeroth- and first-order peaks and return the angular separation
/// measured from the element plane, or the merged-orders outcome.
///
/// The zeroth orders are looked up near their geometrically projected
/// positions, the way a recorded pattern would be measured against the
/// known slit geometry. A single grating needs a zeroth peak flanked by a
/// first-order peak on each side; two gratings resolve when two distinct
/// peaks sit between their zeroth orders and merge when only one does.
pub fn extract_first_order_angle(
    dist: &ScreenDistribution,
    spec: &GratingSpec,
    geometry: &ProjectionGeometry,
) -> Result<AngleExtraction> {
    geometry.validate()?;
    let profile = dispersion_profile(dist);
    let (_, nx) = dist.dims();
    let to_meters = |px: f64| (px - (nx / 2) as f64) * dist.pixel_size();
    let l = geometry.element_to_screen();

    match spec.n_gratings {
        1 => {
            // the zeroth order projects at the field center
            let smooth = smooth3(&profile);
            let window = nx / 8;
            let c = nx / 2;
            let zeroth_idx = (c - window..=c + window)
                .max_by(|&a, &b| smooth[a].partial_cmp(&smooth[b]).unwrap())
                .unwrap();
            let zeroth = centroid(&profile, zeroth_idx);
            let zeroth_height = smooth[zeroth_idx];
            // first orders: nearest local maxima of comparable height
            let peaks = find_peaks(&profile, 0.02, 4);
            let strong = |p: &&(f64, f64)| p.1 >= 0.45 * zeroth_height;
            let left = peaks
                .iter()
                .filter(|p| p.0 < zeroth - 2.0)
                .filter(strong)
                .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let right = peaks
                .iter()
                .filter(|p| p.0 > zeroth + 2.0)
                .filter(strong)
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let (left, right) = match (left, right) {
                (Some(l), Some(r)) => (*l, *r),
                _ => return Ok(AngleExtraction::Merged),
            };
            let z = to_meters(zeroth);
            let sep = 0.5 * ((to_meters(right.0) - z) + (z - to_meters(left.0)));
            Ok(AngleExtraction::Resolved {
                angle_rad: sep / l,
                zeroth_positions: vec![z],
                first_positions: vec![to_meters(left.0), to_meters(right.0)],
            })
        }
        _ => {
            // two gratings: zeroth orders at the projected grating centers
            let smooth = smooth3(&profile);
            let mag = geometry.source_to_screen / geometry.source_to_element;
            let expected = spec.pair_offset * mag;
            let half_window =
                ((0.3 * expected / dist.pixel_size()) as usize).clamp(2, nx / 4);
            let near = |target: f64| -> Option<(f64, f64)> {
                let center =
                    (target / dist.pixel_size() + (nx / 2) as f64).round() as i64;
                let lo = (center - half_window as i64).max(1) as usize;
                let hi = ((center + half_window as i64) as usize).min(nx - 2);
                if lo >= hi {
                    return None;
                }
                let idx = (lo..=hi)
                    .max_by(|&a, &b| smooth[a].partial_cmp(&smooth[b]).unwrap())
                    .unwrap();
                Some((centroid(&profile, idx), smooth[idx]))
            };
            let (z_neg, z_pos) = match (near(-expected), near(expected)) {
                (Some(a), Some(b)) => (a, b),
                _ => {
                    return Err(CoreError::Geometry(
                        "zeroth-order windows fall outside the screen".into(),
                    ))
                }
            };
            // distinct local maxima strictly between the zeroth orders
            let peaks = find_peaks(&profile, 0.02, 4);
            let inner: Vec<&(f64, f64)> = peaks
                .iter()
                .filter(|p| p.0 > z_neg.0 + 3.0 && p.0 < z_pos.0 - 3.0)
                .collect();
            let inner_max = inner.iter().map(|p| p.1).fold(0.0f64, f64::max);
            let significant: Vec<&&(f64, f64)> =
                inner.iter().filter(|p| p.1 >= 0.30 * inner_max).collect();
            if significant.len() <= 1 {
                return Ok(AngleExtraction::Merged);
            }
            // the two strongest significant inner peaks are the inner
            // first orders; they must straddle the axis and be distinct
            let mut sorted = significant.clone();
            sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
            let mut pair = [**sorted[0], **sorted[1]];
            pair.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let center_px = (nx / 2) as f64;
            if (pair[1].0 - pair[0].0).abs() < 4.0
                || pair[0].0 >= center_px
                || pair[1].0 <= center_px
            {
                return Ok(AngleExtraction::Merged);
            }
            let sep = 0.5
                * ((to_meters(z_pos.0) - to_meters(pair[1].0))
                    + (to_meters(pair[0].0) - to_meters(z_neg.0)));
            Ok(AngleExtraction::Resolved {
                angle_rad: sep / l,
                zeroth_positions: vec![to_meters(z_neg.0), to_meters(z_pos.0)],
                first_positions: vec![to_meters(pair[0].0), to_meters(pair[1].0)],
            })
        }
    }
}

/// Intensity-weighted sub-pixel position over a 5-pixel window.
fn centroid(profile: &[f64], idx: usize) -> f64 {
    let lo = idx.saturating_sub(2);
    let hi = (idx + 2).min(profile.len() - 1);
    let mut w = 0.0;
    let mut wx = 0.0;
    for (k, &p) in profile.iter().enumerate().take(hi + 1).skip(lo) {
        w += p;
        wx += p * k as f64;
    }
    wx / w
}

/// One row of a wavelength sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepPoint {
    pub energy_ev: f64,
    pub wavelength_m: f64,
    pub angle_mrad: Option<f64>,
    pub merged: bool,
}

/// Simulate and extract over a list of energies.
pub fn sweep_energies(
    spec: &GratingSpec,
    geometry: &ProjectionGeometry,
    energies_ev: &[f64],
    illumination: Illumination,
) -> Result<Vec<SweepPoint>> {
    energies_ev
        .iter()
        .map(|&e| {
            let dist = simulate_pattern(spec, geometry, e, illumination)?;
            let extraction = extract_first_order_angle(&dist, spec, geometry)?;
            let wavelength = electron_wavelength(e)?;
            Ok(match extraction {
                AngleExtraction::Resolved { angle_rad, .. } => SweepPoint {
                    energy_ev: e,
                    wavelength_m: wavelength,
                    angle_mrad: Some(angle_rad * 1e3),
                    merged: false,
                },
                AngleExtraction::Merged => SweepPoint {
                    energy_ev: e,
                    wavelength_m: wavelength,
                    angle_mrad: None,
                    merged: true,
                },
            })
        })
        .collect()
}

/// Least-squares line through the origin-inclusive model `y = a x + b`,
/// returning `(a, b, r_squared)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let a = sxy / sxx;
    let b = my - a * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - (a * x + b)).powi(2))
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (a, b, r2)
}
