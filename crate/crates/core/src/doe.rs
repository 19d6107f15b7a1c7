//! Diffractive element synthesis: from a hypothesized object wave and a
//! target converging wave to a real transmission map in `[0,1]`.
//!
//! The element is an amplitude-only mask, so the complex transfer it would
//! ideally need is reduced to `d = Re(psi_s / psi_o) + const`, with the
//! constant chosen to make `d` nonnegative and a rescale into `[0,1]`. Where
//! the object wave intensity falls below a threshold fraction of its peak,
//! `d` is set to zero to keep the division stable. Binarization to
//! {opaque, transparent} and block pixelation to a fabrication pitch are
//! separate steps.

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{CoreError, Result};
use crate::field::ComplexField;

/// Element kind: continuous transmission in `[0,1]` or binary {0,1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ElementKind {
    Continuous,
    Binary,
}

/// A real amplitude transmission map with its own pixel size.
///
/// `support` marks the kept region (object-wave intensity above the
/// synthesis threshold); transmission is exactly zero outside it.
#[derive(Debug, Clone)]
pub struct DiffractiveElement {
    transmission: Array2<f64>,
    support: Array2<bool>,
    pixel_size: f64,
    kind: ElementKind,
}

impl DiffractiveElement {
    pub fn new(
        transmission: Array2<f64>,
        support: Array2<bool>,
        pixel_size: f64,
        kind: ElementKind,
    ) -> Result<Self> {
        if transmission.dim() != support.dim() {
            return Err(CoreError::Shape(
                "transmission and support dimensions differ".into(),
            ));
        }
        if !(pixel_size > 0.0) {
            return Err(CoreError::Domain("pixel size must be positive".into()));
        }
        for &v in transmission.iter() {
            let ok = match kind {
                ElementKind::Continuous => (0.0..=1.0).contains(&v),
                ElementKind::Binary => v == 0.0 || v == 1.0,
            };
            if !ok {
                return Err(CoreError::Domain(format!(
                    "transmission value {v} invalid for {kind:?} element"
                )));
            }
        }
        Ok(Self { transmission, support, pixel_size, kind })
    }

    /// All-transparent element covering the whole grid.
    pub fn transparent(ny: usize, nx: usize, pixel_size: f64) -> Result<Self> {
        Self::new(
            Array2::from_elem((ny, nx), 1.0),
            Array2::from_elem((ny, nx), true),
            pixel_size,
            ElementKind::Binary,
        )
    }

    pub fn transmission(&self) -> &Array2<f64> {
        &self.transmission
    }

    pub fn support(&self) -> &Array2<bool> {
        &self.support
    }

    pub fn pixel_size(&self) -> f64 {
        self.pixel_size
    }

    pub fn kind(&self) -> ElementKind {
        self.kind
    }

    /// Fraction of grid pixels that are open (transmission > 0.5 for
    /// binary; > 0 for continuous).
    pub fn open_fraction(&self) -> f64 {
        let open = self
            .transmission
            .iter()
            .filter(|&&v| match self.kind {
                ElementKind::Binary => v == 1.0,
                ElementKind::Continuous => v > 0.0,
            })
            .count();
        open as f64 / self.transmission.len() as f64
    }
}

/// Policy for the additive constant making `d` nonnegative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum OffsetPolicy {
    /// Add the smallest constant making the kept-region minimum zero,
    /// then rescale by the maximum into `[0,1]` (maximizes modulation depth).
    #[default]
    SmallestPositive,
}

/// Policy for the binary {0,1} cut.
#[derive(Debug, Clone, Copy, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum BinarizePolicy {
    /// Spatial median of the kept-region values: about 50% open fraction.
    /// Values >= the threshold map to 1.
    #[default]
    KeptMedian,
    /// Fixed threshold in `[0,1]`.
    Fixed(f64),
}

/// Synthesis parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SynthesisParams {
    /// Fraction of peak object-wave intensity below which the element is
    /// zeroed (division guard).
    pub intensity_threshold_fraction: f64,
    pub offset_policy: OffsetPolicy,
    pub binarize_policy: BinarizePolicy,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            intensity_threshold_fraction: 1e-4,
            offset_policy: OffsetPolicy::SmallestPositive,
            binarize_policy: BinarizePolicy::KeptMedian,
        }
    }
}

impl SynthesisParams {
    pub fn validate(&self) -> Result<()> {
        let eps = self.intensity_threshold_fraction;
        if !(0.0..1.0).contains(&eps) {
            return Err(CoreError::Domain(format!(
                "intensity threshold fraction must be in [0,1), got {eps}"
            )));
        }
        if let BinarizePolicy::Fixed(t) = self.binarize_policy {
            if !(0.0..=1.0).contains(&t) {
                return Err(CoreError::Domain(format!(
                    "fixed binarize threshold must be in [0,1], got {t}"
                )));
            }
        }
        Ok(())
    }
}

/// The designed target wave on the element plane: a paraxial spherical
/// wave converging to `focus = (fx, fy)` meters on the screen, a distance
/// `screen_distance` downstream.
///
/// Phase is `-pi |r - f|^2 / (lambda z)` with uniform amplitude. Under the
/// scaled Fresnel propagator this focuses to the screen pixel nearest the
/// focal point.
pub fn target_wave(
    ny: usize,
    nx: usize,
    pixel_size: f64,
    screen_distance: f64,
    focus: (f64, f64),
    wavelength: f64,
) -> Result<ComplexField> {
    if !(screen_distance > 0.0) {
        return Err(CoreError::Domain(format!(
            "screen distance must be positive, got {screen_distance}"
        )));
    }
    if !(wavelength > 0.0) {
        return Err(CoreError::Domain("wavelength must be positive".into()));
    }
    if nx != ny {
        return Err(CoreError::Shape(
            "target wave synthesis needs a square grid".into(),
        ));
    }
    // screen field of view under the scaled Fresnel hop
    let screen_pixel = wavelength * screen_distance / (nx as f64 * pixel_size);
    let half_fov = 0.5 * nx as f64 * screen_pixel;
    if focus.0.abs() >= half_fov || focus.1.abs() >= half_fov {
        return Err(CoreError::Geometry(format!(
            "focal point ({}, {}) m outside the screen field of view (+-{half_fov} m)",
            focus.0, focus.1
        )));
    }
    let inv_lz = 1.0 / (wavelength * screen_distance);
    let values = Array2::from_shape_fn((ny, nx), |(iy, ix)| {
        let x = (ix as f64 - (nx / 2) as f64) * pixel_size - focus.0;
        let y = (iy as f64 - (ny / 2) as f64) * pixel_size - focus.1;
        Complex64::from_polar(1.0, -PI * inv_lz * (x * x + y * y))
    });
    ComplexField::from_values(values, pixel_size)
}

/// Synthesize the continuous element from object and target waves.
///
/// Where `|psi_o|^2 >= eps * max(|psi_o|^2)`:
/// `d_raw = Re(psi_s/psi_o)`, shifted by the smallest constant making the
/// kept-region minimum zero, then rescaled by the maximum into `[0,1]`.
/// Sub-threshold pixels are exactly zero.
pub fn synthesize_continuous(
    psi_o: &ComplexField,
    psi_s: &ComplexField,
    params: &SynthesisParams,
) -> Result<DiffractiveElement> {
    params.validate()?;
    psi_o.check_same_grid(psi_s)?;
    let intensity = psi_o.intensity();
    let peak = intensity.iter().cloned().fold(0.0f64, f64::max);
    if peak <= 0.0 {
        return Err(CoreError::Synthesis("object wave is identically zero".into()));
    }
    let threshold = params.intensity_threshold_fraction * peak;
    let (ny, nx) = intensity.dim();
    let support = Array2::from_shape_fn((ny, nx), |idx| intensity[idx] >= threshold);
    if !support.iter().any(|&k| k) {
        return Err(CoreError::Synthesis(
            "no object-wave intensity above the synthesis threshold".into(),
        ));
    }

    let mut raw = Array2::zeros((ny, nx));
    let mut min_kept = f64::INFINITY;
    for ((iy, ix), &kept) in support.indexed_iter() {
        if kept {
            let v = (psi_s.values()[[iy, ix]] / psi_o.values()[[iy, ix]]).re;
            raw[[iy, ix]] = v;
            min_kept = min_kept.min(v);
        }
    }
    let offset = match params.offset_policy {
        OffsetPolicy::SmallestPositive => (-min_kept).max(0.0),
    };
    let mut max_kept = 0.0f64;
    for ((iy, ix), &kept) in support.indexed_iter() {
        if kept {
            raw[[iy, ix]] += offset;
            max_kept = max_kept.max(raw[[iy, ix]]);
        }
    }
    if max_kept > 0.0 {
        for ((iy, ix), &kept) in support.indexed_iter() {
            if kept {
                raw[[iy, ix]] = (raw[[iy, ix]] / max_kept).clamp(0.0, 1.0);
            }
        }
    }
    DiffractiveElement::new(raw, support, psi_o.pixel_size(), ElementKind::Continuous)
}

/// Threshold a continuous element into a binary {0,1} one.
///
/// Sub-threshold (zero-support) pixels stay zero; kept-region values at or
/// above the policy threshold become 1.
pub fn binarize(element: &DiffractiveElement, policy: BinarizePolicy) -> Result<DiffractiveElement> {
    if element.kind != ElementKind::Continuous {
        return Err(CoreError::Domain(
            "binarize expects a continuous element".into(),
        ));
    }
    let threshold = match policy {
        BinarizePolicy::Fixed(t) => {
            if !(0.0..=1.0).contains(&t) {
                return Err(CoreError::Domain(format!(
                    "fixed binarize threshold must be in [0,1], got {t}"
                )));
            }
            t
        }
        BinarizePolicy::KeptMedian => {
            let mut kept: Vec<f64> = element
                .transmission
                .iter()
                .zip(element.support.iter())
                .filter(|(_, &k)| k)
                .map(|(&v, _)| v)
                .collect();
            if kept.is_empty() {
                return Err(CoreError::Domain("element has empty support".into()));
            }
            let mid = kept.len() / 2;
            kept.select_nth_unstable_by(mid, |a, b| a.partial_cmp(b).unwrap());
            kept[mid]
        }
    };
    let (ny, nx) = element.transmission.dim();
    let values = Array2::from_shape_fn((ny, nx), |idx| {
        if element.support[idx] && element.transmission[idx] >= threshold {
            1.0
        } else {
            0.0
        }
    });
    DiffractiveElement::new(values, element.support.clone(), element.pixel_size, ElementKind::Binary)
}

/// Block-aggregate the element to a coarser pixel pitch (integer ratio).
/// Majority vote for binary elements (ties -> 0), block mean for
/// continuous ones.
pub fn pixelate(element: &DiffractiveElement, target_pixel: f64) -> Result<DiffractiveElement> {
    if !(target_pixel > 0.0) {
        return Err(CoreError::Domain("target pixel must be positive".into()));
    }
    let ratio_f = target_pixel / element.pixel_size;
    let ratio = ratio_f.round() as usize;
    if ratio < 1 || (ratio_f - ratio as f64).abs() > 1e-9 * ratio_f {
        return Err(CoreError::Geometry(format!(
            "target pixel {target_pixel} is not an integer multiple of native pixel {}",
            element.pixel_size
        )));
    }
    if ratio == 1 {
        return Ok(element.clone());
    }
    let (ny, nx) = element.transmission.dim();
    if ny % ratio != 0 || nx % ratio != 0 {
        return Err(CoreError::Geometry(format!(
            "grid {nx}x{ny} not divisible by aggregation ratio {ratio}"
        )));
    }
    let (oy, ox) = (ny / ratio, nx / ratio);
    let mut values = Array2::zeros((oy, ox));
    let mut support = Array2::from_elem((oy, ox), false);
    for by in 0..oy {
        for bx in 0..ox {
            let mut sum = 0.0;
            let mut ones = 0usize;
            let mut any_support = false;
            for iy in by * ratio..(by + 1) * ratio {
                for ix in bx * ratio..(bx + 1) * ratio {
                    let v = element.transmission[[iy, ix]];
                    sum += v;
                    if v == 1.0 {
                        ones += 1;
                    }
                    any_support |= element.support[[iy, ix]];
                }
            }
            let block = ratio * ratio;
            values[[by, bx]] = match element.kind {
                ElementKind::Binary => {
                    // majority vote, ties -> 0
                    if ones * 2 > block {
                        1.0
                    } else {
                        0.0
                    }
                }
                ElementKind::Continuous => sum / block as f64,
            };
            support[[by, bx]] = any_support;
        }
    }
    DiffractiveElement::new(values, support, target_pixel, element.kind)
}

/// Illuminate the element: pointwise product of the wave with the real
/// transmission map. Grids must be aligned.
pub fn apply(psi: &ComplexField, element: &DiffractiveElement) -> Result<ComplexField> {
    let (ny, nx) = element.transmission.dim();
    if psi.nx() != nx || psi.ny() != ny {
        return Err(CoreError::Shape(format!(
            "wave grid {}x{} does not match element grid {}x{}",
            psi.nx(),
            psi.ny(),
            nx,
            ny
        )));
    }
    let rel = (psi.pixel_size() - element.pixel_size).abs() / element.pixel_size;
    if rel > 1e-9 {
        return Err(CoreError::Shape(
            "wave and element pixel sizes differ".into(),
        ));
    }
    let values = Array2::from_shape_fn((ny, nx), |idx| psi.values()[idx] * element.transmission[idx]);
    ComplexField::from_values(values, psi.pixel_size())
}
