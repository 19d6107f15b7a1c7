//! Experiment configuration: TOML format, defaulting, validation, and the
//! resolved-config hash echoed into every output artifact.

use serde::{Deserialize, Serialize};
use std::path::Path;

use elver_core::{
    electron_wavelength, BinarizePolicy, ChainGeometry, GratingSpec, Illumination, MfpTable,
    OffsetPolicy, ProjectionGeometry, SynthesisParams, UpdateMode,
};

use crate::AppError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub energy_ev: f64,
}

impl Default for BeamSection {
    fn default() -> Self {
        Self { energy_ev: 15_000.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    pub n: usize,
    pub specimen_pixel_m: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { n: 512, specimen_pixel_m: 0.5e-9 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistanceSection {
    /// Element pitch the specimen->element hop should produce. Defaults to
    /// 20 nm at and above 50 keV, 40 nm below.
    pub doe_pixel_m: Option<f64>,
    /// Explicit specimen->element distance; overrides `doe_pixel_m`.
    pub specimen_to_doe_m: Option<f64>,
    pub doe_to_screen_m: Option<f64>,
    pub beam_diameter_factor: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomSection {
    pub seed: u64,
    pub extent_m: f64,
    pub peak_thickness_m: f64,
    pub inner_potential_v: f64,
    pub density_scale: f64,
    /// Import the thickness map from a CSV written by the map format
    /// (`nx,ny,pixel_size` header) instead of generating one; dimensions
    /// and pixel size must match the grid section.
    pub thickness_csv_path: Option<String>,
}

impl Default for PhantomSection {
    fn default() -> Self {
        Self {
            seed: 1,
            extent_m: 25e-9,
            peak_thickness_m: 25e-9,
            inner_potential_v: 9.09,
            density_scale: 0.8,
            thickness_csv_path: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisSection {
    pub intensity_threshold_fraction: f64,
    /// Element kind used in the forward chain: "binary" or "continuous".
    pub element: String,
    /// Focal point offset in screen pixels (x, y). Defaults to
    /// (round(0.2 n), 0): off-axis, clear of the zeroth-order background.
    pub focus_offset_pixels: Option<[i64; 2]>,
    /// Optional coarser fabrication pitch (integer multiple of the native
    /// element pixel).
    pub pixelate_to_m: Option<f64>,
}

impl Default for SynthesisSection {
    fn default() -> Self {
        Self {
            intensity_threshold_fraction: 1e-4,
            element: "binary".into(),
            focus_offset_pixels: None,
            pixelate_to_m: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorptionSection {
    pub enabled: bool,
    /// Two-column CSV (energy_eV,lambda_m) overriding the built-in table.
    pub mfp_table_path: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StatsSection {
    pub confidence: f64,
    pub n_trials: u64,
    pub max_incident: u64,
    /// "detections-only" or "full-information".
    pub mode: String,
    pub master_seed: u64,
    /// Spot-window radius used in reports, screen pixels.
    pub spot_window_radius_px: usize,
}

impl Default for StatsSection {
    fn default() -> Self {
        Self {
            confidence: 0.95,
            n_trials: 500,
            max_incident: 100_000,
            mode: "detections-only".into(),
            master_seed: 42,
            spot_window_radius_px: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GratingSection {
    pub slit_spacing_m: f64,
    pub hole_diameter_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub pitch_y_m: f64,
    pub n_gratings: usize,
    /// Transverse grating offset for the two-grating configuration.
    /// Defaults to the 90 eV merged-orders condition.
    pub pair_offset_m: Option<f64>,
    pub source_to_element_m: f64,
    pub source_to_screen_m: f64,
    pub grid_n: usize,
    pub grid_pixel_m: f64,
    pub energies_ev: Vec<f64>,
    /// "point-source" or "plane-wave".
    pub illumination: String,
}

impl Default for GratingSection {
    fn default() -> Self {
        Self {
            slit_spacing_m: 100e-9,
            hole_diameter_m: 20e-9,
            rows: 4,
            cols: 4,
            pitch_y_m: 100e-9,
            n_gratings: 1,
            pair_offset_m: None,
            source_to_element_m: 360e-6,
            source_to_screen_m: 100e-3,
            grid_n: 512,
            grid_pixel_m: 4e-9,
            energies_ev: vec![89.0, 110.0, 135.0, 170.0, 215.0, 282.0],
            illumination: "plane-wave".into(),
        }
    }
}

/// The full experiment configuration. Every field has a default; a config
/// file only needs the fields it wants to change.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub beam: BeamSection,
    pub grid: GridSection,
    pub distances: DistanceSection,
    pub phantom: PhantomSection,
    pub synthesis: SynthesisSection,
    pub absorption: AbsorptionSection,
    pub stats: StatsSection,
    pub grating: GratingSection,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, AppError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AppError::validation(format!("cannot read config {path:?}: {e}")))?;
        toml::from_str(&text)
            .map_err(|e| AppError::validation(format!("config parse error: {e}")))
    }

    /// Fill every derived default and validate against the owning
    /// modules' preconditions. Nothing heavier than table loading runs
    /// here.
    pub fn resolve(mut self) -> Result<ResolvedConfig, AppError> {
        let energy = self.beam.energy_ev;
        let wavelength =
            electron_wavelength(energy).map_err(|e| AppError::validation(e.to_string()))?;

        if self.grid.n < 32 || !self.grid.n.is_multiple_of(2) {
            return Err(AppError::validation(format!(
                "grid n must be even and >= 32, got {}",
                self.grid.n
            )));
        }
        if !(self.grid.specimen_pixel_m > 0.0) {
            return Err(AppError::validation("specimen pixel must be positive".into()));
        }

        // element pitch: paper values 20 nm (100 keV) / 40 nm (15 keV)
        let doe_pixel = self
            .distances
            .doe_pixel_m
            .unwrap_or(if energy >= 50_000.0 { 20e-9 } else { 40e-9 });
        let n = self.grid.n;
        let field = n as f64 * self.grid.specimen_pixel_m;
        let specimen_to_doe = self
            .distances
            .specimen_to_doe_m
            .unwrap_or(doe_pixel * field / wavelength);
        let doe_to_screen = self.distances.doe_to_screen_m.unwrap_or(100e-3);
        let beam_factor = self.distances.beam_diameter_factor.unwrap_or(1.2);
        self.distances = DistanceSection {
            doe_pixel_m: Some(doe_pixel),
            specimen_to_doe_m: Some(specimen_to_doe),
            doe_to_screen_m: Some(doe_to_screen),
            beam_diameter_factor: Some(beam_factor),
        };
        let geometry = ChainGeometry {
            specimen_to_doe,
            doe_to_screen,
            beam_diameter_factor: beam_factor,
        };
        geometry.validate().map_err(|e| AppError::validation(e.to_string()))?;

        if !(self.phantom.extent_m > 0.0) || self.phantom.extent_m > 0.75 * field {
            return Err(AppError::validation(format!(
                "phantom extent {} m needs a >=25% guard band on the {} m field",
                self.phantom.extent_m, field
            )));
        }
        if !(self.phantom.peak_thickness_m > 0.0)
            || !(self.phantom.inner_potential_v > 0.0)
            || !(self.phantom.density_scale > 0.0)
        {
            return Err(AppError::validation(
                "phantom thickness, inner potential, and density scale must be positive".into(),
            ));
        }

        let synthesis_params = SynthesisParams {
            intensity_threshold_fraction: self.synthesis.intensity_threshold_fraction,
            offset_policy: OffsetPolicy::SmallestPositive,
            binarize_policy: BinarizePolicy::KeptMedian,
        };
        synthesis_params
            .validate()
            .map_err(|e| AppError::validation(e.to_string()))?;
        match self.synthesis.element.as_str() {
            "binary" | "continuous" => {}
            other => {
                return Err(AppError::validation(format!(
                    "synthesis.element must be \"binary\" or \"continuous\", got {other:?}"
                )))
            }
        }
        let focus = self
            .synthesis
            .focus_offset_pixels
            .unwrap_or([(0.2 * n as f64).round() as i64, 0]);
        if focus[0].unsigned_abs() as usize >= n / 2 || focus[1].unsigned_abs() as usize >= n / 2 {
            return Err(AppError::validation(format!(
                "focus offset {focus:?} px outside the {n}-pixel screen"
            )));
        }
        self.synthesis.focus_offset_pixels = Some(focus);
        if let Some(p) = self.synthesis.pixelate_to_m {
            // native element pixel after the scaled Fresnel hop
            let native = wavelength * specimen_to_doe / field;
            let ratio = p / native;
            if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio {
                return Err(AppError::validation(format!(
                    "pixelate_to_m {p} must be an integer multiple of the native element pixel {native}"
                )));
            }
        }

        let mfp_table = match &self.absorption.mfp_table_path {
            Some(p) => elver_core::io::read_mfp_csv(Path::new(p))
                .map_err(|e| AppError::validation(format!("mfp table: {e}")))?,
            None => MfpTable::default(),
        };
        if self.absorption.enabled {
            mfp_table
                .lookup(energy)
                .map_err(|e| AppError::validation(e.to_string()))?;
        }

        if !(self.stats.confidence > 0.5 && self.stats.confidence < 1.0) {
            return Err(AppError::validation(format!(
                "stats.confidence must lie in (0.5, 1), got {}",
                self.stats.confidence
            )));
        }
        if self.stats.n_trials == 0 || self.stats.max_incident == 0 {
            return Err(AppError::validation(
                "stats.n_trials and stats.max_incident must be positive".into(),
            ));
        }
        let mode = match self.stats.mode.as_str() {
            "detections-only" => UpdateMode::DetectionsOnly,
            "full-information" => UpdateMode::FullInformation,
            other => {
                return Err(AppError::validation(format!(
                    "stats.mode must be \"detections-only\" or \"full-information\", got {other:?}"
                )))
            }
        };

        // grating section
        let g = &mut self.grating;
        let projection = ProjectionGeometry {
            source_to_element: g.source_to_element_m,
            source_to_screen: g.source_to_screen_m,
            grid_n: g.grid_n,
            grid_pixel: g.grid_pixel_m,
        };
        projection
            .validate()
            .map_err(|e| AppError::validation(e.to_string()))?;
        let pair_offset = match g.pair_offset_m {
            Some(p) => p,
            None => {
                let lam90 = electron_wavelength(90.0).expect("90 eV is valid");
                elver_core::gratings::merging_pair_offset(&projection, lam90, g.slit_spacing_m)
            }
        };
        g.pair_offset_m = Some(pair_offset);
        let grating_spec = GratingSpec {
            slit_spacing: g.slit_spacing_m,
            hole_diameter: g.hole_diameter_m,
            rows: g.rows,
            cols: g.cols,
            pitch_y: g.pitch_y_m,
            n_gratings: g.n_gratings,
            pair_offset,
        };
        grating_spec
            .validate()
            .map_err(|e| AppError::validation(e.to_string()))?;
        let illumination = match g.illumination.as_str() {
            "point-source" => Illumination::PointSource,
            "plane-wave" => Illumination::PlaneWave,
            other => {
                return Err(AppError::validation(format!(
                    "grating.illumination must be \"point-source\" or \"plane-wave\", got {other:?}"
                )))
            }
        };
        if g.energies_ev.is_empty() {
            return Err(AppError::validation("grating.energies_ev must not be empty".into()));
        }
        for &e in &g.energies_ev {
            let lam = electron_wavelength(e).map_err(|e| AppError::validation(e.to_string()))?;
            if lam >= g.slit_spacing_m {
                return Err(AppError::validation(format!(
                    "energy {e} eV: wavelength {lam} m >= slit spacing {} m (paraxial violation)",
                    g.slit_spacing_m
                )));
            }
        }

        Ok(ResolvedConfig {
            raw: self,
            wavelength,
            geometry,
            synthesis_params,
            mode,
            mfp_table,
            grating_spec,
            projection,
            illumination,
            focus_offset_px: focus,
        })
    }
}

/// A fully resolved configuration: all defaults filled, cross-checked, and
/// ready to drive the simulation modules.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub raw: ExperimentConfig,
    pub wavelength: f64,
    pub geometry: ChainGeometry,
    pub synthesis_params: SynthesisParams,
    pub mode: UpdateMode,
    pub mfp_table: MfpTable,
    pub grating_spec: GratingSpec,
    pub projection: ProjectionGeometry,
    pub illumination: Illumination,
    pub focus_offset_px: [i64; 2],
}

impl ResolvedConfig {
    /// Canonical TOML serialization of the resolved config (the hash input
    /// and the echo embedded in every output artifact).
    pub fn canonical_toml(&self) -> String {
        toml::to_string(&self.raw).expect("resolved config serializes")
    }

    pub fn hash(&self) -> String {
        format!("{:016x}", fnv1a64(self.canonical_toml().as_bytes()))
    }
}

/// FNV-1a 64-bit hash. An integrity echo for reproducibility checks, not
/// a cryptographic commitment.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve() {
        let cfg = ExperimentConfig::default().resolve().unwrap();
        // 15 keV default -> 40 nm element pitch
        assert_eq!(cfg.raw.distances.doe_pixel_m, Some(40e-9));
        let z1 = cfg.raw.distances.specimen_to_doe_m.unwrap();
        let native = cfg.wavelength * z1 / (512.0 * 0.5e-9);
        assert!((native - 40e-9).abs() < 1e-15);
        assert_eq!(cfg.focus_offset_px, [102, 0]);
        // default two-grating offset sits at the 90 eV merge condition
        let off = cfg.raw.grating.pair_offset_m.unwrap();
        assert!((off - 463.7e-9).abs() < 1e-9);
    }

    #[test]
    fn hash_stable_and_sensitive() {
        let a = ExperimentConfig::default().resolve().unwrap();
        let b = ExperimentConfig::default().resolve().unwrap();
        assert_eq!(a.hash(), b.hash());
        let mut cfg = ExperimentConfig::default();
        cfg.stats.master_seed = 43;
        let c = cfg.resolve().unwrap();
        assert_ne!(a.hash(), c.hash());
    }

    #[test]
    fn bad_mode_rejected() {
        let mut cfg = ExperimentConfig::default();
        cfg.stats.mode = "psychic".into();
        assert!(cfg.resolve().is_err());
    }

    #[test]
    fn unknown_fields_rejected() {
        let err = toml::from_str::<ExperimentConfig>("[beam]\nenergy_ev = 100.0\ntypo = 3\n");
        assert!(err.is_err());
    }
}
