//! Shared chain assembly: config -> phantom -> element -> hypothesis pair.

use elver_core::{
    binarize, detection::object_wave_at_doe, generate_phantom, screen_distribution,
    synthesize_continuous, target_wave, AbsorptionModel, BinarizePolicy, DiffractiveElement,
    HypothesisPair, Orientation, Phantom, PhantomParams, ScreenDistribution,
};

use crate::config::ResolvedConfig;
use crate::AppError;

/// Everything the synthesize/ensemble/verify commands need, built once.
pub struct Chain {
    pub phantom: Phantom,
    pub absorption: AbsorptionModel,
    pub element_continuous: DiffractiveElement,
    pub element_binary: DiffractiveElement,
    /// The element the forward chain actually uses (per config).
    pub element: DiffractiveElement,
    /// Focal point as a screen pixel index (row, col).
    pub focus_px: (usize, usize),
    pub screen_pixel: f64,
}

pub fn build_chain(cfg: &ResolvedConfig) -> Result<Chain, AppError> {
    let raw = &cfg.raw;
    let n = raw.grid.n;
    let phantom = match &raw.phantom.thickness_csv_path {
        Some(path) => {
            let (map, pixel) =
                elver_core::io::read_csv_map(std::path::Path::new(path)).map_err(AppError::compute)?;
            let (ny, nx) = map.dim();
            if nx != n || ny != n {
                return Err(AppError::validation(format!(
                    "imported thickness map is {nx}x{ny}, grid wants {n}x{n}"
                )));
            }
            let rel = (pixel - raw.grid.specimen_pixel_m).abs() / raw.grid.specimen_pixel_m;
            if rel > 1e-9 {
                return Err(AppError::validation(format!(
                    "imported thickness map pixel {pixel} m differs from grid pixel {} m",
                    raw.grid.specimen_pixel_m
                )));
            }
            Phantom::new(
                map,
                pixel,
                raw.phantom.inner_potential_v,
                raw.phantom.density_scale,
                raw.phantom.extent_m,
            )
            .map_err(AppError::compute)?
        }
        None => generate_phantom(
            raw.phantom.seed,
            raw.phantom.extent_m,
            n,
            raw.grid.specimen_pixel_m,
            &PhantomParams {
                inner_potential: raw.phantom.inner_potential_v,
                density_scale: raw.phantom.density_scale,
                peak_thickness: raw.phantom.peak_thickness_m,
                ..PhantomParams::default()
            },
        )
        .map_err(AppError::compute)?,
    };
    let absorption = AbsorptionModel {
        enabled: raw.absorption.enabled,
        table: cfg.mfp_table.clone(),
    };

    let at_doe = object_wave_at_doe(
        &phantom,
        Orientation::Right,
        &cfg.geometry,
        raw.beam.energy_ev,
        &absorption,
    )
    .map_err(AppError::compute)?;
    let doe_pixel = at_doe.wave.pixel_size();
    let screen_pixel = cfg.wavelength * cfg.geometry.doe_to_screen / (n as f64 * doe_pixel);
    let focus_m = (
        cfg.focus_offset_px[0] as f64 * screen_pixel,
        cfg.focus_offset_px[1] as f64 * screen_pixel,
    );
    let focus_px = (
        (n as i64 / 2 + cfg.focus_offset_px[1]) as usize,
        (n as i64 / 2 + cfg.focus_offset_px[0]) as usize,
    );
    let psi_s = target_wave(
        n,
        n,
        doe_pixel,
        cfg.geometry.doe_to_screen,
        focus_m,
        cfg.wavelength,
    )
    .map_err(AppError::compute)?;
    let mut element_continuous =
        synthesize_continuous(&at_doe.wave, &psi_s, &cfg.synthesis_params)
            .map_err(AppError::compute)?;
    let mut element_binary = binarize(&element_continuous, BinarizePolicy::KeptMedian)
        .map_err(AppError::compute)?;
    if let Some(pitch) = raw.synthesis.pixelate_to_m {
        element_continuous =
            elver_core::pixelate(&element_continuous, pitch).map_err(AppError::compute)?;
        element_binary =
            elver_core::pixelate(&element_binary, pitch).map_err(AppError::compute)?;
    }
    let element = match raw.synthesis.element.as_str() {
        "continuous" => element_continuous.clone(),
        _ => element_binary.clone(),
    };
    Ok(Chain {
        phantom,
        absorption,
        element_continuous,
        element_binary,
        element,
        focus_px,
        screen_pixel,
    })
}

impl Chain {
    pub fn distribution(
        &self,
        cfg: &ResolvedConfig,
        orientation: Orientation,
    ) -> Result<ScreenDistribution, AppError> {
        screen_distribution(
            &self.phantom,
            orientation,
            &self.element,
            &cfg.geometry,
            cfg.raw.beam.energy_ev,
            &self.absorption,
        )
        .map_err(AppError::compute)
    }

    pub fn hypothesis_pair(&self, cfg: &ResolvedConfig) -> Result<HypothesisPair, AppError> {
        let right = self.distribution(cfg, Orientation::Right)?;
        let wrong = self.distribution(cfg, Orientation::Wrong)?;
        HypothesisPair::new(right, wrong, 0.5).map_err(AppError::compute)
    }
}
