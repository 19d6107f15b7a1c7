//! Simulation and analysis engine for low-dose electron hypothesis
//! verification.
//!
//! The pipeline: synthesize an amplitude-only diffractive element from a
//! structural hypothesis, run single electrons through the
//! specimen -> element -> screen chain, and track a sequential Bayesian
//! posterior over two candidate orientations until a confidence threshold
//! is crossed. A companion module reproduces the point-projection grating
//! diffraction experiment used to establish the optics.
//!
//! Modules follow the chain:
//!
//! * [`field`] — complex wavefields and paraxial propagators
//! * [`specimen`] — phantoms, exit waves, absorption
//! * [`doe`] — diffractive element synthesis, binarization, pixelation
//! * [`detection`] — screen distributions and Monte Carlo events
//! * [`hypothesis`] — Bayesian updating, trials, ensembles
//! * [`gratings`] — hole-array diffraction and angle extraction
//! * [`io`] — PGM/PBM/CSV formats

// validations use `!(x > 0.0)` on purpose: unlike `x <= 0.0` it also
// rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod detection;
pub mod doe;
pub mod error;
mod fft;
pub mod field;
pub mod gratings;
pub mod hypothesis;
pub mod io;
pub mod specimen;

pub use detection::{
    sample_event, screen_distribution, ChainGeometry, ChannelTransmission, DetectionEvent,
    ScreenDistribution,
};
pub use doe::{
    apply, binarize, pixelate, synthesize_continuous, target_wave, BinarizePolicy,
    DiffractiveElement, ElementKind, OffsetPolicy, SynthesisParams,
};
pub use error::{CoreError, Result};
pub use field::{
    electron_wavelength, point_source_illumination, propagate_angular_spectrum,
    propagate_fresnel_scaled, rms_diff_mod_phase, BeamParameters, ComplexField,
};
pub use gratings::{
    build_grating_mask, extract_first_order_angle, grating_equation, simulate_pattern,
    sweep_energies, AngleExtraction, GratingSpec, Illumination, ProjectionGeometry, SweepPoint,
};
pub use hypothesis::{
    replay_trial, run_ensemble, run_trial, trial_rng, update_posterior, HypothesisPair,
    PosteriorTrace, TrialRecord, TrialStatistics, UpdateMode, Verdict,
};
pub use specimen::{
    exit_wave, generate_phantom, interaction_constant, matched_beam, AbsorptionModel, MfpTable,
    Orientation, Phantom, PhantomParams,
};
