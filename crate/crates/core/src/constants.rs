//! Physical constants (CODATA 2018, SI units).

/// Planck constant, J s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Speed of light in vacuum, m/s (exact).
pub const LIGHT_SPEED: f64 = 299_792_458.0;

/// Elementary charge, C (exact).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;

/// Electron rest mass, kg.
pub const ELECTRON_MASS: f64 = 9.109_383_701_5e-31;

/// Electron rest energy, eV.
pub const ELECTRON_REST_ENERGY_EV: f64 = ELECTRON_MASS * LIGHT_SPEED * LIGHT_SPEED / ELEMENTARY_CHARGE;
