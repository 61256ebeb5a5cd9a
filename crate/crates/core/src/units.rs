//! Physical constants and unit helpers.
//!
//! Energies are carried as angular frequencies (energy/ħ, rad/s) throughout
//! the crate; times are seconds, lengths metres. Conversions to the Hz / ms /
//! μm used in files and on the command line live here.

use std::f64::consts::TAU;

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J s.
pub const PLANCK: f64 = TAU * HBAR;
/// Atomic mass unit, kg.
pub const AMU: f64 = 1.660_539_066_60e-27;
/// Mass of ⁸⁷Rb in atomic mass units.
pub const RB87_MASS_AMU: f64 = 86.909_180_527;

/// Angular frequency (rad/s) from an ordinary frequency in Hz.
#[inline]
pub fn hz_to_rad(f_hz: f64) -> f64 {
    TAU * f_hz
}

/// Ordinary frequency in Hz from an angular frequency (rad/s).
#[inline]
pub fn rad_to_hz(omega: f64) -> f64 {
    omega / TAU
}

#[inline]
pub fn ms(t_ms: f64) -> f64 {
    t_ms * 1e-3
}

#[inline]
pub fn to_ms(t: f64) -> f64 {
    t * 1e3
}

#[inline]
pub fn um(x_um: f64) -> f64 {
    x_um * 1e-6
}

#[inline]
pub fn to_um(x: f64) -> f64 {
    x * 1e6
}

#[inline]
pub fn nm(x_nm: f64) -> f64 {
    x_nm * 1e-9
}
