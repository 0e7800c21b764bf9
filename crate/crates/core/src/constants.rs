//! Physical constants (CODATA 2018, exact SI values where defined).

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

pub const TWO_PI: f64 = std::f64::consts::TAU;

/// Converts an ordinary frequency in Hz to an angular frequency in rad/s.
#[inline]
pub fn hz(f: f64) -> f64 {
    TWO_PI * f
}
