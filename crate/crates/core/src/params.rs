//! Physical parameter records. All rates are angular frequencies in rad/s.

use serde::{Deserialize, Serialize};

use crate::constants::{hz, HBAR, K_B};
use crate::error::{Error, Result};

/// Thermal occupancy of the mechanical bath in the high-temperature limit, `k_B T / (hbar Omega_m)`.
pub fn bath_occupation(temperature: f64, omega_m: f64) -> Result<f64> {
    if !(omega_m > 0.0) || !omega_m.is_finite() {
        return Err(Error::invalid("omega_m", format!("must be > 0, got {omega_m}")));
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(Error::invalid(
            "temperature",
            format!("must be >= 0, got {temperature}"),
        ));
    }
    Ok(K_B * temperature / (HBAR * omega_m))
}

/// Linearized optomechanical coupling `g = sqrt(n_cav) g0`.
pub fn coupling_from_photons(g0: f64, n_cav: f64) -> f64 {
    n_cav.max(0.0).sqrt() * g0
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be a finite value > 0, got {v}")))
    }
}

fn check_unit_interval(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must lie in [0, 1], got {v}")))
    }
}

fn check_finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("must be finite, got {v}")))
    }
}

/// The optomechanical cavity and its mechanical mode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmParams {
    pub omega_m: f64,
    pub q_m: f64,
    /// Total cavity energy decay rate.
    pub kappa_c: f64,
    /// External coupling fraction `kappa_e / kappa_c`.
    pub eta_c: f64,
    pub delta_c: f64,
    pub g0: f64,
    pub n_cav: f64,
    /// Bath temperature in kelvin.
    pub temperature: f64,
}

impl Default for OmParams {
    fn default() -> Self {
        Self {
            omega_m: hz(1e6),
            q_m: 2e7,
            kappa_c: hz(10e9),
            eta_c: 0.8,
            delta_c: 0.0,
            g0: hz(250e3),
            n_cav: 500.0,
            temperature: 4.2,
        }
    }
}

impl OmParams {
    pub fn validate(&self) -> Result<()> {
        check_positive("omega_m", self.omega_m)?;
        check_positive("q_m", self.q_m)?;
        check_positive("kappa_c", self.kappa_c)?;
        check_unit_interval("eta_c", self.eta_c)?;
        check_finite("delta_c", self.delta_c)?;
        check_finite("g0", self.g0)?;
        if !(self.g0 >= 0.0) {
            return Err(Error::invalid("g0", format!("must be >= 0, got {}", self.g0)));
        }
        if !(self.n_cav >= 0.0) || !self.n_cav.is_finite() {
            return Err(Error::invalid("n_cav", format!("must be >= 0, got {}", self.n_cav)));
        }
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(Error::invalid(
                "temperature",
                format!("must be >= 0, got {}", self.temperature),
            ));
        }
        Ok(())
    }

    pub fn gamma_m(&self) -> f64 {
        self.omega_m / self.q_m
    }

    pub fn kappa_e(&self) -> f64 {
        self.eta_c * self.kappa_c
    }

    pub fn kappa_i(&self) -> f64 {
        self.kappa_c - self.kappa_e()
    }

    pub fn coupling(&self) -> f64 {
        coupling_from_photons(self.g0, self.n_cav)
    }

    pub fn n_th(&self) -> f64 {
        bath_occupation(self.temperature, self.omega_m).unwrap_or(f64::NAN)
    }

    pub fn with_n_cav(mut self, n_cav: f64) -> Self {
        self.n_cav = n_cav;
        self
    }
}

/// Auxiliary cavity. Channel 1 couples to the feedback path, channel 2 to the outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxCavityParams {
    pub kappa1: f64,
    pub kappa2: f64,
    pub delta_a: f64,
}

impl Default for AuxCavityParams {
    fn default() -> Self {
        Self {
            kappa1: hz(400e3),
            kappa2: hz(100e3),
            delta_a: -hz(1e6),
        }
    }
}

impl AuxCavityParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("kappa1", self.kappa1), ("kappa2", self.kappa2)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(name, format!("must be >= 0, got {v}")));
            }
        }
        check_finite("delta_a", self.delta_a)?;
        if !(self.total() > 0.0) {
            return Err(Error::invalid("kappa1 + kappa2", "total linewidth must be > 0"));
        }
        Ok(())
    }

    pub fn total(&self) -> f64 {
        self.kappa1 + self.kappa2
    }
}

/// Partially reflecting mirror closing the feedback path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuxMirrorParams {
    pub reflectivity: f64,
}

impl Default for AuxMirrorParams {
    fn default() -> Self {
        Self { reflectivity: 1.0 }
    }
}

impl AuxMirrorParams {
    pub fn validate(&self) -> Result<()> {
        check_unit_interval("reflectivity", self.reflectivity)
    }
}

/// Optical path between the optomechanical cavity and the auxiliary element.
/// All quantities are single-way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathParams {
    pub eta_s: f64,
    pub phi_s: f64,
    /// Single-way delay in seconds.
    pub tau_s: f64,
}

impl Default for PathParams {
    fn default() -> Self {
        Self {
            eta_s: 0.7,
            phi_s: 0.0,
            tau_s: 0.0,
        }
    }
}

impl PathParams {
    pub fn validate(&self) -> Result<()> {
        check_unit_interval("eta_s", self.eta_s)?;
        check_finite("phi_s", self.phi_s)?;
        if !(self.tau_s >= 0.0) || !self.tau_s.is_finite() {
            return Err(Error::invalid("tau_s", format!("must be >= 0, got {}", self.tau_s)));
        }
        Ok(())
    }
}
