//! Closed-form sideband-resolved description of cavity feedback with
//! `Delta_c = 0`, `phi_s = 0` and no delay.
//!
//! Eliminating the broad optomechanical cavity leaves the mechanics coupled
//! directly to the auxiliary cavity, with a narrower effective linewidth, a
//! reduced coupling and an added-noise contribution to the mechanical bath.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ChannelKind, LinearDelayModel, NoiseChannel, Scheme};
use crate::params::{AuxCavityParams, OmParams, PathParams};

/// Below this `kappa_c / Omega_m` the cavity is not broad enough for the
/// elimination to be trusted.
pub const UNRESOLVED_RATIO: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LoopCoefficients {
    /// Amplitude reflection of the optomechanical cavity on resonance, `1 - 2 eta_c`.
    pub r: f64,
    pub xi1: f64,
    pub xi2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveParams {
    pub kappa1_eff: f64,
    pub kappa_a_eff: f64,
    pub g_eff: f64,
    pub n_th_eff: f64,
    /// Set when `kappa_c / Omega_m` is below [`UNRESOLVED_RATIO`].
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cooperativity {
    pub c_qu: f64,
    pub c_eff: f64,
    pub ratio: f64,
}

/// Unit-norm combinations of `(intrinsic, backward, forward)` vacuum inputs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseFieldCoefficients {
    /// Effective input of the auxiliary cavity's feedback port.
    pub aux_input: [f64; 3],
    /// Added noise field driving the mechanics.
    pub added: [f64; 3],
    /// Amplitude with which the added field's X quadrature drives `Y_m`.
    pub added_weight: f64,
}

pub fn loop_coefficients(om: &OmParams, path: &PathParams) -> LoopCoefficients {
    let r = 1.0 - om.kappa_e() / (om.kappa_c / 2.0);
    let x = path.eta_s * r;
    LoopCoefficients {
        r,
        xi1: 1.0 - x,
        xi2: 1.0 - x * x,
    }
}

fn require_resonant(om: &OmParams) -> Result<()> {
    if om.delta_c != 0.0 {
        return Err(Error::Precondition(format!(
            "the effective mapping needs a resonant drive (delta_c = 0), got {}",
            om.delta_c
        )));
    }
    Ok(())
}

pub fn effective_params(om: &OmParams, aux: &AuxCavityParams, path: &PathParams) -> Result<EffectiveParams> {
    om.validate()?;
    aux.validate()?;
    path.validate()?;
    require_resonant(om)?;
    let lc = loop_coefficients(om, path);
    let g = om.coupling();
    let kappa1_eff = lc.xi2 / (lc.xi1 * lc.xi1) * aux.kappa1;
    let g_eff = -(path.eta_s * aux.kappa1 * om.kappa_e()).sqrt() / (lc.xi1 * om.kappa_c / 2.0) * g;
    let n_th_eff = om.n_th() + 4.0 * (1.0 - path.eta_s) / lc.xi1 * g * g / (om.gamma_m() * om.kappa_c);
    let ratio = om.kappa_c / om.omega_m;
    let warning = (ratio < UNRESOLVED_RATIO).then(|| {
        format!("kappa_c / omega_m = {ratio:.3e} is below {UNRESOLVED_RATIO}; the cavity is not adiabatically fast")
    });
    Ok(EffectiveParams {
        kappa1_eff,
        kappa_a_eff: kappa1_eff + aux.kappa2,
        g_eff,
        n_th_eff,
        warning,
    })
}

/// `4 g^2 / (n_th kappa_c Gamma_m)`.
pub fn quantum_cooperativity(om: &OmParams) -> f64 {
    let g = om.coupling();
    4.0 * g * g / (om.n_th() * om.kappa_c * om.gamma_m())
}

/// The two factors of the cooperativity ratio: `ratio = k / (f (1 + b C_qu))`.
fn ratio_factors(om: &OmParams, aux: &AuxCavityParams, path: &PathParams) -> (f64, f64, f64) {
    let lc = loop_coefficients(om, path);
    let share = aux.kappa1 / aux.total();
    let eta = path.eta_s;
    let k = 4.0 * eta * om.eta_c * share / (lc.xi1 * lc.xi1);
    let f = 1.0 + 2.0 * eta * lc.r / lc.xi1 * share;
    let b = (1.0 - eta) / lc.xi1;
    (k, f, b)
}

pub fn effective_cooperativity(om: &OmParams, aux: &AuxCavityParams, path: &PathParams) -> Result<Cooperativity> {
    om.validate()?;
    aux.validate()?;
    path.validate()?;
    require_resonant(om)?;
    let c_qu = quantum_cooperativity(om);
    let (k, f, b) = ratio_factors(om, aux, path);
    let noise = 1.0 + b * c_qu;
    if !(f > 0.0) || !(noise > 0.0) {
        return Err(Error::OutOfValidity(format!(
            "cooperativity denominator factors ({f:.4}, {noise:.4}) must be positive"
        )));
    }
    let ratio = k / (f * noise);
    Ok(Cooperativity {
        c_qu,
        c_eff: ratio * c_qu,
        ratio,
    })
}

/// The `C_qu` at which the effective cooperativity stops exceeding the bare
/// one. `None` when there is no enhancement at all or when the enhancement
/// persists for every `C_qu` (lossless path).
pub fn enhancement_threshold(om: &OmParams, aux: &AuxCavityParams, path: &PathParams) -> Option<f64> {
    let (k, f, b) = ratio_factors(om, aux, path);
    if !(f > 0.0) {
        return None;
    }
    let at_zero = k / f;
    if at_zero < 1.0 || b <= 0.0 {
        return None;
    }
    Some((at_zero - 1.0) / b)
}

pub fn effective_noise_fields(om: &OmParams, path: &PathParams) -> Result<NoiseFieldCoefficients> {
    require_resonant(om)?;
    let lc = loop_coefficients(om, path);
    let eta = path.eta_s;
    let (ke, ki, kc) = (om.kappa_e(), om.kappa_i(), om.kappa_c);
    let s2 = lc.xi2.sqrt();
    let aux_input = [
        -(eta * ke * ki).sqrt() / (kc / 2.0) / s2,
        lc.r * (eta * (1.0 - eta)).sqrt() / s2,
        (1.0 - eta).sqrt() / s2,
    ];
    // The (1 - eta_s) prefactor of the added field is folded into each entry
    // so the lossless limit stays finite.
    let ec = om.eta_c;
    let added = [
        ((1.0 - eta) * (1.0 - ec) / lc.xi1).sqrt(),
        (ec / lc.xi1).sqrt(),
        (ec * eta / lc.xi1).sqrt(),
    ];
    let g = om.coupling();
    let added_weight = 4.0 * g * ((1.0 - eta) / (lc.xi1 * kc)).sqrt();
    Ok(NoiseFieldCoefficients {
        aux_input,
        added,
        added_weight,
    })
}

/// 4-dimensional model over `(X_m, Y_m, X_A, Y_A)` with the effective
/// parameters. The added noise is orthogonal to the effective cavity input, so
/// it is carried by the mechanical bath at occupancy `n_th_eff`.
pub fn build_effective_model(om: &OmParams, aux: &AuxCavityParams, path: &PathParams) -> Result<LinearDelayModel> {
    let p = effective_params(om, aux, path)?;
    let gamma = om.gamma_m();
    let mut a = DMatrix::zeros(4, 4);
    a[(0, 1)] = om.omega_m;
    a[(1, 0)] = -om.omega_m;
    a[(1, 1)] = -gamma;
    a[(1, 2)] = -2.0 * p.g_eff;
    a[(2, 2)] = -p.kappa_a_eff / 2.0;
    a[(2, 3)] = -aux.delta_a;
    a[(3, 2)] = aux.delta_a;
    a[(3, 3)] = -p.kappa_a_eff / 2.0;
    a[(3, 0)] = -2.0 * p.g_eff;
    let channels = vec![
        NoiseChannel::vacuum(ChannelKind::AuxiliaryEffective),
        NoiseChannel::vacuum(ChannelKind::AuxiliaryOuter),
        NoiseChannel {
            kind: ChannelKind::MechanicalBath,
            psd: 2.0 * p.n_th_eff + 1.0,
            mask: [false, true],
        },
    ];
    let mut c = DMatrix::zeros(4, 6);
    let k1 = p.kappa1_eff.sqrt();
    let k2 = aux.kappa2.sqrt();
    c[(2, 0)] = k1;
    c[(3, 1)] = k1;
    c[(2, 2)] = k2;
    c[(3, 3)] = k2;
    c[(1, 5)] = (2.0 * gamma).sqrt();
    Ok(LinearDelayModel::ode(Scheme::Effective, a, c, channels))
}
