//! Pulsed photon-phonon entanglement: pre-cooling, two-mode-squeezing
//! generation, a switching gap and a state swap, each read out through an
//! exponential temporal mode of the auxiliary cavity's outer port.
//!
//! The extended state holds the system quadratures followed by the accumulated
//! temporal modes. A temporal mode `r = int f(t) R(theta(t)) u_out(t) dt` is
//! integrated exactly: over a chunk ending at `t_e`, an auxiliary pair `z`
//! obeys `z' = (-theta' J - gamma I) z + u_out`, so that
//! `f(t_e) R(theta(t_e)) z(t_e)` is the chunk's contribution. Chunks only bound
//! the dynamic range of `z`; the result does not depend on their number.

use nalgebra::{DMatrix, Matrix2, Matrix4};
use serde::{Deserialize, Serialize};

use crate::constants::hz;
use crate::error::{Error, Result};
use crate::linalg::{discretize, min_uncertainty_eigenvalue, rotation, symmetrize, symplectic_form};
use crate::model::{build_bare_om, build_cavity_feedback, ChannelKind, LinearDelayModel};
use crate::params::{AuxCavityParams, OmParams, PathParams};
use crate::spectral::{require_stable, steady_covariance};

/// Uncertainty-relation tolerance on the smallest eigenvalue of `sigma + iJ`.
pub const PHYSICALITY_TOL: f64 = 1e-8;

/// Relative floor of that tolerance. Eigenvalues of a strongly amplified state
/// carry roundoff of order `eps * max|sigma|`, which exceeds any absolute bound
/// once entries pass about 1e4.
pub const PHYSICALITY_REL_TOL: f64 = 1e3 * f64::EPSILON;

/// Tolerance applied to `sigma`: `PHYSICALITY_TOL`, raised to the roundoff
/// floor for states with large entries.
pub fn physicality_tolerance(sigma: &DMatrix<f64>) -> f64 {
    PHYSICALITY_TOL.max(PHYSICALITY_REL_TOL * sigma.amax())
}

/// Envelope weights below `exp(-ENVELOPE_CUTOFF)` are dropped.
const ENVELOPE_CUTOFF: f64 = 40.0;

/// Largest growth of the envelope weight within one chunk, in e-folds.
const CHUNK_EFOLDS: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseStage {
    Generation,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalModeSpec {
    /// Envelope rate in 1/s.
    pub gamma_tm: f64,
    /// Duration of the generation and swap pulses in seconds.
    pub tau_p: f64,
}

impl Default for TemporalModeSpec {
    fn default() -> Self {
        Self {
            gamma_tm: 1e5,
            tau_p: 2e-5,
        }
    }
}

impl TemporalModeSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_tm >= 0.0) || !self.gamma_tm.is_finite() {
            return Err(Error::invalid("gamma_tm", format!("must be >= 0, got {}", self.gamma_tm)));
        }
        if !(self.tau_p > 0.0) || !self.tau_p.is_finite() {
            return Err(Error::invalid("tau_p", format!("must be > 0, got {}", self.tau_p)));
        }
        Ok(())
    }

    /// Prefactor making `int f^2 dt = 1` over one pulse.
    pub fn normalization(&self) -> f64 {
        let x = 2.0 * self.gamma_tm * self.tau_p;
        if x < 1e-300 {
            (1.0 / self.tau_p).sqrt()
        } else {
            (2.0 * self.gamma_tm / -(-x).exp_m1()).sqrt()
        }
    }
}

/// Envelope of the generation (`t in [t_g_end - tau_p, t_g_end]`) or swap
/// (`t in [t_s_start, t_s_start + tau_p]`) temporal mode; zero outside.
pub fn envelope(spec: &TemporalModeSpec, stage: PulseStage, t: f64, t_g_end: f64, t_s_start: f64) -> f64 {
    let n = spec.normalization();
    match stage {
        PulseStage::Generation => {
            if t < t_g_end - spec.tau_p || t > t_g_end {
                0.0
            } else {
                n * (spec.gamma_tm * (t - t_g_end)).exp()
            }
        }
        PulseStage::Swap => {
            if t < t_s_start || t > t_s_start + spec.tau_p {
                0.0
            } else {
                n * (-spec.gamma_tm * (t - t_s_start)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "duration")]
pub enum PrecoolMode {
    SteadyState,
    /// Evolution from the thermal state for the given time in seconds.
    Timed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub precool_aux: AuxCavityParams,
    pub precool_phi_s: f64,
    pub precool_mode: PrecoolMode,
    /// Generation cavity; the swap cavity is identical with opposite detuning.
    pub aux: AuxCavityParams,
    /// Generation path phase; the swap stage uses the opposite sign.
    pub phi_s: f64,
    /// Switching gap in seconds.
    pub gap: f64,
}

impl Default for StageSchedule {
    fn default() -> Self {
        let om = OmParams::default();
        Self {
            precool_aux: AuxCavityParams {
                kappa1: hz(400e3),
                kappa2: hz(100e3),
                delta_a: -om.omega_m,
            },
            precool_phi_s: 0.0,
            precool_mode: PrecoolMode::SteadyState,
            aux: AuxCavityParams {
                kappa1: hz(800e3),
                kappa2: hz(500e3),
                delta_a: om.omega_m,
            },
            phi_s: 0.0,
            gap: 100e-9,
        }
    }
}

impl StageSchedule {
    pub fn validate(&self) -> Result<()> {
        self.precool_aux.validate()?;
        self.aux.validate()?;
        if !(self.gap >= 0.0) || !self.gap.is_finite() {
            return Err(Error::invalid("gap", format!("must be >= 0, got {}", self.gap)));
        }
        if let PrecoolMode::Timed(t) = self.precool_mode {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::invalid("precool duration", format!("must be > 0, got {t}")));
            }
        }
        Ok(())
    }

    pub fn t_g_end(&self) -> f64 {
        -self.gap / 2.0
    }

    pub fn t_s_start(&self) -> f64 {
        self.gap / 2.0
    }

    pub fn swap_aux(&self) -> AuxCavityParams {
        AuxCavityParams {
            delta_a: -self.aux.delta_a,
            ..self.aux
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub om: OmParams,
    pub eta_s: f64,
    pub schedule: StageSchedule,
    pub mode: TemporalModeSpec,
    /// Efficiency of detecting the outer-port light, applied as a beam-splitter
    /// admixture of vacuum on the final temporal-mode covariance.
    pub detection_efficiency: f64,
    /// Adiabatically eliminate the optomechanical cavity in every stage.
    pub adiabatic: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            om: OmParams::default().with_n_cav(1000.0),
            eta_s: 0.7,
            schedule: StageSchedule::default(),
            mode: TemporalModeSpec::default(),
            detection_efficiency: 1.0,
            adiabatic: false,
        }
    }
}

/// System quadratures followed by accumulated temporal modes, in the doubled
/// convention (vacuum = identity).
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedCovariance {
    pub sigma: DMatrix<f64>,
    pub n_system: usize,
}

impl ExtendedCovariance {
    pub fn n_modes(&self) -> usize {
        (self.sigma.nrows() - self.n_system) / 2
    }

    /// Smallest eigenvalue of `sigma + iJ`.
    pub fn min_uncertainty_eigenvalue(&self) -> f64 {
        let j = symplectic_form(self.sigma.nrows() / 2);
        min_uncertainty_eigenvalue(&self.sigma, &j)
    }

    /// Adds an uncorrelated mode at the end of the system block with the given
    /// 2x2 covariance (identity for vacuum, zero for a fresh accumulator).
    fn insert_system_mode(&self, block: f64) -> Self {
        let n = self.sigma.nrows();
        let k = self.n_system;
        let idx: Vec<Option<usize>> = (0..n + 2)
            .map(|i| match i {
                i if i < k => Some(i),
                i if i < k + 2 => None,
                i => Some(i - 2),
            })
            .collect();
        let sigma = DMatrix::from_fn(n + 2, n + 2, |i, j| match (idx[i], idx[j]) {
            (Some(a), Some(b)) => self.sigma[(a, b)],
            (None, None) if i == j => block,
            _ => 0.0,
        });
        Self {
            sigma,
            n_system: k + 2,
        }
    }

    /// Appends an empty accumulator at the end.
    fn push_mode(&self) -> Self {
        let n = self.sigma.nrows();
        let mut sigma = DMatrix::zeros(n + 2, n + 2);
        sigma.view_mut((0, 0), (n, n)).copy_from(&self.sigma);
        Self {
            sigma,
            n_system: self.n_system,
        }
    }

    /// Traces out the last system mode.
    fn drop_last_system_mode(&self) -> Self {
        let n = self.sigma.nrows();
        let k = self.n_system;
        let keep: Vec<usize> = (0..n).filter(|i| *i < k - 2 || *i >= k).collect();
        Self {
            sigma: DMatrix::from_fn(keep.len(), keep.len(), |i, j| self.sigma[(keep[i], keep[j])]),
            n_system: k - 2,
        }
    }
}

/// Steady (or timed) pre-cooled covariance of a zero-delay model.
pub fn precool_covariance(model: &LinearDelayModel, mode: PrecoolMode) -> Result<DMatrix<f64>> {
    if !model.is_ode() {
        return Err(Error::Precondition("pre-cooling is modelled without feedback delay".into()));
    }
    match mode {
        PrecoolMode::SteadyState => steady_covariance(model),
        PrecoolMode::Timed(t) => {
            require_stable(model)?;
            let (a, _) = model.ode_matrices()?;
            let q = model.diffusion()?;
            let n = a.nrows();
            let mut s0 = DMatrix::identity(n, n);
            let bath = model
                .channels
                .iter()
                .find(|c| c.kind == ChannelKind::MechanicalBath)
                .map(|c| c.psd)
                .unwrap_or(1.0);
            s0[(0, 0)] = bath;
            s0[(1, 1)] = bath;
            let (phi, qd) = discretize(&a, &q, t)?;
            let mut s = &phi * s0 * phi.transpose() + qd;
            symmetrize(&mut s);
            Ok(s)
        }
    }
}

/// How a stage feeds a temporal mode.
#[derive(Debug, Clone, Copy)]
pub struct Accumulator {
    /// Envelope at the accumulation reference time and its e-folding rate:
    /// `f(t) = amplitude * exp(rate * (t - reference))`.
    pub amplitude: f64,
    pub rate: f64,
    pub reference: f64,
    /// `theta(t) = omega * t + theta0`.
    pub omega: f64,
    pub theta0: f64,
    /// Window outside which the envelope vanishes.
    pub window: (f64, f64),
}

impl Accumulator {
    pub fn for_stage(spec: &TemporalModeSpec, stage: PulseStage, schedule: &StageSchedule, omega_m: f64) -> Self {
        let n = spec.normalization();
        match stage {
            PulseStage::Generation => Self {
                amplitude: n,
                rate: spec.gamma_tm,
                reference: schedule.t_g_end(),
                omega: omega_m,
                theta0: 0.0,
                window: (schedule.t_g_end() - spec.tau_p, schedule.t_g_end()),
            },
            PulseStage::Swap => Self {
                amplitude: n,
                rate: -spec.gamma_tm,
                reference: schedule.t_s_start(),
                omega: -omega_m,
                theta0: schedule.phi_s,
                window: (schedule.t_s_start(), schedule.t_s_start() + spec.tau_p),
            },
        }
    }

    fn weight(&self, t: f64) -> f64 {
        self.amplitude * (self.rate * (t - self.reference)).exp()
    }

    /// `int f^2` from the start of the active window to `t`: the commutator
    /// weight of the partially accumulated mode.
    fn accumulated_norm(&self, t: f64) -> f64 {
        let (a, b) = self.active();
        let t = t.clamp(a, b);
        let amp2 = self.amplitude * self.amplitude;
        if self.rate == 0.0 {
            return amp2 * (t - a);
        }
        let r2 = 2.0 * self.rate;
        amp2 / r2 * ((r2 * (t - self.reference)).exp() - (r2 * (a - self.reference)).exp())
    }

    /// Part of the window where the weight exceeds `exp(-ENVELOPE_CUTOFF)` of its peak.
    fn active(&self) -> (f64, f64) {
        let (a, b) = self.window;
        let span = if self.rate.abs() > 0.0 {
            ENVELOPE_CUTOFF / self.rate.abs()
        } else {
            f64::INFINITY
        };
        if self.rate > 0.0 {
            ((b - span).max(a), b)
        } else {
            (a, (a + span).min(b))
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageDiagnostics {
    pub label: String,
    pub duration: f64,
    pub chunks: usize,
    pub min_uncertainty_eigenvalue: f64,
    /// Tolerance the eigenvalue was held to.
    pub tolerance: f64,
}

fn extended_dynamics(
    model: &LinearDelayModel,
    total: usize,
    acc: Option<&Accumulator>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (a, c) = model.ode_matrices()?;
    let n = model.dim();
    let psd = model.noise_psd();
    let m = if acc.is_some() { total + 2 } else { total };
    let mut ae = DMatrix::zeros(m, m);
    let mut ce = DMatrix::zeros(m, c.ncols());
    ae.view_mut((0, 0), (n, n)).copy_from(&a);
    ce.view_mut((0, 0), (n, c.ncols())).copy_from(&c);
    if let Some(acc) = acc {
        let z = total;
        let aux = n - 2;
        let outer = 2 * model
            .channel_index(ChannelKind::AuxiliaryOuter)
            .ok_or_else(|| Error::Precondition("model has no auxiliary outer port".into()))?;
        // Outer-port output: u_in2 - sqrt(kappa2) u_A, read off the input weight.
        let k2 = c[(aux, outer)];
        let j = symplectic_form(1);
        for r in 0..2 {
            for s in 0..2 {
                let id = if r == s { 1.0 } else { 0.0 };
                ae[(z + r, z + s)] = -acc.omega * j[(r, s)] - acc.rate * id;
                ae[(z + r, aux + s)] = -k2 * id;
                ce[(z + r, outer + s)] = id;
            }
        }
    }
    let q = &ce * DMatrix::from_diagonal(&psd) * ce.transpose();
    Ok((ae, q))
}

fn propagate(sigma: &DMatrix<f64>, a: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    if t <= 0.0 {
        return Ok(sigma.clone());
    }
    let (phi, qd) = discretize(a, q, t)?;
    let mut s = &phi * sigma * phi.transpose() + qd;
    symmetrize(&mut s);
    Ok(s)
}

/// Evolves the extended state over `[t0, t1]` under the zero-delay `model`,
/// optionally accumulating the last temporal mode of `state`.
pub fn evolve_stage(
    state: &ExtendedCovariance,
    model: &LinearDelayModel,
    acc: Option<&Accumulator>,
    t0: f64,
    t1: f64,
    label: &str,
) -> Result<(ExtendedCovariance, StageDiagnostics)> {
    if model.dim() != state.n_system {
        return Err(Error::Precondition(format!(
            "model dimension {} does not match system block {}",
            model.dim(),
            state.n_system
        )));
    }
    let total = state.sigma.nrows();
    let mut sigma = state.sigma.clone();
    let mut chunks = 0;
    let (plain_a, plain_q) = extended_dynamics(model, total, None)?;

    let mut segments: Vec<(f64, f64, bool)> = Vec::new();
    match acc {
        Some(acc) if t1 > t0 => {
            let (a, b) = acc.active();
            let (a, b) = (a.max(t0), b.min(t1));
            if b > a {
                if a > t0 {
                    segments.push((t0, a, false));
                }
                segments.push((a, b, true));
                if t1 > b {
                    segments.push((b, t1, false));
                }
            } else {
                segments.push((t0, t1, false));
            }
        }
        _ => segments.push((t0, t1, false)),
    }

    // The mode being accumulated only becomes canonical at the end of its
    // envelope; before that its commutator carries the accumulated norm.
    let check = |s: &DMatrix<f64>, t: f64| -> f64 {
        let mut j = symplectic_form(s.nrows() / 2);
        if let Some(acc) = acc {
            let w = acc.accumulated_norm(t);
            let k = total - 2;
            j[(k, k + 1)] = w;
            j[(k + 1, k)] = -w;
        }
        min_uncertainty_eigenvalue(s, &j)
    };

    for (a, b, accumulate) in segments {
        if b <= a {
            continue;
        }
        if !accumulate {
            sigma = propagate(&sigma, &plain_a, &plain_q, b - a)?;
            chunks += 1;
            continue;
        }
        let acc = acc.expect("accumulating segment has an accumulator");
        let (ae, qe) = extended_dynamics(model, total, Some(acc))?;
        let count = ((acc.rate.abs() * (b - a)) / CHUNK_EFOLDS).ceil().max(1.0) as usize;
        let dt = (b - a) / count as f64;
        let target = total - 2;
        for k in 0..count {
            let t_end = a + dt * (k + 1) as f64;
            let mut attempt = 0;
            loop {
                let next = accumulate_chunk(&sigma, &ae, &qe, acc, a + dt * k as f64, t_end, target, 1 << attempt)?;
                let min_eig = check(&next, t_end);
                if min_eig >= -physicality_tolerance(&next) {
                    sigma = next;
                    chunks += 1 << attempt;
                    break;
                }
                attempt += 1;
                if attempt > 4 {
                    return Err(Error::Unphysical {
                        stage: label.to_string(),
                        min_eigenvalue: min_eig,
                    });
                }
            }
        }
    }
    let min_eig = check(&sigma, t1);
    let tolerance = physicality_tolerance(&sigma);
    if min_eig < -tolerance {
        return Err(Error::Unphysical {
            stage: label.to_string(),
            min_eigenvalue: min_eig,
        });
    }
    Ok((
        ExtendedCovariance {
            sigma,
            n_system: state.n_system,
        },
        StageDiagnostics {
            label: label.to_string(),
            duration: t1 - t0,
            chunks,
            min_uncertainty_eigenvalue: min_eig,
            tolerance,
        },
    ))
}

/// One chunk `[ta, tb]`, split into `pieces` equal parts, each folding its
/// auxiliary pair into the accumulator at index `target`.
#[allow(clippy::too_many_arguments)]
fn accumulate_chunk(
    sigma: &DMatrix<f64>,
    ae: &DMatrix<f64>,
    qe: &DMatrix<f64>,
    acc: &Accumulator,
    ta: f64,
    tb: f64,
    target: usize,
    pieces: usize,
) -> Result<DMatrix<f64>> {
    let m = sigma.nrows();
    let h = (tb - ta) / pieces as f64;
    let (phi, qd) = discretize(ae, qe, h)?;
    let mut s = sigma.clone();
    for p in 0..pieces {
        let mut ext = DMatrix::zeros(m + 2, m + 2);
        ext.view_mut((0, 0), (m, m)).copy_from(&s);
        let mut ext = &phi * ext * phi.transpose() + &qd;
        symmetrize(&mut ext);
        let t_end = ta + h * (p + 1) as f64;
        let fold: Matrix2<f64> = rotation(acc.omega * t_end + acc.theta0) * acc.weight(t_end);
        let mut t = DMatrix::<f64>::zeros(m, m + 2);
        for i in 0..m {
            t[(i, i)] = 1.0;
        }
        for r in 0..2 {
            for c in 0..2 {
                t[(target + r, m + c)] = fold[(r, c)];
            }
        }
        s = &t * ext * t.transpose();
        symmetrize(&mut s);
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct ProtocolResult {
    /// Covariance over `(r_gX, r_gY, r_sX, r_sY)`.
    pub sigma: Matrix4<f64>,
    pub delta_epr: f64,
    pub stages: Vec<StageDiagnostics>,
}

fn stage_model(om: &OmParams, aux: &AuxCavityParams, eta_s: f64, phi_s: f64, adiabatic: bool) -> Result<LinearDelayModel> {
    let path = PathParams {
        eta_s,
        phi_s,
        tau_s: 0.0,
    };
    let model = build_cavity_feedback(om, aux, &path)?;
    if adiabatic {
        model.eliminate_cavity()
    } else {
        Ok(model)
    }
}

fn with_stage<T>(label: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Unstable(rep) => Error::Precondition(format!("stage `{label}` is unstable ({} right-half-plane zeros)", rep.winding_number)),
        Error::Unphysical { min_eigenvalue, .. } => Error::Unphysical {
            stage: label.to_string(),
            min_eigenvalue,
        },
        other => other,
    })
}

/// Runs pre-cooling, generation, gap and swap, returning the temporal-mode
/// covariance and its EPR variance.
pub fn run_protocol(cfg: &ProtocolConfig) -> Result<ProtocolResult> {
    cfg.om.validate()?;
    cfg.schedule.validate()?;
    cfg.mode.validate()?;
    if !(0.0..=1.0).contains(&cfg.eta_s) {
        return Err(Error::invalid("eta_s", format!("must lie in [0, 1], got {}", cfg.eta_s)));
    }
    if !(0.0..=1.0).contains(&cfg.detection_efficiency) {
        return Err(Error::invalid(
            "detection_efficiency",
            format!("must lie in [0, 1], got {}", cfg.detection_efficiency),
        ));
    }
    let sched = &cfg.schedule;
    let om = &cfg.om;
    let mut stages = Vec::new();

    let pre = with_stage(
        "precool",
        stage_model(om, &sched.precool_aux, cfg.eta_s, sched.precool_phi_s, cfg.adiabatic),
    )?;
    let sigma = with_stage("precool", precool_covariance(&pre, sched.precool_mode))?;
    let n_sys = pre.dim();
    let state = ExtendedCovariance {
        sigma,
        n_system: n_sys,
    };
    stages.push(StageDiagnostics {
        label: "precool".into(),
        duration: match sched.precool_mode {
            PrecoolMode::SteadyState => f64::INFINITY,
            PrecoolMode::Timed(t) => t,
        },
        chunks: 0,
        min_uncertainty_eigenvalue: state.min_uncertainty_eigenvalue(),
        tolerance: physicality_tolerance(&state.sigma),
    });

    // The pre-cooling cavity is switched out for a generation cavity in vacuum.
    let state = state.drop_last_system_mode().insert_system_mode(1.0).push_mode();
    let gen = with_stage("generation", stage_model(om, &sched.aux, cfg.eta_s, sched.phi_s, cfg.adiabatic))?;
    let acc_g = Accumulator::for_stage(&cfg.mode, PulseStage::Generation, sched, om.omega_m);
    let t_g = sched.t_g_end();
    let (state, diag) = evolve_stage(&state, &gen, Some(&acc_g), t_g - cfg.mode.tau_p, t_g, "generation")?;
    stages.push(diag);

    // Gap: the optomechanical cavity is driven directly with vacuum inputs.
    let state = state.drop_last_system_mode();
    let bare = build_bare_om(om)?;
    let bare = if cfg.adiabatic { bare.eliminate_cavity()? } else { bare };
    let (state, diag) = evolve_stage(&state, &bare, None, t_g, sched.t_s_start(), "gap")?;
    stages.push(diag);

    // Swap cavity, fresh vacuum, opposite detuning and phase.
    let state = state.insert_system_mode(1.0).push_mode();
    let swap = with_stage(
        "swap",
        stage_model(om, &sched.swap_aux(), cfg.eta_s, -sched.phi_s, cfg.adiabatic),
    )?;
    let acc_s = Accumulator::for_stage(&cfg.mode, PulseStage::Swap, sched, om.omega_m);
    let t_s = sched.t_s_start();
    let (state, diag) = evolve_stage(&state, &swap, Some(&acc_s), t_s, t_s + cfg.mode.tau_p, "swap")?;
    stages.push(diag);

    let k = state.n_system;
    let mut sigma = Matrix4::from_fn(|i, j| state.sigma[(k + i, k + j)]);
    let eta_d = cfg.detection_efficiency;
    if eta_d < 1.0 {
        sigma = sigma * eta_d + Matrix4::identity() * (1.0 - eta_d);
    }
    Ok(ProtocolResult {
        delta_epr: epr_variance(&sigma),
        sigma,
        stages,
    })
}

/// `(s11 + s22 + s33 + s44)/2 + (s13 - s24)`.
pub fn epr_variance(sigma: &Matrix4<f64>) -> f64 {
    (sigma[(0, 0)] + sigma[(1, 1)] + sigma[(2, 2)] + sigma[(3, 3)]) / 2.0 + (sigma[(0, 2)] - sigma[(1, 3)])
}

impl ProtocolResult {
    pub fn to_json(&self, cfg: &ProtocolConfig) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = (0..4).map(|i| (0..4).map(|j| self.sigma[(i, j)]).collect()).collect();
        serde_json::json!({
            "inputs": cfg,
            "sigma": rows,
            "delta_epr": self.delta_epr,
            "stages": self.stages,
        })
    }
}
