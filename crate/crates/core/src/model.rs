//! Delay-type linear Langevin models
//!
//! ```text
//! u'(t) + D u'(t - tau) = A0 u(t) + A1 u(t - tau) + sum_n C_n u_in(t - n tau_s)
//! ```
//!
//! for the bare optomechanical system and the two passive feedback schemes.
//! States are ordered `(X_m, Y_m, X_c, Y_c[, X_A, Y_A])`. Every noise channel
//! contributes two input columns (its X and Y quadrature); the input vector is
//! the concatenation of the channels in `channels` order.
//!
//! Feedback loops are removed with a single delayed subtraction: each equation
//! driven by the recirculating field is combined with the loop-gain-weighted copy
//! of itself one round trip earlier, which cancels the recursion exactly. With
//! `tau_s = 0` the resulting `(I + D) u' = ...` is solved for `u'` and the model
//! becomes an ordinary differential equation.

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::linalg::{add_block2, rotation};
use crate::params::{AuxCavityParams, AuxMirrorParams, OmParams, PathParams};

const M: usize = 0;
const C: usize = 2;
const A: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelKind {
    ExternalOptical,
    IntrinsicOptical,
    ForwardPath,
    BackwardPath,
    AuxiliaryOuter,
    /// Effective vacuum input of the reduced auxiliary cavity.
    AuxiliaryEffective,
    MechanicalBath,
}

impl ChannelKind {
    pub fn label(self) -> &'static str {
        match self {
            ChannelKind::ExternalOptical => "external_optical",
            ChannelKind::IntrinsicOptical => "intrinsic_optical",
            ChannelKind::ForwardPath => "forward_path",
            ChannelKind::BackwardPath => "backward_path",
            ChannelKind::AuxiliaryOuter => "auxiliary_outer",
            ChannelKind::AuxiliaryEffective => "auxiliary_effective",
            ChannelKind::MechanicalBath => "mechanical_bath",
        }
    }
}

/// One bosonic input channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseChannel {
    pub kind: ChannelKind,
    /// Single-sided symmetrized spectral density (1 for vacuum).
    pub psd: f64,
    /// Which quadratures are driven. The mechanical bath only drives momentum.
    pub mask: [bool; 2],
}

impl NoiseChannel {
    pub fn vacuum(kind: ChannelKind) -> Self {
        Self {
            kind,
            psd: 1.0,
            mask: [true, true],
        }
    }

    pub fn thermal(n_th: f64) -> Self {
        Self {
            kind: ChannelKind::MechanicalBath,
            psd: 2.0 * n_th + 1.0,
            mask: [false, true],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Bare,
    CavityFeedback,
    MirrorFeedback,
    Effective,
    /// Result of adiabatically eliminating the optomechanical cavity.
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearDelayModel {
    pub scheme: Scheme,
    pub d_mat: DMatrix<f64>,
    pub a0: DMatrix<f64>,
    pub a1: DMatrix<f64>,
    pub c0: DMatrix<f64>,
    pub c1: DMatrix<f64>,
    pub c2: DMatrix<f64>,
    /// Loop lag.
    pub tau: f64,
    /// Noise injection sub-lag.
    pub tau_s: f64,
    pub channels: Vec<NoiseChannel>,
    /// Time shift applied to the auxiliary-cavity field and its outer input in
    /// the delayed cavity scheme (`u_A(t - tau_s)` is the state). Spectra of
    /// the mechanics are unaffected.
    pub aux_time_shift: f64,
}

impl LinearDelayModel {
    /// Builds an ordinary differential equation model `u' = a u + c u_in`.
    pub fn ode(scheme: Scheme, a: DMatrix<f64>, c: DMatrix<f64>, channels: Vec<NoiseChannel>) -> Self {
        let n = a.nrows();
        let m = c.ncols();
        Self {
            scheme,
            d_mat: DMatrix::zeros(n, n),
            a1: DMatrix::zeros(n, n),
            c1: DMatrix::zeros(n, m),
            c2: DMatrix::zeros(n, m),
            a0: a,
            c0: c,
            tau: 0.0,
            tau_s: 0.0,
            channels,
            aux_time_shift: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.a0.nrows()
    }

    pub fn n_in(&self) -> usize {
        self.c0.ncols()
    }

    pub fn is_ode(&self) -> bool {
        self.tau == 0.0
    }

    /// Per-input-quadrature spectral densities.
    pub fn noise_psd(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.n_in(),
            self.channels.iter().flat_map(|ch| [ch.psd, ch.psd]),
        )
    }

    pub fn channel_index(&self, kind: ChannelKind) -> Option<usize> {
        self.channels.iter().position(|ch| ch.kind == kind)
    }

    pub fn state_labels(&self) -> Vec<&'static str> {
        match self.scheme {
            Scheme::Effective | Scheme::Reduced => ["X_m", "Y_m", "X_A", "Y_A"][..self.dim()].to_vec(),
            _ => ["X_m", "Y_m", "X_c", "Y_c", "X_A", "Y_A"][..self.dim()].to_vec(),
        }
    }

    /// Drift and input matrices of the equivalent ODE. Only meaningful when
    /// `tau == 0`.
    pub fn ode_matrices(&self) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !self.is_ode() {
            return Err(Error::Precondition(format!(
                "model has loop lag {} s, not an ordinary differential equation",
                self.tau
            )));
        }
        let n = self.dim();
        let lead = DMatrix::identity(n, n) + &self.d_mat;
        let a = &self.a0 + &self.a1;
        let c = &self.c0 + &self.c1 + &self.c2;
        let lu = lead.lu();
        let a = lu
            .solve(&a)
            .ok_or_else(|| Error::LinearAlgebra("singular leading matrix".into()))?;
        let c = lu
            .solve(&c)
            .ok_or_else(|| Error::LinearAlgebra("singular leading matrix".into()))?;
        Ok((a, c))
    }

    /// Diffusion matrix `C diag(psd) C^T` of the ODE form.
    pub fn diffusion(&self) -> Result<DMatrix<f64>> {
        let (_, c) = self.ode_matrices()?;
        let psd = self.noise_psd();
        let weighted = &c * DMatrix::from_diagonal(&psd);
        Ok(weighted * c.transpose())
    }

    /// Adiabatic elimination of the fast optomechanical cavity (states 2 and 3)
    /// from an ODE model: `u_c = -A_cc^{-1} (A_cs u_s + C_c u_in)`.
    pub fn eliminate_cavity(&self) -> Result<LinearDelayModel> {
        let (a, c) = self.ode_matrices()?;
        let n = a.nrows();
        if n < 4 {
            return Err(Error::Precondition("model has no optomechanical cavity".into()));
        }
        let slow: Vec<usize> = (0..n).filter(|i| *i != C && *i != C + 1).collect();
        let fast = [C, C + 1];
        let pick = |m: &DMatrix<f64>, rows: &[usize], cols: &[usize]| {
            DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
        };
        let all_in: Vec<usize> = (0..c.ncols()).collect();
        let a_ff = pick(&a, &fast, &fast);
        let lu = a_ff.lu();
        let gain_a = lu
            .solve(&pick(&a, &fast, &slow))
            .ok_or_else(|| Error::LinearAlgebra("singular cavity block".into()))?;
        let gain_c = lu
            .solve(&pick(&c, &fast, &all_in))
            .ok_or_else(|| Error::LinearAlgebra("singular cavity block".into()))?;
        let a_sf = pick(&a, &slow, &fast);
        let a_red = pick(&a, &slow, &slow) - &a_sf * gain_a;
        let c_red = pick(&c, &slow, &all_in) - &a_sf * gain_c;
        Ok(LinearDelayModel::ode(Scheme::Reduced, a_red, c_red, self.channels.clone()))
    }

    /// Row-major, labelled JSON dump of every matrix, for diffing.
    pub fn to_json(&self) -> Value {
        fn rows(m: &DMatrix<f64>) -> Value {
            Value::Array(
                (0..m.nrows())
                    .map(|i| Value::Array((0..m.ncols()).map(|j| json!(m[(i, j)])).collect()))
                    .collect(),
            )
        }
        let inputs: Vec<String> = self
            .channels
            .iter()
            .flat_map(|ch| [format!("{}.X", ch.kind.label()), format!("{}.Y", ch.kind.label())])
            .collect();
        json!({
            "scheme": self.scheme,
            "dim": self.dim(),
            "state": self.state_labels(),
            "inputs": inputs,
            "tau": self.tau,
            "tau_s": self.tau_s,
            "aux_time_shift": self.aux_time_shift,
            "channels": self.channels.iter().map(|ch| json!({
                "label": ch.kind.label(),
                "psd": ch.psd,
                "mask": ch.mask,
            })).collect::<Vec<_>>(),
            "D": rows(&self.d_mat),
            "A0": rows(&self.a0),
            "A1": rows(&self.a1),
            "C0": rows(&self.c0),
            "C1": rows(&self.c1),
            "C2": rows(&self.c2),
        })
    }
}

/// Working storage while a model is assembled.
struct Assembly {
    d: DMatrix<f64>,
    a0: DMatrix<f64>,
    a1: DMatrix<f64>,
    c: [DMatrix<f64>; 3],
    channels: Vec<NoiseChannel>,
}

impl Assembly {
    fn new(dim: usize, channels: Vec<NoiseChannel>) -> Self {
        let m = 2 * channels.len();
        Self {
            d: DMatrix::zeros(dim, dim),
            a0: DMatrix::zeros(dim, dim),
            a1: DMatrix::zeros(dim, dim),
            c: [DMatrix::zeros(dim, m), DMatrix::zeros(dim, m), DMatrix::zeros(dim, m)],
            channels,
        }
    }

    fn col(&self, kind: ChannelKind) -> usize {
        2 * self
            .channels
            .iter()
            .position(|ch| ch.kind == kind)
            .expect("channel registered")
    }

    /// Adds `weight * block` acting on `kind` at noise lag `lag` (in units of tau_s).
    fn input(&mut self, row: usize, kind: ChannelKind, lag: usize, block: Matrix2<f64>) {
        let col = self.col(kind);
        add_block2(&mut self.c[lag], row, col, &block);
    }

    /// Mechanical oscillator plus the optomechanical cavity, without its external port.
    fn optomechanics(&mut self, om: &OmParams) {
        let g = om.coupling();
        let gamma = om.gamma_m();
        let (kc, dc) = (om.kappa_c, om.delta_c);
        self.a0[(M, M + 1)] = om.omega_m;
        self.a0[(M + 1, M)] = -om.omega_m;
        self.a0[(M + 1, M + 1)] = -gamma;
        self.a0[(M + 1, C)] = -2.0 * g;
        self.a0[(C, C)] = -kc / 2.0;
        self.a0[(C, C + 1)] = -dc;
        self.a0[(C + 1, C)] = dc;
        self.a0[(C + 1, C + 1)] = -kc / 2.0;
        self.a0[(C + 1, M)] = -2.0 * g;
        let col = self.col(ChannelKind::MechanicalBath);
        self.c[0][(M + 1, col + 1)] = (2.0 * gamma).sqrt();
        self.input(
            C,
            ChannelKind::IntrinsicOptical,
            0,
            Matrix2::identity() * om.kappa_i().sqrt(),
        );
    }

    fn aux_cavity(&mut self, aux: &AuxCavityParams) {
        let ka = aux.total();
        self.a0[(A, A)] = -ka / 2.0;
        self.a0[(A, A + 1)] = -aux.delta_a;
        self.a0[(A + 1, A)] = aux.delta_a;
        self.a0[(A + 1, A + 1)] = -ka / 2.0;
        self.input(
            A,
            ChannelKind::AuxiliaryOuter,
            0,
            Matrix2::identity() * aux.kappa2.sqrt(),
        );
    }

    /// Delayed subtraction on the two rows starting at `row`: replaces the local
    /// equation `x' = f(t)` by `x'(t) - G x'(t - tau) = f(t) - G f(t - tau)`.
    /// Must run before the loop-field terms are added to those rows.
    fn subtract_delayed(&mut self, row: usize, gain: &Matrix2<f64>) {
        let n = self.a0.ncols();
        for i in 0..2 {
            for j in 0..2 {
                self.d[(row + i, row + j)] -= gain[(i, j)];
            }
        }
        let local_rows = self.a0.rows(row, 2).clone_owned();
        let delayed = -gain * local_rows;
        for i in 0..2 {
            for j in 0..n {
                self.a1[(row + i, j)] += delayed[(i, j)];
            }
        }
        // Local inputs enter at lag 0; their delayed copies sit one round trip later.
        let local_in = self.c[0].rows(row, 2).clone_owned();
        let delayed_in = -gain * local_in;
        for i in 0..2 {
            for j in 0..self.c[2].ncols() {
                self.c[2][(row + i, j)] += delayed_in[(i, j)];
            }
        }
    }

    fn finish(self, scheme: Scheme, tau_s: f64, aux_time_shift: f64, eta_s: f64, phi_s: f64) -> Result<LinearDelayModel> {
        let [c0, c1, c2] = self.c;
        let model = LinearDelayModel {
            scheme,
            d_mat: self.d,
            a0: self.a0,
            a1: self.a1,
            c0,
            c1,
            c2,
            tau: 2.0 * tau_s,
            tau_s,
            channels: self.channels,
            aux_time_shift,
        };
        if tau_s > 0.0 {
            return Ok(model);
        }
        let n = model.dim();
        let lead = DMatrix::identity(n, n) + &model.d_mat;
        let lu = lead.lu();
        let det = lu.determinant();
        if !(det.abs() > 1e-12) {
            return Err(Error::DegenerateLoop { eta_s, phi_s });
        }
        let (a, c) = model.ode_matrices()?;
        Ok(LinearDelayModel::ode(scheme, a, c, model.channels))
    }
}

/// Bare optomechanical system: a 4-dimensional ODE.
pub fn build_bare_om(om: &OmParams) -> Result<LinearDelayModel> {
    om.validate()?;
    let channels = vec![
        NoiseChannel::vacuum(ChannelKind::ExternalOptical),
        NoiseChannel::vacuum(ChannelKind::IntrinsicOptical),
        NoiseChannel::thermal(om.n_th()),
    ];
    let mut asm = Assembly::new(4, channels);
    asm.optomechanics(om);
    asm.input(
        C,
        ChannelKind::ExternalOptical,
        0,
        Matrix2::identity() * om.kappa_e().sqrt(),
    );
    let [c0, _, _] = asm.c;
    Ok(LinearDelayModel::ode(Scheme::Bare, asm.a0, c0, asm.channels))
}

/// Coherent feedback through an auxiliary cavity: 6-dimensional model with
/// loop lag `2 tau_s`.
pub fn build_cavity_feedback(
    om: &OmParams,
    aux: &AuxCavityParams,
    path: &PathParams,
) -> Result<LinearDelayModel> {
    om.validate()?;
    aux.validate()?;
    path.validate()?;
    let channels = vec![
        NoiseChannel::vacuum(ChannelKind::IntrinsicOptical),
        NoiseChannel::vacuum(ChannelKind::ForwardPath),
        NoiseChannel::vacuum(ChannelKind::BackwardPath),
        NoiseChannel::vacuum(ChannelKind::AuxiliaryOuter),
        NoiseChannel::thermal(om.n_th()),
    ];
    let eta = path.eta_s;
    let rot = rotation(path.phi_s);
    let gain = rotation(2.0 * path.phi_s) * eta;
    let (ke, k1) = (om.kappa_e(), aux.kappa1);
    let id = Matrix2::identity();

    let mut asm = Assembly::new(6, channels);
    asm.optomechanics(om);
    asm.aux_cavity(aux);
    asm.subtract_delayed(C, &gain);
    asm.subtract_delayed(A, &gain);

    // Cavity rows: sqrt(ke) [a(t) - G a(t - tau)] with
    // a(t) - G a(t - tau) = -G sqrt(ke) u_c(t - tau) - sqrt(eta k1) R u_A(t - tau_s)
    //                       + sqrt(eta (1 - eta)) R fw(t - tau_s) + sqrt(1 - eta) bw(t).
    add_block2(&mut asm.a1, C, C, &(-gain * ke));
    add_block2(&mut asm.a0, C, A, &(-rot * (ke * eta * k1).sqrt()));
    asm.input(C, ChannelKind::ForwardPath, 1, rot * (ke * eta * (1.0 - eta)).sqrt());
    asm.input(C, ChannelKind::BackwardPath, 0, id * (ke * (1.0 - eta)).sqrt());

    // Auxiliary rows, with the state shifted to u_A(t - tau_s):
    // b(t - tau_s) - G b(t - 3 tau_s) = -G sqrt(k1) u_A(t - 3 tau_s) - sqrt(eta ke) R u_c(t - tau)
    //                       + sqrt(eta (1 - eta)) R bw(t - tau) + sqrt(1 - eta) fw(t - tau_s).
    add_block2(&mut asm.a1, A, A, &(-gain * k1));
    add_block2(&mut asm.a1, A, C, &(-rot * (k1 * eta * ke).sqrt()));
    asm.input(A, ChannelKind::BackwardPath, 2, rot * (k1 * eta * (1.0 - eta)).sqrt());
    asm.input(A, ChannelKind::ForwardPath, 1, id * (k1 * (1.0 - eta)).sqrt());

    asm.finish(Scheme::CavityFeedback, path.tau_s, path.tau_s, eta, path.phi_s)
}

/// Coherent feedback through a mirror at the end of the path: 4-dimensional
/// model with round-trip lag `2 tau_s`.
pub fn build_mirror_feedback(
    om: &OmParams,
    mirror: &AuxMirrorParams,
    path: &PathParams,
) -> Result<LinearDelayModel> {
    om.validate()?;
    mirror.validate()?;
    path.validate()?;
    let channels = vec![
        NoiseChannel::vacuum(ChannelKind::IntrinsicOptical),
        NoiseChannel::vacuum(ChannelKind::ForwardPath),
        NoiseChannel::vacuum(ChannelKind::BackwardPath),
        NoiseChannel::vacuum(ChannelKind::AuxiliaryOuter),
        NoiseChannel::thermal(om.n_th()),
    ];
    let eta = path.eta_s;
    let refl = mirror.reflectivity;
    let rot = rotation(path.phi_s);
    let gain = rotation(2.0 * path.phi_s) * (eta * refl.sqrt());
    let ke = om.kappa_e();
    let id = Matrix2::identity();

    let mut asm = Assembly::new(4, channels);
    asm.optomechanics(om);
    asm.subtract_delayed(C, &gain);

    // a(t) - G a(t - tau) = -G sqrt(ke) u_c(t - tau) + sqrt(eta R (1 - eta)) R fw(t - tau_s)
    //                       + sqrt(eta (1 - R)) R in2(t - tau_s) + sqrt(1 - eta) bw(t).
    add_block2(&mut asm.a1, C, C, &(-gain * ke));
    asm.input(C, ChannelKind::ForwardPath, 1, rot * (ke * eta * refl * (1.0 - eta)).sqrt());
    asm.input(C, ChannelKind::AuxiliaryOuter, 1, rot * (ke * eta * (1.0 - refl)).sqrt());
    asm.input(C, ChannelKind::BackwardPath, 0, id * (ke * (1.0 - eta)).sqrt());

    asm.finish(Scheme::MirrorFeedback, path.tau_s, 0.0, eta, path.phi_s)
}
