//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use cfb_core::{AuxCavityParams, AuxMirrorParams, OmParams, PathParams};
use nalgebra::{Complex, DMatrix, Matrix2};

pub type C64 = Complex<f64>;

fn rot(phi: f64) -> Matrix2<f64> {
    Matrix2::new(phi.cos(), phi.sin(), -phi.sin(), phi.cos())
}

fn put(m: &mut DMatrix<C64>, r: usize, c: usize, block: Matrix2<f64>, factor: C64) {
    for i in 0..2 {
        for j in 0..2 {
            m[(r + i, c + j)] += factor * block[(i, j)];
        }
    }
}

/// `i omega + drift` rows of the optomechanics without its external port,
/// written out directly from the linearized equations.
fn local_rows(m: &mut DMatrix<C64>, om: &OmParams, omega: f64) {
    let g = om.coupling();
    let (w, gm, kc, dc) = (om.omega_m, om.gamma_m(), om.kappa_c, om.delta_c);
    let drift = [
        [0.0, w, 0.0, 0.0],
        [-w, -gm, -2.0 * g, 0.0],
        [0.0, 0.0, -kc / 2.0, -dc],
        [-2.0 * g, 0.0, dc, -kc / 2.0],
    ];
    for i in 0..4 {
        m[(i, i)] += C64::new(0.0, -omega);
        for j in 0..4 {
            m[(i, j)] -= C64::new(drift[i][j], 0.0);
        }
    }
}

fn solve(lhs: DMatrix<C64>, rhs: DMatrix<C64>) -> DMatrix<C64> {
    lhs.lu().solve(&rhs).expect("oracle system is regular")
}

/// Response of the cavity-feedback loop at `omega`, solved with the loop
/// fields kept as unknowns. Columns follow the channel order intrinsic,
/// forward, backward, auxiliary outer, mechanical bath. Rows are
/// `(X_m, Y_m, X_c, Y_c, X_A, Y_A)` with the auxiliary field unshifted.
pub fn cavity_loop_response(om: &OmParams, aux: &AuxCavityParams, path: &PathParams, omega: f64) -> DMatrix<C64> {
    // Unknowns: u (0..6), OM input a (6..8), auxiliary channel-1 input b (8..10).
    let n = 10;
    let one = C64::new(1.0, 0.0);
    let lag = C64::new(0.0, omega * path.tau_s).exp();
    let (ke, k1, k2) = (om.kappa_e(), aux.kappa1, aux.kappa2);
    let ka = k1 + k2;
    let eta = path.eta_s;
    let r = rot(path.phi_s);
    let id = Matrix2::identity();
    let mut lhs = DMatrix::<C64>::zeros(n, n);
    let mut rhs = DMatrix::<C64>::zeros(n, 10);
    local_rows(&mut lhs, om, omega);
    let aux_drift = Matrix2::new(-ka / 2.0, -aux.delta_a, aux.delta_a, -ka / 2.0);
    put(&mut lhs, 4, 4, id, C64::new(0.0, -omega));
    put(&mut lhs, 4, 4, aux_drift, -one);
    put(&mut lhs, 2, 6, id, C64::new(-ke.sqrt(), 0.0));
    put(&mut lhs, 4, 8, id, C64::new(-k1.sqrt(), 0.0));
    put(&mut rhs, 2, 0, id, C64::new(om.kappa_i().sqrt(), 0.0));
    put(&mut rhs, 4, 6, id, C64::new(k2.sqrt(), 0.0));
    rhs[(1, 9)] = C64::new((2.0 * om.gamma_m()).sqrt(), 0.0);
    // a = sqrt(eta) R lag (b - sqrt(k1) u_A) + sqrt(1 - eta) bw
    put(&mut lhs, 6, 6, id, one);
    put(&mut lhs, 6, 8, r, -lag * eta.sqrt());
    put(&mut lhs, 6, 4, r, lag * (eta * k1).sqrt());
    put(&mut rhs, 6, 4, id, C64::new((1.0 - eta).sqrt(), 0.0));
    // b = sqrt(eta) R lag (a - sqrt(ke) u_c) + sqrt(1 - eta) fw
    put(&mut lhs, 8, 8, id, one);
    put(&mut lhs, 8, 6, r, -lag * eta.sqrt());
    put(&mut lhs, 8, 2, r, lag * (eta * ke).sqrt());
    put(&mut rhs, 8, 2, id, C64::new((1.0 - eta).sqrt(), 0.0));
    solve(lhs, rhs).rows(0, 6).clone_owned()
}

/// Response of the mirror-feedback loop, same layout as
/// [`cavity_loop_response`] without the auxiliary rows.
pub fn mirror_loop_response(om: &OmParams, mirror: &AuxMirrorParams, path: &PathParams, omega: f64) -> DMatrix<C64> {
    // Unknowns: u (0..4), OM input a (4..6), field arriving at the mirror m (6..8).
    let n = 8;
    let one = C64::new(1.0, 0.0);
    let lag = C64::new(0.0, omega * path.tau_s).exp();
    let ke = om.kappa_e();
    let (eta, refl) = (path.eta_s, mirror.reflectivity);
    let r = rot(path.phi_s);
    let id = Matrix2::identity();
    let mut lhs = DMatrix::<C64>::zeros(n, n);
    let mut rhs = DMatrix::<C64>::zeros(n, 10);
    local_rows(&mut lhs, om, omega);
    put(&mut lhs, 2, 4, id, C64::new(-ke.sqrt(), 0.0));
    put(&mut rhs, 2, 0, id, C64::new(om.kappa_i().sqrt(), 0.0));
    rhs[(1, 9)] = C64::new((2.0 * om.gamma_m()).sqrt(), 0.0);
    // m = sqrt(eta) R lag (a - sqrt(ke) u_c) + sqrt(1 - eta) fw
    put(&mut lhs, 6, 6, id, one);
    put(&mut lhs, 6, 4, r, -lag * eta.sqrt());
    put(&mut lhs, 6, 2, r, lag * (eta * ke).sqrt());
    put(&mut rhs, 6, 2, id, C64::new((1.0 - eta).sqrt(), 0.0));
    // a = sqrt(eta) R lag (sqrt(R_A) m + sqrt(1 - R_A) in2) + sqrt(1 - eta) bw
    put(&mut lhs, 4, 4, id, one);
    put(&mut lhs, 4, 6, r, -lag * (eta * refl).sqrt());
    put(&mut rhs, 4, 6, r, lag * (eta * (1.0 - refl)).sqrt());
    put(&mut rhs, 4, 4, id, C64::new((1.0 - eta).sqrt(), 0.0));
    solve(lhs, rhs).rows(0, 4).clone_owned()
}

/// Largest entrywise deviation, each row measured against its largest entry in `b`.
pub fn relative_deviation(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..b.nrows() {
        let scale = b.row(i).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for j in 0..b.ncols() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm() / scale);
        }
    }
    worst
}

/// Bare-cavity drive that yields quantum cooperativity `c_qu`.
pub fn n_cav_for_cooperativity(om: &OmParams, c_qu: f64) -> f64 {
    c_qu * om.n_th() * om.kappa_c * om.gamma_m() / (4.0 * om.g0 * om.g0)
}

fn log_uniform(u: f64, lo: f64, hi: f64) -> f64 {
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

fn lin(u: f64, lo: f64, hi: f64) -> f64 {
    lo + u * (hi - lo)
}

/// Random optomechanical parameters from unit draws.
pub fn random_om(u: &[f64]) -> OmParams {
    use cfb_core::constants::hz;
    let omega_m = hz(log_uniform(u[0], 1e5, 1e7));
    OmParams {
        omega_m,
        q_m: log_uniform(u[1], 1e3, 1e8),
        kappa_c: hz(log_uniform(u[2], 1e6, 1e11)),
        eta_c: lin(u[3], 0.05, 1.0),
        delta_c: lin(u[4], -3.0, 3.0) * omega_m,
        g0: hz(250e3),
        n_cav: log_uniform(u[5], 1e-2, 1e7),
        temperature: lin(u[6], 0.0, 10.0),
    }
}

/// A random zero-delay model: bare, cavity feedback or mirror feedback.
pub fn random_ode_model(u: &[f64; 12]) -> Option<cfb_core::LinearDelayModel> {
    use cfb_core::constants::hz;
    use cfb_core::{build_bare_om, build_cavity_feedback, build_mirror_feedback};
    let om = random_om(u);
    let path = PathParams {
        eta_s: u[7],
        phi_s: lin(u[8], -std::f64::consts::PI, std::f64::consts::PI),
        tau_s: 0.0,
    };
    let scheme = (u[11] * 3.0) as usize;
    match scheme {
        0 => build_bare_om(&om).ok(),
        1 => {
            let aux = AuxCavityParams {
                kappa1: hz(log_uniform(u[9], 1e4, 2e7)),
                kappa2: hz(log_uniform(u[10], 1e4, 5e6)),
                delta_a: lin(u[4] * u[9], -3.0, 3.0) * om.omega_m,
            };
            build_cavity_feedback(&om, &aux, &path).ok()
        }
        _ => build_mirror_feedback(&om, &AuxMirrorParams { reflectivity: u[9] }, &path).ok(),
    }
}

/// Stability verdict against the sign of the largest drift eigenvalue. Draws
/// within a relative `1e-9` of marginality are skipped (`Ok(false)`).
pub fn check_stability_against_eigenvalues(u: &[f64; 12]) -> Result<bool, String> {
    let Some(model) = random_ode_model(u) else { return Ok(false) };
    let (a, _) = model.ode_matrices().map_err(|e| e.to_string())?;
    let eig = a.complex_eigenvalues();
    let scale = eig.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let growth = eig.iter().map(|z| z.re).fold(f64::MIN, f64::max);
    let smallest = eig.iter().map(|z| z.re.abs()).fold(f64::INFINITY, f64::min);
    if smallest < 1e-9 * scale.min(1e6) || growth.abs() < 1e-12 * scale {
        return Ok(false);
    }
    let report = cfb_core::stability_check(&model).map_err(|e| format!("{e} for {u:?}"))?;
    let unstable = eig.iter().filter(|z| z.re > 0.0).count() as i64;
    if report.stable != (growth < 0.0) || report.winding_number != unstable {
        return Err(format!("{report:?} but {unstable} growing eigenvalues for {u:?}"));
    }
    Ok(true)
}

/// Cooperativity ratio against its factorized definition.
pub fn check_cooperativity_identity(u: &[f64; 8]) -> Result<(), String> {
    use cfb_core::constants::hz;
    use cfb_core::effective::{effective_cooperativity, effective_params};
    let mut om = random_om(u);
    om.delta_c = 0.0;
    let aux = AuxCavityParams {
        kappa1: hz(log_uniform(u[7], 1e4, 2e7)),
        kappa2: hz(log_uniform(u[6], 1e4, 5e6)),
        delta_a: 0.0,
    };
    let path = PathParams {
        eta_s: u[3] * 0.999,
        phi_s: 0.0,
        tau_s: 0.0,
    };
    let coop = match effective_cooperativity(&om, &aux, &path) {
        Ok(c) => c,
        Err(_) => return Ok(()),
    };
    let p = effective_params(&om, &aux, &path).map_err(|e| e.to_string())?;
    let direct = 4.0 * p.g_eff * p.g_eff / (p.kappa_a_eff * om.gamma_m() * p.n_th_eff) / coop.c_qu;
    if (direct / coop.ratio - 1.0).abs() > 1e-10 {
        return Err(format!("ratio {} vs {direct} for {u:?}", coop.ratio));
    }
    if p.n_th_eff < om.n_th() {
        return Err(format!("effective bath {} below {}", p.n_th_eff, om.n_th()));
    }
    Ok(())
}

/// Transfer matrix of a random loop against the uneliminated solve.
pub fn check_elimination(u: &[f64; 12]) -> Result<(), String> {
    use cfb_core::constants::hz;
    use cfb_core::{build_cavity_feedback, build_mirror_feedback, transfer_matrix};
    let om = random_om(u);
    let path = PathParams {
        eta_s: u[7] * 0.98,
        phi_s: lin(u[8], -3.0, 3.0),
        tau_s: if u[10] < 0.5 { 0.0 } else { log_uniform(u[10], 1e-9, 1e-6) },
    };
    let w = om.omega_m * log_uniform(u[11], 1e-3, 1e4);
    let aux = AuxCavityParams {
        kappa1: hz(log_uniform(u[9], 1e4, 2e7)),
        kappa2: hz(log_uniform(u[6], 1e4, 5e6)),
        delta_a: lin(u[4] * u[9], -3.0, 3.0) * om.omega_m,
    };
    let cav = build_cavity_feedback(&om, &aux, &path).map_err(|e| e.to_string())?;
    let mut got = transfer_matrix(&cav, w).map_err(|e| e.to_string())?.m;
    let shift = C64::new(0.0, w * cav.aux_time_shift).exp();
    for j in 0..got.ncols() {
        for i in 4..6 {
            got[(i, j)] /= shift;
        }
    }
    for i in 0..got.nrows() {
        for j in 6..8 {
            got[(i, j)] *= shift;
        }
    }
    let dev = relative_deviation(&got, &cavity_loop_response(&om, &aux, &path, w));
    if !(dev < 1e-9) {
        return Err(format!("cavity deviation {dev} for {u:?}"));
    }
    let mirror = AuxMirrorParams { reflectivity: u[9] };
    let mir = build_mirror_feedback(&om, &mirror, &path).map_err(|e| e.to_string())?;
    let got = transfer_matrix(&mir, w).map_err(|e| e.to_string())?.m;
    let dev = relative_deviation(&got, &mirror_loop_response(&om, &mirror, &path, w));
    if !(dev < 1e-9) {
        return Err(format!("mirror deviation {dev} for {u:?}"));
    }
    Ok(())
}

/// Uncoupled mechanics stays thermal in every scheme, with and without delay.
pub fn check_uncoupled_thermal(u: &[f64; 12]) -> Result<(), String> {
    use cfb_core::constants::hz;
    use cfb_core::{build_cavity_feedback, build_mirror_feedback, phonon_occupation};
    let mut om = random_om(u);
    om.g0 = 0.0;
    om.temperature = lin(u[6], 0.5, 10.0);
    let path = PathParams {
        eta_s: u[7] * 0.98,
        phi_s: lin(u[8], -3.0, 3.0),
        tau_s: if u[10] < 0.5 { 0.0 } else { log_uniform(u[10], 1e-9, 1e-7) },
    };
    let aux = AuxCavityParams {
        kappa1: hz(log_uniform(u[9], 1e4, 2e7)),
        kappa2: hz(log_uniform(u[11], 1e4, 5e6)),
        delta_a: lin(u[4], -3.0, 3.0) * om.omega_m,
    };
    let models = [
        build_cavity_feedback(&om, &aux, &path),
        build_mirror_feedback(&om, &AuxMirrorParams { reflectivity: u[9] }, &path),
    ];
    for m in models {
        let m = m.map_err(|e| e.to_string())?;
        let n = phonon_occupation(&m).map_err(|e| format!("{e} for {u:?}"))?;
        if (n / om.n_th() - 1.0).abs() > 1e-4 {
            return Err(format!("{:?}: {n} vs {} for {u:?}", m.scheme, om.n_th()));
        }
    }
    Ok(())
}

/// Back-action heating of a resonantly driven broad cavity.
pub fn check_backaction(u: &[f64; 3]) -> Result<(), String> {
    use cfb_core::{build_bare_om, phonon_occupation};
    let base = OmParams {
        temperature: lin(u[1], 1.0, 10.0),
        q_m: log_uniform(u[2], 1e5, 1e8),
        ..OmParams::default()
    };
    let om = base.with_n_cav(n_cav_for_cooperativity(&base, log_uniform(u[0], 0.01, 10.0)));
    let g = om.coupling();
    let oracle = om.n_th() + 4.0 * g * g / (om.kappa_c * om.gamma_m());
    let n = phonon_occupation(&build_bare_om(&om).unwrap()).map_err(|e| e.to_string())?;
    if (n / oracle - 1.0).abs() > 0.02 {
        return Err(format!("{n} vs {oracle} for {u:?}"));
    }
    Ok(())
}

/// Numerical `int f^2` of both envelopes.
pub fn check_envelope_normalization(u: &[f64; 2]) -> Result<(), String> {
    use cfb_core::entanglement::{envelope, PulseStage, TemporalModeSpec};
    use cfb_core::quadrature::integrate;
    let spec = TemporalModeSpec {
        gamma_tm: log_uniform(u[0], 1e2, 1e7),
        tau_p: log_uniform(u[1], 1e-6, 1e-2),
    };
    let (tg, ts) = (-50e-9, 50e-9);
    for (stage, a, b) in [
        (PulseStage::Generation, tg - spec.tau_p, tg),
        (PulseStage::Swap, ts, ts + spec.tau_p),
    ] {
        // Panels one e-fold wide keep every panel smooth.
        let panels = (spec.gamma_tm * spec.tau_p).ceil().clamp(1.0, 2000.0) as usize;
        let breaks: Vec<f64> = (0..=panels).map(|k| a + (b - a) * k as f64 / panels as f64).collect();
        let r = integrate(|t| envelope(&spec, stage, t, tg, ts).powi(2), &breaks, 1e-13, 0.0, 100_000)
            .map_err(|e| e.to_string())?;
        if (r.value - 1.0).abs() > 1e-10 {
            return Err(format!("{stage:?}: {} for {spec:?}", r.value));
        }
    }
    Ok(())
}

/// A random protocol run stays physical through every stage.
/// Returns the number of stages whose tolerance was raised above the absolute
/// bound by the roundoff floor of an amplified state.
pub fn check_protocol_physical(u: &[f64; 7]) -> Result<usize, String> {
    use cfb_core::constants::hz;
    use cfb_core::entanglement::{run_protocol, ProtocolConfig, PHYSICALITY_TOL};
    let mut cfg = ProtocolConfig::default();
    cfg.om.n_cav = log_uniform(u[0], 10.0, 3000.0);
    cfg.eta_s = lin(u[1], 0.5, 0.95);
    cfg.schedule.aux.kappa1 = hz(log_uniform(u[2], 1e5, 5e6));
    cfg.schedule.aux.kappa2 = hz(log_uniform(u[3], 1e5, 5e6));
    cfg.schedule.aux.delta_a = if u[4] < 0.5 { 1.0 } else { -1.0 } * cfg.om.omega_m;
    cfg.mode.gamma_tm = log_uniform(u[5], 1e3, 1e6);
    cfg.mode.tau_p = log_uniform(u[6], 2e-6, 1e-4);
    let r = match run_protocol(&cfg) {
        Ok(r) => r,
        // Unstable pre-cooling points are refused, never reported.
        Err(cfb_core::Error::Precondition(_)) | Err(cfb_core::Error::Unstable(_)) => return Ok(0),
        Err(e) => return Err(format!("{e} for {u:?}")),
    };
    for s in &r.stages {
        if s.min_uncertainty_eigenvalue < -s.tolerance {
            return Err(format!("{s:?} for {u:?}"));
        }
    }
    if !(r.delta_epr >= 0.0) {
        return Err(format!("negative EPR variance {}", r.delta_epr));
    }
    Ok(r.stages.iter().filter(|s| s.tolerance > PHYSICALITY_TOL).count())
}
