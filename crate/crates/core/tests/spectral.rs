mod common;

use std::f64::consts::{FRAC_PI_4, PI};

use cfb_core::constants::hz;
use cfb_core::quadrature::integrate;
use cfb_core::spectral::{
    characteristic_value, lyapunov_phonon_occupation, phonon_occupation_with, quadrature_psd, QuadratureOptions, C64,
};
use cfb_core::{
    build_bare_om, build_cavity_feedback, build_mirror_feedback, phonon_occupation, stability_check, transfer_matrix,
    AuxCavityParams, AuxMirrorParams, ChannelKind, Error, LinearDelayModel, OmParams, PathParams,
};
use common::{cavity_loop_response, mirror_loop_response, n_cav_for_cooperativity, relative_deviation};

fn uncoupled() -> OmParams {
    OmParams {
        g0: 0.0,
        ..OmParams::default()
    }
}

#[test]
fn response_rolls_off_as_inverse_frequency() {
    let om = OmParams::default();
    let m = build_bare_om(&om).unwrap();
    let w = 1e6 * om.kappa_c;
    let a = transfer_matrix(&m, w).unwrap().m.norm() * w;
    let b = transfer_matrix(&m, 2.0 * w).unwrap().m.norm() * 2.0 * w;
    assert!((a / b - 1.0).abs() < 1e-3, "{a} {b}");
    assert!(transfer_matrix(&m, w).unwrap().m.norm() < 1e-5);
}

#[test]
fn empty_cavity_amplitude_spectrum_at_dc() {
    let om = uncoupled();
    let s = quadrature_psd(&build_bare_om(&om).unwrap(), 0.0).unwrap();
    assert!((s[2] * om.kappa_c / 4.0 - 1.0).abs() < 1e-12);
}

#[test]
fn empty_cavity_holds_vacuum() {
    let om = uncoupled();
    let m = build_bare_om(&om).unwrap();
    let k = om.kappa_c;
    let breaks: Vec<f64> = (0..=24)
        .map(|i| if i == 0 { 0.0 } else { k * 10f64.powf(i as f64 / 4.0 - 3.0) })
        .collect();
    let f = |w: f64| quadrature_psd(&m, w).unwrap()[2] / (2.0 * PI);
    let body = integrate(f, &breaks, 1e-10, 0.0, 10_000).unwrap().value;
    let edge = *breaks.last().unwrap();
    let tail = f(edge) * edge;
    let variance = 2.0 * (body + tail);
    assert!((variance - 1.0).abs() < 1e-5, "{variance}");
}

#[test]
fn uncoupled_mechanics_is_thermal_in_every_scheme() {
    let om = uncoupled();
    let n_th = om.n_th();
    let path = PathParams {
        eta_s: 0.8,
        phi_s: 0.6,
        tau_s: 0.0,
    };
    let delayed = PathParams { tau_s: 40e-9, ..path };
    let models = [
        build_bare_om(&om).unwrap(),
        build_cavity_feedback(&om, &AuxCavityParams::default(), &path).unwrap(),
        build_cavity_feedback(&om, &AuxCavityParams::default(), &delayed).unwrap(),
        build_mirror_feedback(&om, &AuxMirrorParams { reflectivity: 0.9 }, &delayed).unwrap(),
    ];
    for m in &models {
        let n = phonon_occupation(m).unwrap();
        assert!((n / n_th - 1.0).abs() < 1e-4, "{:?}: {n} vs {n_th}", m.scheme);
    }
}

#[test]
fn resonant_drive_adds_backaction_heating() {
    let mut om = OmParams::default();
    om.n_cav = n_cav_for_cooperativity(&om, 1.0);
    let g = om.coupling();
    let oracle = om.n_th() + 4.0 * g * g / (om.kappa_c * om.gamma_m());
    let m = build_bare_om(&om).unwrap();
    let spectral = phonon_occupation(&m).unwrap();
    assert!((spectral / oracle - 1.0).abs() < 0.02, "{spectral} vs {oracle}");
    let lyap = lyapunov_phonon_occupation(&m).unwrap();
    assert!((lyap / spectral - 1.0).abs() < 1e-5, "{lyap} vs {spectral}");
}

#[test]
fn feedback_occupation_agrees_with_lyapunov() {
    let om = OmParams::default();
    let aux = AuxCavityParams {
        kappa1: hz(2e6),
        kappa2: hz(100e3),
        delta_a: 0.0,
    };
    let path = PathParams {
        eta_s: 0.8,
        phi_s: FRAC_PI_4,
        tau_s: 0.0,
    };
    let m = build_cavity_feedback(&om, &aux, &path).unwrap();
    let a = phonon_occupation(&m).unwrap();
    let b = lyapunov_phonon_occupation(&m).unwrap();
    assert!(a < 1.0, "{a}");
    assert!((a / b - 1.0).abs() < 1e-5, "{a} vs {b}");
}

#[test]
fn resonant_drive_is_stable_for_any_coupling() {
    for n_cav in [0.0, 1.0, 1e3, 1e5, 1e7] {
        let om = OmParams::default().with_n_cav(n_cav);
        let r = stability_check(&build_bare_om(&om).unwrap()).unwrap();
        assert!(r.stable && r.winding_number == 0, "{n_cav}: {r:?}");
    }
}

#[test]
fn blue_detuned_drive_is_unstable() {
    let om = OmParams {
        delta_c: hz(1e6),
        n_cav: 1e6,
        ..OmParams::default()
    };
    let m = build_bare_om(&om).unwrap();
    let eig = m.a0.complex_eigenvalues();
    let unstable = eig.iter().filter(|z| z.re > 0.0).count() as i64;
    assert!(unstable > 0);
    let r = stability_check(&m).unwrap();
    assert!(!r.stable);
    assert_eq!(r.winding_number, unstable);
}

/// Newton iterations on the characteristic function from a list of seeds;
/// returns a zero with positive real part if one is found.
fn right_half_plane_zero(m: &LinearDelayModel, seeds: &[C64]) -> Option<C64> {
    for &seed in seeds {
        let mut s = seed;
        for _ in 0..100 {
            let h = 1e-7 * s.norm().max(1.0);
            let f = characteristic_value(m, s);
            let df = (characteristic_value(m, s + h) - characteristic_value(m, s - h)) / (2.0 * h);
            let step = f / df;
            s -= step;
            if !s.re.is_finite() || !s.im.is_finite() {
                break;
            }
            if step.norm() < 1e-10 * s.norm() {
                if s.re > 0.0 {
                    return Some(s);
                }
                break;
            }
        }
    }
    None
}

#[test]
fn lossless_mirror_with_positive_feedback_is_unstable() {
    let om = OmParams {
        n_cav: 1e4,
        ..OmParams::default()
    };
    let mirror = AuxMirrorParams { reflectivity: 1.0 };
    let path = PathParams {
        eta_s: 1.0,
        phi_s: 1.9,
        tau_s: 50e-9,
    };
    let m = build_mirror_feedback(&om, &mirror, &path).unwrap();
    let r = stability_check(&m).unwrap();
    assert!(!r.stable, "{r:?}");
    let w = om.omega_m;
    let seeds: Vec<C64> = (0..40)
        .flat_map(|k| [0.01, 0.1, 1.0].map(|re| C64::new(re * w, w * k as f64 * 0.25)))
        .collect();
    let z = right_half_plane_zero(&m, &seeds).expect("a growing mode");
    assert!(z.re > 0.0);
}

#[test]
fn feedback_phase_is_periodic() {
    let om = OmParams::default();
    let aux = AuxCavityParams::default();
    for tau_s in [0.0, 30e-9] {
        let p = PathParams {
            eta_s: 0.8,
            phi_s: 0.4,
            tau_s,
        };
        let q = PathParams {
            phi_s: 0.4 + 2.0 * PI,
            ..p
        };
        let a = build_cavity_feedback(&om, &aux, &p).unwrap();
        let b = build_cavity_feedback(&om, &aux, &q).unwrap();
        for w in [0.0, 0.5 * om.omega_m, om.omega_m, 7e8] {
            let ma = transfer_matrix(&a, w).unwrap().m;
            let mb = transfer_matrix(&b, w).unwrap().m;
            assert!(relative_deviation(&ma, &mb) < 1e-9);
        }
    }
}

#[test]
fn short_delay_is_continuous_with_instant_loop() {
    let om = OmParams::default();
    let aux = AuxCavityParams::default();
    let mirror = AuxMirrorParams { reflectivity: 0.8 };
    let p0 = PathParams {
        eta_s: 0.7,
        phi_s: -0.5,
        tau_s: 0.0,
    };
    let p1 = PathParams { tau_s: 1e-12, ..p0 };
    let pairs = [
        (
            build_cavity_feedback(&om, &aux, &p0).unwrap(),
            build_cavity_feedback(&om, &aux, &p1).unwrap(),
        ),
        (
            build_mirror_feedback(&om, &mirror, &p0).unwrap(),
            build_mirror_feedback(&om, &mirror, &p1).unwrap(),
        ),
    ];
    for (a, b) in &pairs {
        for k in 0..100 {
            // Up to 100 Omega_m, where a 1 ps lag is still far below a percent of phase.
            let w = om.omega_m * 10f64.powf(-2.0 + 4.0 * k as f64 / 99.0);
            let sa = quadrature_psd(a, w).unwrap();
            let sb = quadrature_psd(b, w).unwrap();
            for i in 0..sa.len() {
                assert!((sa[i] - sb[i]).abs() <= 1e-3 * sa[i].abs(), "{:?} w={w} i={i}", a.scheme);
            }
        }
    }
}

#[test]
fn loop_elimination_matches_block_solve() {
    let om = OmParams::default();
    let aux = AuxCavityParams {
        kappa1: hz(900e3),
        kappa2: hz(150e3),
        delta_a: -hz(0.7e6),
    };
    let mirror = AuxMirrorParams { reflectivity: 0.6 };
    let order = [
        ChannelKind::IntrinsicOptical,
        ChannelKind::ForwardPath,
        ChannelKind::BackwardPath,
        ChannelKind::AuxiliaryOuter,
        ChannelKind::MechanicalBath,
    ];
    for tau_s in [0.0, 35e-9] {
        let path = PathParams {
            eta_s: 0.85,
            phi_s: 0.9,
            tau_s,
        };
        let cav = build_cavity_feedback(&om, &aux, &path).unwrap();
        let mir = build_mirror_feedback(&om, &mirror, &path).unwrap();
        for m in [&cav, &mir] {
            assert_eq!(m.channels.iter().map(|c| c.kind).collect::<Vec<_>>(), order);
        }
        for k in 0..40 {
            let w = om.omega_m * 10f64.powf(-3.0 + 9.0 * k as f64 / 39.0);
            let mut got = transfer_matrix(&cav, w).unwrap().m;
            // The model carries the auxiliary field and its outer input
            // delayed by tau_s.
            let shift = C64::new(0.0, w * cav.aux_time_shift).exp();
            for i in 4..6 {
                for j in 0..got.ncols() {
                    got[(i, j)] /= shift;
                }
            }
            for i in 0..got.nrows() {
                for j in 6..8 {
                    got[(i, j)] *= shift;
                }
            }
            let want = cavity_loop_response(&om, &aux, &path, w);
            let dev = relative_deviation(&got, &want);
            assert!(dev < 1e-9, "cavity tau_s={tau_s} w={w}: {dev}");

            let got = transfer_matrix(&mir, w).unwrap().m;
            let want = mirror_loop_response(&om, &mirror, &path, w);
            let dev = relative_deviation(&got, &want);
            assert!(dev < 1e-9, "mirror tau_s={tau_s} w={w}: {dev}");
        }
    }
}

#[test]
fn occupation_is_converged_in_range_and_panels() {
    let om = OmParams::default();
    let aux = AuxCavityParams {
        kappa1: hz(2e6),
        kappa2: hz(100e3),
        delta_a: 0.0,
    };
    let path = PathParams {
        eta_s: 0.8,
        phi_s: FRAC_PI_4,
        tau_s: 25e-9,
    };
    let m = build_cavity_feedback(&om, &aux, &path).unwrap();
    let base = phonon_occupation_with(&m, &QuadratureOptions::default()).unwrap();
    let wide = phonon_occupation_with(
        &m,
        &QuadratureOptions {
            omega_max: Some(100.0 * om.kappa_c),
            ..QuadratureOptions::default()
        },
    )
    .unwrap();
    let fine = phonon_occupation_with(
        &m,
        &QuadratureOptions {
            panel_scale: 0.5,
            ..QuadratureOptions::default()
        },
    )
    .unwrap();
    // The tolerance applies to the integrated quantity n + 1/2.
    let total = |r: &cfb_core::spectral::PhononOccupation| r.n_phn + 0.5;
    assert!((total(&wide) / total(&base) - 1.0).abs() < 1e-6, "{base:?} {wide:?}");
    assert!((total(&fine) / total(&base) - 1.0).abs() < 1e-6, "{base:?} {fine:?}");
}

#[test]
fn unstable_model_is_refused() {
    let om = OmParams {
        delta_c: hz(1e6),
        n_cav: 1e6,
        ..OmParams::default()
    };
    let m = build_bare_om(&om).unwrap();
    assert!(matches!(phonon_occupation(&m), Err(Error::Unstable(_))));
    assert!(matches!(quadrature_psd(&m, 1.0), Err(Error::Unstable(_))));
}
