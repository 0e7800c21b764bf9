//! Frequency-domain steady state: transfer matrix, quadrature spectra, phonon
//! occupation and stability of the delay models.
//!
//! Fourier convention: `u(omega) = int u(t) exp(+i omega t) dt`. The Laplace
//! variable of the characteristic function is `s = -i omega`, so
//! `chi(s) = det(s (I + D e^{-s tau}) - A0 - A1 e^{-s tau})` has its zeros at the
//! growth exponents of the homogeneous solutions.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::solve_lyapunov;
use crate::model::LinearDelayModel;
use crate::quadrature;

pub type C64 = Complex<f64>;

const MARGINAL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct FrequencyResponse {
    pub omega: f64,
    /// `dim x n_in` map from input quadratures to state quadratures.
    pub m: DMatrix<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub stable: bool,
    /// Number of characteristic zeros in the closed right half-plane.
    pub winding_number: i64,
    /// Spectral radius of the delayed-derivative coefficient is below one.
    pub neutral_ok: bool,
    /// Smallest modulus of the normalized characteristic function met on the contour.
    pub margin: f64,
}

/// Small dense complex Gaussian elimination with partial pivoting. Overwrites
/// `a` (row-major `n x n`) and `rhs` (row-major `n x nrhs`) and returns the
/// determinant; `rhs` holds the solution when the determinant is nonzero.
fn eliminate(a: &mut [C64], n: usize, rhs: &mut [C64], nrhs: usize) -> C64 {
    let mut det = C64::new(1.0, 0.0);
    for k in 0..n {
        let mut piv = k;
        let mut best = a[k * n + k].norm_sqr();
        for r in (k + 1)..n {
            let v = a[r * n + k].norm_sqr();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return C64::new(0.0, 0.0);
        }
        if piv != k {
            for c in 0..n {
                a.swap(k * n + c, piv * n + c);
            }
            for c in 0..nrhs {
                rhs.swap(k * nrhs + c, piv * nrhs + c);
            }
            det = -det;
        }
        let p = a[k * n + k];
        det *= p;
        let inv = p.inv();
        for r in (k + 1)..n {
            let f = a[r * n + k] * inv;
            if f == C64::new(0.0, 0.0) {
                continue;
            }
            for c in k..n {
                let v = a[k * n + c];
                a[r * n + c] -= f * v;
            }
            for c in 0..nrhs {
                let v = rhs[k * nrhs + c];
                rhs[r * nrhs + c] -= f * v;
            }
        }
    }
    for k in (0..n).rev() {
        let inv = a[k * n + k].inv();
        for c in 0..nrhs {
            let mut v = rhs[k * nrhs + c];
            for j in (k + 1)..n {
                v -= a[k * n + j] * rhs[j * nrhs + c];
            }
            rhs[k * nrhs + c] = v * inv;
        }
    }
    det
}

/// Row-major `s (I + D e^{-s tau}) - A0 - A1 e^{-s tau}`.
fn characteristic_rows(model: &LinearDelayModel, s: C64) -> Vec<C64> {
    let n = model.dim();
    let e = if model.tau > 0.0 { (-s * model.tau).exp() } else { C64::new(1.0, 0.0) };
    let mut b = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            b[i * n + j] = s * (id + model.d_mat[(i, j)] * e) - model.a0[(i, j)] - model.a1[(i, j)] * e;
        }
    }
    b
}

/// Row-major `sum_n C_n e^{-n s tau_s}`.
fn input_rows(model: &LinearDelayModel, s: C64) -> Vec<C64> {
    let (n, m) = (model.dim(), model.n_in());
    let e1 = if model.tau_s > 0.0 { (-s * model.tau_s).exp() } else { C64::new(1.0, 0.0) };
    let e2 = e1 * e1;
    let mut c = vec![C64::new(0.0, 0.0); n * m];
    for i in 0..n {
        for j in 0..m {
            c[i * m + j] = model.c0[(i, j)] + e1 * model.c1[(i, j)] + e2 * model.c2[(i, j)];
        }
    }
    c
}

/// `chi(s)`.
pub fn characteristic_value(model: &LinearDelayModel, s: C64) -> C64 {
    let n = model.dim();
    let mut b = characteristic_rows(model, s);
    eliminate(&mut b, n, &mut [], 0)
}

/// `M(omega) = -[i omega (I + D e^{i omega tau}) + A0 + A1 e^{i omega tau}]^{-1} sum_n C_n e^{i n omega tau_s}`.
pub fn transfer_matrix(model: &LinearDelayModel, omega: f64) -> Result<FrequencyResponse> {
    let (n, m) = (model.dim(), model.n_in());
    let s = C64::new(0.0, -omega);
    let mut b = characteristic_rows(model, s);
    let mut c = input_rows(model, s);
    let det = eliminate(&mut b, n, &mut c, m);
    if det.norm() == 0.0 || c.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::SingularResponse { omega });
    }
    Ok(FrequencyResponse {
        omega,
        m: DMatrix::from_row_slice(n, m, &c),
    })
}

fn psd_unchecked(model: &LinearDelayModel, omega: f64, psd: &DVector<f64>) -> Result<DVector<f64>> {
    let resp = transfer_matrix(model, omega)?;
    Ok(DVector::from_fn(model.dim(), |i, _| {
        (0..model.n_in()).map(|j| resp.m[(i, j)].norm_sqr() * psd[j]).sum()
    }))
}

/// Mechanical spectrum `S_Xm + S_Ym` at `omega`; only the first two rows of the
/// response are formed, by solving with the transposed characteristic matrix.
fn mechanical_psd(model: &LinearDelayModel, omega: f64, psd: &DVector<f64>) -> f64 {
    let (n, m) = (model.dim(), model.n_in());
    let s = C64::new(0.0, -omega);
    let b = characteristic_rows(model, s);
    let mut bt = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            bt[j * n + i] = b[i * n + j];
        }
    }
    let mut rows = vec![C64::new(0.0, 0.0); n * 2];
    rows[0] = C64::new(1.0, 0.0);
    rows[2 + 1] = C64::new(1.0, 0.0);
    eliminate(&mut bt, n, &mut rows, 2);
    let c = input_rows(model, s);
    let mut total = 0.0;
    for k in 0..2 {
        for j in 0..m {
            let mut v = C64::new(0.0, 0.0);
            for i in 0..n {
                v += rows[i * 2 + k] * c[i * m + j];
            }
            total += v.norm_sqr() * psd[j];
        }
    }
    total
}

/// Single-sided symmetrized spectra `S_u(omega) = |M(omega)|^2 S_in` of every
/// state quadrature. Refuses unstable models.
pub fn quadrature_psd(model: &LinearDelayModel, omega: f64) -> Result<DVector<f64>> {
    require_stable(model)?;
    psd_unchecked(model, omega, &model.noise_psd())
}

/// Spectra on a frequency grid, with a single stability check.
pub fn spectrum(model: &LinearDelayModel, omegas: &[f64]) -> Result<Vec<DVector<f64>>> {
    require_stable(model)?;
    let psd = model.noise_psd();
    omegas.iter().map(|&w| psd_unchecked(model, w, &psd)).collect()
}

fn approximant(model: &LinearDelayModel) -> DMatrix<f64> {
    let n = model.dim();
    let lead = DMatrix::identity(n, n) + &model.d_mat;
    let a = &model.a0 + &model.a1;
    lead.lu().solve(&a).unwrap_or(a)
}

/// Newton correction `chi / chi'` at `s`, from `chi'/chi = tr(B^{-1} B')`.
fn newton_step(model: &LinearDelayModel, s: C64) -> Option<C64> {
    let n = model.dim();
    let mut b = characteristic_rows(model, s);
    let e = if model.tau > 0.0 { (-s * model.tau).exp() } else { C64::new(1.0, 0.0) };
    let mut db = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let id = if i == j { 1.0 } else { 0.0 };
            let d = model.d_mat[(i, j)];
            db[i * n + j] = id + d * e - s * model.tau * d * e + model.tau * model.a1[(i, j)] * e;
        }
    }
    let det = eliminate(&mut b, n, &mut db, n);
    if det.norm() == 0.0 {
        return None;
    }
    let tr: C64 = (0..n).map(|i| db[i * n + i]).sum();
    if tr.norm() == 0.0 || !tr.re.is_finite() {
        return None;
    }
    Some(tr.inv())
}

/// Characteristic zeros near those of the zero-delay approximant. For ODE
/// models these are the drift eigenvalues; for delay models each approximant
/// eigenvalue is refined by Newton's method on `chi`, and kept unrefined when
/// the iteration does not settle.
pub fn characteristic_roots(model: &LinearDelayModel) -> Vec<C64> {
    let seeds: Vec<C64> = approximant(model).complex_eigenvalues().iter().copied().collect();
    if model.is_ode() {
        return seeds;
    }
    seeds
        .into_iter()
        .map(|seed| {
            let mut s = seed;
            for _ in 0..60 {
                let Some(step) = newton_step(model, s) else { return seed };
                s -= step;
                if !s.re.is_finite() || !s.im.is_finite() {
                    return seed;
                }
                if step.norm() <= 1e-12 * s.norm().max(1e-300) {
                    return s;
                }
            }
            seed
        })
        .collect()
}

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Normalized characteristic function
/// `h(s) = chi(s) / [prod_k (s + c_k) det(I + D e^{-s tau})]`, analytic in the
/// closed right half-plane and tending to one at infinity there.
struct Normalized<'a> {
    model: &'a LinearDelayModel,
    scales: Vec<f64>,
}

impl Normalized<'_> {
    fn eval(&self, omega: f64) -> C64 {
        let model = self.model;
        let n = model.dim();
        let s = C64::new(0.0, omega);
        let mut value = characteristic_value(model, s);
        for c in &self.scales {
            value /= s + c;
        }
        if model.tau > 0.0 && model.d_mat.iter().any(|v| *v != 0.0) {
            let e = (-s * model.tau).exp();
            let mut lead = vec![C64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in 0..n {
                    let id = if i == j { 1.0 } else { 0.0 };
                    lead[i * n + j] = C64::new(id, 0.0) + model.d_mat[(i, j)] * e;
                }
            }
            value /= eliminate(&mut lead, n, &mut [], 0);
        }
        value
    }
}

fn arg_step(from: C64, to: C64) -> f64 {
    (to * from.conj()).arg()
}

/// Counts right-half-plane zeros of `chi` with the argument principle on the
/// imaginary axis, after checking the neutral condition `rho(D) < 1`.
///
/// Passing within `1e-12` of a zero of the normalized function is reported as
/// [`Error::Marginal`] rather than as a verdict.
pub fn stability_check(model: &LinearDelayModel) -> Result<StabilityReport> {
    let neutral_ok = model.tau == 0.0 || spectral_radius(&model.d_mat) < 1.0 - 1e-12;
    if !neutral_ok {
        return Ok(StabilityReport {
            stable: false,
            winding_number: 0,
            neutral_ok,
            margin: 0.0,
        });
    }
    let seeds: Vec<C64> = approximant(model).complex_eigenvalues().iter().copied().collect();
    let scales: Vec<f64> = seeds.iter().map(|z| if z.norm() > 0.0 { z.norm() } else { 1.0 }).collect();
    let big = scales.iter().copied().fold(0.0, f64::max).max(1.0);
    let small = scales.iter().copied().fold(f64::INFINITY, f64::min).max(1e-300);
    let omega_max = 200.0 * big;
    let h = Normalized { model, scales };

    let mut grid: Vec<f64> = vec![0.0, omega_max];
    let lo = (1e-3 * small).log10().floor() as i32;
    let hi = omega_max.log10().ceil() as i32;
    for k in lo..=hi {
        for q in 0..8 {
            let w = 10f64.powf(k as f64 + q as f64 / 8.0);
            if w < omega_max {
                grid.push(w);
            }
        }
    }
    let roots = characteristic_roots(model);
    for r in roots.iter().chain(seeds.iter()) {
        push_resonance(&mut grid, r.im.abs(), r.re.abs(), omega_max, 1.0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    let mut values: Vec<(f64, C64)> = grid.iter().map(|&w| (w, h.eval(w))).collect();
    if model.tau > 0.0 {
        // Resolve the loop-lag oscillation until the normalized function has
        // settled close to one over a full period.
        let period = 2.0 * PI / model.tau;
        let step = period / 16.0;
        let mut w = step;
        let mut worst: f64 = 0.0;
        let mut period_end = period;
        while w < omega_max {
            let v = h.eval(w);
            worst = worst.max((v - 1.0).norm());
            values.push((w, v));
            if w >= period_end {
                if w > 4.0 * big && worst < 0.2 {
                    break;
                }
                worst = 0.0;
                period_end += period;
            }
            w += step;
        }
        values.sort_by(|a, b| a.0.total_cmp(&b.0));
        values.dedup_by(|a, b| a.0 == b.0);
    }

    // Bisect wherever the argument moves by more than pi/4 between samples.
    let mut refined: Vec<(f64, C64)> = Vec::with_capacity(values.len() * 2);
    let mut margin = f64::INFINITY;
    let mut stack: Vec<((f64, C64), (f64, C64), u32)> = Vec::new();
    for w in values.windows(2).rev() {
        stack.push((w[0], w[1], 0));
    }
    refined.push(values[0]);
    while let Some((a, b, depth)) = stack.pop() {
        if arg_step(a.1, b.1).abs() > PI / 4.0 && depth < 80 && b.0 - a.0 > 1e-15 * b.0 {
            let mid = 0.5 * (a.0 + b.0);
            let m = (mid, h.eval(mid));
            stack.push((m, b, depth + 1));
            stack.push((a, m, depth + 1));
        } else {
            refined.push(b);
        }
    }
    let mut phase = 0.0;
    for (k, (w, v)) in refined.iter().enumerate() {
        let mag = v.norm();
        if mag < margin {
            margin = mag;
        }
        if !(mag >= MARGINAL) || !mag.is_finite() {
            return Err(Error::Marginal {
                omega: *w,
                value: mag,
            });
        }
        if k > 0 {
            phase += arg_step(refined[k - 1].1, *v);
        }
    }
    let end = refined.last().unwrap().1;
    // Close the contour at infinity, where h tends to one. By conjugate
    // symmetry the negative half-axis contributes the same change again, and
    // the clockwise orientation of the right half-plane contour flips the sign.
    phase += arg_step(end, C64::new(1.0, 0.0));
    let winding_number = (-phase / PI).round() as i64;
    if winding_number < 0 {
        return Err(Error::LinearAlgebra(format!(
            "argument principle gave a negative zero count ({winding_number})"
        )));
    }
    Ok(StabilityReport {
        stable: winding_number == 0,
        winding_number,
        neutral_ok,
        margin,
    })
}

fn push_resonance(grid: &mut Vec<f64>, center: f64, width: f64, omega_max: f64, panel_scale: f64) {
    if !center.is_finite() || !width.is_finite() {
        return;
    }
    let width = width.max(1e-12 * center).max(1e-300);
    if center < omega_max {
        grid.push(center);
    }
    let mut off = width * panel_scale;
    while off < center.max(width) * 4.0 {
        if center - off > 0.0 {
            grid.push(center - off);
        }
        if center + off < omega_max {
            grid.push(center + off);
        }
        off *= 2.0;
    }
}

/// Stability check that turns an unstable verdict into an error.
pub fn require_stable(model: &LinearDelayModel) -> Result<StabilityReport> {
    let report = stability_check(model)?;
    if report.stable {
        Ok(report)
    } else {
        Err(Error::Unstable(report))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QuadratureOptions {
    pub rel_tol: f64,
    /// Upper end of the explicit integration range; defaults to ten times the
    /// largest characteristic rate (about `5 kappa_c` for the cavity models).
    pub omega_max: Option<f64>,
    /// Scales the width of the initial panels around each resonance.
    pub panel_scale: f64,
    pub max_panels: usize,
}

impl Default for QuadratureOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-6,
            omega_max: None,
            panel_scale: 1.0,
            max_panels: 50_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PhononOccupation {
    pub n_phn: f64,
    pub abs_error: f64,
    pub panels: usize,
}

/// Steady phonon number `1/2 int_0^inf (S_Xm + S_Ym) domega / 2 pi - 1/2`.
pub fn phonon_occupation(model: &LinearDelayModel) -> Result<f64> {
    phonon_occupation_with(model, &QuadratureOptions::default()).map(|r| r.n_phn)
}

pub fn phonon_occupation_with(model: &LinearDelayModel, opts: &QuadratureOptions) -> Result<PhononOccupation> {
    require_stable(model)?;
    let psd = model.noise_psd();
    let roots = characteristic_roots(model);
    let big = roots.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1.0);
    let small = roots
        .iter()
        .map(|z| z.norm())
        .filter(|v| *v > 0.0)
        .fold(f64::INFINITY, f64::min)
        .min(big);
    let omega_max = opts.omega_max.unwrap_or(10.0 * big);
    let h = opts.panel_scale;

    let mut breaks = vec![0.0, omega_max];
    let per_decade = (4.0 / h).ceil() as i32;
    let lo = (small / 10.0).log10().floor() as i32;
    let hi = omega_max.log10().ceil() as i32;
    for k in lo * per_decade..=hi * per_decade {
        let w = 10f64.powf(k as f64 / per_decade as f64);
        if w < omega_max {
            breaks.push(w);
        }
    }
    for r in &roots {
        push_resonance(&mut breaks, r.im.abs(), r.re.abs(), omega_max, h);
    }
    if model.tau > 0.0 {
        let period = 2.0 * PI / model.tau;
        let mut w = period;
        while w < omega_max.min(20.0 * period) {
            breaks.push(w);
            w += period;
        }
    }
    breaks.retain(|w| *w >= 0.0 && *w <= omega_max);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup();

    let integrand = |w: f64| mechanical_psd(model, w, &psd) / (2.0 * PI);
    let r = quadrature::integrate(integrand, &breaks, opts.rel_tol * 0.5, 0.0, opts.max_panels)?;
    let (mut body, mut body_error, mut panels) = (r.value, r.error, r.panels);
    // Beyond the edge the integrand decays as 1/omega^2, whose integral is
    // `f(edge) edge`. The range is extended until that law is confirmed to
    // the tolerance.
    let mut edge = omega_max;
    for _ in 0..8 {
        let (f1, f2) = (integrand(edge), integrand(2.0 * edge));
        let tail = f1 * edge;
        let law = (4.0 * f2 / f1 - 1.0).abs();
        let total = body + tail;
        if tail * law <= 0.25 * opts.rel_tol * total || tail <= 0.25 * opts.rel_tol * total {
            return Ok(PhononOccupation {
                n_phn: 0.5 * total - 0.5,
                abs_error: 0.5 * (body_error + tail * law),
                panels,
            });
        }
        let next: Vec<f64> = (0..=8).map(|k| edge * 10f64.powf(k as f64 / 8.0)).collect();
        let r = quadrature::integrate(integrand, &next, opts.rel_tol * 0.25, 0.0, opts.max_panels)?;
        body += r.value;
        body_error += r.error;
        panels += r.panels;
        edge *= 10.0;
    }
    let tail = integrand(edge) * edge;
    Err(Error::QuadratureNonConvergence {
        achieved: tail / (body + tail),
        panels,
    })
}

/// Steady covariance of an ODE model from `A S + S A^T + N = 0`.
pub fn steady_covariance(model: &LinearDelayModel) -> Result<DMatrix<f64>> {
    let (a, _) = model.ode_matrices()?;
    require_stable(model)?;
    solve_lyapunov(&a, &model.diffusion()?)
}

/// Phonon number from the steady covariance, `(S_XmXm + S_YmYm)/4 - 1/2`.
pub fn lyapunov_phonon_occupation(model: &LinearDelayModel) -> Result<f64> {
    let s = steady_covariance(model)?;
    Ok((s[(0, 0)] + s[(1, 1)]) / 4.0 - 0.5)
}
