//! Dense linear-algebra helpers shared by the steady-state and propagation code.

use nalgebra::{DMatrix, DVector, Matrix2};

use crate::error::{Error, Result};

/// Rotation by `phi`: `[[cos, sin], [-sin, cos]]`.
pub fn rotation(phi: f64) -> Matrix2<f64> {
    let (s, c) = phi.sin_cos();
    Matrix2::new(c, s, -s, c)
}

/// Symplectic form for `n_modes` bosonic modes with blocks `[[0, 1], [-1, 0]]`.
pub fn symplectic_form(n_modes: usize) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * n_modes, 2 * n_modes);
    for k in 0..n_modes {
        j[(2 * k, 2 * k + 1)] = 1.0;
        j[(2 * k + 1, 2 * k)] = -1.0;
    }
    j
}

pub(crate) fn add_block2(m: &mut DMatrix<f64>, row: usize, col: usize, b: &Matrix2<f64>) {
    for i in 0..2 {
        for j in 0..2 {
            m[(row + i, col + j)] += b[(i, j)];
        }
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Solves `A X + X A^T + Q = 0` for symmetric `X`.
///
/// The Kronecker system is solved with a pivoted LU factorization followed by a
/// few rounds of iterative refinement; the drift matrices here mix rates that
/// differ by eleven orders of magnitude.
pub fn solve_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    // Row/column scaling by a diagonal similarity improves the conditioning of
    // the Kronecker operator considerably for stiff drift matrices.
    let scale = balance_scaling(a);
    let mut a_s = a.clone();
    let mut q_s = q.clone();
    for i in 0..n {
        for j in 0..n {
            a_s[(i, j)] *= scale[j] / scale[i];
            q_s[(i, j)] /= scale[i] * scale[j];
        }
    }
    let nn = n * n;
    let mut k = DMatrix::<f64>::zeros(nn, nn);
    // vec(A X) = (I (x) A) vec X, vec(X A^T) = (A (x) I) vec X, column-major vec.
    for col in 0..n {
        for row in 0..n {
            let r = col * n + row;
            for m in 0..n {
                k[(r, col * n + m)] += a_s[(row, m)];
                k[(r, m * n + row)] += a_s[(col, m)];
            }
        }
    }
    let rhs = DVector::from_iterator(nn, q_s.iter().map(|v| -v));
    let lu = k.clone().lu();
    let mut x = lu
        .solve(&rhs)
        .ok_or_else(|| Error::LinearAlgebra("singular Lyapunov operator".into()))?;
    for _ in 0..3 {
        let resid = &rhs - &k * &x;
        match lu.solve(&resid) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    let mut out = DMatrix::from_column_slice(n, n, x.as_slice());
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] *= scale[i] * scale[j];
        }
    }
    symmetrize(&mut out);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra("non-finite Lyapunov solution".into()));
    }
    Ok(out)
}

/// Power-of-two diagonal scaling `d` such that `D^-1 A D` has balanced row and
/// column norms.
fn balance_scaling(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut d = vec![1.0_f64; n];
    for _ in 0..64 {
        let mut converged = true;
        for i in 0..n {
            let (mut c, mut r) = (0.0, 0.0);
            for j in (0..n).filter(|&j| j != i) {
                c += (a[(j, i)] * d[i] / d[j]).abs();
                r += (a[(i, j)] * d[j] / d[i]).abs();
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let f = 2f64.powi((0.5 * (r / c).log2()).round() as i32);
            if f != 1.0 && c * f + r / f < 0.95 * (c + r) {
                d[i] *= f;
                converged = false;
            }
        }
        if converged {
            break;
        }
    }
    d
}

/// Discretization of `dx = A x dt + noise` over an interval `t`: returns the
/// transition matrix `Phi = exp(A t)` and the accumulated noise covariance
/// `Qd = int_0^t exp(A s) Q exp(A^T s) ds`.
///
/// Both are summed as Taylor series on a short sub-interval with
/// `||A h|| <= 1/4`, then the interval is doubled up to `t`. The doubling
/// carries `E = Phi - I` rather than `Phi`: for stiff `A` the sub-interval is
/// so short that `Phi` rounds the slow decay rates to a few digits, while `E`
/// keeps them to full precision.
pub fn discretize(a: &DMatrix<f64>, q: &DMatrix<f64>, t: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    if t <= 0.0 {
        return Ok((DMatrix::identity(n, n), DMatrix::zeros(n, n)));
    }
    let norm = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64 * t;
    let doublings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as i32
    } else {
        0
    };
    let h = t / 2f64.powi(doublings);
    let x = a * h;
    let converged = |term: &DMatrix<f64>, sum: &DMatrix<f64>| {
        term.amax() <= f64::EPSILON * 1e-3 * sum.amax() || term.amax() == 0.0
    };
    // E = sum_{k>=1} X^k / k!
    let mut e = x.clone();
    let mut term = x.clone();
    for k in 2..40 {
        term = &term * &x / k as f64;
        e += &term;
        if converged(&term, &e) {
            break;
        }
    }
    // Qd = sum_{k>=0} h^{k+1} / (k+1)! L^k(Q), with L(Y) = A Y + Y A^T.
    let mut qd = q * h;
    let mut term = qd.clone();
    for k in 1..40 {
        term = (&x * &term + &term * x.transpose()) / (k + 1) as f64;
        qd += &term;
        if converged(&term, &qd) {
            break;
        }
    }
    symmetrize(&mut qd);
    for _ in 0..doublings {
        let phi = &e + DMatrix::<f64>::identity(n, n);
        let mut next = &qd + &phi * &qd * phi.transpose();
        symmetrize(&mut next);
        qd = next;
        e = &e * 2.0 + &e * &e;
    }
    let phi = e + DMatrix::<f64>::identity(n, n);
    if phi.iter().chain(qd.iter()).any(|v| !v.is_finite()) {
        return Err(Error::LinearAlgebra("non-finite covariance propagator".into()));
    }
    Ok((phi, qd))
}

/// Smallest eigenvalue of the Hermitian matrix `sigma + i J`, computed through
/// its real symmetric embedding `[[sigma, -J], [J, sigma]]`.
pub fn min_uncertainty_eigenvalue(sigma: &DMatrix<f64>, j: &DMatrix<f64>) -> f64 {
    let n = sigma.nrows();
    let mut h = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for r in 0..n {
        for c in 0..n {
            h[(r, c)] = sigma[(r, c)];
            h[(n + r, n + c)] = sigma[(r, c)];
            h[(r, n + c)] = -j[(r, c)];
            h[(n + r, c)] = j[(r, c)];
        }
    }
    h.symmetric_eigenvalues().min()
}
