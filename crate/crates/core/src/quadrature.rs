//! Globally adaptive Gauss–Kronrod (7/15) quadrature over a set of panels.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
pub struct QuadratureResult {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn kronrod<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut gauss = fc * WG[3];
    let mut kron = fc * WGK[7];
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    let value = kron * h;
    let error = ((kron - gauss) * h).abs();
    Panel { a, b, value, error }
}

/// Integrates `f` over `[breaks[0], breaks[last]]`, starting from the given
/// panels and repeatedly bisecting the panel with the largest error estimate
/// until the summed estimate is below `max(rel_tol |I|, abs_tol)`.
///
/// The result does not depend on evaluation order beyond the deterministic
/// panel ordering.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_panels: usize,
) -> Result<QuadratureResult> {
    let mut heap = BinaryHeap::new();
    for w in breaks.windows(2) {
        if w[1] > w[0] {
            heap.push(kronrod(&mut f, w[0], w[1]));
        }
    }
    loop {
        // Re-sum from scratch in a fixed order so the result is reproducible.
        let mut panels: Vec<&Panel> = heap.iter().collect();
        panels.sort_by(|p, q| p.a.total_cmp(&q.a));
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() || !error.is_finite() {
            return Err(Error::QuadratureNonConvergence {
                achieved: f64::INFINITY,
                panels: heap.len(),
            });
        }
        let target = (rel_tol * value.abs()).max(abs_tol);
        if error <= target {
            return Ok(QuadratureResult {
                value,
                error,
                panels: heap.len(),
            });
        }
        if heap.len() >= max_panels {
            return Err(Error::QuadratureNonConvergence {
                achieved: error / value.abs().max(f64::MIN_POSITIVE),
                panels: heap.len(),
            });
        }
        let worst = heap.pop().expect("nonempty panel set");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point; accept it as is.
            heap.push(Panel { error: 0.0, ..worst });
            continue;
        }
        heap.push(kronrod(&mut f, worst.a, mid));
        heap.push(kronrod(&mut f, mid, worst.b));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| x.powi(5) - 3.0 * x * x, &[0.0, 2.0], 1e-14, 0.0, 10).unwrap();
        assert!((r.value - (64.0 / 6.0 - 8.0)).abs() < 1e-12);
        assert_eq!(r.panels, 1);
    }

    #[test]
    fn narrow_lorentzian_with_breakpoints() {
        let (w0, g) = (6.0e6, 0.3);
        let f = |x: f64| g / ((x - w0).powi(2) + g * g);
        let mut breaks = vec![0.0];
        for k in (0..30).rev() {
            let off = g * 2f64.powi(k);
            if off < w0 {
                breaks.push(w0 - off);
            }
        }
        breaks.push(w0);
        for k in 0..30 {
            breaks.push(w0 + g * 2f64.powi(k));
        }
        let r = integrate(f, &breaks, 1e-10, 0.0, 10_000).unwrap();
        let hi = *breaks.last().unwrap();
        let exact = ((hi - w0) / g).atan() + (w0 / g).atan();
        assert!((r.value - exact).abs() < 1e-9 * exact, "{} vs {exact}", r.value);
        assert!((exact - PI).abs() < 1e-5);
    }

    #[test]
    fn reports_non_convergence() {
        let r = integrate(|x: f64| (1.0 / x).sin(), &[1e-9, 1.0], 1e-14, 0.0, 8);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }
}
