//! Wigner function of a pure single-mode state.
//!
//! Convention: ħ = 1, x = (a + a†)/√2, p = (a - a†)/(i√2), so the vacuum is
//! `exp(-x² - p²)/π`. The Fock-basis sum uses the Laguerre recurrence over
//! matrix elements of the density operator.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::fock::MotionalState;

/// Sampled Wigner function; `values[iy][ix]` is `W(xs[ix], ps[iy])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerGrid {
    pub xs: Vec<f64>,
    pub ps: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl WignerGrid {
    /// Trapezoidal estimate of `∫ W dx dp`.
    pub fn integral(&self) -> f64 {
        let wx = trapezoid_weights(&self.xs);
        let wp = trapezoid_weights(&self.ps);
        self.values
            .iter()
            .zip(&wp)
            .map(|(row, w)| w * row.iter().zip(&wx).map(|(v, u)| v * u).sum::<f64>())
            .sum()
    }
}

fn trapezoid_weights(grid: &[f64]) -> Vec<f64> {
    let n = grid.len();
    let mut w = vec![0.0; n];
    for i in 1..n {
        let h = grid[i] - grid[i - 1];
        w[i - 1] += h / 2.0;
        w[i] += h / 2.0;
    }
    w
}

/// `n` evenly spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// Wigner value at a single phase-space point.
pub fn wigner_at(state: &MotionalState, x: f64, p: f64) -> f64 {
    let psi = state.amplitudes();
    let dim = psi.len();
    let rho = |m: usize, n: usize| psi[m] * psi[n].conj();
    let a = C64::new(x, p) / 2f64.sqrt();
    let mut w_list = vec![C64::default(); dim];
    w_list[0] = C64::new((-2.0 * a.norm_sqr()).exp() / PI, 0.0);
    let mut w = rho(0, 0).re * w_list[0].re;
    for n in 1..dim {
        w_list[n] = 2.0 * a * w_list[n - 1] / (n as f64).sqrt();
        w += 2.0 * (rho(0, n) * w_list[n]).re;
    }
    for m in 1..dim {
        let sm = (m as f64).sqrt();
        let mut temp = w_list[m];
        w_list[m] = (2.0 * a.conj() * temp - sm * w_list[m - 1]) / sm;
        w += (rho(m, m) * w_list[m]).re;
        for n in m + 1..dim {
            let next = (2.0 * a * w_list[n - 1] - sm * temp) / (n as f64).sqrt();
            temp = w_list[n];
            w_list[n] = next;
            w += 2.0 * (rho(m, n) * w_list[n]).re;
        }
    }
    w
}

pub fn wigner_grid(
    state: &MotionalState,
    x_range: (f64, f64),
    p_range: (f64, f64),
    resolution: usize,
) -> WignerGrid {
    let xs = linspace(x_range.0, x_range.1, resolution);
    let ps = linspace(p_range.0, p_range.1, resolution);
    let values = ps
        .iter()
        .map(|&p| xs.iter().map(|&x| wigner_at(state, x, p)).collect())
        .collect();
    WignerGrid { xs, ps, values }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{coherent_state, make_fock, squeezed_vacuum, Truncation};
    use approx::assert_abs_diff_eq;

    #[test]
    fn vacuum_closed_form() {
        let v = make_fock(0, 1).unwrap();
        assert_abs_diff_eq!(wigner_at(&v, 0.0, 0.0), 1.0 / PI, epsilon = 1e-14);
        for &(x, p) in &[(0.3f64, -0.7f64), (1.2, 0.4), (-2.0, 1.0)] {
            let expect = (-(x * x + p * p)).exp() / PI;
            assert_abs_diff_eq!(wigner_at(&v, x, p), expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn single_phonon_closed_form() {
        let one = make_fock(1, 2).unwrap();
        assert_abs_diff_eq!(wigner_at(&one, 0.0, 0.0), -1.0 / PI, epsilon = 1e-14);
        // W_1 = (2(x²+p²) - 1) e^{-(x²+p²)} / π
        let (x, p) = (0.8, -0.5);
        let r2: f64 = x * x + p * p;
        assert_abs_diff_eq!(
            wigner_at(&one, x, p),
            (2.0 * r2 - 1.0) * (-r2).exp() / PI,
            epsilon = 1e-14
        );
    }

    #[test]
    fn coherent_is_displaced_gaussian() {
        let alpha = C64::new(1.0, -0.5);
        let s = coherent_state(alpha, &Truncation::default()).unwrap();
        let (x0, p0) = (alpha.re * 2f64.sqrt(), alpha.im * 2f64.sqrt());
        let (x, p) = (1.0, 0.2);
        let expect = (-((x - x0).powi(2) + (p - p0).powi(2))).exp() / PI;
        // adaptive truncation perturbs amplitudes at the 1e-6 level
        assert_abs_diff_eq!(wigner_at(&s, x, p), expect, epsilon = 1e-5);
    }

    #[test]
    fn grids_normalize() {
        let t = Truncation::default();
        for s in [
            make_fock(3, 4).unwrap(),
            coherent_state(C64::new(1.2, 0.0), &t).unwrap(),
            squeezed_vacuum(0.8, PI, &t).unwrap(),
        ] {
            let g = wigner_grid(&s, (-7.0, 7.0), (-7.0, 7.0), 141);
            assert_abs_diff_eq!(g.integral(), 1.0, epsilon = 1e-3);
        }
    }
}
