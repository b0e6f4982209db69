//! Pieces of the gauged fluctuation equation
//!
//! ```text
//! xi_tau = -L(a,b) xi + F(a,b) + N1(a,b,xi) + N2(a,b,xi),   xi = e^{-a y^2/4} (v - V_ab).
//! ```
//!
//! `F` is evaluated in closed form. Its last term is
//! `+ b^3 y^4 / ((d-1) (2(d-1) + b y^2)^2)`; this is what the residual of
//! `w_ab = e^{-a y^2/4} V_ab` in the gauged equation produces.

use crate::grid::{Grid, Parity};
use crate::modulation::AlmostSolution;

use super::modulation_residuals;

/// Potential of `L(a,b) = -∂^2 + potential`:
/// `(a^2 + a_tau) y^2 / 4 - 3a/2 - (d-1)(1/2 + a) / (2(d-1) + b y^2)`.
pub fn linear_potential(y: f64, a: f64, b: f64, a_tau: f64, d: u32) -> f64 {
    let dm1 = (d - 1) as f64;
    0.25 * (a * a + a_tau) * y * y - 1.5 * a - dm1 * (0.5 + a) / (2.0 * dm1 + b * y * y)
}

/// `F(a,b)` at every node.
pub fn source_term(grid: &Grid, a: f64, b: f64, a_tau: f64, b_tau: f64, d: u32) -> Vec<f64> {
    let dm1 = (d - 1) as f64;
    let (g1, g2) = modulation_residuals(a, b, a_tau, b_tau, d);
    let s = AlmostSolution { a, b, d };
    grid.map(|y| {
        let q = 2.0 * dm1 + b * y * y;
        let f1 = b.powi(3) * y.powi(4) / (dm1 * q * q);
        0.5 * (-0.25 * a * y * y).exp() * s.eval(y) * (g1 + g2 * y * y / q + f1)
    })
}

/// `(N1, N2)` for the profile `v`, with `xi = e^{-a y^2/4}(v - V_ab)`.
pub fn nonlinear_terms(grid: &Grid, v: &[f64], a: f64, b: f64, d: u32) -> (Vec<f64>, Vec<f64>) {
    let dm1 = (d - 1) as f64;
    let s = AlmostSolution { a, b, d };
    let vy = grid.d1(v, Parity::Even);
    let vyy = grid.d2(v, Parity::Even);
    let y = grid.nodes();
    let mut n1 = Vec::with_capacity(y.len());
    let mut n2 = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let y2 = y[i] * y[i];
        let e = (-0.25 * a * y2).exp();
        let xi = e * (v[i] - s.eval(y[i]));
        // e^{a y^2/4} xi^2 = e^{-a y^2/4} (v - V)^2
        n1.push(-dm1 / v[i] * (a + 0.5) / (2.0 * dm1 + b * y2) * xi * (v[i] - s.eval(y[i])));
        let q = vy[i] * vy[i];
        n2.push(-e * q * vyy[i] / (1.0 + q));
    }
    (n1, n2)
}

/// `-L(a,b) xi` at interior nodes (the last entry is 0).
pub fn apply_minus_l(grid: &Grid, xi: &[f64], a: f64, b: f64, a_tau: f64, d: u32) -> Vec<f64> {
    let xyy = grid.d2(xi, Parity::Even);
    let y = grid.nodes();
    let n = y.len() - 1;
    let mut out: Vec<f64> = (0..=n)
        .map(|i| xyy[i] - linear_potential(y[i], a, b, a_tau, d) * xi[i])
        .collect();
    out[n] = 0.0;
    out
}
