//! Implicit Euler with Newton iteration for the quasilinear radial operator
//!
//! ```text
//! R[u] = u'' / (1 + u'^2) - drift * y * u' + drift * u - (d - 1) / u
//! ```
//!
//! `drift = 0` is the physical flow, `drift = a` the rescaled flow. The
//! last node carries a Dirichlet value; node 0 uses the even reflection.
//! Error control is by step doubling with local extrapolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Parity};
use crate::tridiag;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StepControl {
    /// Relative local error tolerance for the step-doubling estimate.
    pub tol: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    /// Cap on the relative change of `min u` over one accepted step.
    pub max_min_change: f64,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            tol: 1e-7,
            dt_init: 1e-4,
            dt_min: 1e-16,
            dt_max: 1e-2,
            newton_tol: 1e-12,
            max_newton: 30,
            max_min_change: 0.1,
        }
    }
}

/// Pointwise values of `R[u]` at every node (one-sided stencils at the end).
pub(crate) fn quasilinear_rhs(grid: &Grid, u: &[f64], drift: f64, d: u32) -> Result<Vec<f64>> {
    check_positive(u)?;
    let y = grid.nodes();
    let n = y.len() - 1;
    let dm1 = (d - 1) as f64;
    let mut out = vec![0.0; n + 1];
    for i in 0..n {
        let (d1, d2) = local_derivatives(grid, u, i);
        out[i] = d2 / (1.0 + d1 * d1) - drift * y[i] * d1 + drift * u[i] - dm1 / u[i];
    }
    let d1 = grid.d1(u, Parity::Even)[n];
    let d2 = grid.d2(u, Parity::Even)[n];
    out[n] = d2 / (1.0 + d1 * d1) - drift * y[n] * d1 + drift * u[n] - dm1 / u[n];
    for (i, v) in out.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericalOverflow { node: i });
        }
    }
    Ok(out)
}

pub(crate) fn check_positive(u: &[f64]) -> Result<()> {
    for (i, &v) in u.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::NumericalOverflow { node: i });
        }
        if v <= 0.0 {
            return Err(Error::CollapsedInput { node: i, value: v });
        }
    }
    Ok(())
}

/// First and second derivative at node `i < n`, in difference form so that
/// constants give exactly zero.
#[inline]
fn local_derivatives(grid: &Grid, u: &[f64], i: usize) -> (f64, f64) {
    let s = grid.stencil(i);
    let v = grid.neighbours(u, i, Parity::Even);
    let dm = v[0] - v[1];
    let dp = v[2] - v[1];
    (s.d1[0] * dm + s.d1[2] * dp, s.d2[0] * dm + s.d2[2] * dp)
}

/// Condition at the far node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Boundary {
    Dirichlet(f64),
    /// The equation itself at the far node, with a backward (upwind)
    /// first derivative and a prescribed second derivative.
    Outflow {
        curvature: f64,
    },
}

/// One backward-Euler step `u_new - dt R[u_new] = u_old`.
pub(crate) fn implicit_euler(
    grid: &Grid,
    u_old: &[f64],
    dt: f64,
    drift: f64,
    d: u32,
    boundary: Boundary,
    ctl: &StepControl,
) -> Result<Vec<f64>> {
    let y = grid.nodes();
    let n = y.len() - 1;
    let dm1 = (d - 1) as f64;
    let mut u = u_old.to_vec();
    // unknowns u[0..m]
    let m = match boundary {
        Boundary::Dirichlet(value) => {
            u[n] = value;
            n
        }
        Boundary::Outflow { .. } => n + 1,
    };
    let mut sub = vec![0.0; m - 1];
    let mut diag = vec![0.0; m];
    let mut sup = vec![0.0; m - 1];
    let mut res = vec![0.0; m];
    for iter in 0..ctl.max_newton {
        for i in 0..n {
            let s = grid.stencil(i);
            let v = grid.neighbours(&u, i, Parity::Even);
            let dm = v[0] - v[1];
            let dp = v[2] - v[1];
            let d1 = s.d1[0] * dm + s.d1[2] * dp;
            let d2 = s.d2[0] * dm + s.d2[2] * dp;
            let q = 1.0 / (1.0 + d1 * d1);
            let r = d2 * q - drift * y[i] * d1 + drift * u[i] - dm1 / u[i];
            res[i] = u[i] - u_old[i] - dt * r;
            // dR/du_j for j = i-1, i, i+1
            let g = 2.0 * d2 * d1 * q * q;
            let mut jac = [0.0; 3];
            for k in 0..3 {
                jac[k] = s.d2[k] * q - g * s.d1[k] - drift * y[i] * s.d1[k];
            }
            jac[1] += drift + dm1 / (u[i] * u[i]);
            if i == 0 {
                // ghost u_{-1} = u_1
                diag[0] = 1.0 - dt * jac[1];
                sup[0] = -dt * (jac[2] + jac[0]);
            } else {
                sub[i - 1] = -dt * jac[0];
                diag[i] = 1.0 - dt * jac[1];
                if i + 1 < m {
                    sup[i] = -dt * jac[2];
                }
            }
        }
        if let Boundary::Outflow { curvature } = boundary {
            let (x0, x1, x2) = (y[n - 2], y[n - 1], y[n]);
            let l0 = (x2 - x1) / ((x0 - x1) * (x0 - x2));
            let l1 = (x2 - x0) / ((x1 - x0) * (x1 - x2));
            let l2 = -(l0 + l1);
            let d1 = l0 * (u[n - 2] - u[n]) + l1 * (u[n - 1] - u[n]);
            let q = 1.0 / (1.0 + d1 * d1);
            let r = curvature * q - drift * y[n] * d1 + drift * u[n] - dm1 / u[n];
            let g = -2.0 * curvature * d1 * q * q - drift * y[n];
            let j = [
                -dt * g * l0,
                -dt * g * l1,
                1.0 - dt * (g * l2 + drift + dm1 / (u[n] * u[n])),
            ];
            // eliminate the u[n-2] entry with row n-1
            let f = j[0] / sub[n - 2];
            sub[n - 1] = j[1] - f * diag[n - 1];
            diag[n] = j[2] - f * sup[n - 1];
            res[n] = u[n] - u_old[n] - dt * r - f * res[n - 1];
        }
        if res.iter().any(|r| !r.is_finite()) {
            return Err(Error::StepRejected {
                suggested_dt: 0.25 * dt,
                reason: "non-finite residual".into(),
            });
        }
        let neg: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = tridiag::solve(&sub, &diag, &sup, &neg).ok_or_else(|| Error::StepRejected {
            suggested_dt: 0.25 * dt,
            reason: "singular Newton matrix".into(),
        })?;
        let mut damp = 1.0;
        loop {
            let ok = (0..m).all(|i| u[i] + damp * delta[i] > 0.0);
            if ok {
                break;
            }
            damp *= 0.5;
            if damp < 1e-3 {
                return Err(Error::StepRejected {
                    suggested_dt: 0.25 * dt,
                    reason: "Newton iterate lost positivity".into(),
                });
            }
        }
        let mut change: f64 = 0.0;
        for i in 0..m {
            u[i] += damp * delta[i];
            change = change.max((damp * delta[i]).abs() / u[i].abs());
        }
        if damp == 1.0 && change <= ctl.newton_tol {
            return Ok(u);
        }
        if iter + 1 == ctl.max_newton {
            break;
        }
    }
    Err(Error::StepRejected {
        suggested_dt: 0.25 * dt,
        reason: format!("Newton did not converge in {} iterations", ctl.max_newton),
    })
}

pub(crate) struct DoubledStep {
    pub u: Vec<f64>,
    /// Relative difference between the full step and the two half steps.
    pub error: f64,
}

/// Full step vs two half steps; returns the extrapolated `2 u_half - u_full`.
pub(crate) fn doubled_step(
    grid: &Grid,
    u_old: &[f64],
    dt: f64,
    drift: f64,
    d: u32,
    boundary_mid: Boundary,
    boundary_end: Boundary,
    ctl: &StepControl,
) -> Result<DoubledStep> {
    let full = implicit_euler(grid, u_old, dt, drift, d, boundary_end, ctl)?;
    let half = implicit_euler(grid, u_old, 0.5 * dt, drift, d, boundary_mid, ctl)?;
    let half = implicit_euler(grid, &half, 0.5 * dt, drift, d, boundary_end, ctl)?;
    let mut error: f64 = 0.0;
    let mut u = vec![0.0; full.len()];
    for i in 0..full.len() {
        error = error.max((half[i] - full[i]).abs() / half[i].abs());
        u[i] = 2.0 * half[i] - full[i];
    }
    if u.iter().any(|v| *v <= 0.0) {
        return Err(Error::StepRejected {
            suggested_dt: 0.25 * dt,
            reason: "extrapolated step lost positivity".into(),
        });
    }
    Ok(DoubledStep { u, error })
}

/// Step-size update from an error estimate (second-order local error).
pub(crate) fn next_dt(dt: f64, error: f64, ctl: &StepControl) -> f64 {
    let factor = if error <= 0.0 {
        2.0
    } else {
        (0.9 * (ctl.tol / error).sqrt()).clamp(0.2, 2.0)
    };
    (dt * factor).min(ctl.dt_max)
}

pub(crate) fn min_with_index(u: &[f64]) -> (usize, f64) {
    u.iter().copied().enumerate().fold(
        (0, f64::INFINITY),
        |(bi, bv), (i, v)| if v < bv { (i, v) } else { (bi, bv) },
    )
}
