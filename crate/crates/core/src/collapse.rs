//! Collapse variables `y = x / lambda`, `tau = ∫ lambda^{-2} dt`,
//! `v = u / lambda`, in which the rescaled flow reads
//!
//! ```text
//! v_tau = v_yy / (1 + v_y^2) - a y v_y + a v - (d - 1) / v,   -lambda lambda_t = a.
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Parity};
use crate::modulation::AlmostSolution;
use crate::pde::RadialProfile;
use crate::solver::{self, Boundary, StepControl};

/// Smallest `lambda^2` the frame will carry.
pub const LAMBDA_SQ_FLOOR: f64 = 1e-280;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseState {
    pub grid: Grid,
    pub v: Vec<f64>,
    pub lambda_sq: f64,
    pub t: f64,
    pub tau: f64,
    pub a: f64,
    pub b: f64,
    pub d: u32,
}

impl CollapseState {
    pub fn lambda(&self) -> f64 {
        self.lambda_sq.sqrt()
    }

    pub fn y_nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    /// `a` inside the admissible interval `[1/4, 1]`.
    pub fn a_admissible(&self) -> bool {
        (0.25..=1.0).contains(&self.a)
    }

    /// The physical profile `u(x) = lambda v(x / lambda)`.
    pub fn to_physical(&self) -> Result<RadialProfile> {
        let l = self.lambda();
        RadialProfile::new(
            self.grid.scaled(l),
            self.v.iter().map(|v| v * l).collect(),
            self.d,
            self.t,
        )
    }

    pub fn almost_solution(&self) -> AlmostSolution {
        AlmostSolution {
            a: self.a,
            b: self.b.max(0.0),
            d: self.d,
        }
    }
}

/// Resample `lambda^{-1} u(lambda y)` onto `y_grid`.
pub fn to_collapse_vars(
    profile: &RadialProfile,
    lambda: f64,
    y_grid: &Grid,
) -> Result<CollapseState> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!(
            "scale lambda = {lambda} must be positive"
        )));
    }
    let needed = lambda * y_grid.half_width();
    let available = profile.grid.half_width();
    if needed > available * (1.0 + 1e-12) {
        return Err(Error::DomainExhausted { needed, available });
    }
    let p = profile.grid.interpolator(&profile.u);
    let v = y_grid
        .nodes()
        .iter()
        .map(|&y| p.eval((lambda * y).min(available)).map(|u| u / lambda))
        .collect::<Option<Vec<f64>>>()
        .ok_or(Error::DomainExhausted { needed, available })?;
    solver::check_positive(&v)?;
    Ok(CollapseState {
        grid: y_grid.clone(),
        v,
        lambda_sq: lambda * lambda,
        t: profile.t,
        tau: 0.0,
        a: 0.5,
        b: 0.0,
        d: profile.d,
    })
}

/// Nodewise right side of the rescaled equation with the state's `a`.
pub fn rescaled_rhs(state: &CollapseState) -> Result<Vec<f64>> {
    solver::quasilinear_rhs(&state.grid, &state.v, state.a, state.d)
}

/// Exact update of the frame over `dtau` with `a` frozen:
/// `lambda^2 -> lambda^2 e^{-2 a dtau}`, `t -> t + ∫ lambda^2 dtau`.
pub fn advance_scale(lambda_sq: f64, a: f64, dtau: f64) -> (f64, f64) {
    let x = 2.0 * a * dtau;
    let decay = (-x).exp();
    // (1 - e^{-x}) / x without cancellation
    let mean = if x.abs() < 1e-8 {
        1.0 - 0.5 * x
    } else {
        -(-x).exp_m1() / x
    };
    (lambda_sq * decay, lambda_sq * mean * dtau)
}

fn advance_frame(state: &CollapseState, v: Vec<f64>, dtau: f64) -> Result<CollapseState> {
    let (lambda_sq, dt) = advance_scale(state.lambda_sq, state.a, dtau);
    if !(lambda_sq > LAMBDA_SQ_FLOOR) {
        return Err(Error::ScaleUnderflow { lambda_sq });
    }
    Ok(CollapseState {
        grid: state.grid.clone(),
        v,
        lambda_sq,
        t: state.t + dt,
        tau: state.tau + dtau,
        a: state.a,
        b: state.b,
        d: state.d,
    })
}

/// Closure of the rescaled equation at `y = Y`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FarFieldClosure {
    /// The equation at the outer node with an upwind `v_y` and
    /// `v_yy = V_ab''(Y)`. The drift `-a y v_y` points out of the domain, so
    /// no value is imposed there.
    #[default]
    Outflow,
    /// `v(Y) = V_ab(Y)`.
    Dirichlet,
}

impl FarFieldClosure {
    fn boundary(self, state: &CollapseState) -> Boundary {
        let s = state.almost_solution();
        let y = state.grid.half_width();
        match self {
            FarFieldClosure::Dirichlet => Boundary::Dirichlet(s.eval(y)),
            FarFieldClosure::Outflow => Boundary::Outflow {
                curvature: s.d2_dy2(y),
            },
        }
    }
}

/// One backward-Euler step of the rescaled equation with `(a, b)` frozen.
pub fn step_rescaled(state: &CollapseState, dtau: f64, ctl: &StepControl) -> Result<CollapseState> {
    step_rescaled_with(state, dtau, ctl, FarFieldClosure::default())
}

pub fn step_rescaled_with(
    state: &CollapseState,
    dtau: f64,
    ctl: &StepControl,
    closure: FarFieldClosure,
) -> Result<CollapseState> {
    if !(dtau >= 0.0) {
        return Err(Error::InvalidInput(format!("negative step {dtau}")));
    }
    if dtau == 0.0 {
        return Ok(state.clone());
    }
    let v = solver::implicit_euler(
        &state.grid,
        &state.v,
        dtau,
        state.a,
        state.d,
        closure.boundary(state),
        ctl,
    )?;
    advance_frame(state, v, dtau)
}

/// As [`step_rescaled_with`] with step doubling; returns the extrapolated
/// state and the error estimate.
pub(crate) fn step_rescaled_doubled(
    state: &CollapseState,
    dtau: f64,
    ctl: &StepControl,
    closure: FarFieldClosure,
) -> Result<(CollapseState, f64)> {
    let b = closure.boundary(state);
    let s = solver::doubled_step(&state.grid, &state.v, dtau, state.a, state.d, b, b, ctl)?;
    Ok((advance_frame(state, s.u, dtau)?, s.error))
}

/// `w = e^{-a y^2 / 4} v`
pub fn gauge_transform(state: &CollapseState) -> Vec<f64> {
    gauge(&state.grid, &state.v, state.a)
}

pub fn gauge(grid: &Grid, v: &[f64], a: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .zip(v)
        .map(|(&y, v)| (-0.25 * a * y * y).exp() * v)
        .collect()
}

/// `v = e^{a y^2 / 4} w`
pub fn inverse_gauge(grid: &Grid, w: &[f64], a: f64) -> Vec<f64> {
    grid.nodes()
        .iter()
        .zip(w)
        .map(|(&y, w)| (0.25 * a * y * y).exp() * w)
        .collect()
}

/// Right side of the gauged equation
///
/// ```text
/// w_tau = w_yy - (a^2 + a_tau) y^2 / 4 w + 3a/2 w
///         - (d-1) e^{-a y^2/2} / w - e^{-a y^2/4} v_y^2 v_yy / (1 + v_y^2)
/// ```
///
/// with `v = e^{a y^2/4} w`; interior nodes only (the last entry is 0).
pub fn w_rhs(grid: &Grid, w: &[f64], a: f64, a_tau: f64, d: u32) -> Vec<f64> {
    let y = grid.nodes();
    let n = y.len() - 1;
    let omega_sq = a * a + a_tau;
    let v = inverse_gauge(grid, w, a);
    let wyy = grid.d2(w, Parity::Even);
    let vy = grid.d1(&v, Parity::Even);
    let vyy = grid.d2(&v, Parity::Even);
    let dm1 = (d - 1) as f64;
    let mut out = vec![0.0; n + 1];
    for i in 0..n {
        let y2 = y[i] * y[i];
        let e = (-0.25 * a * y2).exp();
        let q = vy[i] * vy[i];
        out[i] = wyy[i] - 0.25 * omega_sq * y2 * w[i] + 1.5 * a * w[i]
            - dm1 * e * e / w[i]
            - e * q * vyy[i] / (1.0 + q);
    }
    out
}

/// Per-step record of the rescaled run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub tau: f64,
    pub t: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub iterations: usize,
    pub ortho: [f64; 2],
    pub condition: f64,
    pub at_boundary: bool,
    pub a_out_of_box: bool,
    pub guess_in_neighbourhood: bool,
    /// `‖phi‖_{m,n}` for `(3,0), (11/10,0), (2,1), (1,2)`.
    pub phi_norms: [f64; 4],
    /// `v(0)`
    pub v0: f64,
    pub barrier_margin: f64,
    pub barrier_worst_y: f64,
    pub rho_central_max: f64,
    /// `min rho` over `beta y^2 >= 2(d-1)`; `None` if no node qualifies.
    pub rho_outer_min: Option<f64>,
    /// `max rho - (d - 1)`, the mean-curvature sign quantity.
    pub chi_max: f64,
}

/// `y`-grid of the rescaled run.
pub fn rescaled_grid(cfg: &crate::config::SimConfig) -> Result<Grid> {
    Grid::sinh(
        cfg.rescaled.half_width,
        cfg.rescaled.intervals,
        cfg.rescaled.stretch,
    )
}
