//! The almost-solution family `V_ab`, the Gaussian-weighted inner product
//! and the modulation fit `v = V_{g(v)} + phi` with
//! `phi ⊥ {1, 1 - a y^2}` in `<f, g>_a = ∫ f g e^{-a y^2 / 2} dy`.

use serde::{Deserialize, Serialize};

use crate::collapse::CollapseState;
use crate::error::{Error, Result};
use crate::grid::{Grid, Parity};

/// Lower clamp for `b` during Newton iteration.
pub const B_FLOOR: f64 = 1e-10;
/// Largest admissible condition number of the fit Jacobian.
pub const MAX_CONDITION: f64 = 1e8;
/// Fit-level admissible box for `a`.
pub const A_BOX: (f64, f64) = (0.2, 1.2);

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlmostSolution {
    pub a: f64,
    pub b: f64,
    pub d: u32,
}

impl AlmostSolution {
    pub fn new(a: f64, b: f64, d: u32) -> Result<AlmostSolution> {
        if !(b >= 0.0) || !(a + 0.5 > 0.0) || d < 2 {
            return Err(Error::InvalidInput(format!(
                "almost solution needs b >= 0, a > -1/2, d >= 2 (a = {a}, b = {b}, d = {d})"
            )));
        }
        Ok(AlmostSolution { a, b, d })
    }

    pub fn c(&self) -> f64 {
        self.a + 0.5
    }

    /// `V_ab(y) = sqrt((2(d-1) + b y^2) / (a + 1/2))`
    pub fn eval(&self, y: f64) -> f64 {
        static_family(self.b, self.c(), self.d, y)
    }

    pub fn on(&self, grid: &Grid) -> Vec<f64> {
        grid.map(|y| self.eval(y))
    }

    /// `∂_y^2 V_ab`
    pub fn d2_dy2(&self, y: f64) -> f64 {
        let v = self.eval(y);
        let c = self.c();
        let vy = self.b * y / (c * v);
        (self.b / c - vy * vy) / v
    }

    pub fn d_da(&self, y: f64) -> f64 {
        -self.eval(y) / (2.0 * self.c())
    }

    pub fn d_db(&self, y: f64) -> f64 {
        y * y / (2.0 * self.c() * self.eval(y))
    }
}

/// `v_bc(y) = sqrt((2(d-1) + b y^2) / c)`; solves `a y v_y - a v + (d-1)/v = 0`
/// when `c = 2a`.
pub fn static_family(b: f64, c: f64, d: u32, y: f64) -> f64 {
    ((2.0 * (d - 1) as f64 + b * y * y) / c).sqrt()
}

/// The static cylinder `v_a = sqrt((d-1)/a)` of the rescaled equation.
pub fn static_cylinder(a: f64, d: u32) -> f64 {
    ((d - 1) as f64 / a).sqrt()
}

fn check_weight(grid: &Grid, a: f64) -> Result<()> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!(
            "weight parameter a = {a} must be positive"
        )));
    }
    let l = grid.half_width();
    let weight = (-0.5 * a * l * l).exp();
    if weight >= 1e-14 {
        return Err(Error::DomainTooSmall { weight });
    }
    Ok(())
}

/// Full-line `∫ f g e^{-a y^2 / 2} dy` for even grid functions.
pub fn weighted_inner(grid: &Grid, f: &[f64], g: &[f64], a: f64) -> Result<f64> {
    weighted_inner_parity(grid, f, Parity::Even, g, Parity::Even, a)
}

/// As [`weighted_inner`] with explicit parities of the two half-line
/// functions; mixed parity integrates to zero.
pub fn weighted_inner_parity(
    grid: &Grid,
    f: &[f64],
    pf: Parity,
    g: &[f64],
    pg: Parity,
    a: f64,
) -> Result<f64> {
    check_weight(grid, a)?;
    if pf != pg {
        return Ok(0.0);
    }
    Ok(2.0 * weighted_sum(grid, a, |i| f[i] * g[i]))
}

fn weighted_sum<F: Fn(usize) -> f64>(grid: &Grid, a: f64, f: F) -> f64 {
    grid.nodes()
        .iter()
        .zip(grid.weights())
        .enumerate()
        .map(|(i, (&y, &w))| w * f(i) * (-0.5 * a * y * y).exp())
        .sum()
}

/// `‖f‖_{m,n} = sup |<y>^{-m} ∂^n f|` for an even grid function.
pub fn weighted_norm(grid: &Grid, f: &[f64], m: f64, n: usize) -> f64 {
    weighted_norm_parity(grid, f, Parity::Even, m, n)
}

pub fn weighted_norm_parity(grid: &Grid, f: &[f64], parity: Parity, m: f64, n: usize) -> f64 {
    if n > 2 {
        log::debug!("weighted norm with n = {n} uses repeated stencils; reduced accuracy");
    }
    let df = grid.derivative(f, parity, n);
    grid.nodes()
        .iter()
        .zip(&df)
        .map(|(&y, v)| (v * (1.0 + y * y).powf(-0.5 * m)).abs())
        .fold(0.0, f64::max)
}

/// `G(mu, v) = (<V_mu - v, 1>_a, <V_mu - v, 1 - a y^2>_a)`.
pub fn fit_residual(grid: &Grid, v: &[f64], a: f64, b: f64, d: u32) -> Result<[f64; 2]> {
    check_weight(grid, a)?;
    let s = AlmostSolution { a, b, d };
    let y = grid.nodes();
    let g1 = 2.0 * weighted_sum(grid, a, |i| s.eval(y[i]) - v[i]);
    let g2 = 2.0 * weighted_sum(grid, a, |i| (s.eval(y[i]) - v[i]) * (1.0 - a * y[i] * y[i]));
    Ok([g1, g2])
}

/// Exact `∂_mu G(mu, v)` as rows `[∂_a G_i, ∂_b G_i]`. The `a` derivative
/// also differentiates the weight and the second test function.
pub fn fit_jacobian(grid: &Grid, v: &[f64], a: f64, b: f64, d: u32) -> Result<[[f64; 2]; 2]> {
    check_weight(grid, a)?;
    let s = AlmostSolution { a, b, d };
    let y = grid.nodes();
    let r = |i: usize| s.eval(y[i]) - v[i];
    let y2 = |i: usize| y[i] * y[i];
    let a11 = weighted_sum(grid, a, |i| s.d_da(y[i]) - 0.5 * r(i) * y2(i));
    let a12 = weighted_sum(grid, a, |i| s.d_db(y[i]));
    let a21 = weighted_sum(grid, a, |i| {
        let t = 1.0 - a * y2(i);
        s.d_da(y[i]) * t - r(i) * y2(i) - 0.5 * r(i) * t * y2(i)
    });
    let a22 = weighted_sum(grid, a, |i| s.d_db(y[i]) * (1.0 - a * y2(i)));
    Ok([[2.0 * a11, 2.0 * a12], [2.0 * a21, 2.0 * a22]])
}

/// The `v`-independent part of the Jacobian, i.e. its value at `v = V_mu`.
pub fn jacobian_a1(grid: &Grid, a: f64, b: f64, d: u32) -> Result<[[f64; 2]; 2]> {
    let v = AlmostSolution { a, b, d }.on(grid);
    fit_jacobian(grid, &v, a, b, d)
}

fn condition_2x2(m: &[[f64; 2]; 2]) -> f64 {
    // 2-norm condition number from the singular values of a 2x2 matrix
    let [[p, q], [r, s]] = *m;
    let t = p * p + q * q + r * r + s * s;
    let det = (p * s - q * r).abs();
    if det == 0.0 {
        return f64::INFINITY;
    }
    let disc = (t * t - 4.0 * det * det).max(0.0).sqrt();
    let smax = (0.5 * (t + disc)).sqrt();
    let smin = det / smax;
    smax / smin
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Residual tolerance relative to `‖v‖_∞ sqrt(2 pi / a)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relative residual accepted when `b` ends on the floor.
    pub boundary_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-12,
            max_iter: 50,
            boundary_tol: 1e-8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationFit {
    pub a: f64,
    pub b: f64,
    pub phi: Vec<f64>,
    /// `(<phi, 1>_a, <phi, 1 - a y^2>_a)`
    pub ortho: [f64; 2],
    pub iterations: usize,
    pub converged: bool,
    /// `b` sits on the floor of the admissible cone.
    pub at_boundary: bool,
    pub condition: f64,
    /// `a` outside the fit-level box.
    pub a_out_of_box: bool,
    /// `‖v - V_{mu0}‖_{3,0}`
    pub guess_distance: f64,
    /// `‖v - V_{mu0}‖_{3,0} <= b0 / 10`
    pub guess_in_neighbourhood: bool,
    /// `|mu - mu0| / ‖v - V_{mu0}‖_{3,0}` (zero when the guess is exact).
    pub displacement_ratio: f64,
}

/// Solve `G(mu, v) = 0` by Newton iteration from `guess = (a0, b0)`.
pub fn fit_parameters(
    grid: &Grid,
    v: &[f64],
    d: u32,
    guess: (f64, f64),
    opts: &FitOptions,
) -> Result<ModulationFit> {
    let (a0, b0) = guess;
    if v.len() != grid.len() {
        return Err(Error::InvalidInput(
            "fit: value/grid length mismatch".into(),
        ));
    }
    if !(a0 + 0.5 > 0.0) || !(a0 > 0.0) {
        return Err(Error::InvalidInput(format!(
            "fit: initial a = {a0} must be positive"
        )));
    }
    let v_inf = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let guess_v = AlmostSolution {
        a: a0,
        b: b0.max(0.0),
        d,
    }
    .on(grid);
    let diff: Vec<f64> = v.iter().zip(&guess_v).map(|(x, g)| x - g).collect();
    let guess_distance = weighted_norm(grid, &diff, 3.0, 0);

    let (mut a, mut b) = (a0, b0.max(B_FLOOR));
    let mut condition = f64::NAN;
    let mut clamped = false;
    let mut clamped_streak = 0;
    let mut iterations = 0;
    let mut converged = false;
    let mut last_unclamped_b = b;
    for it in 0..=opts.max_iter {
        let g = fit_residual(grid, v, a, b, d)?;
        let scale = v_inf * (2.0 * std::f64::consts::PI / a).sqrt();
        let res = g[0].abs().max(g[1].abs()) / scale;
        let j = fit_jacobian(grid, v, a, b, d)?;
        condition = condition_2x2(&j);
        if res <= opts.tol {
            converged = true;
            iterations = it;
            break;
        }
        if clamped && res <= opts.boundary_tol {
            iterations = it;
            break;
        }
        if clamped_streak >= 3 {
            return Err(Error::LeftAdmissibleCone {
                b: last_unclamped_b,
            });
        }
        if it == opts.max_iter {
            return Err(Error::FitFailed {
                a,
                b,
                iterations: it,
                reason: format!("no convergence, relative residual {res:e}"),
            });
        }
        if !condition.is_finite() || condition > MAX_CONDITION {
            return Err(Error::FitFailed {
                a,
                b,
                iterations: it,
                reason: format!("Jacobian condition {condition:e} exceeds {MAX_CONDITION:e}"),
            });
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        let da = -(j[1][1] * g[0] - j[0][1] * g[1]) / det;
        let db = -(-j[1][0] * g[0] + j[0][0] * g[1]) / det;
        // keep a + 1/2 and the weight away from degenerate values
        let damp = if da.abs() > 0.25 {
            0.25 / da.abs()
        } else {
            1.0
        };
        a += damp * da;
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::FitFailed {
                a,
                b,
                iterations: it + 1,
                reason: "weight parameter left a > 0".into(),
            });
        }
        let b_new = b + damp * db;
        last_unclamped_b = b_new;
        if b_new < B_FLOOR {
            b = B_FLOOR;
            clamped = true;
            clamped_streak += 1;
        } else {
            b = b_new;
            clamped = false;
            clamped_streak = 0;
        }
    }
    let at_boundary = clamped || b <= B_FLOOR;
    let s = AlmostSolution { a, b, d };
    let phi: Vec<f64> = v
        .iter()
        .zip(grid.nodes())
        .map(|(x, &y)| x - s.eval(y))
        .collect();
    let one = vec![1.0; grid.len()];
    let second = grid.map(|y| 1.0 - a * y * y);
    let ortho = [
        weighted_inner(grid, &phi, &one, a)?,
        weighted_inner(grid, &phi, &second, a)?,
    ];
    let shift = ((a - a0).powi(2) + (b - b0).powi(2)).sqrt();
    let displacement_ratio = if guess_distance > 0.0 {
        shift / guess_distance
    } else {
        0.0
    };
    Ok(ModulationFit {
        a,
        b,
        phi,
        ortho,
        iterations,
        converged,
        at_boundary,
        condition,
        a_out_of_box: !(A_BOX.0..=A_BOX.1).contains(&a),
        guess_distance,
        guess_in_neighbourhood: guess_distance <= b0 / 10.0,
        displacement_ratio,
    })
}

/// Cold-start guess: `a = 1/2` and `b` from `v(0) v_yy(0) = b / (a + 1/2)`.
pub fn cold_start_guess(grid: &Grid, v: &[f64]) -> (f64, f64) {
    let vyy = grid.d2(v, Parity::Even)[0];
    let a = 0.5;
    (a, ((a + 0.5) * v[0] * vyy).max(B_FLOOR))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Splitting {
    pub v_ab: Vec<f64>,
    pub phi: Vec<f64>,
    pub fit: ModulationFit,
}

/// `v = V_{g(v)} + phi` for the state's profile.
pub fn splitting_decompose(
    state: &CollapseState,
    guess: (f64, f64),
    opts: &FitOptions,
) -> Result<Splitting> {
    let fit = fit_parameters(&state.grid, &state.v, state.d, guess, opts)?;
    let v_ab: Vec<f64> = state.v.iter().zip(&fit.phi).map(|(v, p)| v - p).collect();
    Ok(Splitting {
        v_ab,
        phi: fit.phi.clone(),
        fit,
    })
}
