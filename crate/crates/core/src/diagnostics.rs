//! Post-processing of runs: the reference rate `beta(tau)`, estimating
//! functions, modulation residuals, pinch time, asymptotic laws and the
//! type-I constant.

pub mod fluctuation;

use serde::{Deserialize, Serialize};

use crate::collapse::FitRecord;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::modulation::weighted_norm;
use crate::pde::Trajectory;

/// Weight/derivative pairs `(m, n)` of the fluctuation norms.
pub const NORM_INDICES: [(f64, usize); 4] = [(3.0, 0), (1.1, 0), (2.0, 1), (1.0, 2)];

/// `beta(tau) = 1 / (1/b0 + tau/(d-1))`
pub fn beta(tau: f64, b0: f64, d: u32) -> f64 {
    1.0 / (1.0 / b0 + tau / (d - 1) as f64)
}

/// `(Gamma_1, Gamma_2)`.
pub fn modulation_residuals(a: f64, b: f64, a_tau: f64, b_tau: f64, d: u32) -> (f64, f64) {
    let dm1 = (d - 1) as f64;
    let s = a - 0.5 + b / dm1;
    let g1 = a_tau / (a + 0.5) + s;
    let g2 = -b_tau - b * s - b * b / dm1;
    (g1, g2)
}

/// Backward difference at index `i` of samples `f(x)`: three-point when
/// available, two-point at `i = 1`, forward at `i = 0`.
pub fn backward_derivative(x: &[f64], f: &[f64], i: usize) -> f64 {
    match i {
        _ if x.len() < 2 => f64::NAN,
        0 => (f[1] - f[0]) / (x[1] - x[0]),
        1 => (f[1] - f[0]) / (x[1] - x[0]),
        _ => {
            let h1 = x[i - 1] - x[i - 2];
            let h2 = x[i] - x[i - 1];
            f[i - 2] * h2 / (h1 * (h1 + h2)) - f[i - 1] * (h1 + h2) / (h1 * h2)
                + f[i] * (h1 + 2.0 * h2) / (h2 * (h1 + h2))
        }
    }
}

/// `sum_{m+n=3, n<=2} ‖phi‖_{m,n} / b^2`.
pub fn remainder_bound_check(grid: &Grid, phi: &[f64], b: f64) -> f64 {
    let s = weighted_norm(grid, phi, 3.0, 0)
        + weighted_norm(grid, phi, 2.0, 1)
        + weighted_norm(grid, phi, 1.0, 2);
    s / (b * b)
}

fn remainder_from_norms(norms: &[f64; 4], b: f64) -> f64 {
    (norms[0] + norms[2] + norms[3]) / (b * b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub tau: f64,
    pub t: f64,
    pub lambda: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub beta: f64,
    /// Running maxima `M_{3,0}, M_{11/10,0}, M_{2,1}, M_{1,2}`.
    pub m: [f64; 4],
    pub a_fn: f64,
    pub b_fn: f64,
    pub a_tau: f64,
    pub b_tau: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub remainder_ratio: f64,
    /// `max |A| sqrt(t* - t)` once the pinch time is known.
    pub curvature_scaled: Option<f64>,
    pub barrier_ok: bool,
    pub rho_ok: bool,
}

/// Diagnostics along a rescaled run; `b0` is the first fitted `b`.
pub fn diagnostics_series(history: &[FitRecord], d: u32) -> Vec<DiagnosticsRecord> {
    let Some(first) = history.first() else {
        return Vec::new();
    };
    let b0 = first.b;
    let tau: Vec<f64> = history.iter().map(|r| r.tau).collect();
    let a: Vec<f64> = history.iter().map(|r| r.a).collect();
    let b: Vec<f64> = history.iter().map(|r| r.b).collect();
    let dm1 = (d - 1) as f64;
    let mut m = [0.0_f64; 4];
    let (mut a_fn, mut b_fn) = (0.0_f64, 0.0_f64);
    history
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let bt = beta(r.tau, b0, d);
            for (k, (mm, nn)) in NORM_INDICES.iter().enumerate() {
                m[k] = m[k].max(bt.powf(-(mm + *nn as f64 + 1.0) / 2.0) * r.phi_norms[k]);
            }
            a_fn = a_fn.max((r.a - 0.5 + r.b / dm1).abs() / (bt * bt));
            b_fn = b_fn.max((r.b - bt).abs() / bt.powf(1.75));
            let a_tau = backward_derivative(&tau, &a, i);
            let b_tau = backward_derivative(&tau, &b, i);
            let (gamma1, gamma2) = modulation_residuals(r.a, r.b, a_tau, b_tau, d);
            DiagnosticsRecord {
                tau: r.tau,
                t: r.t,
                lambda: r.lambda,
                a: r.a,
                b: r.b,
                c: r.a + 0.5,
                beta: bt,
                m,
                a_fn,
                b_fn,
                a_tau,
                b_tau,
                gamma1,
                gamma2,
                remainder_ratio: remainder_from_norms(&r.phi_norms, r.b),
                curvature_scaled: None,
                barrier_ok: r.barrier_margin >= 0.0,
                rho_ok: r.rho_central_max <= 4.0 * bt && r.rho_outer_min.is_none_or(|x| x >= -1.0),
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatingFunctions {
    pub m: [f64; 4],
    pub a_fn: f64,
    pub b_fn: f64,
}

/// `M_{m,n}`, `A`, `B` at the final record of `history`.
pub fn estimating_functions(history: &[FitRecord], d: u32) -> EstimatingFunctions {
    diagnostics_series(history, d)
        .last()
        .map(|r| EstimatingFunctions {
            m: r.m,
            a_fn: r.a_fn,
            b_fn: r.b_fn,
        })
        .unwrap_or(EstimatingFunctions {
            m: [0.0; 4],
            a_fn: 0.0,
            b_fn: 0.0,
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PinchEstimate {
    pub t_star: f64,
    /// Slope `C` of `u_min^2 ≈ C (t* - t)`.
    pub slope: f64,
    pub r_squared: f64,
    pub samples: usize,
    pub window: (f64, f64),
    /// Estimate from the later half of the window.
    pub t_star_half_window: f64,
    /// `|t* - t*_half| / t*`
    pub sensitivity: f64,
}

/// Least squares of `u_min^2` against `t` over the final decade of `u_min`.
pub fn estimate_pinch_time(traj: &Trajectory) -> Result<PinchEstimate> {
    estimate_pinch_time_samples(&traj.times(), &traj.u_mins())
}

pub fn estimate_pinch_time_samples(t: &[f64], u_min: &[f64]) -> Result<PinchEstimate> {
    let Some(&u_end) = u_min.last() else {
        return Err(Error::PinchFitUnreliable("no samples".into()));
    };
    let start = u_min
        .iter()
        .rposition(|&u| u > 10.0 * u_end)
        .map_or(0, |k| k + 1);
    let (tw, uw) = (&t[start..], &u_min[start..]);
    if tw.len() < 10 {
        return Err(Error::PinchFitUnreliable(format!(
            "{} samples in the final decade of u_min, need 10",
            tw.len()
        )));
    }
    if uw.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::PinchFitUnreliable(
            "u_min is not monotone over the fit window".into(),
        ));
    }
    let full = affine_fit(tw, uw)?;
    let h = tw.len() / 2;
    let half = affine_fit(&tw[h..], &uw[h..]).unwrap_or(full);
    if full.2 < 0.99 {
        return Err(Error::PinchFitUnreliable(format!(
            "R^2 = {} below 0.99",
            full.2
        )));
    }
    Ok(PinchEstimate {
        t_star: full.0,
        slope: full.1,
        r_squared: full.2,
        samples: tw.len(),
        window: (tw[0], *tw.last().unwrap()),
        t_star_half_window: half.0,
        sensitivity: (full.0 - half.0).abs() / full.0.abs(),
    })
}

/// Fit `u^2 = p + q t`; returns `(t*, -q, R^2)`.
fn affine_fit(t: &[f64], u: &[f64]) -> Result<(f64, f64, f64)> {
    let n = t.len() as f64;
    // centre and scale t for conditioning near the pinch
    let t_ref = *t.last().unwrap();
    let scale = (t[0] - t_ref).abs().max(f64::MIN_POSITIVE);
    let s: Vec<f64> = t.iter().map(|x| (x - t_ref) / scale).collect();
    let y: Vec<f64> = u.iter().map(|x| x * x).collect();
    let ms = s.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = s.iter().map(|x| (x - ms).powi(2)).sum();
    let sxy: f64 = s.iter().zip(&y).map(|(x, y)| (x - ms) * (y - my)).sum();
    let syy: f64 = y.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::PinchFitUnreliable("degenerate samples".into()));
    }
    let q = sxy / sxx;
    let p = my - q * ms;
    if !(q < 0.0) {
        return Err(Error::PinchFitUnreliable(
            "u_min^2 is not decreasing".into(),
        ));
    }
    let r2 = sxy * sxy / (sxx * syy);
    let s_star = -p / q;
    Ok((t_ref + s_star * scale, -q / scale, r2))
}

/// Trust window of the asymptotic checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustWindow {
    pub tau_min: f64,
    pub tau_max: f64,
    /// Bounds on `t* - t`.
    pub gap_min: f64,
    pub gap_max: f64,
}

impl TrustWindow {
    /// `tau in [1, tau_end - 1]`, `t* - t in [10 (t* - t_end), t*/10]`.
    pub fn for_run(tau_end: f64, t_end: f64, t_star: f64) -> TrustWindow {
        TrustWindow {
            tau_min: 1.0,
            tau_max: tau_end - 1.0,
            gap_min: 10.0 * (t_star - t_end),
            gap_max: 0.1 * t_star,
        }
    }

    pub fn contains(&self, tau: f64, gap: f64) -> bool {
        tau >= self.tau_min && tau <= self.tau_max && gap >= self.gap_min && gap <= self.gap_max
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LawSeries {
    /// `(t* - t, value)` over the trust window.
    pub points: Vec<(f64, f64)>,
    pub terminal: f64,
    pub band: (f64, f64),
    /// Terminal value inside the band.
    pub terminal_ok: bool,
    /// Every window value inside the band.
    pub window_ok: bool,
}

impl LawSeries {
    fn new(points: Vec<(f64, f64)>, band: (f64, f64)) -> LawSeries {
        let inside = |v: f64| v >= band.0 && v <= band.1;
        let terminal = points.last().map_or(f64::NAN, |p| p.1);
        LawSeries {
            terminal_ok: inside(terminal),
            window_ok: !points.is_empty() && points.iter().all(|p| inside(p.1)),
            terminal,
            band,
            points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub t_star: f64,
    pub window: TrustWindow,
    /// `lambda / sqrt(t* - t)`
    pub lambda_law: LawSeries,
    /// `b ln|t* - t|`
    pub b_law: LawSeries,
    /// `(c - 1) ln|t* - t|`
    pub c_law: LawSeries,
    /// Decades of `t* - t` covered by the window.
    pub decades: f64,
}

/// Leading-order collapse laws over the trust window.
pub fn verify_asymptotics(history: &[FitRecord], t_star: f64, d: u32) -> Result<AsymptoticsReport> {
    let last = history
        .last()
        .ok_or_else(|| Error::WindowTooShort("empty history".into()))?;
    let window = TrustWindow::for_run(last.tau, last.t, t_star);
    let inside: Vec<&FitRecord> = history
        .iter()
        .filter(|r| window.contains(r.tau, t_star - r.t))
        .collect();
    if inside.len() < 3 {
        return Err(Error::WindowTooShort(format!(
            "{} records in the trust window",
            inside.len()
        )));
    }
    let gaps: Vec<f64> = inside.iter().map(|r| t_star - r.t).collect();
    let decades = (gaps[0] / gaps[gaps.len() - 1]).log10();
    if decades < 2.0 {
        return Err(Error::WindowTooShort(format!(
            "trust window spans {decades:.2} decades of t* - t, need 2"
        )));
    }
    let dm1 = (d - 1) as f64;
    let lam = inside
        .iter()
        .zip(&gaps)
        .map(|(r, g)| (*g, r.lambda / g.sqrt()))
        .collect();
    let bl = inside
        .iter()
        .zip(&gaps)
        .map(|(r, g)| (*g, r.b * g.ln()))
        .collect();
    let cl = inside
        .iter()
        .zip(&gaps)
        .map(|(r, g)| (*g, (r.a + 0.5 - 1.0) * g.ln()))
        .collect();
    Ok(AsymptoticsReport {
        t_star,
        window,
        lambda_law: LawSeries::new(lam, (0.9, 1.1)),
        b_law: LawSeries::new(bl, (-1.25 * dm1, -0.75 * dm1)),
        c_law: LawSeries::new(cl, (0.65, 1.35)),
        decades,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeOneReport {
    /// `sup max|A| sqrt(t* - t)` over the window.
    pub constant: f64,
    /// Relative growth of the running sup over the final decade.
    pub final_decade_growth: f64,
    pub plateau: bool,
    pub window: (f64, f64),
}

/// Type-I check on a physical trajectory: `gap` bounds on `t* - t`.
pub fn type_one_check(traj: &Trajectory, t_star: f64) -> Result<TypeOneReport> {
    let last = traj
        .records
        .last()
        .ok_or_else(|| Error::WindowTooShort("empty trajectory".into()))?;
    let gap_min = 10.0 * (t_star - last.t);
    let gap_max = 0.1 * t_star;
    let pts: Vec<(f64, f64)> = traj
        .records
        .iter()
        .filter_map(|r| {
            let g = t_star - r.t;
            (g >= gap_min && g <= gap_max).then(|| (g, r.max_curvature * g.sqrt()))
        })
        .collect();
    if pts.len() < 3 || pts[0].0 / pts[pts.len() - 1].0 < 10.0 {
        return Err(Error::WindowTooShort(
            "type-I window covers less than a decade".into(),
        ));
    }
    let g_end = pts[pts.len() - 1].0;
    let before = pts
        .iter()
        .filter(|p| p.0 >= 10.0 * g_end)
        .fold(0.0_f64, |m, p| m.max(p.1));
    let total = pts.iter().fold(0.0_f64, |m, p| m.max(p.1));
    let growth = if before > 0.0 {
        total / before - 1.0
    } else {
        f64::INFINITY
    };
    Ok(TypeOneReport {
        constant: total,
        final_decade_growth: growth,
        plateau: growth < 0.05,
        window: (gap_min, gap_max),
    })
}

/// Spread of `K = max(|Gamma_1|, |Gamma_2|) / beta^3` between the first and
/// second half of the records with `tau` in `[tau_min, tau_max]`.
pub fn gamma_constant_spread(
    records: &[DiagnosticsRecord],
    tau_min: f64,
    tau_max: f64,
) -> (f64, f64) {
    let pts: Vec<f64> = records
        .iter()
        .filter(|r| r.tau >= tau_min && r.tau <= tau_max)
        .map(|r| r.gamma1.abs().max(r.gamma2.abs()) / r.beta.powi(3))
        .collect();
    constant_spread(&pts)
}

/// `(K, spread)` for a series that should satisfy `|x| <= K`: `K` is the
/// larger of the sups over the two halves, the spread their ratio.
pub fn constant_spread(pts: &[f64]) -> (f64, f64) {
    let n = pts.len();
    if n < 4 {
        return (f64::NAN, f64::NAN);
    }
    let sup = |s: &[f64]| s.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let (q3, q4) = (sup(&pts[..n / 2]), sup(&pts[n / 2..]));
    (q3.max(q4), q3.max(q4) / q3.min(q4))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_values() {
        assert_eq!(beta(0.0, 0.1, 2), 0.1);
        assert!((beta(10.0, 0.1, 2) - 0.05).abs() < 1e-15);
        // d beta / d tau = -beta^2 / (d - 1)
        let h = 1e-4;
        for d in [2, 3] {
            let tau = 3.0;
            let fd = (beta(tau + h, 0.1, d) - beta(tau - h, 0.1, d)) / (2.0 * h);
            let b = beta(tau, 0.1, d);
            assert!((fd + b * b / (d - 1) as f64).abs() < 1e-8);
        }
    }

    #[test]
    fn residual_examples() {
        assert_eq!(modulation_residuals(0.5, 0.0, 0.0, 0.0, 2), (0.0, 0.0));
        let (_, g2) = modulation_residuals(0.5, 0.1, 0.0, -0.005, 2);
        assert!((g2 + 0.015).abs() < 1e-15);
        for d in [2u32, 3] {
            let dm1 = (d - 1) as f64;
            let b = 0.07;
            let (g1, g2) =
                modulation_residuals(0.5 - b / dm1, b, b * b / (dm1 * dm1), -b * b / dm1, d);
            assert!(g2.abs() < 1e-17);
            let expect = b * b / (dm1 * dm1 * (1.0 - b / dm1));
            assert!((g1 - expect).abs() < 1e-16);
        }
    }

    #[test]
    fn backward_difference_is_exact_on_quadratics() {
        let x = [0.0, 0.3, 0.45, 1.0];
        let f: Vec<f64> = x.iter().map(|x| 2.0 + 3.0 * x - x * x).collect();
        for i in 2..4 {
            assert!((backward_derivative(&x, &f, i) - (3.0 - 2.0 * x[i])).abs() < 1e-12);
        }
    }

    #[test]
    fn pinch_time_of_linear_data() {
        let t: Vec<f64> = (0..=90).map(|k| k as f64 * 0.01).collect();
        let u: Vec<f64> = t.iter().map(|t| (1.0 - t).sqrt()).collect();
        let p = estimate_pinch_time_samples(&t, &u).unwrap();
        assert!((p.t_star - 1.0).abs() < 1e-10);
        let mut bad = u.clone();
        bad[85] = 2.0;
        assert!(estimate_pinch_time_samples(&t, &bad).is_err());
        assert!(estimate_pinch_time_samples(&t[..5], &u[..5]).is_err());
    }

    #[test]
    fn remainder_of_zero() {
        let g = Grid::sinh(20.0, 100, 2.0).unwrap();
        assert_eq!(remainder_bound_check(&g, &vec![0.0; g.len()], 0.1), 0.0);
    }
}
