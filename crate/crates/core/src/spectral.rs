//! Gaussian-weighted Hermite modes, the projections `P_n`, the oscillator
//! `L_alpha = -∂^2 + alpha^2 z^2 / 4 - 3 alpha / 2` and its perturbations,
//! assembled as symmetric tridiagonal matrices on a uniform full-line grid
//! with Dirichlet ends.

use serde::{Deserialize, Serialize};

use crate::diagnostics::fluctuation::linear_potential;
use crate::error::{Error, Result};
use crate::tridiag::{self, SymTridiag};

/// Uniform interior nodes of `(-L, L)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineGrid {
    pub half_width: f64,
    pub h: f64,
    nodes: Vec<f64>,
}

impl LineGrid {
    pub fn new(half_width: f64, spacing: f64) -> Result<LineGrid> {
        if !(half_width > 0.0) || !(spacing > 0.0) {
            return Err(Error::InvalidInput(
                "line grid needs positive width and spacing".into(),
            ));
        }
        let m = (2.0 * half_width / spacing).round() as usize;
        if m < 4 {
            return Err(Error::InvalidInput("line grid too coarse".into()));
        }
        let h = 2.0 * half_width / m as f64;
        let nodes = (1..m).map(|j| -half_width + j as f64 * h).collect();
        Ok(LineGrid {
            half_width,
            h,
            nodes,
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&z| f(z)).collect()
    }

    /// Flat `L^2` product (trapezoid; the Dirichlet ends contribute zero).
    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Central first derivative with zero Dirichlet ends.
    pub fn d1(&self, f: &[f64]) -> Vec<f64> {
        let n = f.len();
        (0..n)
            .map(|i| {
                let l = if i > 0 { f[i - 1] } else { 0.0 };
                let r = if i + 1 < n { f[i + 1] } else { 0.0 };
                (r - l) / (2.0 * self.h)
            })
            .collect()
    }
}

fn check_decay(grid: &LineGrid, alpha: f64) -> Result<()> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "alpha = {alpha} must be positive"
        )));
    }
    let weight = (-0.5 * alpha * grid.half_width * grid.half_width).exp();
    if weight >= 1e-14 {
        return Err(Error::DomainTooSmall { weight });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EigenBasis {
    pub alpha: f64,
    /// `phi_0, phi_1, phi_2` on the grid.
    pub modes: [Vec<f64>; 3],
}

/// Normalized low modes of `L_alpha`.
pub fn hermite_modes(alpha: f64, grid: &LineGrid) -> Result<EigenBasis> {
    check_decay(grid, alpha)?;
    let pi = std::f64::consts::PI;
    let c0 = (alpha / (2.0 * pi)).powf(0.25);
    let c2 = (alpha / (8.0 * pi)).powf(0.25);
    let g = |z: f64| (-0.25 * alpha * z * z).exp();
    Ok(EigenBasis {
        alpha,
        modes: [
            grid.map(|z| c0 * g(z)),
            grid.map(|z| c0 * alpha.sqrt() * z * g(z)),
            grid.map(|z| c2 * (1.0 - alpha * z * z) * g(z)),
        ],
    })
}

/// `P_n f = f - sum_{m<n} <phi_m, f> phi_m`, `n = 1, 2, 3`.
pub fn project(f: &[f64], basis: &EigenBasis, n: usize, grid: &LineGrid) -> Result<Vec<f64>> {
    if !(1..=3).contains(&n) {
        return Err(Error::InvalidInput(format!(
            "projection index {n} not in 1..=3"
        )));
    }
    let mut out = f.to_vec();
    for phi in &basis.modes[..n] {
        let c = grid.inner(phi, f);
        out.iter_mut().zip(phi).for_each(|(o, p)| *o -= c * p);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OperatorId {
    /// `-∂^2 + alpha^2 z^2 / 4`
    Harmonic { alpha: f64 },
    /// `L_alpha`
    Oscillator { alpha: f64 },
    /// `L_alpha - alpha`
    ShiftedOscillator { alpha: f64 },
    /// `L_alpha + V`, `V = -2(d-1) alpha / (2(d-1) + beta z^2)`
    Perturbed { alpha: f64, beta: f64, d: u32 },
    /// Linearized operator of the fluctuation equation.
    Linearized { a: f64, b: f64, a_tau: f64, d: u32 },
}

impl OperatorId {
    pub fn potential(&self, z: f64) -> f64 {
        match *self {
            OperatorId::Harmonic { alpha } => 0.25 * alpha * alpha * z * z,
            OperatorId::Oscillator { alpha } => 0.25 * alpha * alpha * z * z - 1.5 * alpha,
            OperatorId::ShiftedOscillator { alpha } => 0.25 * alpha * alpha * z * z - 2.5 * alpha,
            OperatorId::Perturbed { alpha, beta, d } => {
                let dm1 = (d - 1) as f64;
                0.25 * alpha * alpha * z * z
                    - 1.5 * alpha
                    - 2.0 * dm1 * alpha / (2.0 * dm1 + beta * z * z)
            }
            OperatorId::Linearized { a, b, a_tau, d } => linear_potential(z, a, b, a_tau, d),
        }
    }

    /// Frozen scale `alpha` (or `a`).
    pub fn alpha(&self) -> f64 {
        match *self {
            OperatorId::Harmonic { alpha }
            | OperatorId::Oscillator { alpha }
            | OperatorId::ShiftedOscillator { alpha }
            | OperatorId::Perturbed { alpha, .. } => alpha,
            OperatorId::Linearized { a, .. } => a,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorAssembly {
    pub id: OperatorId,
    pub matrix: SymTridiag,
}

impl OperatorAssembly {
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.apply(f)
    }
}

/// Three-point `-∂^2` plus the potential of `id`.
pub fn assemble_operator(id: OperatorId, grid: &LineGrid) -> Result<OperatorAssembly> {
    let alpha = id.alpha();
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!(
            "operator scale {alpha} must be positive"
        )));
    }
    let h2 = grid.h * grid.h;
    let diag = grid.map(|z| 2.0 / h2 + id.potential(z));
    let off = vec![-1.0 / h2; grid.len() - 1];
    Ok(OperatorAssembly {
        id,
        matrix: SymTridiag::new(diag, off),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumEntry {
    pub index: usize,
    pub eigenvalue: f64,
    /// `‖A x - e x‖_2` for the unit eigenvector `x`.
    pub residual: f64,
}

/// Lowest `k` eigenvalues with eigen-residuals.
pub fn discrete_spectrum(assembly: &OperatorAssembly, k: usize) -> Result<Vec<SpectrumEntry>> {
    let values = assembly.matrix.lowest_eigenvalues(k)?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, e)| {
            let x = assembly.matrix.eigenvector(e)?;
            let ax = assembly.matrix.apply(&x);
            let residual = ax
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - e * b).powi(2))
                .sum::<f64>()
                .sqrt();
            if !e.is_finite() {
                return Err(Error::SpectrumFailed(format!(
                    "eigenvalue {index} is not finite"
                )));
            }
            Ok(SpectrumEntry {
                index,
                eigenvalue: e,
                residual,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    /// Projection index `n`.
    pub n: usize,
    pub alpha: f64,
    /// `Some(beta)`: propagator of `-P_n (L_alpha + V) P_n`; `None`: `-L_alpha`.
    pub beta: Option<f64>,
    pub d: u32,
    pub horizon: f64,
    pub dt: f64,
    /// Half-width of the window on which the weighted sup is taken.
    pub window: f64,
}

impl ProbeSpec {
    /// Window on which `e^{alpha z^2/4}` stays below `1e6`.
    pub fn default_window(alpha: f64) -> f64 {
        (4.0 * 1e6f64.ln() / alpha).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeResult {
    pub n: usize,
    pub alpha: f64,
    pub beta: Option<f64>,
    /// Fitted exponential decay rate of the weighted sup.
    pub rate: f64,
    /// `(sigma, ‖<z>^{-n} e^{alpha z^2/4} eta‖)` samples.
    pub samples: Vec<(f64, f64)>,
    pub r_squared: f64,
    /// The input was annihilated by the projection.
    pub killed: bool,
}

/// `‖<z>^{-n} e^{alpha z^2/4} f‖_∞` on `|z| <= window`.
pub fn weighted_sup(grid: &LineGrid, f: &[f64], alpha: f64, n: usize, window: f64) -> f64 {
    grid.nodes()
        .iter()
        .zip(f)
        .filter(|(z, _)| z.abs() <= window)
        .map(|(&z, v)| {
            (v * (0.25 * alpha * z * z).exp() * (1.0 + z * z).powf(-0.5 * n as f64)).abs()
        })
        .fold(0.0, f64::max)
}

/// Crank-Nicolson for `eta_sigma = -P A P eta`, re-projecting every step,
/// and a log-linear fit of the weighted sup over the second half of the
/// horizon.
pub fn propagator_decay_probe(spec: &ProbeSpec, f: &[f64], grid: &LineGrid) -> Result<ProbeResult> {
    let basis = hermite_modes(spec.alpha, grid)?;
    let id = match spec.beta {
        Some(beta) => OperatorId::Perturbed {
            alpha: spec.alpha,
            beta,
            d: spec.d,
        },
        None => OperatorId::Oscillator { alpha: spec.alpha },
    };
    let op = assemble_operator(id, grid)?;
    let mut eta = project(f, &basis, spec.n, grid)?;
    let scale = f.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let start = weighted_sup(grid, &eta, spec.alpha, spec.n, spec.window);
    if scale == 0.0
        || start <= 1e-12 * weighted_sup(grid, f, spec.alpha, spec.n, spec.window).max(1e-300)
    {
        return Ok(ProbeResult {
            n: spec.n,
            alpha: spec.alpha,
            beta: spec.beta,
            rate: f64::INFINITY,
            samples: vec![(0.0, start)],
            r_squared: 1.0,
            killed: true,
        });
    }
    let half = 0.5 * spec.dt;
    let m = &op.matrix;
    let sub = m.off.iter().map(|o| half * o).collect::<Vec<_>>();
    let diag = m.diag.iter().map(|d| 1.0 + half * d).collect::<Vec<_>>();
    let steps = (spec.horizon / spec.dt).round() as usize;
    let every = ((0.1 / spec.dt).round() as usize).max(1);
    let mut samples = vec![(0.0, start)];
    for k in 1..=steps {
        let a_eta = m.apply(&eta);
        let rhs: Vec<f64> = eta.iter().zip(&a_eta).map(|(e, a)| e - half * a).collect();
        eta = tridiag::solve(&sub, &diag, &sub, &rhs)
            .ok_or_else(|| Error::ProbeInconclusive("singular Crank-Nicolson matrix".into()))?;
        eta = project(&eta, &basis, spec.n, grid)?;
        if k % every == 0 {
            samples.push((
                k as f64 * spec.dt,
                weighted_sup(grid, &eta, spec.alpha, spec.n, spec.window),
            ));
        }
    }
    let tail: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(s, v)| *s >= 0.5 * spec.horizon && *v > 0.0)
        .collect();
    if tail.len() < 5 {
        return Err(Error::ProbeInconclusive(format!(
            "{} usable samples in the fit window",
            tail.len()
        )));
    }
    if tail.iter().any(|(_, v)| *v < 1e-13 * start) {
        return Err(Error::ProbeInconclusive(
            "signal reached round-off before the fit window closed".into(),
        ));
    }
    let (slope, r2) = log_linear_fit(&tail);
    if r2 < 0.999 {
        return Err(Error::ProbeInconclusive(format!(
            "log-linear fit R^2 = {r2}"
        )));
    }
    Ok(ProbeResult {
        n: spec.n,
        alpha: spec.alpha,
        beta: spec.beta,
        rate: -slope,
        samples,
        r_squared: r2,
        killed: false,
    })
}

fn log_linear_fit(pts: &[(f64, f64)]) -> (f64, f64) {
    let n = pts.len() as f64;
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> LineGrid {
        LineGrid::new(20.0, 0.01).unwrap()
    }

    #[test]
    fn modes_are_orthonormal() {
        let g = grid();
        for alpha in [0.5, 0.4, 0.6, 1.0] {
            let b = hermite_modes(alpha, &g).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    let e = g.inner(&b.modes[i], &b.modes[j]);
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((e - want).abs() < 1e-10, "alpha {alpha} ({i},{j}): {e}");
                }
            }
        }
    }

    #[test]
    fn projection_examples() {
        let g = grid();
        let alpha = 0.5;
        let b = hermite_modes(alpha, &g).unwrap();
        let p = project(&b.modes[1], &b, 3, &g).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-10));
        let f = g.map(|z| (z * z * z + z * z + 1.0) * (-0.2 * z * z).exp());
        let once = project(&f, &b, 3, &g).unwrap();
        let twice = project(&once, &b, 3, &g).unwrap();
        assert!(once.iter().zip(&twice).all(|(a, b)| (a - b).abs() < 1e-12));
        let h = g.map(|z| (1.0 - alpha * z * z) * (-0.25 * alpha * z * z).exp());
        let ph = project(&h, &b, 1, &g).unwrap();
        assert!(ph.iter().zip(&h).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn mode_pairing_of_the_shifted_oscillator() {
        let g = grid();
        let alpha = 0.5;
        let b = hermite_modes(alpha, &g).unwrap();
        let op = assemble_operator(OperatorId::ShiftedOscillator { alpha }, &g).unwrap();
        for (k, want) in [-2.0 * alpha, -alpha, 0.0].into_iter().enumerate() {
            let r = op.apply(&b.modes[k]);
            let err = r
                .iter()
                .zip(&b.modes[k])
                .map(|(r, p)| (r - want * p).abs())
                .fold(0.0, f64::max);
            assert!(err < 1e-5, "mode {k}: {err}");
        }
    }

    #[test]
    fn ladder() {
        let g = grid();
        let op = assemble_operator(OperatorId::ShiftedOscillator { alpha: 0.5 }, &g).unwrap();
        let s = discrete_spectrum(&op, 5).unwrap();
        for (e, want) in s.iter().zip([-1.0, -0.5, 0.0, 0.5, 1.0]) {
            assert!(
                (e.eigenvalue - want).abs() < 1e-4,
                "{} vs {want}",
                e.eigenvalue
            );
            assert!(e.residual < 1e-6);
        }
        let op = assemble_operator(OperatorId::ShiftedOscillator { alpha: 1.0 }, &g).unwrap();
        let s = discrete_spectrum(&op, 3).unwrap();
        for (e, want) in s.iter().zip([-2.0, -1.0, 0.0]) {
            assert!((e.eigenvalue - want).abs() < 1e-4);
        }
        let op = assemble_operator(OperatorId::Harmonic { alpha: 0.5 }, &g).unwrap();
        let s = discrete_spectrum(&op, 1).unwrap();
        assert!((s[0].eigenvalue - 0.25).abs() < 1e-4);
    }

    #[test]
    fn linearized_operator_is_a_shifted_oscillator() {
        let g = LineGrid::new(20.0, 0.05).unwrap();
        let alpha = 0.6;
        let l = assemble_operator(OperatorId::Oscillator { alpha }, &g).unwrap();
        let m = assemble_operator(
            OperatorId::Linearized {
                a: alpha,
                b: 0.0,
                a_tau: 0.0,
                d: 3,
            },
            &g,
        )
        .unwrap();
        let shifts: Vec<f64> = l
            .matrix
            .diag
            .iter()
            .zip(&m.matrix.diag)
            .map(|(x, y)| x - y)
            .collect();
        let c = shifts[0];
        assert!(shifts.iter().all(|s| (s - c).abs() < 1e-12));
        assert_eq!(l.matrix.off, m.matrix.off);
        assert!((c - (0.5 * alpha + 0.25)).abs() < 1e-12);
    }

    #[test]
    fn killed_input() {
        let g = LineGrid::new(20.0, 0.02).unwrap();
        let b = hermite_modes(0.5, &g).unwrap();
        let spec = ProbeSpec {
            n: 2,
            alpha: 0.5,
            beta: None,
            d: 2,
            horizon: 4.0,
            dt: 0.01,
            window: ProbeSpec::default_window(0.5),
        };
        let r = propagator_decay_probe(&spec, &b.modes[0], &g).unwrap();
        assert!(r.killed);
    }
}
