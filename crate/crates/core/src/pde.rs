//! Radial mean curvature flow in physical variables,
//!
//! ```text
//! u_t = u_xx / (1 + u_x^2) - (d - 1) / u,
//! ```
//!
//! for an even profile `u(x, t) > 0`, together with exact reference
//! solutions, the curvature norm and the neckpinch initial-datum family.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::lower_barrier;
use crate::config::{DatumKind, PerturbationShape, SimConfig};
use crate::diagnostics::{estimate_pinch_time, PinchEstimate};
use crate::error::{Error, Result};
use crate::grid::{Grid, Parity};
use crate::modulation::weighted_norm;
use crate::solver::{self, Boundary, StepControl};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialProfile {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub d: u32,
    pub t: f64,
}

impl RadialProfile {
    pub fn new(grid: Grid, u: Vec<f64>, d: u32, t: f64) -> Result<RadialProfile> {
        if u.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} nodes",
                u.len(),
                grid.len()
            )));
        }
        if d < 2 {
            return Err(Error::InvalidInput(format!("dimension d = {d} < 2")));
        }
        solver::check_positive(&u)?;
        Ok(RadialProfile { grid, u, d, t })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: Grid, d: u32, t: f64, f: F) -> Result<RadialProfile> {
        let u = grid.map(f);
        RadialProfile::new(grid, u, d, t)
    }

    pub fn x_nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    /// `min u` over the solved nodes; the last node carries boundary data.
    pub fn u_min(&self) -> f64 {
        solver::min_with_index(&self.u[..self.u.len() - 1]).1
    }

    /// Interpolated value at `|x|`.
    pub fn value_at(&self, x: f64) -> Option<f64> {
        self.grid.interpolator(&self.u).eval(x)
    }

    pub fn resample(&self, grid: Grid) -> Result<RadialProfile> {
        let needed = grid.half_width();
        let u = self
            .grid
            .interpolator(&self.u)
            .resample(&grid)
            .ok_or(Error::DomainExhausted {
                needed,
                available: self.grid.half_width(),
            })?;
        RadialProfile::new(grid, u, self.d, self.t)
    }

    /// The parabolic rescaling `s u(x / s)` at time `s^2 t`.
    pub fn scaled(&self, s: f64) -> RadialProfile {
        RadialProfile {
            grid: self.grid.scaled(s),
            u: self.u.iter().map(|v| v * s).collect(),
            d: self.d,
            t: self.t * s * s,
        }
    }

    /// `(u_x, u_xx)` at every node.
    pub fn derivatives(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.grid.d1(&self.u, Parity::Even),
            self.grid.d2(&self.u, Parity::Even),
        )
    }
}

/// Nodewise `u_xx / (1 + u_x^2) - (d - 1) / u`.
pub fn mcf_rhs(profile: &RadialProfile) -> Result<Vec<f64>> {
    solver::quasilinear_rhs(&profile.grid, &profile.u, 0.0, profile.d)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvatureNorm {
    pub values: Vec<f64>,
    pub max: f64,
}

/// `|A|^2 = (u_xx / (1 + u_x^2)^{3/2})^2 + (d - 1) / (u^2 (1 + u_x^2))`.
pub fn curvature_norm(profile: &RadialProfile) -> Result<CurvatureNorm> {
    solver::check_positive(&profile.u)?;
    let (ux, uxx) = profile.derivatives();
    let dm1 = (profile.d - 1) as f64;
    let mut values = Vec::with_capacity(profile.u.len());
    for i in 0..profile.u.len() {
        let q = 1.0 + ux[i] * ux[i];
        let k1 = uxx[i] / q.powf(1.5);
        let a2 = k1 * k1 + dm1 / (profile.u[i] * profile.u[i] * q);
        if !a2.is_finite() {
            return Err(Error::NumericalOverflow { node: i });
        }
        values.push(a2.sqrt());
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    Ok(CurvatureNorm { values, max })
}

/// Radius of the shrinking cylinder, `sqrt(u0^2 - 2(d-1) t)`.
pub fn cylinder_exact(u0: f64, d: u32, t: f64) -> Result<f64> {
    let t_star = cylinder_collapse_time(u0, d);
    if t >= t_star {
        return Err(Error::PastCollapse { t, t_star });
    }
    Ok((u0 * u0 - 2.0 * (d - 1) as f64 * t).sqrt())
}

pub fn cylinder_collapse_time(u0: f64, d: u32) -> f64 {
    u0 * u0 / (2.0 * (d - 1) as f64)
}

/// Radius of the shrinking round sphere, `sqrt(R0^2 - 2 d t)`.
pub fn sphere_radius(r0: f64, d: u32, t: f64) -> Result<f64> {
    let t_star = r0 * r0 / (2.0 * d as f64);
    if t >= t_star {
        return Err(Error::PastCollapse { t, t_star });
    }
    Ok((r0 * r0 - 2.0 * d as f64 * t).sqrt())
}

/// Dirichlet data at the last node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FarField {
    /// Follow the tangent cylinder of the initial value at the boundary.
    TangentCylinder { u_end0: f64 },
    /// Exact round sphere of initial radius `radius0`.
    Sphere { radius0: f64 },
}

impl FarField {
    pub fn value(&self, x_end: f64, t: f64, d: u32) -> Result<f64> {
        match *self {
            FarField::TangentCylinder { u_end0 } => cylinder_exact(u_end0, d, t),
            FarField::Sphere { radius0 } => {
                let r = sphere_radius(radius0, d, t)?;
                let s = r * r - x_end * x_end;
                if s <= 0.0 {
                    return Err(Error::DomainExhausted {
                        needed: x_end,
                        available: r,
                    });
                }
                Ok(s.sqrt())
            }
        }
    }

    /// Far field of the rescaled solution `s u(x / s, t / s^2)`.
    pub fn scaled(&self, s: f64) -> FarField {
        match *self {
            FarField::TangentCylinder { u_end0 } => {
                FarField::TangentCylinder { u_end0: s * u_end0 }
            }
            FarField::Sphere { radius0 } => FarField::Sphere {
                radius0: s * radius0,
            },
        }
    }
}

/// Adaptive implicit-Euler driver for the physical flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalStepper {
    pub ctl: StepControl,
    pub far: FarField,
    /// Step size to try next.
    pub dt: f64,
    /// `step_physical` reports a collapse once `min u` drops below this.
    pub u_min_stop: f64,
    pub accepted: usize,
    pub rejected: usize,
}

impl PhysicalStepper {
    pub fn new(ctl: StepControl, far: FarField) -> PhysicalStepper {
        PhysicalStepper {
            ctl,
            far,
            dt: ctl.dt_init,
            u_min_stop: 0.0,
            accepted: 0,
            rejected: 0,
        }
    }

    /// One accepted step of length at most `dt_cap`; returns the step taken.
    pub fn step(&mut self, p: &RadialProfile, dt_cap: f64) -> Result<(RadialProfile, f64)> {
        let l = p.grid.half_width();
        let min_old = p.u_min();
        loop {
            let dt = self.dt.min(dt_cap);
            if dt < self.ctl.dt_min {
                return Err(Error::StepRejected {
                    suggested_dt: dt,
                    reason: format!("step size fell below dt_min = {:e}", self.ctl.dt_min),
                });
            }
            let b_mid = self.far.value(l, p.t + 0.5 * dt, p.d)?;
            let b_end = self.far.value(l, p.t + dt, p.d)?;
            let s = match solver::doubled_step(
                &p.grid,
                &p.u,
                dt,
                0.0,
                p.d,
                Boundary::Dirichlet(b_mid),
                Boundary::Dirichlet(b_end),
                &self.ctl,
            ) {
                Ok(s) => s,
                Err(Error::StepRejected { .. }) => {
                    self.rejected += 1;
                    self.dt = 0.25 * dt;
                    continue;
                }
                Err(e) => return Err(e),
            };
            if s.error > self.ctl.tol {
                self.rejected += 1;
                self.dt = solver::next_dt(dt, s.error, &self.ctl).min(0.9 * dt);
                continue;
            }
            let min_new = solver::min_with_index(&s.u).1;
            let change = (min_new - min_old).abs() / min_old;
            if change > self.ctl.max_min_change {
                self.rejected += 1;
                self.dt = 0.5 * dt * self.ctl.max_min_change / change;
                continue;
            }
            self.accepted += 1;
            let mut next = solver::next_dt(dt, s.error, &self.ctl);
            if change > 0.0 {
                next = next.min(0.8 * dt * self.ctl.max_min_change / change);
            }
            if dt < dt_cap || next < self.dt {
                self.dt = next;
            }
            let out = RadialProfile {
                grid: p.grid.clone(),
                u: s.u,
                d: p.d,
                t: p.t + dt,
            };
            return Ok((out, dt));
        }
    }

    /// Advance to `t_end` exactly.
    pub fn advance_to(&mut self, mut p: RadialProfile, t_end: f64) -> Result<RadialProfile> {
        while p.t < t_end {
            let remaining = t_end - p.t;
            let (next, dt) = self.step(&p, remaining)?;
            p = next;
            if dt >= remaining {
                p.t = t_end;
            }
        }
        Ok(p)
    }
}

/// Advance `profile` by `dt`, subdividing adaptively.
pub fn step_physical(
    profile: &RadialProfile,
    dt: f64,
    stepper: &mut PhysicalStepper,
) -> Result<RadialProfile> {
    if !(dt >= 0.0) {
        return Err(Error::InvalidInput(format!("negative step {dt}")));
    }
    if dt == 0.0 {
        return Ok(profile.clone());
    }
    let out = stepper.advance_to(profile.clone(), profile.t + dt)?;
    if out.u_min() < stepper.u_min_stop {
        return Err(Error::CollapseDetected {
            last: Box::new(profile.clone()),
        });
    }
    Ok(out)
}

/// A datum-class norm of the perturbation with its budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassNorm {
    pub m: f64,
    pub n: usize,
    pub value: f64,
    pub budget: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumReport {
    pub norms: Vec<ClassNorm>,
    /// `min_x (u0(x) - s^{-1} g(s x, eps0 / (2 varsigma0)))`
    pub lower_bound_margin: f64,
    pub lower_bound_ok: bool,
    /// `sup |u0^{(n)}| / (kappa0 eps0^{n/2})`, `n = 2, 3, 4`, and the
    /// slope condition `|u0' u0^{-1/2}| / (kappa0 eps0^{1/2})`.
    pub derivative_ratios: Vec<(usize, f64)>,
    pub derivatives_ok: bool,
    /// `u0 u0'' >= -1` everywhere.
    pub rho_nonneg_one: bool,
    /// Nonnegative mean curvature of the initial surface.
    pub mean_convex: bool,
    pub in_class: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InitialDatum {
    pub profile: RadialProfile,
    pub far: FarField,
    /// Class report for the neckpinch family.
    pub report: Option<DatumReport>,
}

/// The unperturbed neckpinch datum `sqrt((2(d-1) + eps0 x^2) / (2 varsigma0))`.
pub fn neckpinch_base(cfg: &SimConfig, x: f64) -> f64 {
    let dm1 = (cfg.d - 1) as f64;
    ((2.0 * dm1 + cfg.eps0 * x * x) / (2.0 * cfg.varsigma0)).sqrt()
}

/// Perturbation function of the configured shape.
pub fn perturbation(cfg: &SimConfig) -> impl Fn(f64) -> f64 {
    let p = &cfg.perturbation;
    let amp = p.amplitude;
    let shape = p.shape;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let xi: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
    move |x: f64| {
        let g = (-x * x).exp();
        match shape {
            PerturbationShape::None => 0.0,
            PerturbationShape::Gauss => amp * g,
            PerturbationShape::X2Gauss => amp * x * x * g,
            PerturbationShape::X4Gauss => amp * x.powi(4) * g,
            PerturbationShape::Random => {
                let x2 = x * x;
                amp * g * (xi[0] + x2 * (xi[1] + x2 * (xi[2] + x2 * xi[3])))
            }
        }
    }
}

/// Initial grid: clustered so that the first spacing resolves `min u`.
pub fn initial_grid(cfg: &SimConfig) -> Result<Grid> {
    let h0 = cfg.grid.spacing_factor * cfg.u0_center();
    Grid::with_min_spacing(cfg.grid.half_width, cfg.grid.intervals, h0)
}

pub fn make_initial_datum(cfg: &SimConfig) -> Result<InitialDatum> {
    cfg.validate()?;
    let grid = initial_grid(cfg)?;
    let d = cfg.d;
    match cfg.datum {
        DatumKind::Cylinder { radius } => Ok(InitialDatum {
            profile: RadialProfile::from_fn(grid, d, 0.0, |_| radius)?,
            far: FarField::TangentCylinder { u_end0: radius },
            report: None,
        }),
        DatumKind::Sphere { radius } => Ok(InitialDatum {
            profile: RadialProfile::from_fn(grid, d, 0.0, |x| (radius * radius - x * x).sqrt())?,
            far: FarField::Sphere { radius0: radius },
            report: None,
        }),
        DatumKind::Neckpinch => {
            let pert = perturbation(cfg);
            let profile =
                RadialProfile::from_fn(grid, d, 0.0, |x| neckpinch_base(cfg, x) + pert(x))?;
            let report = datum_report(cfg, &profile);
            if !report.in_class {
                log::warn!("datum-out-of-class: initial datum violates the class conditions");
            }
            let far = FarField::TangentCylinder {
                u_end0: *profile.u.last().unwrap(),
            };
            Ok(InitialDatum {
                profile,
                far,
                report: Some(report),
            })
        }
    }
}

/// Class conditions of the neckpinch datum family.
pub fn datum_report(cfg: &SimConfig, profile: &RadialProfile) -> DatumReport {
    let grid = &profile.grid;
    let dm1 = (cfg.d - 1) as f64;
    let eps = cfg.eps0;
    let diff: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(&profile.u)
        .map(|(&x, u)| u - neckpinch_base(cfg, x))
        .collect();
    let norms: Vec<ClassNorm> = [(3.0, 0), (1.1, 0), (2.0, 1), (1.0, 2)]
        .into_iter()
        .map(|(m, n)| {
            let value = weighted_norm(grid, &diff, m, n);
            let budget = cfg.class_c * eps.powf((m + n as f64 + 1.0) / 2.0);
            ClassNorm {
                m,
                n,
                value,
                budget,
                ok: value <= budget,
            }
        })
        .collect();

    let s = (2.0 * cfg.varsigma0 + eps / dm1).sqrt();
    let b = eps / (2.0 * cfg.varsigma0);
    let lower_bound_margin = grid
        .nodes()
        .iter()
        .zip(&profile.u)
        .map(|(&x, &u)| u - lower_barrier(s * x, b, cfg.d) / s)
        .fold(f64::INFINITY, f64::min);

    let u = &profile.u;
    let d1 = grid.d1(u, Parity::Even);
    let d2 = grid.d2(u, Parity::Even);
    // higher derivatives lose accuracy at the far end; drop the last nodes
    let d3 = grid.d1(&d2, Parity::Even);
    let d4 = grid.d2(&d2, Parity::Even);
    let inner = u.len().saturating_sub(4);
    let sup = |f: &[f64]| f[..inner].iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let slope = d1
        .iter()
        .zip(u)
        .take(inner)
        .fold(0.0_f64, |m, (a, u)| m.max((a / u.sqrt()).abs()));
    let k = cfg.kappa0;
    let derivative_ratios = vec![
        (1, slope / (k * eps.sqrt())),
        (2, sup(&d2) / (k * eps)),
        (3, sup(&d3) / (k * eps.powf(1.5))),
        (4, sup(&d4) / (k * eps * eps)),
    ];
    let derivatives_ok = derivative_ratios.iter().all(|(_, r)| *r <= 1.0);
    let rho_nonneg_one = u.iter().zip(&d2).all(|(u, uxx)| u * uxx >= -1.0);
    let mean_convex = (0..u.len()).all(|i| d2[i] / (1.0 + d1[i] * d1[i]) - dm1 / u[i] <= 0.0);
    let lower_bound_ok = lower_bound_margin >= 0.0;
    let in_class = norms.iter().all(|n| n.ok) && lower_bound_ok && derivatives_ok;
    DatumReport {
        norms,
        lower_bound_margin,
        lower_bound_ok,
        derivative_ratios,
        derivatives_ok,
        rho_nonneg_one,
        mean_convex,
        in_class,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub u_min: f64,
    pub max_curvature: f64,
    pub dt: f64,
    /// `u` at the trajectory's probe points.
    pub probes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub d: u32,
    pub u0_center: f64,
    pub probe_x: Vec<f64>,
    pub records: Vec<TrajectoryRecord>,
    pub snapshots: Vec<RadialProfile>,
    pub pinch: Option<PinchEstimate>,
    /// Why the pinch estimate is missing, if it is.
    pub pinch_error: Option<String>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.t).collect()
    }

    pub fn u_mins(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.u_min).collect()
    }
}

/// Physical-variable run with regridding and snapshots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalRun {
    pub profile: RadialProfile,
    pub stepper: PhysicalStepper,
    pub trajectory: Trajectory,
    pub u_min_stop: f64,
    pub t_max: Option<f64>,
    pub spacing_factor: f64,
    pub intervals: usize,
    pub snapshot_every: usize,
    /// `min u` at the last regrid.
    pub regrid_at: f64,
}

impl PhysicalRun {
    pub fn new(cfg: &SimConfig) -> Result<PhysicalRun> {
        let datum = make_initial_datum(cfg)?;
        PhysicalRun::from_datum(cfg, datum.profile, datum.far)
    }

    pub fn from_datum(
        cfg: &SimConfig,
        profile: RadialProfile,
        far: FarField,
    ) -> Result<PhysicalRun> {
        let u_min_stop = cfg.u_min_stop();
        if profile.u_min() <= u_min_stop {
            return Err(Error::CollapseDetected {
                last: Box::new(profile),
            });
        }
        let mut stepper = PhysicalStepper::new(cfg.integrator, far);
        stepper.u_min_stop = u_min_stop;
        let trajectory = Trajectory {
            d: profile.d,
            u0_center: profile.u[0],
            probe_x: cfg.output.probe_x.clone(),
            records: Vec::new(),
            snapshots: Vec::new(),
            pinch: None,
            pinch_error: None,
        };
        let mut run = PhysicalRun {
            regrid_at: profile.u_min(),
            profile,
            stepper,
            trajectory,
            u_min_stop,
            t_max: cfg.stop.t_max,
            spacing_factor: cfg.grid.spacing_factor,
            intervals: cfg.grid.intervals,
            snapshot_every: cfg.output.snapshot_every.max(1),
        };
        run.record(0.0)?;
        run.trajectory.snapshots.push(run.profile.clone());
        Ok(run)
    }

    fn record(&mut self, dt: f64) -> Result<()> {
        let curv = curvature_norm(&self.profile)?;
        let probes = self
            .trajectory
            .probe_x
            .iter()
            .map(|&x| self.profile.value_at(x).unwrap_or(f64::NAN))
            .collect();
        self.trajectory.records.push(TrajectoryRecord {
            t: self.profile.t,
            u_min: self.profile.u_min(),
            max_curvature: curv.max,
            dt,
            probes,
        });
        Ok(())
    }

    pub fn finished(&self) -> bool {
        self.profile.u_min() <= self.u_min_stop || self.t_max.is_some_and(|t| self.profile.t >= t)
    }

    /// One accepted step, regridding first if `min u` has halved.
    pub fn advance(&mut self) -> Result<()> {
        let u_min = self.profile.u_min();
        if u_min <= 0.5 * self.regrid_at {
            let grid = Grid::with_min_spacing(
                self.profile.grid.half_width(),
                self.intervals,
                self.spacing_factor * u_min,
            )?;
            self.profile = self.profile.resample(grid)?;
            self.regrid_at = self.profile.u_min();
            self.trajectory.snapshots.push(self.profile.clone());
        }
        let cap = self.t_max.map_or(f64::INFINITY, |t| t - self.profile.t);
        let (next, dt) = self.stepper.step(&self.profile, cap)?;
        self.profile = next;
        self.record(dt)?;
        if self.stepper.accepted % self.snapshot_every == 0 {
            self.trajectory.snapshots.push(self.profile.clone());
        }
        Ok(())
    }

    /// Run to the stop condition; attaches the pinch-time estimate.
    pub fn run(self, budget_seconds: Option<f64>) -> Result<Trajectory> {
        self.run_with(budget_seconds, |_| Ok(()))
    }

    /// As [`PhysicalRun::run`], calling `hook` after every accepted step.
    pub fn run_with<F: FnMut(&PhysicalRun) -> Result<()>>(
        mut self,
        budget_seconds: Option<f64>,
        mut hook: F,
    ) -> Result<Trajectory> {
        let start = Instant::now();
        while !self.finished() {
            if let Some(b) = budget_seconds {
                if start.elapsed().as_secs_f64() > b {
                    self.trajectory.snapshots.push(self.profile.clone());
                    return Err(Error::BudgetExceeded {
                        budget_s: b,
                        partial: Box::new(self.trajectory),
                    });
                }
            }
            self.advance()?;
            hook(&self)?;
        }
        Ok(self.finish())
    }

    pub fn finish(mut self) -> Trajectory {
        if self.trajectory.snapshots.last() != Some(&self.profile) {
            self.trajectory.snapshots.push(self.profile.clone());
        }
        match estimate_pinch_time(&self.trajectory) {
            Ok(p) => self.trajectory.pinch = Some(p),
            Err(e) => self.trajectory.pinch_error = Some(e.to_string()),
        }
        self.trajectory
    }
}

pub fn run_physical(cfg: &SimConfig) -> Result<Trajectory> {
    PhysicalRun::new(cfg)?.run(cfg.budget_seconds)
}
