//! Rescaled run: the collapse-frame flow with `(a, b)` refitted before
//! every step.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barriers::{barrier_check_values, rho_bounds_values};
use crate::collapse::{self, CollapseState, FarFieldClosure, FitRecord};
use crate::config::{DatumKind, SimConfig};
use crate::diagnostics::{beta, NORM_INDICES};
use crate::error::{Error, Result};
use crate::modulation::{fit_parameters, weighted_norm, FitOptions, ModulationFit};
use crate::pde::{datum_report, initial_grid, neckpinch_base, perturbation, RadialProfile};
use crate::solver::{self, StepControl};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum StopReason {
    /// `lambda min v` reached the threshold.
    Threshold,
    TauMax,
    /// The run ended on an error; the history up to it is kept.
    Error {
        kind: String,
        message: String,
    },
}

/// `v0(y) = u0(lambda0 y) / lambda0` from the datum formula.
pub fn initial_collapse_state(cfg: &SimConfig) -> Result<CollapseState> {
    cfg.validate()?;
    let grid = collapse::rescaled_grid(cfg)?;
    let l0 = cfg.lambda0;
    let v: Vec<f64> = match cfg.datum {
        DatumKind::Neckpinch => {
            let pert = perturbation(cfg);
            grid.map(|y| (neckpinch_base(cfg, l0 * y) + pert(l0 * y)) / l0)
        }
        DatumKind::Cylinder { radius } => vec![radius / l0; grid.len()],
        DatumKind::Sphere { .. } => {
            return Err(Error::InvalidInput(
                "the rescaled run needs a noncompact datum".into(),
            ));
        }
    };
    solver::check_positive(&v)?;
    Ok(CollapseState {
        grid,
        v,
        lambda_sq: l0 * l0,
        t: 0.0,
        tau: 0.0,
        a: 0.5,
        b: 0.0,
        d: cfg.d,
    })
}

/// `v0 v0'' >= -1` on the physical datum (always true for cylinders).
fn datum_qualifies(cfg: &SimConfig) -> Result<bool> {
    match cfg.datum {
        DatumKind::Neckpinch => {
            let grid = initial_grid(cfg)?;
            let pert = perturbation(cfg);
            let p = RadialProfile::from_fn(grid, cfg.d, 0.0, |x| neckpinch_base(cfg, x) + pert(x))?;
            Ok(datum_report(cfg, &p).rho_nonneg_one)
        }
        _ => Ok(true),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledRun {
    pub state: CollapseState,
    pub ctl: StepControl,
    pub closure: FarFieldClosure,
    pub fit: FitOptions,
    /// Step to try next.
    pub dtau: f64,
    /// First fitted `b`, the reference for `beta(tau)`.
    pub b0: Option<f64>,
    pub history: Vec<FitRecord>,
    pub snapshots: Vec<CollapseState>,
    pub snapshot_every: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub u_min_stop: f64,
    pub tau_max: Option<f64>,
    pub datum_qualifies: bool,
    /// Guess for the next fit.
    pub guess: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RescaledOutcome {
    pub d: u32,
    pub b0: f64,
    pub history: Vec<FitRecord>,
    pub snapshots: Vec<CollapseState>,
    pub last: CollapseState,
    pub stop: StopReason,
    pub datum_qualifies: bool,
    pub accepted: usize,
    pub rejected: usize,
}

impl RescaledRun {
    pub fn new(cfg: &SimConfig) -> Result<RescaledRun> {
        let state = initial_collapse_state(cfg)?;
        Ok(RescaledRun {
            ctl: cfg.rescaled.step,
            closure: cfg.rescaled.far_field,
            fit: FitOptions {
                tol: cfg.rescaled.fit_tol,
                ..FitOptions::default()
            },
            dtau: cfg.rescaled.step.dt_init,
            b0: None,
            history: Vec::new(),
            snapshots: vec![state.clone()],
            snapshot_every: cfg.output.snapshot_every.max(1),
            accepted: 0,
            rejected: 0,
            u_min_stop: cfg.u_min_stop(),
            tau_max: cfg.rescaled.tau_max,
            datum_qualifies: datum_qualifies(cfg)?,
            guess: None,
            state,
        })
    }

    pub fn finished(&self) -> bool {
        let v_min = solver::min_with_index(&self.state.v).1;
        self.state.lambda() * v_min <= self.u_min_stop
            || self.tau_max.is_some_and(|t| self.state.tau >= t)
    }

    /// Fit `(a, b)` to the current profile and log the record.
    fn observe(&mut self) -> Result<ModulationFit> {
        let s = &self.state;
        let guess = self
            .guess
            .unwrap_or_else(|| crate::modulation::cold_start_guess(&s.grid, &s.v));
        let fit = fit_parameters(&s.grid, &s.v, s.d, guess, &self.fit)?;
        let b0 = *self.b0.get_or_insert(fit.b);
        let bt = beta(s.tau, b0, s.d);
        let barrier = barrier_check_values(&s.grid, &s.v, bt, s.d);
        let rho = rho_bounds_values(&s.grid, &s.v, bt, s.d, self.datum_qualifies);
        let phi_norms = NORM_INDICES.map(|(m, n)| weighted_norm(&s.grid, &fit.phi, m, n));
        self.history.push(FitRecord {
            tau: s.tau,
            t: s.t,
            lambda: s.lambda(),
            a: fit.a,
            b: fit.b,
            iterations: fit.iterations,
            ortho: fit.ortho,
            condition: fit.condition,
            at_boundary: fit.at_boundary,
            a_out_of_box: fit.a_out_of_box,
            guess_in_neighbourhood: fit.guess_in_neighbourhood,
            phi_norms,
            v0: s.v[0],
            barrier_margin: barrier.min_margin.unwrap_or(f64::NAN),
            barrier_worst_y: s.grid.nodes()[barrier.worst_node.unwrap_or(0)],
            rho_central_max: rho.rho_central_max.unwrap_or(f64::NAN),
            rho_outer_min: rho.rho_outer_min,
            chi_max: crate::barriers::chi_max(&s.grid, &s.v, s.d),
        });
        self.guess = Some((fit.a, fit.b));
        Ok(fit)
    }

    /// Fit, then one accepted step with `(a, b)` frozen.
    pub fn advance(&mut self) -> Result<()> {
        let fit = self.observe()?;
        self.state.a = fit.a;
        self.state.b = fit.b;
        let cap = self.tau_max.map_or(f64::INFINITY, |t| t - self.state.tau);
        let min_old = solver::min_with_index(&self.state.v).1;
        loop {
            let dtau = self.dtau.min(cap);
            if dtau < self.ctl.dt_min {
                return Err(Error::StepRejected {
                    suggested_dt: dtau,
                    reason: format!("step size fell below dt_min = {:e}", self.ctl.dt_min),
                });
            }
            let (next, err) =
                match collapse::step_rescaled_doubled(&self.state, dtau, &self.ctl, self.closure) {
                    Ok(s) => s,
                    Err(Error::StepRejected { .. }) => {
                        self.rejected += 1;
                        self.dtau = 0.25 * dtau;
                        continue;
                    }
                    Err(e) => return Err(e),
                };
            if err > self.ctl.tol {
                self.rejected += 1;
                self.dtau = solver::next_dt(dtau, err, &self.ctl).min(0.9 * dtau);
                continue;
            }
            let min_new = solver::min_with_index(&next.v).1;
            let change = (min_new - min_old).abs() / min_old;
            if change > self.ctl.max_min_change {
                self.rejected += 1;
                self.dtau = 0.5 * dtau * self.ctl.max_min_change / change;
                continue;
            }
            self.accepted += 1;
            if dtau < cap {
                self.dtau = solver::next_dt(dtau, err, &self.ctl);
            }
            self.state = next;
            if self.accepted % self.snapshot_every == 0 {
                self.snapshots.push(self.state.clone());
            }
            return Ok(());
        }
    }

    /// Run to the stop condition. Errors that end the evolution (collapse of
    /// the fit, scale underflow, step failure) are reported in the outcome.
    pub fn run(self, budget_seconds: Option<f64>) -> Result<RescaledOutcome> {
        self.run_with(budget_seconds, |_| Ok(()))
    }

    /// As [`RescaledRun::run`], calling `hook` after every accepted step.
    pub fn run_with<F: FnMut(&RescaledRun) -> Result<()>>(
        mut self,
        budget_seconds: Option<f64>,
        mut hook: F,
    ) -> Result<RescaledOutcome> {
        let start = Instant::now();
        let mut stop = None;
        while !self.finished() {
            if let Some(b) = budget_seconds {
                if start.elapsed().as_secs_f64() > b {
                    stop = Some(StopReason::Error {
                        kind: "budget-exceeded".into(),
                        message: format!(
                            "wall-clock budget of {b} s exhausted at tau = {}",
                            self.state.tau
                        ),
                    });
                    break;
                }
            }
            if let Err(e) = self.advance() {
                match e {
                    Error::Io(_)
                    | Error::Json(_)
                    | Error::Config { .. }
                    | Error::InvalidInput(_) => return Err(e),
                    e => {
                        log::warn!("rescaled run stopped at tau = {}: {e}", self.state.tau);
                        stop = Some(StopReason::Error {
                            kind: e.kind().into(),
                            message: e.to_string(),
                        });
                        break;
                    }
                }
            }
            hook(&self)?;
        }
        let stop = match stop {
            Some(s) => s,
            None => {
                // closing record at the final state
                self.observe()?;
                let v_min = solver::min_with_index(&self.state.v).1;
                if self.state.lambda() * v_min <= self.u_min_stop {
                    StopReason::Threshold
                } else {
                    StopReason::TauMax
                }
            }
        };
        if self.snapshots.last() != Some(&self.state) {
            self.snapshots.push(self.state.clone());
        }
        Ok(RescaledOutcome {
            d: self.state.d,
            b0: self.b0.unwrap_or(f64::NAN),
            history: self.history,
            snapshots: self.snapshots,
            last: self.state,
            stop,
            datum_qualifies: self.datum_qualifies,
            accepted: self.accepted,
            rejected: self.rejected,
        })
    }
}

pub fn run_rescaled(cfg: &SimConfig) -> Result<RescaledOutcome> {
    RescaledRun::new(cfg)?.run(cfg.budget_seconds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modulation::static_cylinder;

    #[test]
    fn reference_datum_is_a_family_member() {
        let cfg = SimConfig::default();
        let s = initial_collapse_state(&cfg).unwrap();
        for (y, v) in s.y_nodes().iter().zip(&s.v) {
            assert!((v - (2.0 + 0.1 * y * y).sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn static_cylinder_is_preserved() {
        let mut cfg = SimConfig::default();
        let r = static_cylinder(0.5, 2);
        cfg.datum = DatumKind::Cylinder { radius: r };
        cfg.rescaled.tau_max = Some(10.0);
        let mut run = RescaledRun::new(&cfg).unwrap();
        let mut worst: f64 = 0.0;
        while !run.finished() {
            run.state.a = 0.5;
            run.state.b = 0.0;
            let (next, _) = collapse::step_rescaled_doubled(
                &run.state,
                0.05f64.min(10.0 - run.state.tau),
                &run.ctl,
                run.closure,
            )
            .unwrap();
            run.state = next;
            worst = run.state.v.iter().fold(worst, |m, v| m.max((v - r).abs()));
        }
        assert!(worst <= 1e-8, "{worst}");
        // lambda = e^{-tau/2}
        assert!((run.state.lambda() - (-5.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn short_run_tracks_tau() {
        let mut cfg = SimConfig::default();
        cfg.rescaled.tau_max = Some(0.5);
        let out = run_rescaled(&cfg).unwrap();
        assert_eq!(out.stop, StopReason::TauMax);
        assert!((out.last.tau - 0.5).abs() < 1e-12);
        let h = &out.history;
        assert!(h.len() > 2);
        // tau accounting: d tau = lambda^{-2} dt through the trapezoid of lambda^{-2}
        let mut tau = 0.0;
        for w in h.windows(2) {
            let dt = w[1].t - w[0].t;
            let l0 = w[0].lambda.powi(2);
            let dtau = w[1].tau - w[0].tau;
            // exact for frozen a: dt = lambda0^2 (1 - e^{-2 a dtau}) / (2 a)
            let x = 2.0 * w[0].a * dtau;
            assert!((dt - l0 * (-(-x).exp_m1()) / (2.0 * w[0].a)).abs() <= 1e-12 * dt.max(1e-300));
            tau += dtau;
        }
        assert!(((tau - out.last.tau) / out.last.tau).abs() <= 1e-8);
        assert!(h.iter().all(|r| r.a > 0.25 && r.a < 1.0));
    }
}
