//! Run modes, the checks each one asserts, and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::barriers::mean_curvature_sign_check;
use crate::checkpoint::{Checkpoint, RunState};
use crate::config::{DatumKind, SimConfig};
use crate::diagnostics::{
    constant_spread, diagnostics_series, estimate_pinch_time_samples, gamma_constant_spread,
    type_one_check, verify_asymptotics, AsymptoticsReport, DiagnosticsRecord, PinchEstimate,
    TrustWindow, TypeOneReport,
};
use crate::error::{Error, Result};
use crate::io::{self, run_id};
use crate::modulation::{
    cold_start_guess, fit_parameters, AlmostSolution, FitOptions, ModulationFit,
};
use crate::pde::{cylinder_collapse_time, cylinder_exact, sphere_radius, PhysicalRun, Trajectory};
use crate::rescaled::{initial_collapse_state, RescaledOutcome, RescaledRun, StopReason};
use crate::spectral::{
    assemble_operator, discrete_spectrum, hermite_modes, propagator_decay_probe, LineGrid,
    OperatorId, ProbeResult, ProbeSpec,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Physical,
    Rescaled,
    Fit,
    Spectrum,
    Verify,
    All,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub checkpoint: Option<PathBuf>,
    pub resume: bool,
    /// Accepted steps between checkpoint writes.
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Check {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub physical_grid: (f64, usize, f64),
    pub physical_tol: f64,
    pub rescaled_grid: (f64, usize, f64),
    pub rescaled_tol: f64,
    pub fit_tol: f64,
    pub spectrum_grid: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub mode: Mode,
    pub code_version: String,
    pub config: SimConfig,
    pub provenance: Provenance,
    pub outputs: Vec<String>,
    pub checks: Vec<Check>,
    pub all_passed: bool,
    pub wall_clock_s: f64,
}

impl RunManifest {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Machine-readable failure record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&Error> for ErrorRecord {
    fn from(e: &Error) -> Self {
        ErrorRecord {
            kind: e.kind().to_string(),
            message: e.to_string(),
        }
    }
}

struct Ctx<'a> {
    cfg: &'a SimConfig,
    opts: &'a RunOptions,
    run_id: String,
    outputs: Vec<String>,
    checks: Vec<Check>,
}

impl Ctx<'_> {
    fn path(&mut self, name: &str) -> PathBuf {
        self.outputs.push(name.to_string());
        self.opts.out_dir.join(name)
    }

    fn check(&mut self, name: &str, passed: bool, detail: String) {
        if !passed {
            log::warn!("check failed: {name}: {detail}");
        }
        self.checks.push(Check::new(name, passed, detail));
    }
}

pub fn run_mode(mode: Mode, cfg: &SimConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    fs::create_dir_all(&opts.out_dir)?;
    let start = Instant::now();
    let mut ctx = Ctx {
        cfg,
        opts,
        run_id: run_id(cfg),
        outputs: Vec::new(),
        checks: Vec::new(),
    };
    match mode {
        Mode::Physical => physical(&mut ctx)?,
        Mode::Rescaled => rescaled(&mut ctx)?,
        Mode::Fit => fit(&mut ctx)?,
        Mode::Spectrum => spectrum(&mut ctx)?,
        Mode::Verify => verify(&mut ctx)?,
        Mode::All => {
            // compact data have no collapse frame
            let frame = !matches!(cfg.datum, DatumKind::Sphere { .. });
            physical(&mut ctx)?;
            if frame {
                rescaled(&mut ctx)?;
            }
            fit(&mut ctx)?;
            spectrum(&mut ctx)?;
            if frame {
                verify(&mut ctx)?;
            }
        }
    }
    let manifest = RunManifest {
        run_id: ctx.run_id.clone(),
        mode,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        provenance: Provenance {
            physical_grid: (
                cfg.grid.half_width,
                cfg.grid.intervals,
                cfg.grid.spacing_factor,
            ),
            physical_tol: cfg.integrator.tol,
            rescaled_grid: (
                cfg.rescaled.half_width,
                cfg.rescaled.intervals,
                cfg.rescaled.stretch,
            ),
            rescaled_tol: cfg.rescaled.step.tol,
            fit_tol: cfg.rescaled.fit_tol,
            spectrum_grid: (cfg.spectrum.half_width, cfg.spectrum.spacing),
        },
        all_passed: ctx.checks.iter().all(|c| c.passed),
        outputs: ctx.outputs.clone(),
        checks: ctx.checks,
        wall_clock_s: start.elapsed().as_secs_f64(),
    };
    io::write_json(
        &opts.out_dir.join("manifest.json"),
        "manifest",
        &manifest.run_id,
        &manifest,
    )?;
    Ok(manifest)
}

fn load_checkpoint(ctx: &Ctx) -> Result<Option<RunState>> {
    match (&ctx.opts.checkpoint, ctx.opts.resume) {
        (Some(path), true) if path.exists() => {
            let c = Checkpoint::load(path)?;
            if c.run_id != ctx.run_id {
                return Err(Error::IncompatibleCheckpoint(format!(
                    "checkpoint belongs to run {}, config gives {}",
                    c.run_id, ctx.run_id
                )));
            }
            Ok(Some(c.state))
        }
        (None, true) => Err(Error::InvalidInput("--resume needs --checkpoint".into())),
        _ => Ok(None),
    }
}

fn physical(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let run = match load_checkpoint(ctx)? {
        Some(RunState::Physical(r)) => *r,
        Some(_) => {
            return Err(Error::IncompatibleCheckpoint(
                "checkpoint is not a physical run".into(),
            ))
        }
        None => PhysicalRun::new(cfg)?,
    };
    let every = ctx.opts.checkpoint_every.max(1);
    let ck = ctx.opts.checkpoint.clone();
    let id = ctx.run_id.clone();
    let traj = run.run_with(cfg.budget_seconds, |r| match &ck {
        Some(p) if r.stepper.accepted % every == 0 => {
            Checkpoint::new(&id, RunState::Physical(Box::new(r.clone()))).save(p)
        }
        _ => Ok(()),
    })?;
    io::trajectory_csv(&traj, &ctx.run_id).write(&ctx.path("trajectory.csv"))?;
    io::snapshots_csv(&traj.snapshots, &ctx.run_id).write(&ctx.path("snapshots.csv"))?;
    let path = ctx.path("trajectory.json");
    io::write_json(&path, "trajectory", &ctx.run_id, &traj)?;
    physical_checks(ctx, &traj);
    Ok(())
}

fn physical_checks(ctx: &mut Ctx, traj: &Trajectory) {
    let d = traj.d;
    match ctx.cfg.datum {
        DatumKind::Cylinder { radius } => {
            let worst = traj
                .records
                .iter()
                .map(|r| match cylinder_exact(radius, d, r.t) {
                    Ok(u) if u > 0.0 => r
                        .probes
                        .iter()
                        .fold((r.u_min - u).abs() / u, |m, p| m.max((p - u).abs() / u)),
                    _ => f64::INFINITY,
                })
                .fold(0.0, f64::max);
            ctx.check(
                "cylinder_profile",
                worst <= 1e-6,
                format!("max relative error {worst:e}"),
            );
            let exact = cylinder_collapse_time(radius, d);
            match &traj.pinch {
                Some(p) => {
                    let rel = (p.t_star - exact).abs() / exact;
                    ctx.check(
                        "cylinder_pinch_time",
                        rel <= 1e-4,
                        format!("t* = {}, relative error {rel:e}", p.t_star),
                    );
                }
                None => ctx.check(
                    "cylinder_pinch_time",
                    false,
                    traj.pinch_error.clone().unwrap_or_default(),
                ),
            }
        }
        DatumKind::Sphere { radius } => {
            let life = radius * radius / (2.0 * d as f64);
            let worst = traj
                .snapshots
                .iter()
                .filter(|p| p.t <= 0.9 * life)
                .map(|p| {
                    let r = sphere_radius(radius, d, p.t).unwrap_or(f64::NAN);
                    (p.u[0] - r).abs() / r
                })
                .fold(0.0, f64::max);
            ctx.check(
                "sphere_center",
                worst <= 1e-5,
                format!("max relative error {worst:e}"),
            );
        }
        DatumKind::Neckpinch => {
            let m = mean_curvature_sign_check(traj, 1e-6);
            ctx.check(
                "mean_curvature_sign",
                m.chi_ok,
                format!(
                    "max chi {:e}",
                    m.chi_series
                        .iter()
                        .map(|c| c.1)
                        .fold(f64::NEG_INFINITY, f64::max)
                ),
            );
            ctx.check(
                "radius_nonincreasing",
                m.monotone,
                format!("max increase {:e}", m.max_increase),
            );
            let reached = traj
                .records
                .last()
                .is_some_and(|r| r.u_min <= ctx.cfg.u_min_stop() * (1.0 + 1e-12));
            ctx.check(
                "single_point_pinch",
                m.probes_bounded && reached,
                format!(
                    "probe infima {:?}, threshold reached: {reached}",
                    m.probe_inf
                ),
            );
            match &traj.pinch {
                Some(p) => {
                    ctx.check(
                        "pinch_time_fit",
                        true,
                        format!("t* = {}, R^2 = {}", p.t_star, p.r_squared),
                    );
                    match type_one_check(traj, p.t_star) {
                        Ok(t) => ctx.check(
                            "type_one_plateau",
                            t.plateau,
                            format!(
                                "constant {}, final-decade growth {:.4}",
                                t.constant, t.final_decade_growth
                            ),
                        ),
                        Err(e) => ctx.check("type_one_plateau", false, e.to_string()),
                    }
                }
                None => ctx.check(
                    "pinch_time_fit",
                    false,
                    traj.pinch_error.clone().unwrap_or_default(),
                ),
            }
        }
    }
}

fn rescaled(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let run = match load_checkpoint(ctx)? {
        Some(RunState::Rescaled(r)) => *r,
        Some(RunState::Physical(_)) if !matches!(ctx.opts.checkpoint, None) => {
            return Err(Error::IncompatibleCheckpoint(
                "checkpoint is not a rescaled run".into(),
            ))
        }
        _ => RescaledRun::new(cfg)?,
    };
    let every = ctx.opts.checkpoint_every.max(1);
    let ck = ctx.opts.checkpoint.clone();
    let id = ctx.run_id.clone();
    let out = run.run_with(cfg.budget_seconds, |r| match &ck {
        Some(p) if r.accepted % every == 0 => {
            Checkpoint::new(&id, RunState::Rescaled(Box::new(r.clone()))).save(p)
        }
        _ => Ok(()),
    })?;
    write_rescaled(ctx, &out)?;
    ctx.check(
        "rescaled_run_completed",
        out.stop != StopReason::TauMax || cfg.rescaled.tau_max.is_some(),
        format!(
            "{:?} after {} steps at tau = {}",
            out.stop, out.accepted, out.last.tau
        ),
    );
    if let StopReason::Error { kind, message } = &out.stop {
        ctx.check(
            "rescaled_run_clean_stop",
            false,
            format!("{kind}: {message}"),
        );
    }
    Ok(())
}

fn write_rescaled(ctx: &mut Ctx, out: &RescaledOutcome) -> Result<()> {
    let id = ctx.run_id.clone();
    let diags = diagnostics_series(&out.history, out.d);
    io::fit_log_csv(&out.history, &id).write(&ctx.path("fit_log.csv"))?;
    io::diagnostics_csv(&diags, &id).write(&ctx.path("diagnostics.csv"))?;
    io::barrier_csv(&out.history, &diags, &id).write(&ctx.path("barrier.csv"))?;
    for (k, s) in out.snapshots.iter().enumerate() {
        io::rescaled_snapshot_csv(s, &id)
            .write(&ctx.path(&format!("rescaled_snapshot_{k:04}.csv")))?;
    }
    let path = ctx.path("rescaled.json");
    io::write_json(&path, "rescaled", &id, out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct FitReport {
    exact_member: ModulationFit,
    exact_error: (f64, f64),
    initial: ModulationFit,
}

fn fit(ctx: &mut Ctx) -> Result<()> {
    let cfg = ctx.cfg;
    let state = match cfg.datum {
        DatumKind::Sphere { .. } => return Ok(()),
        _ => initial_collapse_state(cfg)?,
    };
    let opts = FitOptions {
        tol: cfg.rescaled.fit_tol,
        ..FitOptions::default()
    };
    let member = AlmostSolution::new(0.5, 0.1, cfg.d)?.on(&state.grid);
    let exact = fit_parameters(&state.grid, &member, cfg.d, (0.45, 0.12), &opts)?;
    let err = ((exact.a - 0.5).abs(), (exact.b - 0.1).abs());
    ctx.check(
        "fit_recovers_member",
        err.0 <= 1e-10 && err.1 <= 1e-10,
        format!("|da| = {:e}, |db| = {:e}", err.0, err.1),
    );
    let initial = fit_parameters(
        &state.grid,
        &state.v,
        cfg.d,
        cold_start_guess(&state.grid, &state.v),
        &opts,
    )?;
    ctx.check(
        "fit_initial_datum",
        initial.converged,
        format!(
            "a = {}, b = {}, {} iterations",
            initial.a, initial.b, initial.iterations
        ),
    );
    let path = ctx.path("fit.json");
    io::write_json(
        &path,
        "fit",
        &ctx.run_id.clone(),
        &FitReport {
            exact_member: ModulationFit {
                phi: Vec::new(),
                ..exact
            },
            exact_error: err,
            initial: ModulationFit {
                phi: Vec::new(),
                ..initial
            },
        },
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub alpha: f64,
    pub flat: ProbeResult,
    pub flat_bound: f64,
    pub potential: ProbeResult,
    /// Same probe on the grid with twice the spacing.
    pub potential_coarse: ProbeResult,
}

/// Flat `n = 2` probe on `phi_2` and the `n = 3` potential probe on
/// `z^3 e^{-alpha z^2/4}` at spacings `h` and `2h`.
pub fn spectral_probes(cfg: &SimConfig, alpha: f64) -> Result<ProbeRecord> {
    let sc = &cfg.spectrum;
    let grid = LineGrid::new(sc.half_width, sc.spacing)?;
    let coarse = LineGrid::new(sc.half_width, 2.0 * sc.spacing)?;
    let spec = |n: usize, beta: Option<f64>| ProbeSpec {
        n,
        alpha,
        beta,
        d: cfg.d,
        horizon: sc.probe_horizon,
        dt: 0.01,
        window: ProbeSpec::default_window(alpha),
    };
    let phi2 = hermite_modes(alpha, &grid)?.modes[2].clone();
    let flat = propagator_decay_probe(&spec(2, None), &phi2, &grid)?;
    let seed = |g: &LineGrid| g.map(|z| z.powi(3) * (-0.25 * alpha * z * z).exp());
    let potential = propagator_decay_probe(&spec(3, Some(sc.beta)), &seed(&grid), &grid)?;
    let potential_coarse =
        propagator_decay_probe(&spec(3, Some(sc.beta)), &seed(&coarse), &coarse)?;
    Ok(ProbeRecord {
        alpha,
        flat,
        flat_bound: alpha,
        potential,
        potential_coarse,
    })
}

fn spectrum(ctx: &mut Ctx) -> Result<()> {
    let sc = ctx.cfg.spectrum.clone();
    let grid = LineGrid::new(sc.half_width, sc.spacing)?;
    let mut blocks = Vec::new();
    let mut probes = Vec::new();
    for &alpha in &sc.alphas {
        let shifted = discrete_spectrum(
            &assemble_operator(OperatorId::ShiftedOscillator { alpha }, &grid)?,
            sc.modes,
        )?;
        let worst = shifted
            .iter()
            .map(|e| (e.eigenvalue - alpha * (e.index as f64 - 2.0)).abs())
            .fold(0.0, f64::max);
        ctx.check(
            &format!("ladder_alpha_{alpha}"),
            worst <= 1e-4,
            format!("max deviation {worst:e}"),
        );
        let osc = discrete_spectrum(
            &assemble_operator(OperatorId::Oscillator { alpha }, &grid)?,
            9,
        )?;
        let gap = osc
            .windows(2)
            .map(|w| ((w[1].eigenvalue - w[0].eigenvalue) / alpha - 1.0).abs())
            .fold(0.0, f64::max);
        ctx.check(
            &format!("gaps_alpha_{alpha}"),
            gap <= 0.02,
            format!("max relative gap error {gap:e}"),
        );
        let perturbed = discrete_spectrum(
            &assemble_operator(
                OperatorId::Perturbed {
                    alpha,
                    beta: sc.beta,
                    d: ctx.cfg.d,
                },
                &grid,
            )?,
            sc.modes,
        )?;
        blocks.push((alpha, "shifted_oscillator".to_string(), shifted));
        blocks.push((alpha, "oscillator".to_string(), osc));
        blocks.push((alpha, "perturbed".to_string(), perturbed));
        let p = spectral_probes(ctx.cfg, alpha)?;
        let rel = (p.flat.rate - p.flat_bound).abs() / p.flat_bound;
        ctx.check(
            &format!("flat_probe_alpha_{alpha}"),
            rel <= 0.1,
            format!("rate {} vs {alpha}", p.flat.rate),
        );
        let stable = (p.potential.rate - p.potential_coarse.rate).abs() / p.potential.rate.abs();
        ctx.check(
            &format!("potential_probe_alpha_{alpha}"),
            p.potential.rate > 0.0 && stable <= 0.05,
            format!(
                "c0 = {} (coarse {}), relative spread {stable:e}",
                p.potential.rate, p.potential_coarse.rate
            ),
        );
        probes.push(p);
    }
    let id = ctx.run_id.clone();
    io::spectrum_csv(&blocks, &id).write(&ctx.path("spectrum.csv"))?;
    let path = ctx.path("probe.json");
    io::write_json(&path, "probe", &id, &probes)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub pinch: Option<PinchEstimate>,
    pub asymptotics: Option<AsymptoticsReport>,
    pub estimating_ratio: Option<f64>,
    pub gamma_constant: (f64, f64),
    pub barrier_failures: usize,
    pub rho_failures: usize,
    pub type_one: Option<TypeOneReport>,
    pub checks: Vec<Check>,
}

/// Read a stored JSON body, dropping the stamp fields.
fn read_stored<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// Checks on the stored histories of a rescaled and (if present) a
/// physical run.
pub fn verify_histories(out: &RescaledOutcome, traj: Option<&Trajectory>) -> VerifyReport {
    let mut checks = Vec::new();
    let h = &out.history;
    let t: Vec<f64> = h.iter().map(|r| r.t).collect();
    let u: Vec<f64> = h.iter().map(|r| r.lambda * r.v0).collect();
    let pinch = estimate_pinch_time_samples(&t, &u);
    let diags = diagnostics_series(h, out.d);
    let mut report = VerifyReport {
        pinch: pinch.as_ref().ok().cloned(),
        asymptotics: None,
        estimating_ratio: None,
        gamma_constant: (f64::NAN, f64::NAN),
        barrier_failures: diags.iter().filter(|r| !r.barrier_ok).count(),
        rho_failures: 0,
        type_one: None,
        checks: Vec::new(),
    };
    match &pinch {
        Ok(p) => match verify_asymptotics(h, p.t_star, out.d) {
            Ok(a) => {
                checks.push(Check::new(
                    "lambda_law_terminal",
                    a.lambda_law.terminal_ok,
                    format!(
                        "lambda / sqrt(t* - t) = {} at the end of the window",
                        a.lambda_law.terminal
                    ),
                ));
                checks.push(Check::new(
                    "b_law_window",
                    a.b_law.window_ok,
                    law_detail(&a.b_law.points, a.b_law.band),
                ));
                checks.push(Check::new(
                    "c_law_window",
                    a.c_law.window_ok,
                    law_detail(&a.c_law.points, a.c_law.band),
                ));
                report.asymptotics = Some(a);
            }
            Err(e) => checks.push(Check::new("asymptotic_laws", false, e.to_string())),
        },
        Err(e) => checks.push(Check::new("rescaled_pinch_time", false, e.to_string())),
    }
    estimating_checks(
        &diags,
        out.d,
        pinch.as_ref().ok().map(|p| p.t_star),
        &mut report,
        &mut checks,
    );
    report.rho_failures = h
        .iter()
        .zip(&diags)
        .filter(|(r, dg)| {
            r.rho_central_max > 4.0 * dg.beta
                || (out.datum_qualifies && r.rho_outer_min.is_some_and(|m| m < -1.0))
        })
        .count();
    checks.push(Check::new(
        "barrier_nodewise",
        report.barrier_failures == 0,
        format!(
            "{} of {} diagnostic times fail",
            report.barrier_failures,
            diags.len()
        ),
    ));
    checks.push(Check::new(
        "rho_bounds",
        report.rho_failures == 0,
        format!(
            "{} of {} diagnostic times fail",
            report.rho_failures,
            diags.len()
        ),
    ));
    if let Some(traj) = traj {
        if let Some(p) = &traj.pinch {
            match type_one_check(traj, p.t_star) {
                Ok(t) => {
                    checks.push(Check::new(
                        "type_one_plateau",
                        t.plateau,
                        format!("growth {:.4} over the final decade", t.final_decade_growth),
                    ));
                    report.type_one = Some(t);
                }
                Err(e) => checks.push(Check::new("type_one_plateau", false, e.to_string())),
            }
        }
        let m = mean_curvature_sign_check(traj, 1e-6);
        checks.push(Check::new(
            "single_point_pinch",
            m.probes_bounded,
            format!("probe infima {:?}", m.probe_inf),
        ));
    }
    report.checks = checks;
    report
}

fn law_detail(points: &[(f64, f64)], band: (f64, f64)) -> String {
    let lo = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    format!(
        "range [{lo:.4}, {hi:.4}] vs band [{}, {}] over {} points",
        band.0,
        band.1,
        points.len()
    )
}

fn estimating_checks(
    diags: &[DiagnosticsRecord],
    d: u32,
    t_star: Option<f64>,
    report: &mut VerifyReport,
    checks: &mut Vec<Check>,
) {
    let Some(last) = diags.last() else {
        checks.push(Check::new(
            "estimating_functions_bounded",
            false,
            "no diagnostics".into(),
        ));
        return;
    };
    let trusted: Vec<&DiagnosticsRecord> = diags
        .iter()
        .filter(|r| match t_star {
            Some(ts) => TrustWindow::for_run(last.tau, last.t, ts).contains(r.tau, ts - r.t),
            None => r.tau >= 1.0 && r.tau <= last.tau - 1.0,
        })
        .collect();
    match (diags.iter().find(|r| r.tau >= 1.0), trusted.last()) {
        (Some(at1), Some(end)) => {
            // running maxima, so the last trusted record carries the window sup
            let pairs = at1
                .m
                .iter()
                .zip(&end.m)
                .chain([(&at1.a_fn, &end.a_fn), (&at1.b_fn, &end.b_fn)]);
            let ratio = pairs
                .map(|(a, b)| if *b == 0.0 { 1.0 } else { b / a })
                .fold(0.0, f64::max);
            checks.push(Check::new(
                "estimating_functions_bounded",
                ratio <= 10.0,
                format!(
                    "max window / tau=1 ratio {ratio:.4} up to tau = {:.3}",
                    end.tau
                ),
            ));
            report.estimating_ratio = Some(ratio);
        }
        _ => checks.push(Check::new(
            "estimating_functions_bounded",
            false,
            "no record in the trust window after tau = 1".into(),
        )),
    }
    let second: Vec<&DiagnosticsRecord> =
        diags.iter().filter(|r| r.tau >= 0.5 * last.tau).collect();
    let (k, spread) = gamma_constant_spread(diags, 0.5 * last.tau, last.tau);
    checks.push(Check::new(
        "gamma_beta_cubed",
        spread < 5.0,
        format!("K = {k:e}, spread {spread:.4} over the second half"),
    ));
    report.gamma_constant = (k, spread);
    let dm1 = (d - 1) as f64;
    let kb: Vec<f64> = second
        .iter()
        .map(|r| (r.b - r.beta) / r.beta.powf(1.75))
        .collect();
    let (k, spread) = constant_spread(&kb);
    checks.push(Check::new(
        "b_tracks_beta",
        spread < 5.0,
        format!(
            "|b - beta| <= K beta^(7/4) with K = {k:.4}, spread {spread:.4} over the second half"
        ),
    ));
    let ka: Vec<f64> = second
        .iter()
        .map(|r| (r.a - 0.5 + r.b / dm1) / (r.beta * r.beta))
        .collect();
    let (k, spread) = constant_spread(&ka);
    checks.push(Check::new(
        "a_tracks_b",
        spread < 5.0,
        format!("|a - 1/2 + b/(d-1)| <= K beta^2 with K = {k:.4}, spread {spread:.4} over the second half"),
    ));
    let mut ratios: Vec<f64> = diags
        .iter()
        .map(|r| r.remainder_ratio)
        .filter(|r| r.is_finite())
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = ratios.get(ratios.len() / 2).copied().unwrap_or(f64::NAN);
    let worst = ratios.last().copied().unwrap_or(f64::NAN);
    checks.push(Check::new(
        "remainder_bound",
        worst < 10.0 * median,
        format!("max remainder / b^2 {worst:.4e}, median {median:.4e}"),
    ));
}

fn verify(ctx: &mut Ctx) -> Result<()> {
    let dir = ctx.opts.out_dir.clone();
    let rescaled_path = dir.join("rescaled.json");
    if !rescaled_path.exists() {
        return Err(Error::InvalidInput(format!(
            "{} not found; run the rescaled mode first",
            rescaled_path.display()
        )));
    }
    let out: RescaledOutcome = read_stored(&rescaled_path)?;
    let traj_path = dir.join("trajectory.json");
    let traj: Option<Trajectory> = if traj_path.exists() {
        Some(read_stored(&traj_path)?)
    } else {
        None
    };
    let report = verify_histories(&out, traj.as_ref());
    for c in &report.checks {
        ctx.check(&c.name, c.passed, c.detail.clone());
    }
    let path = ctx.path("report.json");
    io::write_json(&path, "report", &ctx.run_id.clone(), &report)
}
