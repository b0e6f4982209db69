use neckpinch_core::barriers::rho_values;
use neckpinch_core::collapse::{
    gauge, inverse_gauge, rescaled_rhs, step_rescaled, to_collapse_vars, w_rhs,
};
use neckpinch_core::pde::{make_initial_datum, PhysicalStepper};
use neckpinch_core::{
    AlmostSolution, CollapseState, Grid, RadialProfile, RescaledRun, SimConfig, StepControl,
};
use proptest::prelude::*;

fn state(grid: Grid, v: Vec<f64>, a: f64, b: f64) -> CollapseState {
    CollapseState {
        grid,
        v,
        lambda_sq: 1.0,
        t: 0.0,
        tau: 0.0,
        a,
        b,
        d: 2,
    }
}

#[test]
fn one_step_matches_euler_prediction() {
    let grid = Grid::sinh(20.0, 400, 3.0).unwrap();
    let v = AlmostSolution {
        a: 0.5,
        b: 0.1,
        d: 2,
    }
    .on(&grid);
    let s = state(grid, v, 0.5, 0.1);
    let dtau = 1e-3;
    let rhs = rescaled_rhs(&s).unwrap();
    let next = step_rescaled(&s, dtau, &StepControl::default()).unwrap();
    let n = s.v.len() - 1;
    for i in 0..n {
        let euler = s.v[i] + dtau * rhs[i];
        assert!(
            (next.v[i] - euler).abs() <= 1e-6,
            "node {i}: {} vs {euler}",
            next.v[i]
        );
    }
    assert!((next.tau - dtau).abs() < 1e-15);
}

/// Largest relative gap between the rescaled run and the transformed
/// physical run on `|y| <= 5`, sampled up to `tau = 5`.
fn frame_gap(cfg: &SimConfig) -> f64 {
    let mut run = RescaledRun::new(cfg).unwrap();
    run.tau_max = Some(5.0);
    let mut states: Vec<CollapseState> = Vec::new();
    let out = run
        .run_with(None, |r| {
            if r.accepted % 25 == 0 {
                states.push(r.state.clone());
            }
            Ok(())
        })
        .unwrap();
    states.push(out.last);
    let datum = make_initial_datum(cfg).unwrap();
    let mut stepper = PhysicalStepper::new(cfg.integrator, datum.far);
    let mut p = datum.profile;
    let mut worst = 0.0_f64;
    for s in &states {
        p = stepper.advance_to(p, s.t).unwrap();
        let back = to_collapse_vars(&p, s.lambda(), &s.grid).unwrap();
        for ((&y, a), b) in s.grid.nodes().iter().zip(&back.v).zip(&s.v) {
            if y <= 5.0 {
                worst = worst.max((a - b).abs() / b);
            }
        }
    }
    worst
}

#[test]
fn physical_and_collapse_frames_agree() {
    let coarse = frame_gap(&SimConfig::default());
    let fine = frame_gap(&SimConfig::default().with_grid_scale(2.0).unwrap());
    // the two frames discretize on different grids, so the gap is the
    // spatial truncation error and must shrink at second order
    assert!(coarse < 2e-4, "gap {coarse:e}");
    assert!(coarse / fine >= 3.0, "gaps {coarse:e}, {fine:e}");
}

fn conjugation_error(n: usize, a_tau: f64) -> f64 {
    let (a, d) = (0.45, 2);
    let grid = Grid::sinh(12.0, n, 2.0).unwrap();
    let v = grid.map(|y| (2.0 + 0.1 * y * y).sqrt() * (1.0 + 0.1 * (-y * y).exp()));
    let s = CollapseState {
        d,
        ..state(grid.clone(), v, a, 0.0)
    };
    let w = gauge(&grid, &s.v, a);
    let lhs: Vec<f64> = rescaled_rhs(&s)
        .unwrap()
        .iter()
        .zip(grid.nodes())
        .zip(&w)
        .map(|((r, &y), w)| (-0.25 * a * y * y).exp() * r - 0.25 * a_tau * y * y * w)
        .collect();
    let rhs = w_rhs(&grid, &w, a, a_tau, d);
    grid.nodes()
        .iter()
        .zip(lhs.iter().zip(&rhs))
        .filter(|(&y, _)| y <= 8.0)
        .map(|(_, (l, r))| (l - r).abs())
        .fold(0.0, f64::max)
}

#[test]
fn gauged_equation_is_conjugate() {
    for a_tau in [0.0, 0.03] {
        let (e1, e2) = (conjugation_error(200, a_tau), conjugation_error(400, a_tau));
        assert!(e1 < 1e-3, "a_tau {a_tau}: error {e1:e}");
        assert!(e1 / e2 > 3.0, "a_tau {a_tau}: errors {e1:e}, {e2:e}");
    }
}

#[test]
fn tau_accounting_is_exact() {
    let mut cfg = SimConfig::default();
    cfg.rescaled.tau_max = Some(4.0);
    let out = RescaledRun::new(&cfg).unwrap().run(None).unwrap();
    let h = &out.history;
    // with a frozen over a step, lambda^2 is affine in t
    let mut integral = 0.0;
    for w in h.windows(2) {
        let (l0, l1) = (w[0].lambda.powi(2), w[1].lambda.powi(2));
        integral += (l0 / l1).ln() / (2.0 * w[0].a);
        let predicted = l0 - 2.0 * w[0].a * (w[1].t - w[0].t);
        assert!((predicted - l1).abs() <= 1e-12 * l0);
    }
    let tau = h.last().unwrap().tau;
    assert!(((tau - integral) / tau).abs() <= 1e-8);
}

#[test]
fn rho_is_frame_invariant() {
    let grid = Grid::sinh(20.0, 2000, 2.0).unwrap();
    let u = RadialProfile::from_fn(grid.clone(), 2, 0.0, |x| {
        (2.0 + 0.1 * x * x).sqrt() + 0.01 * x * x * (-x * x).exp()
    })
    .unwrap();
    let rho_u = rho_values(&grid, &u.u);
    let lambda = 0.3;
    let y_grid = Grid::sinh(20.0, 400, 3.0).unwrap();
    let s = to_collapse_vars(&u, lambda, &y_grid).unwrap();
    let rho_v = rho_values(&s.grid, &s.v);
    let p = grid.interpolator(&rho_u);
    for (&y, r) in s.grid.nodes().iter().zip(&rho_v).take(s.grid.len() - 1) {
        let r_u = p.eval(lambda * y).unwrap();
        assert!((r - r_u).abs() < 1e-4, "y = {y}: {r} vs {r_u}");
    }
}

proptest! {
    #[test]
    fn gauge_round_trip(a in 0.25f64..1.0, c in 0.5f64..3.0, eps in 0.0f64..0.3) {
        let grid = Grid::sinh(20.0, 100, 3.0).unwrap();
        let v = grid.map(|y| (c + eps * y * y).sqrt());
        let back = inverse_gauge(&grid, &gauge(&grid, &v, a), a);
        for (x, y) in v.iter().zip(&back) {
            prop_assert!((x - y).abs() <= 1e-13 * x);
        }
    }

    #[test]
    fn frozen_static_cylinder_has_zero_rhs(a in 0.25f64..1.0, d in 2u32..6) {
        let grid = Grid::sinh(20.0, 100, 3.0).unwrap();
        let va = (((d - 1) as f64) / a).sqrt();
        let s = CollapseState { d, ..state(grid.clone(), vec![va; grid.len()], a, 0.0) };
        for r in rescaled_rhs(&s).unwrap() {
            prop_assert!(r.abs() <= 1e-12 * va);
        }
    }
}
