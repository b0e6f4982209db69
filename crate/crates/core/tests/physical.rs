use neckpinch_core::config::PerturbationShape;
use neckpinch_core::pde::{
    curvature_norm, datum_report, make_initial_datum, mcf_rhs, run_physical,
};
use neckpinch_core::{DatumKind, Grid, RadialProfile, SimConfig};
use proptest::prelude::*;

fn max_error(grid: &Grid, got: &[f64], exact: impl Fn(f64) -> f64, skip_last: usize) -> f64 {
    let n = got.len() - skip_last;
    grid.nodes()[..n]
        .iter()
        .zip(got)
        .map(|(&x, g)| (g - exact(x)).abs())
        .fold(0.0, f64::max)
}

#[test]
fn cylinder_run_stops_at_threshold() {
    let mut cfg = SimConfig::default();
    cfg.datum = DatumKind::Cylinder { radius: 1.0 };
    cfg.stop.u_min_stop = Some(0.05);
    cfg.grid.intervals = 100;
    let traj = run_physical(&cfg).unwrap();
    let last = traj.records.last().unwrap();
    // sqrt(1 - 2 t) = 0.05
    let t_stop = 0.5 * (1.0 - 0.05 * 0.05);
    assert!((last.t - t_stop).abs() < 1e-3, "stopped at t = {}", last.t);
    assert!(last.u_min < 0.06);
    let t_star = traj.pinch.as_ref().unwrap().t_star;
    assert!((t_star - 0.5).abs() < 1e-4, "t* = {t_star}");
}

/// `sup <x>^{-m} |∂^n (x^2 e^{-x^2})|` scanned on a dense grid.
fn x2_gauss_norm(amp: f64, m: f64, n: usize) -> f64 {
    let deriv = |x: f64| {
        let g = (-x * x).exp();
        match n {
            0 => x * x * g,
            1 => (2.0 * x - 2.0 * x.powi(3)) * g,
            2 => (2.0 - 10.0 * x * x + 4.0 * x.powi(4)) * g,
            _ => unreachable!(),
        }
    };
    (0..=200_000)
        .map(|i| {
            let x = i as f64 * 1e-4;
            amp * deriv(x).abs() * (1.0 + x * x).powf(-0.5 * m)
        })
        .fold(0.0, f64::max)
}

#[test]
fn small_perturbation_is_in_class() {
    let mut cfg = SimConfig::default();
    cfg.eps0 = 0.05;
    cfg.varsigma0 = 1.0;
    cfg.perturbation.shape = PerturbationShape::X2Gauss;
    cfg.perturbation.amplitude = 1e-4;
    let datum = make_initial_datum(&cfg).unwrap();
    let report = datum.report.unwrap();
    for norm in &report.norms {
        let oracle = x2_gauss_norm(1e-4, norm.m, norm.n);
        assert!(
            (norm.value - oracle).abs() <= 0.02 * oracle,
            "norm ({}, {}): {} vs {oracle}",
            norm.m,
            norm.n,
            norm.value
        );
        assert!(norm.ok, "norm ({}, {}) over budget", norm.m, norm.n);
    }
    assert!(report.lower_bound_ok);
}

#[test]
fn unperturbed_datum_has_zero_norms() {
    let cfg = SimConfig::default();
    let datum = make_initial_datum(&cfg).unwrap();
    let report = datum_report(&cfg, &datum.profile);
    assert!(report.norms.iter().all(|n| n.value == 0.0));
    assert!(report.in_class);
}

fn rhs_error_sqrt(n: usize) -> f64 {
    // u = sqrt(2 + x^2): u_xx / (1 + u_x^2) = 1 / (u (1 + x^2))
    let grid = Grid::sinh(10.0, n, 2.0).unwrap();
    let p = RadialProfile::from_fn(grid.clone(), 2, 0.0, |x| (2.0 + x * x).sqrt()).unwrap();
    let rhs = mcf_rhs(&p).unwrap();
    max_error(
        &grid,
        &rhs,
        |x| {
            let u = (2.0 + x * x).sqrt();
            1.0 / (u * (1.0 + x * x)) - 1.0 / u
        },
        1,
    )
}

#[test]
fn rhs_is_second_order_on_a_paraboloid() {
    let (e1, e2) = (rhs_error_sqrt(200), rhs_error_sqrt(400));
    assert!(e1 < 1e-3, "error {e1}");
    assert!(e1 / e2 > 3.5, "ratio {}", e1 / e2);
}

fn rhs_error_sphere(n: usize) -> f64 {
    let grid = Grid::sinh(0.8, n, 0.0).unwrap();
    let p = RadialProfile::from_fn(grid.clone(), 2, 0.0, |x| (1.0 - x * x).sqrt()).unwrap();
    let rhs = mcf_rhs(&p).unwrap();
    max_error(&grid, &rhs, |x| -2.0 / (1.0 - x * x).sqrt(), 1)
}

#[test]
fn sphere_rhs_converges_under_refinement() {
    let (e1, e2) = (rhs_error_sphere(50), rhs_error_sphere(100));
    assert!(e1 / e2 >= 3.0, "errors {e1:e}, {e2:e}");
}

#[test]
fn sphere_curvature_at_the_pole() {
    let grid = Grid::sinh(0.5, 200, 0.0).unwrap();
    let p = RadialProfile::from_fn(grid, 2, 0.0, |x| (1.0 - x * x).sqrt()).unwrap();
    let a = curvature_norm(&p).unwrap();
    assert!((a.values[0] - 2f64.sqrt()).abs() < 1e-4);
}

proptest! {
    #[test]
    fn constant_profile_rhs(c in 0.1f64..10.0, d in 2u32..7) {
        let grid = Grid::sinh(5.0, 40, 1.0).unwrap();
        let p = RadialProfile::from_fn(grid, d, 0.0, |_| c).unwrap();
        let expect = -((d - 1) as f64) / c;
        for r in mcf_rhs(&p).unwrap() {
            prop_assert!((r - expect).abs() <= 1e-12 * expect.abs());
        }
    }

    #[test]
    fn cylinder_curvature(r in 0.05f64..20.0, d in 2u32..7) {
        let grid = Grid::sinh(3.0, 30, 0.0).unwrap();
        let p = RadialProfile::from_fn(grid, d, 0.0, |_| r).unwrap();
        let a = curvature_norm(&p).unwrap();
        let expect = ((d - 1) as f64).sqrt() / r;
        prop_assert!((a.max - expect).abs() <= 1e-12 * expect);
    }

    #[test]
    fn rhs_scales_parabolically(s in 0.2f64..5.0, eps in 0.01f64..1.0) {
        // rhs of s u(x / s) is rhs(u)(x / s) / s
        let grid = Grid::sinh(8.0, 80, 2.0).unwrap();
        let p = RadialProfile::from_fn(grid, 3, 0.0, |x| (4.0 + eps * x * x).sqrt()).unwrap();
        let base = mcf_rhs(&p).unwrap();
        let scaled = mcf_rhs(&p.scaled(s)).unwrap();
        for (b, q) in base.iter().zip(&scaled) {
            prop_assert!((q * s - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }
}
