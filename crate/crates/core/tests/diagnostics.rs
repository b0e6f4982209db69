use neckpinch_core::diagnostics::{
    beta, estimate_pinch_time_samples, estimating_functions, remainder_bound_check, type_one_check,
    verify_asymptotics,
};
use neckpinch_core::pde::TrajectoryRecord;
use neckpinch_core::{FitRecord, Grid, Trajectory};
use proptest::prelude::*;

fn record(tau: f64, t: f64, lambda: f64, a: f64, b: f64, phi_norms: [f64; 4]) -> FitRecord {
    FitRecord {
        tau,
        t,
        lambda,
        a,
        b,
        iterations: 1,
        ortho: [0.0; 2],
        condition: 1.0,
        at_boundary: false,
        a_out_of_box: false,
        guess_in_neighbourhood: true,
        phi_norms,
        v0: 1.0,
        barrier_margin: 0.0,
        barrier_worst_y: 0.0,
        rho_central_max: 0.0,
        rho_outer_min: None,
        chi_max: -1.0,
    }
}

#[test]
fn estimating_functions_vanish_on_the_leading_law() {
    let (b0, d) = (0.1, 2);
    let h: Vec<FitRecord> = (0..50)
        .map(|k| {
            let tau = 0.2 * k as f64;
            let bt = beta(tau, b0, d);
            record(tau, 0.0, 1.0, 0.5 - bt, bt, [0.0; 4])
        })
        .collect();
    let e = estimating_functions(&h, d);
    assert_eq!(e.m, [0.0; 4]);
    assert!(e.a_fn < 1e-12 && e.b_fn < 1e-12, "{e:?}");
}

#[test]
fn single_record_normalization() {
    let b0 = 0.1;
    let h = [record(
        0.0,
        0.0,
        1.0,
        0.5 - b0,
        b0,
        [b0 * b0, 0.0, 0.0, 0.0],
    )];
    let e = estimating_functions(&h, 2);
    assert!((e.m[0] - 1.0).abs() < 1e-12);
}

#[test]
fn b_function_of_a_shifted_history() {
    let (b0, d) = (0.1, 3);
    let dm1 = (d - 1) as f64;
    let h: Vec<FitRecord> = (0..40)
        .map(|k| {
            let tau = 0.5 * k as f64;
            let bt = beta(tau, b0, d);
            // the first record fixes b0, so only later records are shifted
            let b = if k == 0 {
                b0
            } else {
                bt * (1.0 + bt.powf(0.75))
            };
            record(tau, 0.0, 1.0, 0.5 - b / dm1, b, [0.0; 4])
        })
        .collect();
    let e = estimating_functions(&h, d);
    assert!((e.b_fn - 1.0).abs() < 1e-10, "B = {}", e.b_fn);
}

#[test]
fn manufactured_asymptotics_round_trip() {
    let (t_star, d) = (1.0, 2);
    let dm1 = (d - 1) as f64;
    let h: Vec<FitRecord> = (0..=60)
        .map(|k| {
            let gap = 10f64.powf(-0.1 * k as f64);
            let l = gap.ln();
            let c = 1.0 + 1.0 / l;
            record(-l, t_star - gap, gap.sqrt(), c - 0.5, -dm1 / l, [0.0; 4])
        })
        .collect();
    let r = verify_asymptotics(&h, t_star, d).unwrap();
    assert!(r.decades >= 2.0);
    for (law, target) in [(&r.lambda_law, 1.0), (&r.b_law, -dm1), (&r.c_law, 1.0)] {
        assert!(law.window_ok && law.terminal_ok);
        for p in &law.points {
            assert!((p.1 - target).abs() < 1e-8, "{} vs {target}", p.1);
        }
    }
}

/// Exact trajectory sampled at `t* - t = 10^{-k/20}` with the given `|A|`.
fn exact_trajectory(t_star: f64, u: impl Fn(f64) -> f64, curv: impl Fn(f64) -> f64) -> Trajectory {
    let records = (1..=140)
        .map(|k| {
            let t = t_star - t_star * 10f64.powf(-0.05 * k as f64);
            TrajectoryRecord {
                t,
                u_min: u(t),
                max_curvature: curv(t),
                dt: 0.0,
                probes: Vec::new(),
            }
        })
        .collect();
    Trajectory {
        d: 2,
        u0_center: u(0.0),
        probe_x: Vec::new(),
        records,
        snapshots: Vec::new(),
        pinch: None,
        pinch_error: None,
    }
}

#[test]
fn type_one_constant_of_cylinder_and_sphere() {
    let cyl = exact_trajectory(
        0.5,
        |t| (1.0 - 2.0 * t).sqrt(),
        |t| 1.0 / (1.0 - 2.0 * t).sqrt(),
    );
    let sph = exact_trajectory(
        0.25,
        |t| (1.0 - 4.0 * t).sqrt(),
        |t| 2f64.sqrt() / (1.0 - 4.0 * t).sqrt(),
    );
    for (traj, t_star) in [(cyl, 0.5), (sph, 0.25)] {
        let r = type_one_check(&traj, t_star).unwrap();
        assert!((r.constant - 0.5f64.sqrt()).abs() < 1e-12, "{}", r.constant);
        assert!(r.plateau);
    }
}

#[test]
fn cylinder_pinch_time() {
    let t: Vec<f64> = (0..400).map(|k| 0.5 * (1.0 - 0.98f64.powi(k))).collect();
    let u: Vec<f64> = t.iter().map(|t| (1.0 - 2.0 * t).sqrt()).collect();
    let p = estimate_pinch_time_samples(&t, &u).unwrap();
    assert!((p.t_star - 0.5).abs() < 1e-6);
    assert!(p.sensitivity < 1e-6);
}

#[test]
fn remainder_of_a_gaussian() {
    let b = 0.2;
    let grid = Grid::sinh(8.0, 40_000, 0.0).unwrap();
    let phi = grid.map(|y| b * b * (-y * y).exp());
    // sup <y>^{-m} |∂^n e^{-y^2}| for (3,0), (2,1), (1,2), scanned finely
    let sup = |f: &dyn Fn(f64) -> f64| {
        (0..=800_000)
            .map(|i| f(i as f64 * 1e-5).abs())
            .fold(0.0, f64::max)
    };
    let w = |y: f64, m: f64| (1.0 + y * y).powf(-0.5 * m);
    let expect = sup(&|y| w(y, 3.0) * (-y * y).exp())
        + sup(&|y| w(y, 2.0) * 2.0 * y * (-y * y).exp())
        + sup(&|y| w(y, 1.0) * (4.0 * y * y - 2.0) * (-y * y).exp());
    let got = remainder_bound_check(&grid, &phi, b);
    assert!((got - expect).abs() < 1e-6, "{got} vs {expect}");
}

proptest! {
    #[test]
    fn beta_solves_its_riccati_equation(b0 in 0.01f64..0.5, tau in 0.0f64..50.0, d in 2u32..6) {
        let dm1 = (d - 1) as f64;
        let h = 1e-4 * (1.0 + tau);
        let (lo, mid, hi) = (beta(tau, b0, d), beta(tau + h, b0, d), beta(tau + 2.0 * h, b0, d));
        prop_assert!(hi < mid && mid < lo);
        let slope = (hi - lo) / (2.0 * h);
        prop_assert!((slope + mid * mid / dm1).abs() <= 1e-8 * mid * mid / dm1);
    }
}
