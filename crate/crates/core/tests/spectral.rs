use neckpinch_core::spectral::{
    assemble_operator, discrete_spectrum, hermite_modes, project, propagator_decay_probe, ProbeSpec,
};
use neckpinch_core::{LineGrid, OperatorId};
use proptest::prelude::*;

fn grid() -> LineGrid {
    LineGrid::new(20.0, 0.01).unwrap()
}

fn eigenvalues(id: OperatorId, grid: &LineGrid, k: usize) -> Vec<f64> {
    let op = assemble_operator(id, grid).unwrap();
    discrete_spectrum(&op, k)
        .unwrap()
        .iter()
        .map(|e| e.eigenvalue)
        .collect()
}

#[test]
fn unit_alpha_ladder() {
    let ev = eigenvalues(OperatorId::ShiftedOscillator { alpha: 1.0 }, &grid(), 3);
    for (got, want) in ev.iter().zip([-2.0, -1.0, 0.0]) {
        assert!((got - want).abs() < 1e-4, "{got} vs {want}");
    }
}

#[test]
fn harmonic_ground_state() {
    let ev = eigenvalues(OperatorId::Harmonic { alpha: 0.5 }, &grid(), 1);
    assert!((ev[0] - 0.25).abs() < 1e-4, "{}", ev[0]);
}

#[test]
fn oscillator_gaps_are_uniform() {
    for alpha in [0.5, 0.4, 0.6] {
        let ev = eigenvalues(OperatorId::Oscillator { alpha }, &grid(), 9);
        for w in ev.windows(2) {
            let gap = w[1] - w[0];
            assert!(
                (gap - alpha).abs() <= 0.02 * alpha,
                "alpha {alpha}: gap {gap}"
            );
        }
    }
}

#[test]
fn domain_truncation_is_negligible() {
    let id = OperatorId::ShiftedOscillator { alpha: 0.5 };
    let near = eigenvalues(id, &grid(), 5);
    let far = eigenvalues(id, &LineGrid::new(30.0, 0.01).unwrap(), 5);
    for (a, b) in near.iter().zip(&far) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

fn flat_probe(alpha: f64) -> ProbeSpec {
    ProbeSpec {
        n: 3,
        alpha,
        beta: None,
        d: 2,
        horizon: 6.0,
        dt: 0.01,
        window: ProbeSpec::default_window(alpha),
    }
}

#[test]
fn projection_kills_growth_of_low_degree_data() {
    let g = grid();
    let alpha = 0.5;
    let spec = flat_probe(alpha);
    for k in 0..=6 {
        let f = g.map(|z| z.powi(k) * (-0.25 * alpha * z * z).exp());
        let r = propagator_decay_probe(&spec, &f, &g).unwrap();
        assert_eq!(r.killed, k <= 2, "degree {k}");
        assert!(r.killed || r.rate > 0.0, "degree {k}: rate {}", r.rate);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn modes_are_orthonormal(alpha in 0.3f64..1.0) {
        let g = grid();
        let b = hermite_modes(alpha, &g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((g.inner(&b.modes[i], &b.modes[j]) - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn projection_is_idempotent(alpha in 0.3f64..1.0, c in prop::array::uniform4(-1.0f64..1.0), n in 1usize..=3) {
        let g = grid();
        let b = hermite_modes(alpha, &g).unwrap();
        let f = g.map(|z| (c[0] + z * (c[1] + z * (c[2] + z * c[3]))) * (-0.2 * z * z).exp());
        let once = project(&f, &b, n, &g).unwrap();
        let twice = project(&once, &b, n, &g).unwrap();
        for (x, y) in once.iter().zip(&twice) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_sextic_data_decays(c in prop::array::uniform7(-1.0f64..1.0)) {
        let g = grid();
        let alpha = 0.5;
        let f = g.map(|z| {
            let p = c.iter().rev().fold(0.0, |acc, ck| acc * z + ck);
            p * (-0.25 * alpha * z * z).exp()
        });
        let r = propagator_decay_probe(&flat_probe(alpha), &f, &g).unwrap();
        prop_assert!(r.killed || r.rate > 0.0, "rate {}", r.rate);
    }
}
