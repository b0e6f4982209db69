use criterion::{criterion_group, criterion_main, Criterion};
use neckpinch_core::modulation::fit_parameters;
use neckpinch_core::pde::{make_initial_datum, PhysicalStepper};
use neckpinch_core::spectral::{assemble_operator, discrete_spectrum, LineGrid, OperatorId};
use neckpinch_core::{AlmostSolution, FitOptions, Grid, SimConfig};

fn physical_step(c: &mut Criterion) {
    let cfg = SimConfig::default();
    let datum = make_initial_datum(&cfg).unwrap();
    c.bench_function("physical_step", |b| {
        b.iter(|| {
            let mut s = PhysicalStepper::new(cfg.integrator, datum.far.clone());
            s.step(&datum.profile, 1e-3).unwrap()
        })
    });
}

fn modulation_fit(c: &mut Criterion) {
    let g = Grid::sinh(20.0, 400, 3.0).unwrap();
    let v: Vec<f64> = AlmostSolution::new(0.52, 0.08, 2)
        .unwrap()
        .on(&g)
        .iter()
        .zip(g.nodes())
        .map(|(v, y)| v + 1e-3 * (-y * y).exp())
        .collect();
    c.bench_function("modulation_fit", |b| {
        b.iter(|| fit_parameters(&g, &v, 2, (0.5, 0.1), &FitOptions::default()).unwrap())
    });
}

fn spectrum(c: &mut Criterion) {
    let g = LineGrid::new(20.0, 0.01).unwrap();
    let op = assemble_operator(OperatorId::ShiftedOscillator { alpha: 0.5 }, &g).unwrap();
    c.bench_function("spectrum_5_modes", |b| {
        b.iter(|| discrete_spectrum(&op, 5).unwrap())
    });
}

criterion_group!(benches, physical_step, modulation_fit, spectrum);
criterion_main!(benches);
