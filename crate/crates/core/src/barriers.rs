//! Lower barrier `g`, the scale-invariant quantity
//! `rho = v v_yy / (1 + v_y^2)` and the mean-curvature sign
//! `chi = u u_xx / (1 + u_x^2) - (d - 1)`.

use serde::{Deserialize, Serialize};

use crate::collapse::CollapseState;
use crate::grid::{Grid, Parity};
use crate::pde::Trajectory;

/// Half-width of the central window for the `|rho| <= 4 beta` bound.
pub const CENTRAL_WINDOW: f64 = 0.1;

/// Largest relative drop of a probe value over the final decade of `min u`
/// for it to count as bounded below.
pub const PROBE_DRIFT: f64 = 0.05;

/// `g(y, b)`: `0.9 sqrt(2(d-1))` if `b y^2 < 20(d-1)`, else `4 sqrt(d-1)`.
pub fn lower_barrier(y: f64, b: f64, d: u32) -> f64 {
    let dm1 = (d - 1) as f64;
    if b * y * y < 20.0 * dm1 {
        0.9 * (2.0 * dm1).sqrt()
    } else {
        4.0 * dm1.sqrt()
    }
}

/// `f f'' / (1 + f'^2)` at every node of an even grid function.
pub fn rho_values(grid: &Grid, f: &[f64]) -> Vec<f64> {
    let d1 = grid.d1(f, Parity::Even);
    let d2 = grid.d2(f, Parity::Even);
    f.iter()
        .zip(d1.iter().zip(&d2))
        .map(|(v, (p, q))| v * q / (1.0 + p * p))
        .collect()
}

pub fn rho(state: &CollapseState) -> Vec<f64> {
    rho_values(&state.grid, &state.v)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BarrierVerdict {
    /// `min (v - g(y, beta))`
    pub min_margin: Option<f64>,
    pub worst_node: Option<usize>,
    pub barrier_ok: Option<bool>,
    /// `max |rho|` on `|y| <= 1/10`
    pub rho_central_max: Option<f64>,
    pub rho_central_ok: Option<bool>,
    /// `min rho` on `beta y^2 >= 2(d-1)`
    pub rho_outer_min: Option<f64>,
    pub rho_outer_ok: Option<bool>,
    pub chi_max: Option<f64>,
    pub chi_ok: Option<bool>,
}

impl BarrierVerdict {
    /// All evaluated checks pass.
    pub fn ok(&self) -> bool {
        [
            self.barrier_ok,
            self.rho_central_ok,
            self.rho_outer_ok,
            self.chi_ok,
        ]
        .iter()
        .all(|f| f.unwrap_or(true))
    }

    pub fn merge(mut self, other: BarrierVerdict) -> BarrierVerdict {
        macro_rules! take {
            ($($f:ident),*) => { $( if other.$f.is_some() { self.$f = other.$f; } )* };
        }
        take!(
            min_margin,
            worst_node,
            barrier_ok,
            rho_central_max,
            rho_central_ok,
            rho_outer_min,
            rho_outer_ok,
            chi_max,
            chi_ok
        );
        self
    }
}

/// Nodewise `v >= g(y, beta)`.
pub fn barrier_check_values(grid: &Grid, v: &[f64], beta: f64, d: u32) -> BarrierVerdict {
    let (worst, margin) = grid
        .nodes()
        .iter()
        .zip(v)
        .map(|(&y, v)| v - lower_barrier(y, beta, d))
        .enumerate()
        .fold(
            (0, f64::INFINITY),
            |(bi, bm), (i, m)| if m < bm { (i, m) } else { (bi, bm) },
        );
    BarrierVerdict {
        min_margin: Some(margin),
        worst_node: Some(worst),
        barrier_ok: Some(margin >= 0.0),
        ..BarrierVerdict::default()
    }
}

pub fn barrier_check(state: &CollapseState, beta: f64) -> BarrierVerdict {
    barrier_check_values(&state.grid, &state.v, beta, state.d)
}

/// `|rho| <= 4 beta` on `|y| <= 1/10`; if `datum_qualifies`
/// (`v0 v0'' >= -1`), also `rho >= -1` on `beta y^2 >= 2(d-1)`.
pub fn rho_bounds_values(
    grid: &Grid,
    v: &[f64],
    beta: f64,
    d: u32,
    datum_qualifies: bool,
) -> BarrierVerdict {
    let r = rho_values(grid, v);
    let y = grid.nodes();
    let dm1 = (d - 1) as f64;
    let central = y
        .iter()
        .zip(&r)
        .filter(|(y, _)| **y <= CENTRAL_WINDOW)
        .fold(0.0_f64, |m, (_, r)| m.max(r.abs()));
    let outer = y
        .iter()
        .zip(&r)
        .filter(|(y, _)| beta * **y * **y >= 2.0 * dm1)
        .map(|(_, r)| *r)
        .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.min(r))));
    BarrierVerdict {
        rho_central_max: Some(central),
        rho_central_ok: Some(central <= 4.0 * beta),
        rho_outer_min: outer,
        rho_outer_ok: if datum_qualifies {
            Some(outer.is_none_or(|m| m >= -1.0))
        } else {
            None
        },
        ..BarrierVerdict::default()
    }
}

pub fn rho_bounds_check(state: &CollapseState, beta: f64, datum_qualifies: bool) -> BarrierVerdict {
    rho_bounds_values(&state.grid, &state.v, beta, state.d, datum_qualifies)
}

/// `max chi` at one time, `chi = u u_xx / (1 + u_x^2) - (d - 1)`.
pub fn chi_max(grid: &Grid, u: &[f64], d: u32) -> f64 {
    rho_values(grid, u)
        .into_iter()
        .map(|r| r - (d - 1) as f64)
        .fold(f64::NEG_INFINITY, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    /// `(t, max chi)` per snapshot.
    pub chi_series: Vec<(f64, f64)>,
    pub chi_ok: bool,
    /// Largest increase `u(x, t2) - u(x, t1)` between consecutive snapshots
    /// sharing a grid.
    pub max_increase: f64,
    pub monotone: bool,
    /// Per probe point: infimum over the run and the value when the final
    /// decade of `min u` begins.
    pub probe_inf: Vec<(f64, f64, f64)>,
    pub probes_bounded: bool,
}

/// Sign of the mean curvature along a run and its consequences: `u` is
/// nonincreasing in `t`, and settles to a positive value away from the
/// pinch while `min u` falls through its final decade.
pub fn mean_curvature_sign_check(traj: &Trajectory, slack: f64) -> MonotonicityReport {
    let d = traj.d;
    let chi_series: Vec<(f64, f64)> = traj
        .snapshots
        .iter()
        .map(|p| (p.t, chi_max(&p.grid, &p.u, d)))
        .collect();
    let chi_ok = chi_series.iter().all(|(_, c)| *c <= slack);
    let mut max_increase = f64::NEG_INFINITY;
    for w in traj.snapshots.windows(2) {
        if w[0].grid == w[1].grid && w[1].t > w[0].t {
            for (a, b) in w[0].u.iter().zip(&w[1].u) {
                max_increase = max_increase.max(b - a);
            }
        }
    }
    let monotone = max_increase <= 1e-8;
    // start of the final decade of min u
    let u_end = traj.records.last().map_or(0.0, |r| r.u_min);
    let k0 = traj
        .records
        .iter()
        .rposition(|r| r.u_min > 10.0 * u_end)
        .map_or(0, |k| k + 1);
    let probe_inf: Vec<(f64, f64, f64)> = traj
        .probe_x
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let inf = traj
                .records
                .iter()
                .map(|r| r.probes[k])
                .fold(f64::INFINITY, f64::min);
            (x, inf, traj.records[k0].probes[k])
        })
        .collect();
    let probes_bounded = !traj.records.is_empty()
        && probe_inf
            .iter()
            .all(|(_, inf, start)| *inf > 0.0 && (start - inf) / inf < PROBE_DRIFT);
    MonotonicityReport {
        chi_series,
        chi_ok,
        max_increase,
        monotone,
        probe_inf,
        probes_bounded,
    }
}
