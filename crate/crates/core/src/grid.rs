//! Half-line grids with even/odd reflection at the origin.
//!
//! Every profile in this crate lives on `[0, L]` and is understood as the
//! restriction of an even (or, for derivatives of even functions, odd)
//! function on `[-L, L]`. Nodes come from a smooth `sinh` stretching of a
//! uniform computational coordinate `s`, which keeps neighbouring spacings
//! within `1 + stretch / n` of each other, makes the three-point stencils
//! second order, and lets the trapezoid rule in `s` integrate decaying
//! even integrands spectrally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest admissible ratio between neighbouring spacings.
pub const MAX_SPACING_RATIO: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn flip(self) -> Parity {
        match self {
            Parity::Even => Parity::Odd,
            Parity::Odd => Parity::Even,
        }
    }

    fn ghost_sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    stretch: f64,
}

impl Grid {
    /// `x(s) = L sinh(k s) / sinh(k)` on `n_intervals` uniform steps of `s`.
    /// `stretch = 0` gives a uniform grid.
    pub fn sinh(half_width: f64, n_intervals: usize, stretch: f64) -> Result<Grid> {
        if !(half_width > 0.0) || n_intervals < 4 || !(stretch >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "bad grid parameters: L = {half_width}, n = {n_intervals}, stretch = {stretch}"
            )));
        }
        let n = n_intervals;
        let ds = 1.0 / n as f64;
        let (map, jac): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = if stretch < 1e-8 {
            (
                Box::new(move |s| half_width * s),
                Box::new(move |_| half_width),
            )
        } else {
            let k = stretch;
            let sk = k.sinh();
            (
                Box::new(move |s: f64| half_width * (k * s).sinh() / sk),
                Box::new(move |s: f64| half_width * k * (k * s).cosh() / sk),
            )
        };
        let mut nodes: Vec<f64> = (0..=n).map(|i| map(i as f64 * ds)).collect();
        nodes[0] = 0.0;
        nodes[n] = half_width;
        let mut weights: Vec<f64> = (0..=n).map(|i| jac(i as f64 * ds) * ds).collect();
        weights[0] *= 0.5;
        weights[n] *= 0.5;
        let grid = Grid {
            nodes,
            weights,
            stretch,
        };
        grid.check_spacing()?;
        Ok(grid)
    }

    /// Sinh grid whose first spacing is (at most) `h0`.
    pub fn with_min_spacing(half_width: f64, n_intervals: usize, h0: f64) -> Result<Grid> {
        let uniform = half_width / n_intervals as f64;
        if h0 >= uniform {
            return Grid::sinh(half_width, n_intervals, 0.0);
        }
        // first spacing ~ L k / (n sinh k), decreasing in k
        let first = |k: f64| half_width * (k / n_intervals as f64).sinh() / k.sinh();
        let (mut lo, mut hi) = (1e-6, 1.0);
        while first(hi) > h0 {
            hi *= 2.0;
            if hi > 700.0 {
                return Err(Error::InvalidInput(format!(
                    "cannot reach first spacing {h0:e} with {n_intervals} intervals"
                )));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if first(mid) > h0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Grid::sinh(half_width, n_intervals, hi)
    }

    /// Arbitrary strictly increasing nodes starting at 0; trapezoid weights.
    pub fn from_nodes(nodes: Vec<f64>) -> Result<Grid> {
        if nodes.len() < 5 || nodes[0] != 0.0 {
            return Err(Error::InvalidInput(
                "grid needs at least 5 nodes and must start at x = 0".into(),
            ));
        }
        let n = nodes.len() - 1;
        let mut weights = vec![0.0; n + 1];
        for i in 0..n {
            let h = nodes[i + 1] - nodes[i];
            if !(h > 0.0) {
                return Err(Error::InvalidInput(
                    "grid nodes must be strictly increasing".into(),
                ));
            }
            weights[i] += 0.5 * h;
            weights[i + 1] += 0.5 * h;
        }
        let grid = Grid {
            nodes,
            weights,
            stretch: f64::NAN,
        };
        grid.check_spacing()?;
        Ok(grid)
    }

    fn check_spacing(&self) -> Result<()> {
        let x = &self.nodes;
        for i in 1..x.len() {
            if !(x[i] > x[i - 1]) {
                return Err(Error::InvalidInput(
                    "grid nodes must be strictly increasing".into(),
                ));
            }
        }
        if let Some(r) = self.max_spacing_ratio() {
            if r > MAX_SPACING_RATIO {
                return Err(Error::InvalidInput(format!(
                    "adjacent spacing ratio {r} exceeds {MAX_SPACING_RATIO}"
                )));
            }
        }
        Ok(())
    }

    pub fn max_spacing_ratio(&self) -> Option<f64> {
        let x = &self.nodes;
        (1..x.len() - 1)
            .map(|i| {
                let a = x[i] - x[i - 1];
                let b = x[i + 1] - x[i];
                (a / b).max(b / a)
            })
            .fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Half-line quadrature weights (trapezoid in the computational coordinate).
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn half_width(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn stretch(&self) -> f64 {
        self.stretch
    }

    pub fn first_spacing(&self) -> f64 {
        self.nodes[1]
    }

    /// Scaled copy `x -> s x`.
    pub fn scaled(&self, s: f64) -> Grid {
        Grid {
            nodes: self.nodes.iter().map(|x| x * s).collect(),
            weights: self.weights.iter().map(|w| w * s).collect(),
            stretch: self.stretch,
        }
    }

    /// Three-point weights for the first and second derivative at interior
    /// node `i` (neighbours `i-1, i, i+1`). Node 0 uses the reflected ghost.
    pub fn stencil(&self, i: usize) -> Stencil {
        let x = &self.nodes;
        let n = x.len() - 1;
        if i == 0 {
            let h = x[1];
            return Stencil {
                hm: h,
                hp: h,
                d1: [-0.5 / h, 0.0, 0.5 / h],
                d2: [1.0 / (h * h), -2.0 / (h * h), 1.0 / (h * h)],
            };
        }
        assert!(i < n, "stencil requested at boundary node");
        let hm = x[i] - x[i - 1];
        let hp = x[i + 1] - x[i];
        let den = hm * hp * (hm + hp);
        Stencil {
            hm,
            hp,
            d1: [-hp * hp / den, (hp * hp - hm * hm) / den, hm * hm / den],
            d2: [2.0 * hp / den, -2.0 * (hm + hp) / den, 2.0 * hm / den],
        }
    }

    /// Neighbour values `(f[i-1], f[i], f[i+1])` with the ghost at `i = 0`.
    #[inline]
    pub fn neighbours(&self, f: &[f64], i: usize, parity: Parity) -> [f64; 3] {
        if i == 0 {
            [parity.ghost_sign() * f[1], f[0], f[1]]
        } else {
            [f[i - 1], f[i], f[i + 1]]
        }
    }

    /// First derivative at every node; one-sided three-point at the far end.
    pub fn d1(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let n = self.nodes.len() - 1;
        let mut out = vec![0.0; n + 1];
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let s = self.stencil(i);
            let v = self.neighbours(f, i, parity);
            *o = s.d1[0] * (v[0] - v[1]) + s.d1[2] * (v[2] - v[1]);
        }
        if parity == Parity::Even {
            out[0] = 0.0;
        }
        out[n] = self.end_d1(f);
        out
    }

    /// Second derivative at every node; one-sided three-point at the far end.
    pub fn d2(&self, f: &[f64], parity: Parity) -> Vec<f64> {
        let n = self.nodes.len() - 1;
        let mut out = vec![0.0; n + 1];
        for (i, o) in out.iter_mut().enumerate().take(n) {
            let s = self.stencil(i);
            let v = self.neighbours(f, i, parity);
            *o = s.d2[0] * (v[0] - v[1]) + s.d2[2] * (v[2] - v[1]);
        }
        out[n] = self.end_d2(f);
        out
    }

    /// `n`-th derivative by repeated first differences (two-step for even `n`).
    /// Orders above 2 lose accuracy near the far end.
    pub fn derivative(&self, f: &[f64], parity: Parity, order: usize) -> Vec<f64> {
        match order {
            0 => f.to_vec(),
            1 => self.d1(f, parity),
            _ => {
                let g = self.d2(f, parity);
                self.derivative(&g, parity, order - 2)
            }
        }
    }

    fn end_d1(&self, f: &[f64]) -> f64 {
        let n = self.nodes.len() - 1;
        let (x0, x1, x2) = (self.nodes[n - 2], self.nodes[n - 1], self.nodes[n]);
        let (f0, f1, f2) = (f[n - 2], f[n - 1], f[n]);
        // derivative of the interpolating parabola at x2
        let l0 = (x2 - x1) / ((x0 - x1) * (x0 - x2));
        let l1 = (x2 - x0) / ((x1 - x0) * (x1 - x2));
        // the weights sum to zero
        l0 * (f0 - f2) + l1 * (f1 - f2)
    }

    fn end_d2(&self, f: &[f64]) -> f64 {
        let n = self.nodes.len() - 1;
        let (x0, x1, x2) = (self.nodes[n - 2], self.nodes[n - 1], self.nodes[n]);
        let (f0, f1, f2) = (f[n - 2], f[n - 1], f[n]);
        2.0 * ((f0 - f2) / ((x0 - x1) * (x0 - x2)) + (f1 - f2) / ((x1 - x0) * (x1 - x2)))
    }

    /// Half-line integral of a grid function.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }

    /// Index `k` with `x[k] <= x < x[k+1]`.
    fn bracket(&self, x: f64) -> usize {
        let n = self.nodes.len() - 1;
        match self.nodes.binary_search_by(|p| p.partial_cmp(&x).unwrap()) {
            Ok(k) => k.min(n - 1),
            Err(k) => (k.max(1) - 1).min(n - 1),
        }
    }

    /// Monotone piecewise-cubic interpolant of an even function.
    pub fn interpolator<'a>(&'a self, f: &'a [f64]) -> MonotoneCubic<'a> {
        MonotoneCubic::new(self, f)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Stencil {
    pub hm: f64,
    pub hp: f64,
    pub d1: [f64; 3],
    pub d2: [f64; 3],
}

/// Hermite cubic with three-point slope estimates, limited so that monotone
/// data stay monotone on each interval.
pub struct MonotoneCubic<'a> {
    grid: &'a Grid,
    values: &'a [f64],
    slopes: Vec<f64>,
}

impl<'a> MonotoneCubic<'a> {
    fn new(grid: &'a Grid, values: &'a [f64]) -> Self {
        let x = grid.nodes();
        let n = x.len() - 1;
        let secant: Vec<f64> = (0..n)
            .map(|k| (values[k + 1] - values[k]) / (x[k + 1] - x[k]))
            .collect();
        let mut slopes = vec![0.0; n + 1];
        for k in 1..n {
            let hm = x[k] - x[k - 1];
            let hp = x[k + 1] - x[k];
            let mut d = (hp * secant[k - 1] + hm * secant[k]) / (hm + hp);
            let (sm, sp) = (secant[k - 1], secant[k]);
            if sm * sp <= 0.0 {
                d = 0.0;
            } else {
                let cap = 3.0 * sm.abs().min(sp.abs());
                if d.abs() > cap {
                    d = cap.copysign(d);
                }
            }
            slopes[k] = d;
        }
        // even reflection: zero slope at the origin
        slopes[0] = 0.0;
        let hm = x[n - 1] - x[n - 2];
        let hp = x[n] - x[n - 1];
        let (sm, sp) = (secant[n - 2], secant[n - 1]);
        let mut d = sp + hp * (sp - sm) / (hm + hp);
        if d * sp <= 0.0 {
            d = 0.0;
        } else if d.abs() > 3.0 * sp.abs() {
            d = 3.0 * sp;
        }
        slopes[n] = d;
        MonotoneCubic {
            grid,
            values,
            slopes,
        }
    }

    /// Value at `|x|`; `None` outside the grid.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let x = x.abs();
        let nodes = self.grid.nodes();
        let l = *nodes.last().unwrap();
        if x > l * (1.0 + 1e-14) {
            return None;
        }
        let x = x.min(l);
        let k = self.grid.bracket(x);
        let h = nodes[k + 1] - nodes[k];
        let t = (x - nodes[k]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        Some(
            h00 * self.values[k]
                + h10 * h * self.slopes[k]
                + h01 * self.values[k + 1]
                + h11 * h * self.slopes[k + 1],
        )
    }

    pub fn resample(&self, target: &Grid) -> Option<Vec<f64>> {
        target.nodes().iter().map(|&x| self.eval(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sinh_grid_spacing_is_smooth() {
        let g = Grid::sinh(20.0, 400, 6.0).unwrap();
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(g.half_width(), 20.0);
        assert!(g.max_spacing_ratio().unwrap() <= (6.0f64 / 400.0).exp());
    }

    #[test]
    fn min_spacing_is_met() {
        let g = Grid::with_min_spacing(20.0, 600, 1e-4).unwrap();
        assert!((g.first_spacing() - 1e-4).abs() < 1e-8);
        assert!(g.max_spacing_ratio().unwrap() < 1.1);
    }

    #[test]
    fn rejects_wild_spacing() {
        let nodes = vec![0.0, 1.0, 1.1, 1.2, 5.0];
        assert!(Grid::from_nodes(nodes).is_err());
    }

    #[test]
    fn stencils_exact_on_quadratics() {
        let g = Grid::sinh(5.0, 50, 3.0).unwrap();
        let f = g.map(|x| 1.0 + 3.0 * x * x);
        let d1 = g.d1(&f, Parity::Even);
        let d2 = g.d2(&f, Parity::Even);
        for (i, &x) in g.nodes().iter().enumerate() {
            assert!((d1[i] - 6.0 * x).abs() < 1e-9 * (1.0 + x), "d1 at {x}");
            assert!((d2[i] - 6.0).abs() < 1e-7, "d2 at {x}: {}", d2[i]);
        }
    }

    #[test]
    fn odd_ghost() {
        let g = Grid::sinh(5.0, 80, 2.0).unwrap();
        let f = g.map(|x| x);
        let d1 = g.d1(&f, Parity::Odd);
        assert!((d1[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mapped_trapezoid_gaussian() {
        let g = Grid::sinh(20.0, 400, 3.0).unwrap();
        let f = g.map(|y| (-0.25 * y * y).exp());
        let exact = (std::f64::consts::PI / 0.25).sqrt() / 2.0;
        assert!((g.integrate(&f) - exact).abs() < 1e-12);
    }

    #[test]
    fn interpolation_is_accurate_on_smooth_data() {
        let g = Grid::sinh(10.0, 200, 3.0).unwrap();
        let f = g.map(|x| (2.0 + x * x).sqrt());
        let p = g.interpolator(&f);
        let mut worst: f64 = 0.0;
        for k in 0..1000 {
            let x = 9.99 * k as f64 / 1000.0;
            let e = (p.eval(x).unwrap() - (2.0 + x * x).sqrt()).abs();
            worst = worst.max(e);
        }
        assert!(worst < 1e-6, "{worst}");
        assert_eq!(p.eval(-1.5), p.eval(1.5));
        assert!(p.eval(10.5).is_none());
    }
}
