//! Run configuration: a TOML document with every knob defaulted.
//!
//! ```toml
//! d = 2
//! eps0 = 0.1
//! varsigma0 = 0.5
//!
//! [perturbation]
//! shape = "x2_gauss"
//! amplitude = 1e-4
//! ```

use serde::{Deserialize, Serialize};

use crate::collapse::FarFieldClosure;
use crate::error::{Error, Result};
use crate::solver::StepControl;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub d: u32,
    pub eps0: f64,
    pub varsigma0: f64,
    /// Initial scale of the collapse frame.
    pub lambda0: f64,
    /// Budget constant of the datum class.
    pub class_c: f64,
    pub kappa0: f64,
    pub datum: DatumKind,
    pub perturbation: Perturbation,
    pub grid: GridConfig,
    pub integrator: StepControl,
    pub stop: StopConfig,
    pub output: OutputConfig,
    pub rescaled: RescaledConfig,
    pub spectrum: SpectrumConfig,
    /// Wall-clock budget for a single simulation, in seconds.
    pub budget_seconds: Option<f64>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            d: 2,
            eps0: 0.1,
            varsigma0: 0.5,
            lambda0: 1.0,
            class_c: 1.0,
            kappa0: 2.0,
            datum: DatumKind::Neckpinch,
            perturbation: Perturbation::default(),
            grid: GridConfig::default(),
            integrator: StepControl {
                tol: 1e-7,
                ..StepControl::default()
            },
            stop: StopConfig::default(),
            output: OutputConfig::default(),
            rescaled: RescaledConfig::default(),
            spectrum: SpectrumConfig::default(),
            budget_seconds: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatumKind {
    /// `sqrt((2(d-1) + eps0 x^2) / (2 varsigma0))` plus the perturbation.
    Neckpinch,
    Cylinder {
        radius: f64,
    },
    /// Round sphere; the grid half-width must stay inside the sphere.
    Sphere {
        radius: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerturbationShape {
    None,
    /// `A e^{-x^2}`
    Gauss,
    /// `A x^2 e^{-x^2}`
    X2Gauss,
    /// `A x^4 e^{-x^2}`
    X4Gauss,
    /// `A sum_k xi_k x^{2k} e^{-x^2}`, `k = 0..3`, `xi_k` uniform in `[-1, 1]`
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Perturbation {
    pub shape: PerturbationShape,
    pub amplitude: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Perturbation {
            shape: PerturbationShape::None,
            amplitude: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub half_width: f64,
    pub intervals: usize,
    /// First spacing as a fraction of `min u` when (re)gridding.
    pub spacing_factor: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            half_width: 20.0,
            intervals: 600,
            spacing_factor: 1.0 / 30.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StopConfig {
    /// Stop once `min u <= ratio * u0(0)`.
    pub u_min_ratio: f64,
    /// Absolute threshold; overrides the ratio when set.
    pub u_min_stop: Option<f64>,
    pub t_max: Option<f64>,
}

impl Default for StopConfig {
    fn default() -> Self {
        StopConfig {
            u_min_ratio: 1e-3,
            u_min_stop: None,
            t_max: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Keep a full snapshot every this many accepted steps.
    pub snapshot_every: usize,
    /// Points where `u(x, t)` is recorded at every step.
    pub probe_x: Vec<f64>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            snapshot_every: 100,
            probe_x: vec![0.5, 1.0],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RescaledConfig {
    pub half_width: f64,
    pub intervals: usize,
    pub stretch: f64,
    pub step: StepControl,
    pub tau_max: Option<f64>,
    /// Relative tolerance of the modulation Newton solve.
    pub fit_tol: f64,
    pub far_field: FarFieldClosure,
}

impl Default for RescaledConfig {
    fn default() -> Self {
        RescaledConfig {
            half_width: 20.0,
            intervals: 400,
            stretch: 3.0,
            step: StepControl {
                tol: 1e-8,
                dt_init: 1e-3,
                dt_max: 0.05,
                ..StepControl::default()
            },
            tau_max: None,
            fit_tol: 1e-12,
            far_field: FarFieldClosure::Outflow,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    pub alphas: Vec<f64>,
    pub half_width: f64,
    pub spacing: f64,
    pub modes: usize,
    /// Frozen `beta` in the potential of the perturbed oscillator.
    pub beta: f64,
    pub probe_horizon: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig {
            alphas: vec![0.5, 0.4, 0.6],
            half_width: 20.0,
            spacing: 0.01,
            modes: 5,
            beta: 0.05,
            probe_horizon: 12.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| -> Result<()> {
            Err(Error::Config {
                line: None,
                message: format!("{key}: {message}"),
            })
        };
        if self.d < 2 {
            return bad(
                "d",
                format!(
                    "d = {} but the surface dimension must satisfy d >= 2",
                    self.d
                ),
            );
        }
        if !(self.eps0 > 0.0) || !self.eps0.is_finite() {
            return bad("eps0", format!("eps0 = {} must be positive", self.eps0));
        }
        if !(0.5..=2.0).contains(&self.varsigma0) {
            return bad(
                "varsigma0",
                format!(
                    "varsigma0 = {} violates 1/2 <= varsigma0 <= 2",
                    self.varsigma0
                ),
            );
        }
        if !(self.lambda0 > 0.0) {
            return bad("lambda0", "must be positive".into());
        }
        match self.datum {
            DatumKind::Cylinder { radius } | DatumKind::Sphere { radius } if !(radius > 0.0) => {
                return bad("datum.radius", "must be positive".into());
            }
            DatumKind::Sphere { radius } if self.grid.half_width >= radius => {
                return bad(
                    "grid.half_width",
                    "must be smaller than the sphere radius".into(),
                );
            }
            _ => {}
        }
        if !(self.perturbation.amplitude.is_finite()) {
            return bad("perturbation.amplitude", "must be finite".into());
        }
        if !(self.grid.half_width > 0.0) || self.grid.intervals < 8 {
            return bad(
                "grid",
                "need half_width > 0 and at least 8 intervals".into(),
            );
        }
        if !(self.grid.spacing_factor > 0.0) {
            return bad("grid.spacing_factor", "must be positive".into());
        }
        if !(self.stop.u_min_ratio > 0.0 && self.stop.u_min_ratio < 1.0) {
            return bad("stop.u_min_ratio", "must lie in (0, 1)".into());
        }
        if let Some(s) = self.stop.u_min_stop {
            if !(s > 0.0) {
                return bad(
                    "stop.u_min_stop",
                    format!("u_min_stop = {s} must be positive"),
                );
            }
        }
        for (key, c) in [
            ("integrator", &self.integrator),
            ("rescaled.step", &self.rescaled.step),
        ] {
            if !(c.tol > 0.0 && c.dt_init > 0.0 && c.dt_max >= c.dt_init && c.dt_min > 0.0) {
                return bad(
                    key,
                    "tolerances and step bounds must be positive with dt_max >= dt_init".into(),
                );
            }
        }
        if self.rescaled.intervals < 8 || !(self.rescaled.half_width > 0.0) {
            return bad(
                "rescaled",
                "need half_width > 0 and at least 8 intervals".into(),
            );
        }
        if self.spectrum.alphas.iter().any(|a| !(*a > 0.0)) {
            return bad("spectrum.alphas", "every alpha must be positive".into());
        }
        if !(self.spectrum.spacing > 0.0) || !(self.spectrum.half_width > 0.0) {
            return bad("spectrum", "spacing and half_width must be positive".into());
        }
        Ok(())
    }

    /// Refine (or coarsen) every grid by `factor`.
    pub fn with_grid_scale(mut self, factor: f64) -> Result<SimConfig> {
        if !(factor > 0.0) {
            return Err(Error::InvalidInput(format!(
                "grid scale {factor} must be positive"
            )));
        }
        let scale = |n: usize| ((n as f64 * factor).round() as usize).max(8);
        self.grid.intervals = scale(self.grid.intervals);
        self.rescaled.intervals = scale(self.rescaled.intervals);
        self.spectrum.spacing /= factor;
        Ok(self)
    }

    /// `u0(0)` of the configured datum.
    pub fn u0_center(&self) -> f64 {
        match self.datum {
            DatumKind::Neckpinch => (2.0 * (self.d - 1) as f64 / (2.0 * self.varsigma0)).sqrt(),
            DatumKind::Cylinder { radius } | DatumKind::Sphere { radius } => radius,
        }
    }

    pub fn u_min_stop(&self) -> f64 {
        self.stop
            .u_min_stop
            .unwrap_or(self.stop.u_min_ratio * self.u0_center())
    }
}

/// Parse and validate a TOML configuration.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    cfg.validate().map_err(|e| match e {
        Error::Config { message, .. } => {
            let key = message.split(':').next().unwrap_or("");
            let leaf = key.rsplit('.').next().unwrap_or(key);
            Error::Config {
                line: find_key_line(text, leaf),
                message,
            }
        }
        other => other,
    })?;
    Ok(cfg)
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn find_key_line(text: &str, key: &str) -> Option<usize> {
    text.lines()
        .position(|l| {
            let l = l.trim_start();
            l.strip_prefix(key)
                .is_some_and(|rest| rest.trim_start().starts_with('=') || rest.starts_with(']'))
                || l.strip_prefix('[').is_some_and(|r| r.starts_with(key))
        })
        .map(|i| i + 1)
}
