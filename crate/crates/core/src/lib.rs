//! Numerical study of the rotationally symmetric neckpinch under mean
//! curvature flow: the radial PDE, the collapse frame with live modulation
//! of `(a, b)`, barrier and estimating-function diagnostics, and the
//! Hermite spectral machinery of the linearized operator.

pub mod barriers;
pub mod checkpoint;
pub mod collapse;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod grid;
pub mod io;
pub mod modulation;
pub mod pde;
pub mod pipeline;
pub mod rescaled;
mod solver;
pub mod spectral;
pub mod tridiag;

pub use collapse::{CollapseState, FitRecord};
pub use config::{parse_config, DatumKind, SimConfig};
pub use error::{Error, Result};
pub use grid::{Grid, Parity};
pub use modulation::{AlmostSolution, FitOptions, ModulationFit};
pub use pde::{RadialProfile, Trajectory};
pub use pipeline::{run_mode, Mode, RunManifest, RunOptions};
pub use rescaled::{RescaledOutcome, RescaledRun};
pub use solver::StepControl;
pub use spectral::{EigenBasis, LineGrid, OperatorAssembly, OperatorId};
