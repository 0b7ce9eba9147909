//! Numerical laboratory for Stokes systems with variable coefficients on
//! staggered grids, and for their averaged Green functions.

pub mod amg;
pub mod assembly;
pub mod coefficients;
pub mod config;
pub mod domain;
pub mod error;
pub mod estimates;
pub mod experiment;
pub mod green;
pub mod grid;
pub mod io;
pub mod krylov;
pub mod report;
pub mod sampling;
pub mod solver;
pub mod sparse;

pub use assembly::{assemble_system, RhsData, SaddleSystem};
pub use coefficients::{generate_coefficients, CoefficientField, CoefficientSpec, Ellipticity};
pub use config::{ExperimentConfig, ExperimentKind};
pub use domain::{build_domain, DomainMask, MaskKind, MaskSpec};
pub use error::{Error, Result};
pub use experiment::{error_exit_code, run_experiment, Outcome};
pub use grid::{build_grid, StaggeredGrid};
pub use report::{emit_report, RunLog, Status};
