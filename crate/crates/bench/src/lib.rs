//! Benchmark harness around `mqs_core`: configuration files, single runs,
//! the tolerance sweep, trajectory comparison and CSPE cache audits.

pub mod audit;
pub mod compare;
pub mod config;
pub mod error;
pub mod model;
pub mod runner;
pub mod sweep;

pub use config::{ConfigError, DtSpec, MaterialSpec, ProblemSpec, RunConfig, SolverKind, SweepGrid};
pub use error::{BenchError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
