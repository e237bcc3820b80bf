//! Command-line experiment runner for the primal DPG preconditioner.

pub mod config;
pub mod report;
pub mod study;

pub use config::{Cli, ConfigError, KappaSpec, MeshSource, PrecondChoice, RunConfig, Source, Study};
pub use report::{Measurement, Row, RunReport, Table};
pub use study::run;
