//! Command-line front end for `optomech-core`: bistability curves, steady
//! states and intensity-noise spectra written as deterministic CSV files.

pub mod config;
pub mod error;
pub mod format;
pub mod output;
pub mod run;

pub use config::{load_config, parse_config, FileConfig};
pub use error::{CliError, Result};
pub use run::{run, Command, PointSpec, RunConfig, SpectraArgs, SweepArgs, WorkingPoint};
