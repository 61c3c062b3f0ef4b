//! Steady states and quantum intensity-noise spectra of a multimode
//! optomechanical cavity: a Fabry–Perot resonator whose end mirror moves
//! under radiation pressure, driven by a transverse Gaussian pump.
//!
//! Frequencies are in units of the cavity half-linewidth, transverse lengths
//! in units of the beam length scale, and field amplitudes are scaled so that
//! the total intracavity power equals the radiation-pressure frequency shift.

pub mod error;
pub mod fluctuations;
pub mod model;
pub mod spectra;
pub mod steady_state;

pub use error::{Error, Result};
pub use fluctuations::{assemble_system, solve_dense, solve_fast, FluctuationSystem, SolverKind};
pub use model::{Cavity, ModeGrid, ModeIndex, ModelParams, PhysicalParams};
pub use spectra::{spectrum_at, MomentSet, SpectrumResult};
pub use steady_state::{Branch, SteadyState};
