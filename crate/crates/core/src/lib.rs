//! Phase-domain macromodelling of synchronized oscillator groups.
//!
//! Each oscillator is described by its perturbation projection vector (PPV,
//! a.k.a. phase response curve) and free-running frequency. A group of such
//! oscillators, coupled through their phase-dependent outputs, is abstracted
//! into one effective scalar phase equation for the whole group:
//!
//! 1. [`lock`] finds the mutually locked, derivo-periodic orbit of the coupled
//!    phase system,
//! 2. [`floquet`] linearizes around it and extracts the tangent vector `u1`
//!    and the adjoint (left Floquet) vector `v1`,
//! 3. [`hierppv`] assembles the group PPV model, simulates it and validates it
//!    against the full coupled simulation. Group models can be re-nested as
//!    single oscillators inside larger networks.
//!
//! [`prc`] extracts PPVs from state-space oscillators so that physical models
//! can feed the pipeline.

pub mod error;
pub mod fixtures;
pub mod floquet;
pub mod hierppv;
pub mod io;
pub mod lock;
pub mod network;
pub mod ode;
pub mod oscillator;
pub mod periodic;
pub mod prc;

pub mod cli;

pub use error::{Error, Result};

pub use floquet::{FloquetData, StabilityFlags};
pub use hierppv::{GroupPPVModel, ValidationReport};
pub use lock::LockedSolution;
pub use network::{CoupledPhaseSystem, Coupling};
pub use ode::{SolverOptions, Trajectory};
pub use oscillator::{InputSignal, OscillatorPhaseModel, Sinusoid};
pub use periodic::PeriodicWaveform;
pub use prc::StateSpaceOscillator;
