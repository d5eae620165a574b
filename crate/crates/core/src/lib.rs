//! Simulation of a nonlinear two-mode cavity driven by short parametric pump
//! pulses and coupled to a two-level emitter, used to engineer multi-photon
//! Fock states.
//!
//! The crate is organised bottom-up: [`hilbert`] defines the truncated
//! composite basis and states, [`squeeze`] and [`jc`] the two elementary
//! unitaries, [`dynamics`] composes them (or integrates the full equations
//! of motion), [`analysis`] extracts observables and analytic references and
//! [`optimizer`] searches pulse parameters.

pub mod analysis;
pub mod dynamics;
pub mod error;
pub mod hilbert;
pub mod jc;
pub mod linalg;
pub mod optimizer;
pub mod squeeze;

pub use error::{Error, ErrorKind, Result};
pub use hilbert::{make_basis, DensityState, FockBasis, HybridState, Level};
pub use squeeze::ParametricGain;
