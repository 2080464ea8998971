//! Simulation, imaging, phase retrieval and entanglement certification for
//! single photons shared over `N` waveguides (path-encoded W states).
//!
//! The pipeline runs state → images → retrieved state:
//!
//! * [`state`] builds mode states and pushes a photon through a tree of
//!   Y-splitters;
//! * [`optics`] renders real- and Fourier-space camera images;
//! * [`retrieval`] recovers the field from an image pair with
//!   Gerchberg-Saxton and reads off per-mode amplitudes and phases;
//! * [`metrics`] compares images and estimates the coherent fraction;
//! * [`witness`] searches for and checks a projector-based entanglement
//!   witness for the 8-mode state under a two-parameter noise model.

pub mod error;
pub mod io;
pub mod metrics;
pub mod optics;
pub mod retrieval;
pub mod state;
pub mod witness;

pub use error::{Error, Result};
