//! Numerical laboratory for dissipative scattering theory.
//!
//! Builds desk-scale pseudo-Hamiltonians `H = H0 + V - i C*C` (abstract
//! matrices, 1-D Dirichlet lattices, half-line radial continuum models) and
//! probes their spectral subspaces, absorption probabilities, spectral
//! singularities, Stone-type spectral projections, wave operators, real
//! resonances, and Lindblad escape probabilities.

pub mod error;
pub mod evolution;
pub mod linalg;
pub mod lindblad;
pub mod models;
pub mod projections;
pub mod resolvent;
pub mod resonances;
pub mod scattering;
pub mod scenario;
pub mod spectra;

pub use error::{Error, Result};
pub use linalg::{CMat, CVec};
