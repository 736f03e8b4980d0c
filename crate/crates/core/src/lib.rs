//! Adiabatic evolution of a charged particle in a slowly rotating magnetic
//! field with axial harmonic confinement.
//!
//! The library is organized around the factorization of the evolution into a
//! frame rotation, a path-ordered magnetic translation, and the static
//! dynamical flow:
//!
//! - [`geometry`]: paths of the field direction on the unit sphere, parallel
//!   transport of the co-moving frame, holonomy, and the adiabatic
//!   displacement integral.
//! - [`magtrans`]: the magnetic-translation group with its flux-phase
//!   composition law, loop phases, and the path-ordered phase.
//! - [`dynamics`]: exact equations of motion in lab and rotating frames and
//!   their integration as affine symplectic propagators.
//! - [`adiabatic`]: assembly of the factorized propagator and the phase
//!   determination by quadrature of the connection integrands.
//! - [`wavepacket`]: exact Gaussian-state propagation with global-phase
//!   tracking for a fully quantum check of the factorization.
//!
//! Natural units `hbar = m = c = 1` throughout; configuration supplies
//! `(omega_c, omega, a, T)` directly.

pub mod adiabatic;
pub mod dynamics;
pub mod geometry;
pub mod magtrans;
pub mod ode;
pub mod quadrature;
pub mod report;
pub mod wavepacket;

pub use adiabatic::{ErrorReport, FactorizedPropagator, StateMoments};
pub use dynamics::{AffinePropagator, Frame, PhaseSpaceState, RotatingState, SystemParams};
pub use geometry::{DisplacementCurve, FieldPath, FrameMatrix, TransportedFrame};
pub use magtrans::{FluxConstants, MagneticTranslationElement};
pub use wavepacket::GaussianState;

use thiserror::Error;

/// Errors surfaced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid field path: {0}")]
    InvalidPath(String),
    #[error("invalid system parameters: {0}")]
    InvalidParams(String),
    #[error("path is not closed (|n(1) - n(0)| = {gap:.3e})")]
    OpenPath { gap: f64 },
    #[error("integration failed: {0}")]
    Integration(#[from] ode::OdeError),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
