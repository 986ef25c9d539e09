//! Quantum objects driven by classical apparatus coordinates, described in
//! the moving adiabatic frame.
//!
//! The object Hamiltonian `H(x)` is diagonalized along the apparatus path;
//! the frame's connection splits the force on the apparatus into an
//! adiabatic part (work) and a diabatic part (heat). On top of that sit
//! coupled quantum/classical integrators with an energy ledger, the
//! Stern-Gerlach scenario, microcanonical thermodynamics, Kubo friction and
//! entropy audits.

pub mod cli;
pub mod dynamics;
pub mod entropy;
pub mod error;
pub mod family;
pub mod frame;
pub mod operator;
pub mod random;
pub mod state;
pub mod stern_gerlach;
pub mod thermo;
pub mod tolerance;

/// Internal unit system: `hbar = 1`, `k_B = 1`.
pub mod units {
    pub const HBAR: f64 = 1.0;
    pub const K_B: f64 = 1.0;
}

pub use error::{Error, Result};
