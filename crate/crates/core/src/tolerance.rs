//! Numerical tolerance profile.
//!
//! Every threshold the library checks against lives in [`Tolerances`]. A
//! process-wide profile can be installed once (the CLI does this from the
//! `ADIAFRAME_TOLERANCE_PROFILE` environment variable); library code reads it
//! through [`Tolerances::global`].

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static GLOBAL: OnceLock<Tolerances> = OnceLock::new();

/// Environment variable naming the tolerance profile used by the CLI.
pub const PROFILE_ENV: &str = "ADIAFRAME_TOLERANCE_PROFILE";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Self-adjointness, relative to the largest entry magnitude.
    pub hermiticity: f64,
    /// Frobenius norm of `U^dagger U - I`.
    pub unitarity: f64,
    /// Relative eigendecomposition reconstruction residual.
    pub reconstruction: f64,
    /// Gap below which two levels count as degenerate, relative to the spectral range.
    pub degeneracy_gap: f64,
    /// Largest imaginary residual tolerated in a trace of Hermitian products.
    pub expectation_imag: f64,
    /// Unit-trace tolerance for density matrices and amplitude norms.
    pub trace: f64,
    /// Most negative eigenvalue accepted for a density matrix.
    pub positivity: f64,
    /// Trace drift tolerated over a single quantum step.
    pub trace_drift_per_step: f64,
    /// Relative first-law ledger closure.
    pub ledger: f64,
    /// Idempotence/completeness of projector families.
    pub projector: f64,
    /// Eigenvalue below which a matrix is rejected as a state in entropy evaluation.
    pub entropy_negative_eigenvalue: f64,
    /// Relative convergence of the velocity-Verlet fixed-point corrector.
    pub corrector: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermiticity: 1e-12,
            unitarity: 1e-10,
            reconstruction: 1e-10,
            degeneracy_gap: 1e-9,
            expectation_imag: 1e-12,
            trace: 1e-10,
            positivity: 1e-10,
            trace_drift_per_step: 1e-8,
            ledger: 1e-6,
            projector: 1e-12,
            entropy_negative_eigenvalue: 1e-8,
            corrector: 1e-13,
        }
    }
}

impl Tolerances {
    /// Tighter checks, for double-checking a run.
    pub fn strict() -> Self {
        Tolerances {
            hermiticity: 1e-13,
            unitarity: 1e-12,
            reconstruction: 1e-12,
            trace: 1e-12,
            positivity: 1e-12,
            trace_drift_per_step: 1e-10,
            ledger: 1e-8,
            ..Tolerances::default()
        }
    }

    /// Relaxed checks for exploratory runs with coarse steps.
    pub fn loose() -> Self {
        Tolerances {
            hermiticity: 1e-9,
            unitarity: 1e-8,
            reconstruction: 1e-8,
            expectation_imag: 1e-9,
            trace: 1e-8,
            positivity: 1e-8,
            trace_drift_per_step: 1e-6,
            ledger: 1e-4,
            projector: 1e-10,
            entropy_negative_eigenvalue: 1e-6,
            corrector: 1e-11,
            ..Tolerances::default()
        }
    }

    pub fn named(name: &str) -> Result<Self> {
        match name {
            "default" => Ok(Self::default()),
            "strict" => Ok(Self::strict()),
            "loose" => Ok(Self::loose()),
            other => Err(Error::validation(format!(
                "unknown tolerance profile {other:?} (expected default, strict or loose)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("hermiticity", self.hermiticity),
            ("unitarity", self.unitarity),
            ("reconstruction", self.reconstruction),
            ("degeneracy_gap", self.degeneracy_gap),
            ("expectation_imag", self.expectation_imag),
            ("trace", self.trace),
            ("positivity", self.positivity),
            ("trace_drift_per_step", self.trace_drift_per_step),
            ("ledger", self.ledger),
            ("projector", self.projector),
            ("entropy_negative_eigenvalue", self.entropy_negative_eigenvalue),
            ("corrector", self.corrector),
        ];
        for (name, value) in fields {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::validation(format!(
                    "tolerances.{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(())
    }

    /// The installed profile, or the default one if none was installed.
    pub fn global() -> &'static Tolerances {
        GLOBAL.get_or_init(Tolerances::default)
    }

    /// Install the process-wide profile. Fails if a profile is already in use.
    pub fn install(self) -> Result<()> {
        self.validate()?;
        GLOBAL
            .set(self)
            .map_err(|_| Error::validation("tolerance profile already installed"))
    }
}
