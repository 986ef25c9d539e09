use crate::error::{Error, Result};
use crate::operator::{check_square, hermitian_eigenvalues, hermitian_part, CMatrix, HermitianOperator, C64};
use crate::tolerance::Tolerances;

/// A density matrix: unit trace, self-adjoint, positive semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    rho: CMatrix,
}

impl QuantumState {
    pub fn new(rho: CMatrix) -> Result<Self> {
        check_square(&rho)?;
        let state = QuantumState { rho };
        state.validate(Tolerances::global())?;
        Ok(state)
    }

    /// Pure state `|psi><psi|` from amplitudes `C_k`.
    pub fn from_amplitudes(amplitudes: &[C64]) -> Result<Self> {
        if amplitudes.is_empty() {
            return Err(Error::validation("amplitude vector is empty"));
        }
        let norm: f64 = amplitudes.iter().map(|c| c.norm_sqr()).sum();
        let tol = Tolerances::global().trace;
        if (norm - 1.0).abs() > tol {
            return Err(Error::validation(format!(
                "amplitudes are not normalized: sum |C_k|^2 = {norm} (tolerance {tol:e})"
            )));
        }
        let m = amplitudes.len();
        let rho = CMatrix::from_fn(m, m, |i, j| amplitudes[i] * amplitudes[j].conj());
        Ok(QuantumState { rho })
    }

    /// Diagonal state with the given populations.
    pub fn from_populations(populations: &[f64]) -> Result<Self> {
        let m = populations.len();
        let rho = CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(populations[i], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        QuantumState::new(rho)
    }

    pub fn basis_state(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::validation(format!("basis index {k} out of range for dim {dim}")));
        }
        let mut p = vec![0.0; dim];
        p[k] = 1.0;
        QuantumState::from_populations(&p)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        QuantumState {
            rho: CMatrix::identity(dim, dim).map(|z| z / dim as f64),
        }
    }

    /// Wrap an integrator output; only Hermiticity is enforced.
    pub(crate) fn from_matrix_unchecked(rho: CMatrix) -> Self {
        QuantumState {
            rho: hermitian_part(&rho),
        }
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn trace(&self) -> f64 {
        self.rho.trace().re
    }

    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Diagonal entries `rho_kk`.
    pub fn populations(&self) -> Vec<f64> {
        (0..self.dim()).map(|k| self.rho[(k, k)].re).collect()
    }

    pub fn as_operator(&self) -> HermitianOperator {
        HermitianOperator::from_matrix_unchecked(self.rho.clone())
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        hermitian_eigenvalues(&self.as_operator())
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        let m = self.dim();
        let trace = self.rho.trace();
        if (trace.re - 1.0).abs() > tol.trace || trace.im.abs() > tol.trace {
            return Err(Error::validation(format!(
                "density matrix trace is {trace}, expected 1 within {:e}",
                tol.trace
            )));
        }
        for i in 0..m {
            for j in i..m {
                let d = (self.rho[(i, j)] - self.rho[(j, i)].conj()).norm();
                if d > tol.hermiticity.max(tol.trace) {
                    return Err(Error::validation(format!(
                        "density matrix is not self-adjoint at ({i},{j}): {d:e}"
                    )));
                }
            }
        }
        let min = self.eigenvalues()?.first().copied().unwrap_or(0.0);
        if min < -tol.positivity {
            return Err(Error::validation(format!(
                "density matrix has negative eigenvalue {min:e}"
            )));
        }
        Ok(())
    }
}
