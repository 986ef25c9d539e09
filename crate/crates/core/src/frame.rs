//! The adiabatic frame of a Hamiltonian family at one apparatus point.
//!
//! At coordinates `x` the frame holds the level energies `W_k(x)`, the
//! gauge-fixed eigenbasis `U(x)`, the connection operators
//! `P_k = i hbar U^dagger dU/dx^k` and the gradients `U^dagger (dH/dx^k) U`.
//! The total force operator on the apparatus splits into a diagonal adiabatic
//! part and a purely off-diagonal diabatic part.

use log::warn;

use crate::error::{Error, Result};
use crate::family::{check_coords, hamiltonian_gradient, HamiltonianFamily};
use crate::operator::{check_same_dim, hermitian_eig, CMatrix, HermitianOperator, Spectrum, UnitaryMatrix, C64, I, ZERO};
use crate::tolerance::Tolerances;
use crate::units::HBAR;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConnectionMethod {
    /// Off-diagonal entries from first-order perturbation theory, zero diagonal.
    Perturbative,
    /// Centered difference of the tracked eigenbasis.
    FiniteDifference,
}

#[derive(Debug, Clone)]
pub struct AdiabaticFrame {
    pub x: Vec<f64>,
    pub spectrum: Spectrum,
    /// Connection operators `P_k`, in the adiabatic basis.
    pub connections: Vec<HermitianOperator>,
    pub degenerate: bool,
    pub method: ConnectionMethod,
    /// `U^dagger (dH/dx^k) U` per coordinate.
    gradients: Vec<HermitianOperator>,
}

/// Adiabatic (diagonal) and diabatic (off-diagonal) force operators, both in
/// the adiabatic basis, one per coordinate.
#[derive(Debug, Clone)]
pub struct ForcePair {
    pub adiabatic: Vec<HermitianOperator>,
    pub diabatic: Vec<HermitianOperator>,
}

impl AdiabaticFrame {
    pub fn coords(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.spectrum.dim()
    }

    pub fn energies(&self) -> &[f64] {
        &self.spectrum.eigenvalues
    }

    pub fn basis(&self) -> &UnitaryMatrix {
        &self.spectrum.basis
    }

    /// `U^dagger (dH/dx^k) U`.
    pub fn transformed_gradients(&self) -> &[HermitianOperator] {
        &self.gradients
    }

    /// Hellmann-Feynman level slopes: `slopes[k][j] = dW_j/dx^k`.
    pub fn level_slopes(&self) -> Vec<Vec<f64>> {
        self.gradients.iter().map(|g| g.diagonal()).collect()
    }

    /// `diag(W)`.
    pub fn energy_operator(&self) -> HermitianOperator {
        self.spectrum.diagonal()
    }

    /// `f_k = -(i/hbar) [W, P_k]`, per coordinate.
    pub fn diabatic_forces(&self) -> Vec<HermitianOperator> {
        let w = self.energies();
        self.connections
            .iter()
            .map(|p| {
                let m = w.len();
                let pm = p.matrix();
                let f = CMatrix::from_fn(m, m, |i, j| {
                    if i == j {
                        ZERO
                    } else {
                        -I / HBAR * (w[i] - w[j]) * pm[(i, j)]
                    }
                });
                HermitianOperator::from_matrix_unchecked(f)
            })
            .collect()
    }

    /// `F_k = -dW/dx^k`, per coordinate.
    pub fn adiabatic_forces(&self) -> Vec<HermitianOperator> {
        self.gradients
            .iter()
            .map(|g| HermitianOperator::from_real_diagonal(&g.diagonal().iter().map(|d| -d).collect::<Vec<_>>()))
            .collect()
    }

    /// The same physical frame expressed in the basis `U diag(e^{i phi})`.
    pub fn rephased(&self, phases: &[f64]) -> Result<AdiabaticFrame> {
        let basis = self.spectrum.basis.rephased(phases)?;
        let m = self.dim();
        let d = UnitaryMatrix::from_matrix_unchecked(CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::from_polar(1.0, phases[i])
            } else {
                ZERO
            }
        }));
        let gradients = self.gradients.iter().map(|g| g.to_basis(&d)).collect();
        let connections = self.connections.iter().map(|p| p.to_basis(&d)).collect();
        Ok(AdiabaticFrame {
            spectrum: Spectrum { basis, ..self.spectrum.clone() },
            gradients,
            connections,
            ..self.clone()
        })
    }
}

/// Build the frame at `x`, continuing the gauge of `prev` when given.
pub fn build_frame(
    fam: &dyn HamiltonianFamily,
    x: &[f64],
    prev: Option<&AdiabaticFrame>,
) -> Result<AdiabaticFrame> {
    check_coords(fam, x)?;
    let h = fam.evaluate(x)?;
    let spectrum = hermitian_eig(&h, prev.map(|p| p.basis()))?;
    let gradients: Vec<HermitianOperator> = hamiltonian_gradient(fam, x)?
        .iter()
        .map(|g| g.to_basis(&spectrum.basis))
        .collect();
    let (connections, method) = connection_ops(fam, x, &spectrum, &gradients)?;
    if spectrum.degenerate {
        warn!("adiabatic frame at x = {x:?} is degenerate; connection operators are gauge-ambiguous there");
    }
    Ok(AdiabaticFrame {
        x: x.to_vec(),
        degenerate: spectrum.degenerate,
        spectrum,
        connections,
        method,
        gradients,
    })
}

/// Connection operators at `x`: perturbative when the spectrum allows it,
/// otherwise finite differences of the tracked basis.
pub fn connection_ops(
    fam: &dyn HamiltonianFamily,
    x: &[f64],
    spectrum: &Spectrum,
    transformed_gradients: &[HermitianOperator],
) -> Result<(Vec<HermitianOperator>, ConnectionMethod)> {
    match perturbative_connections(spectrum, transformed_gradients) {
        Ok(p) => Ok((p, ConnectionMethod::Perturbative)),
        Err(Error::Degenerate { gap, lower, upper, .. }) => {
            warn!(
                "levels {lower}/{upper} nearly degenerate (gap {gap:e}) at x = {x:?}; \
                 falling back to finite-difference connections"
            );
            let p = finite_difference_connections(fam, x, spectrum, &fam.fd_steps())?;
            Ok((p, ConnectionMethod::FiniteDifference))
        }
        Err(e) => Err(e),
    }
}

/// `(P_k)_ij = i hbar <i|dH/dx^k|j> / (W_j - W_i)` for `i != j`, zero diagonal.
pub fn perturbative_connections(
    spectrum: &Spectrum,
    transformed_gradients: &[HermitianOperator],
) -> Result<Vec<HermitianOperator>> {
    let w = &spectrum.eigenvalues;
    let m = w.len();
    let threshold = Tolerances::global().degeneracy_gap * spectrum.range();
    for i in 0..m {
        for j in (i + 1)..m {
            let gap = (w[j] - w[i]).abs();
            if gap <= threshold {
                return Err(Error::Degenerate {
                    gap,
                    threshold,
                    lower: i.min(j),
                    upper: i.max(j),
                });
            }
        }
    }
    transformed_gradients
        .iter()
        .map(|g| {
            check_same_dim(g.dim(), m)?;
            let gm = g.matrix();
            let p = CMatrix::from_fn(m, m, |i, j| {
                if i == j {
                    ZERO
                } else {
                    I * HBAR * gm[(i, j)] / (w[j] - w[i])
                }
            });
            Ok(HermitianOperator::from_matrix_unchecked(p))
        })
        .collect()
}

/// `P_k = i hbar U^dagger(x) [U(x + h e_k) - U(x - h e_k)] / 2h`, Hermitized,
/// with the displaced bases continued from `U(x)`.
pub fn finite_difference_connections(
    fam: &dyn HamiltonianFamily,
    x: &[f64],
    spectrum: &Spectrum,
    steps: &[f64],
) -> Result<Vec<HermitianOperator>> {
    check_coords(fam, x)?;
    check_same_dim(steps.len(), x.len())?;
    let u = spectrum.basis.matrix();
    let mut probe = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for (k, &h) in steps.iter().enumerate() {
        if !(h > 0.0) {
            return Err(Error::validation(format!("finite-difference step {k} must be positive, got {h}")));
        }
        probe[k] = x[k] + h;
        let plus = hermitian_eig(&fam.evaluate(&probe)?, Some(&spectrum.basis))?;
        probe[k] = x[k] - h;
        let minus = hermitian_eig(&fam.evaluate(&probe)?, Some(&spectrum.basis))?;
        probe[k] = x[k];
        let du = (plus.basis.matrix() - minus.basis.matrix()).map(|z| z / (2.0 * h));
        let p = (u.adjoint() * du).map(|z| I * HBAR * z);
        out.push(HermitianOperator::hermitize(p)?);
    }
    Ok(out)
}

/// Split `U^dagger F_k U` (with `F_k = -dH/dx^k`) into its adiabatic and
/// diabatic parts.
pub fn forces(frame: &AdiabaticFrame) -> ForcePair {
    ForcePair {
        adiabatic: frame.adiabatic_forces(),
        diabatic: frame.diabatic_forces(),
    }
}

/// Largest relative residual of `U^dagger F_k U - (adiabatic + diabatic)` over
/// the coordinates.
pub fn decomposition_residual(frame: &AdiabaticFrame, pair: &ForcePair) -> f64 {
    frame
        .gradients
        .iter()
        .zip(pair.adiabatic.iter().zip(&pair.diabatic))
        .map(|(g, (a, d))| {
            let total = g.matrix().map(|z| -z);
            let r = (&total - a.matrix() - d.matrix()).norm();
            r / total.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// `H(x, v) = W(x) - v^k P_k(x)`.
pub fn moving_frame_hamiltonian(frame: &AdiabaticFrame, v: &[f64]) -> Result<HermitianOperator> {
    check_same_dim(v.len(), frame.coords())?;
    let mut h = frame.energy_operator().into_matrix();
    for (vk, p) in v.iter().zip(&frame.connections) {
        if *vk != 0.0 {
            h -= p.matrix() * C64::new(*vk, 0.0);
        }
    }
    Ok(HermitianOperator::from_matrix_unchecked(h))
}
