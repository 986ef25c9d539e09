//! Seeded random operators, unitaries and states.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::operator::{hermitian_part, CMatrix, HermitianOperator, UnitaryMatrix, C64};
use crate::state::QuantumState;

pub type SimRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Complex Ginibre matrix with unit-variance entries.
pub fn ginibre<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> CMatrix {
    let s = 0.5f64.sqrt();
    CMatrix::from_fn(dim, dim, |_, _| C64::new(s * normal(rng), s * normal(rng)))
}

/// Hermitian part of a Ginibre matrix.
pub fn random_hermitian<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator {
    HermitianOperator::from_matrix_unchecked(hermitian_part(&ginibre(rng, dim)))
}

/// Gaussian orthogonal ensemble scaled so the spectrum fills `[-2, 2]`.
pub fn goe<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> HermitianOperator {
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| normal(rng));
    let scale = 1.0 / (2.0 * dim as f64).sqrt();
    let sym = (&g + g.transpose()) * scale;
    HermitianOperator::from_matrix_unchecked(sym.map(|x| C64::new(x, 0.0)))
}

/// Haar-distributed unitary via QR of a Ginibre matrix with phase correction.
pub fn haar_unitary<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> UnitaryMatrix {
    let qr = ginibre(rng, dim).qr();
    let (mut q, r) = qr.unpack();
    for k in 0..dim {
        let d = r[(k, k)];
        if d.norm() > 0.0 {
            let phase = d / d.norm();
            for z in q.column_mut(k).iter_mut() {
                *z *= phase;
            }
        }
    }
    UnitaryMatrix::from_matrix_unchecked(q)
}

/// Hilbert-Schmidt random state `G G^dagger / Tr(G G^dagger)`, `G` Ginibre.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> QuantumState {
    let g = ginibre(rng, dim);
    let w = &g * g.adjoint();
    let trace = w.trace().re;
    QuantumState::from_matrix_unchecked(w.map(|z| z / trace))
}

/// Haar-random normalized amplitude vector.
pub fn random_amplitudes<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> Vec<C64> {
    let s = 0.5f64.sqrt();
    let v: Vec<C64> = (0..dim).map(|_| C64::new(s * normal(rng), s * normal(rng))).collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.into_iter().map(|z| z / norm).collect()
}
