//! Dense complex Hermitian linear algebra.
//!
//! Eigendecompositions carry a deterministic gauge: without a reference basis
//! every eigenvector's largest-magnitude component is made real and positive;
//! with a reference basis, columns are relabelled to follow the reference and
//! phased so that each overlap with its reference column is real and positive.

use std::cmp::Ordering;

use nalgebra::{DMatrix, SymmetricEigen};
use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::state::QuantumState;
use crate::tolerance::Tolerances;

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
pub(crate) const I: C64 = C64::new(0.0, 1.0);

/// Largest-magnitude ties within this relative margin go to the lowest index.
const GAUGE_TIE: f64 = 1e-10;

/// A validated `m x m` self-adjoint matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator(CMatrix);

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let scale = max_abs(&matrix);
        let tol = Tolerances::global().hermiticity * scale.max(f64::MIN_POSITIVE);
        let m = matrix.nrows();
        for i in 0..m {
            for j in i..m {
                let d = (matrix[(i, j)] - matrix[(j, i)].conj()).norm();
                if d > tol {
                    return Err(Error::validation(format!(
                        "matrix is not self-adjoint: |H[{i},{j}] - conj(H[{j},{i}])| = {d:e} exceeds {tol:e}"
                    )));
                }
            }
        }
        Ok(HermitianOperator(matrix))
    }

    /// Replace `matrix` by `(matrix + matrix^dagger) / 2`.
    pub fn hermitize(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        Ok(HermitianOperator(hermitian_part(&matrix)))
    }

    pub fn from_real(matrix: DMatrix<f64>) -> Result<Self> {
        Self::new(matrix.map(|x| C64::new(x, 0.0)))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let m = diag.len();
        HermitianOperator(CMatrix::from_fn(m, m, |i, j| {
            if i == j {
                C64::new(diag[i], 0.0)
            } else {
                ZERO
            }
        }))
    }

    pub fn zeros(dim: usize) -> Self {
        HermitianOperator(CMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        HermitianOperator(CMatrix::identity(dim, dim))
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        HermitianOperator(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn is_diagonal(&self) -> bool {
        let m = self.dim();
        (0..m).all(|j| (0..m).all(|i| i == j || self.0[(i, j)] == ZERO))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.0[(i, i)].re).collect()
    }

    /// Operator restricted to its diagonal.
    pub fn diagonal_part(&self) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&self.diagonal())
    }

    /// `basis^dagger * self * basis`.
    pub fn to_basis(&self, basis: &UnitaryMatrix) -> HermitianOperator {
        HermitianOperator(hermitian_part(&(basis.0.adjoint() * &self.0 * &basis.0)))
    }

    /// `basis * self * basis^dagger`.
    pub fn from_basis(&self, basis: &UnitaryMatrix) -> HermitianOperator {
        HermitianOperator(hermitian_part(&(&basis.0 * &self.0 * basis.0.adjoint())))
    }

    pub fn scaled(&self, factor: f64) -> HermitianOperator {
        HermitianOperator(self.0.map(|z| z * factor))
    }

    pub fn add(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(HermitianOperator(&self.0 + &other.0))
    }

    pub fn sub(&self, other: &HermitianOperator) -> Result<HermitianOperator> {
        check_same_dim(self.dim(), other.dim())?;
        Ok(HermitianOperator(&self.0 - &other.0))
    }
}

/// Pauli matrices.
pub mod pauli {
    use super::*;

    pub fn x() -> HermitianOperator {
        HermitianOperator(CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]))
    }

    pub fn y() -> HermitianOperator {
        HermitianOperator(CMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO]))
    }

    pub fn z() -> HermitianOperator {
        HermitianOperator(CMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE]))
    }
}

/// An `m x m` unitary matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryMatrix(CMatrix);

impl UnitaryMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let m = matrix.nrows();
        let residual = (matrix.adjoint() * &matrix - CMatrix::identity(m, m)).norm();
        let tol = Tolerances::global().unitarity;
        if residual > tol {
            return Err(Error::validation(format!(
                "matrix is not unitary: |U^dagger U - I| = {residual:e} exceeds {tol:e}"
            )));
        }
        Ok(UnitaryMatrix(matrix))
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryMatrix(CMatrix::identity(dim, dim))
    }

    pub(crate) fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        UnitaryMatrix(matrix)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn adjoint(&self) -> UnitaryMatrix {
        UnitaryMatrix(self.0.adjoint())
    }

    /// Right-multiply by `diag(exp(i * phases))`.
    pub fn rephased(&self, phases: &[f64]) -> Result<UnitaryMatrix> {
        check_same_dim(self.dim(), phases.len())?;
        let mut out = self.0.clone();
        for (k, &phi) in phases.iter().enumerate() {
            let factor = C64::from_polar(1.0, phi);
            for z in out.column_mut(k).iter_mut() {
                *z *= factor;
            }
        }
        Ok(UnitaryMatrix(out))
    }

    pub fn unitarity_residual(&self) -> f64 {
        let m = self.dim();
        (self.0.adjoint() * &self.0 - CMatrix::identity(m, m)).norm()
    }
}

/// Ascending eigenvalues with a gauge-fixed eigenbasis.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Eigenvalues; column `k` of `basis` belongs to `eigenvalues[k]`.
    pub eigenvalues: Vec<f64>,
    pub basis: UnitaryMatrix,
    /// `permutation[k]` is the ascending-order index placed in column `k`.
    /// The identity unless a reference basis forced a relabelling.
    pub permutation: Vec<usize>,
    /// Some pair of levels is closer than the degeneracy threshold.
    pub degenerate: bool,
}

impl Spectrum {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// `diag(eigenvalues)`.
    pub fn diagonal(&self) -> HermitianOperator {
        HermitianOperator::from_real_diagonal(&self.eigenvalues)
    }

    /// `basis * diag(eigenvalues) * basis^dagger`.
    pub fn reconstruct(&self) -> CMatrix {
        let u = self.basis.matrix();
        let mut scaled = u.clone();
        for (k, &w) in self.eigenvalues.iter().enumerate() {
            for z in scaled.column_mut(k).iter_mut() {
                *z *= w;
            }
        }
        scaled * u.adjoint()
    }

    /// Relative Frobenius residual of the reconstruction against `h`.
    pub fn reconstruction_residual(&self, h: &HermitianOperator) -> f64 {
        let diff = (self.reconstruct() - h.matrix()).norm();
        diff / h.norm().max(f64::MIN_POSITIVE)
    }

    pub fn is_relabelled(&self) -> bool {
        self.permutation.iter().enumerate().any(|(k, &p)| k != p)
    }

    /// Smallest gap between adjacent levels (infinite for a single level).
    pub fn min_gap(&self) -> f64 {
        let mut sorted = self.eigenvalues.clone();
        sorted.sort_by(f64::total_cmp);
        sorted
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn range(&self) -> f64 {
        let (lo, hi) = self
            .eigenvalues
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &w| {
                (lo.min(w), hi.max(w))
            });
        hi - lo
    }
}

/// Diagonalize `h`, optionally continuing the gauge and labels of `reference`.
pub fn hermitian_eig(h: &HermitianOperator, reference: Option<&UnitaryMatrix>) -> Result<Spectrum> {
    let m = h.dim();
    if let Some(r) = reference {
        check_same_dim(m, r.dim())?;
    }
    let (values, vectors) = raw_eig(h)?;

    // Ascending order.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| values[k]).collect();
    let mut basis = CMatrix::from_fn(m, m, |i, j| vectors[(i, order[j])]);

    let clusters = degenerate_clusters(&eigenvalues, Tolerances::global().degeneracy_gap);
    let degenerate = clusters.iter().any(|c| c.len() > 1);

    match reference {
        None => {
            for k in 0..m {
                fix_largest_component(&mut basis, k);
            }
            Ok(Spectrum {
                eigenvalues,
                basis: UnitaryMatrix(basis),
                permutation: (0..m).collect(),
                degenerate,
            })
        }
        Some(reference) => {
            let r = reference.matrix();
            let overlap = r.adjoint() * &basis;
            let permutation = assign_labels(&overlap);

            // Inverse map: sorted index -> slot.
            let mut slot_of = vec![0; m];
            for (slot, &j) in permutation.iter().enumerate() {
                slot_of[j] = slot;
            }

            let mut out = CMatrix::zeros(m, m);
            for cluster in &clusters {
                let slots: Vec<usize> = cluster.iter().map(|&j| slot_of[j]).collect();
                if cluster.len() == 1 {
                    out.set_column(slots[0], &basis.column(cluster[0]));
                    continue;
                }
                // Rotate within the degenerate subspace onto the reference
                // columns it was matched with (polar factor of V^dagger R).
                let v = CMatrix::from_fn(m, cluster.len(), |i, a| basis[(i, cluster[a])]);
                let rs = CMatrix::from_fn(m, slots.len(), |i, a| r[(i, slots[a])]);
                let mtx = v.adjoint() * &rs;
                let svd = mtx.svd(true, true);
                let (Some(x), Some(yt)) = (svd.u, svd.v_t) else {
                    return Err(Error::numerical("SVD failed while aligning a degenerate subspace"));
                };
                let rotated = v * (x * yt);
                for (a, &slot) in slots.iter().enumerate() {
                    out.set_column(slot, &rotated.column(a));
                }
            }

            for k in 0..m {
                let o: C64 = r.column(k).dotc(&out.column(k));
                if o.norm() > 1e-300 {
                    let phase = o.conj() / o.norm();
                    for z in out.column_mut(k).iter_mut() {
                        *z *= phase;
                    }
                } else {
                    fix_largest_component(&mut out, k);
                }
            }

            let eigenvalues = permutation.iter().map(|&j| eigenvalues[j]).collect();
            Ok(Spectrum {
                eigenvalues,
                basis: UnitaryMatrix(out),
                permutation,
                degenerate,
            })
        }
    }
}

/// Ascending eigenvalues only.
pub fn hermitian_eigenvalues(h: &HermitianOperator) -> Result<Vec<f64>> {
    let mut values: Vec<f64> = if h.is_real() {
        h.0.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        h.0.symmetric_eigenvalues().iter().copied().collect()
    };
    if values.iter().any(|w| !w.is_finite()) {
        return Err(Error::numerical(format!(
            "eigensolver produced non-finite eigenvalues (dim {}, |H|_F = {:e})",
            h.dim(),
            h.norm()
        )));
    }
    values.sort_by(f64::total_cmp);
    Ok(values)
}

/// `a * b - b * a`. Anti-Hermitian for Hermitian arguments.
pub fn commutator(a: &HermitianOperator, b: &HermitianOperator) -> Result<CMatrix> {
    check_same_dim(a.dim(), b.dim())?;
    Ok(commute(&a.0, &b.0))
}

pub(crate) fn commute(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// `Tr(rho * a)`, checked to be real.
pub fn expectation(rho: &QuantumState, a: &HermitianOperator) -> Result<f64> {
    check_same_dim(rho.dim(), a.dim())?;
    let value = trace_product(rho.rho(), &a.0);
    let tol = Tolerances::global().expectation_imag * (1.0 + a.max_abs());
    if value.im.abs() > tol {
        return Err(Error::numerical(format!(
            "expectation value has imaginary part {:e} above {tol:e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// `Tr(a * b)` without forming the product.
pub(crate) fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    let m = a.nrows();
    let mut acc = ZERO;
    for i in 0..m {
        for j in 0..m {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// `f(h)` through the spectral decomposition; exact for diagonal `h`.
pub fn spectral_function<F>(h: &HermitianOperator, f: F) -> Result<HermitianOperator>
where
    F: Fn(f64) -> f64,
{
    let apply = |w: f64| -> Result<f64> {
        let y = f(w);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::domain(format!("function is undefined at eigenvalue {w}")))
        }
    };
    if h.is_diagonal() {
        let diag = h.diagonal().into_iter().map(apply).collect::<Result<Vec<_>>>()?;
        return Ok(HermitianOperator::from_real_diagonal(&diag));
    }
    let spec = hermitian_eig(h, None)?;
    let mapped = spec.eigenvalues.iter().map(|&w| apply(w)).collect::<Result<Vec<_>>>()?;
    let image = Spectrum {
        eigenvalues: mapped,
        ..spec
    };
    Ok(HermitianOperator(hermitian_part(&image.reconstruct())))
}

pub(crate) fn hermitian_part(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).map(|z| z * 0.5)
}

pub(crate) fn max_abs(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub(crate) fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() == 0 || m.nrows() != m.ncols() {
        return Err(Error::validation(format!(
            "expected a non-empty square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

pub(crate) fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::validation(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

fn raw_eig(h: &HermitianOperator) -> Result<(Vec<f64>, CMatrix)> {
    if h.is_real() {
        let real = h.0.map(|z| z.re);
        let (values, vectors) = try_sym_eig(real, h)?;
        Ok((values, vectors.map(|x| C64::new(x, 0.0))))
    } else {
        try_sym_eig(h.0.clone(), h)
    }
}

fn try_sym_eig<T>(matrix: DMatrix<T>, original: &HermitianOperator) -> Result<(Vec<f64>, DMatrix<T>)>
where
    T: nalgebra::ComplexField<RealField = f64>,
{
    let m = matrix.nrows();
    let max_iter = 1000 * m.max(10);
    let failure = || {
        Error::numerical(format!(
            "eigensolver did not converge (dim {m}, |H|_F = {:e}, max |H_ij| = {:e})",
            original.norm(),
            original.max_abs()
        ))
    };
    let eig = SymmetricEigen::try_new(matrix, f64::EPSILON, max_iter).ok_or_else(failure)?;
    Ok((eig.eigenvalues.iter().copied().collect(), eig.eigenvectors))
}

fn fix_largest_component(basis: &mut CMatrix, k: usize) {
    let col = basis.column(k);
    let biggest = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let Some(pivot) = col.iter().position(|z| z.norm() >= biggest * (1.0 - GAUGE_TIE)) else {
        return;
    };
    let z = col[pivot];
    if z.norm() == 0.0 {
        return;
    }
    let phase = z.conj() / z.norm();
    for w in basis.column_mut(k).iter_mut() {
        *w *= phase;
    }
}

/// Group indices of ascending `values` whose neighbour gaps fall below
/// `rel_gap` times the spectral range.
pub(crate) fn degenerate_clusters(values: &[f64], rel_gap: f64) -> Vec<Vec<usize>> {
    let Some((&first, &last)) = values.first().zip(values.last()) else {
        return Vec::new();
    };
    let threshold = rel_gap * (last - first);
    let mut clusters = vec![vec![0]];
    for k in 1..values.len() {
        if values[k] - values[k - 1] <= threshold {
            clusters.last_mut().unwrap().push(k);
        } else {
            clusters.push(vec![k]);
        }
    }
    clusters
}

/// Greedy maximum-overlap assignment: `result[slot]` is the column matched
/// with reference column `slot`.
fn assign_labels(overlap: &CMatrix) -> Vec<usize> {
    let m = overlap.nrows();
    let mut entries: Vec<(f64, usize, usize)> = Vec::with_capacity(m * m);
    for slot in 0..m {
        for j in 0..m {
            entries.push((overlap[(slot, j)].norm(), slot, j));
        }
    }
    entries.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut result = vec![usize::MAX; m];
    let mut taken = vec![false; m];
    let mut remaining = m;
    for (_, slot, j) in entries {
        if remaining == 0 {
            break;
        }
        if result[slot] == usize::MAX && !taken[j] {
            result[slot] = j;
            taken[j] = true;
            remaining -= 1;
        }
    }
    result
}
