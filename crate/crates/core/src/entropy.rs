//! Von Neumann entropy, projective measurement, and the audits tying them to
//! the dynamics.

use rand::Rng;
use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::{Error, Result};
use crate::frame::AdiabaticFrame;
use crate::operator::{check_same_dim, hermitian_eigenvalues, trace_product, CMatrix, HermitianOperator, C64};
use crate::random::{random_state, seeded};
use crate::state::QuantumState;
use crate::tolerance::Tolerances;
use crate::units::K_B;

/// `-k_B sum_j lambda_j ln lambda_j` over the eigenvalues of `rho`, with
/// `0 ln 0 = 0`.
pub fn von_neumann_entropy(rho: &QuantumState) -> Result<f64> {
    let values = hermitian_eigenvalues(&rho.as_operator())?;
    entropy_of_spectrum(&values)
}

pub(crate) fn entropy_of_spectrum(values: &[f64]) -> Result<f64> {
    let floor = Tolerances::global().entropy_negative_eigenvalue;
    let mut s = 0.0;
    for &lambda in values {
        if lambda < -floor {
            return Err(Error::validation(format!(
                "density matrix has eigenvalue {lambda:e}; not a state"
            )));
        }
        if lambda > 0.0 {
            s -= lambda * lambda.ln();
        }
    }
    Ok(K_B * s)
}

/// Convert an entropy in units of `k_B` to bits.
pub fn entropy_in_bits(entropy: f64) -> f64 {
    entropy / (K_B * std::f64::consts::LN_2)
}

/// A complete family of mutually orthogonal projectors.
///
/// Not to be confused with the connection operators of an adiabatic frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    dim: usize,
    kind: FamilyKind,
}

#[derive(Debug, Clone, PartialEq)]
enum FamilyKind {
    /// Coordinate projectors onto index blocks of the working basis.
    Blocks(Vec<Vec<usize>>),
    Matrices(Vec<CMatrix>),
}

impl ProjectorFamily {
    /// Rank-one projectors `|k><k|` onto each basis vector.
    pub fn rank_one(dim: usize) -> Self {
        ProjectorFamily {
            dim,
            kind: FamilyKind::Blocks((0..dim).map(|k| vec![k]).collect()),
        }
    }

    /// Projectors onto the given partition of basis indices.
    pub fn from_blocks(dim: usize, blocks: Vec<Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for block in &blocks {
            for &k in block {
                if k >= dim {
                    return Err(Error::validation(format!("projector index {k} out of range for dim {dim}")));
                }
                if seen[k] {
                    return Err(Error::validation(format!("projector index {k} appears twice")));
                }
                seen[k] = true;
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::validation(format!(
                "projector family is incomplete: index {missing} is not covered"
            )));
        }
        Ok(ProjectorFamily {
            dim,
            kind: FamilyKind::Blocks(blocks),
        })
    }

    /// Arbitrary projector matrices, checked to be self-adjoint, idempotent,
    /// mutually orthogonal and complete.
    pub fn from_matrices(projectors: Vec<CMatrix>) -> Result<Self> {
        let Some(first) = projectors.first() else {
            return Err(Error::validation("projector family is empty"));
        };
        let dim = first.nrows();
        let tol = Tolerances::global().projector;
        let mut sum = CMatrix::zeros(dim, dim);
        for (a, p) in projectors.iter().enumerate() {
            HermitianOperator::new(p.clone())?;
            check_same_dim(p.nrows(), dim)?;
            let idem = (p * p - p).norm();
            if idem > tol {
                return Err(Error::validation(format!("projector {a} is not idempotent ({idem:e})")));
            }
            for (b, q) in projectors.iter().enumerate().skip(a + 1) {
                let overlap = (p * q).norm();
                if overlap > tol {
                    return Err(Error::validation(format!(
                        "projectors {a} and {b} are not orthogonal ({overlap:e})"
                    )));
                }
            }
            sum += p;
        }
        let completeness = (sum - CMatrix::identity(dim, dim)).norm();
        if completeness > tol {
            return Err(Error::validation(format!(
                "projector family is incomplete: |sum P - I| = {completeness:e}"
            )));
        }
        Ok(ProjectorFamily {
            dim,
            kind: FamilyKind::Matrices(projectors),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        match &self.kind {
            FamilyKind::Blocks(b) => b.len(),
            FamilyKind::Matrices(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn projectors(&self) -> Vec<CMatrix> {
        match &self.kind {
            FamilyKind::Matrices(m) => m.clone(),
            FamilyKind::Blocks(blocks) => blocks
                .iter()
                .map(|block| {
                    let mut p = CMatrix::zeros(self.dim, self.dim);
                    for &k in block {
                        p[(k, k)] = C64::new(1.0, 0.0);
                    }
                    p
                })
                .collect(),
        }
    }
}

/// `rho -> sum_k P_k rho P_k`.
pub fn project(rho: &QuantumState, family: &ProjectorFamily) -> Result<QuantumState> {
    check_same_dim(rho.dim(), family.dim())?;
    let m = rho.dim();
    let out = match &family.kind {
        FamilyKind::Blocks(blocks) => {
            let mut block_of = vec![0usize; m];
            for (b, block) in blocks.iter().enumerate() {
                for &k in block {
                    block_of[k] = b;
                }
            }
            let r = rho.rho();
            CMatrix::from_fn(m, m, |i, j| {
                if block_of[i] == block_of[j] {
                    r[(i, j)]
                } else {
                    C64::new(0.0, 0.0)
                }
            })
        }
        FamilyKind::Matrices(ps) => ps.iter().fold(CMatrix::zeros(m, m), |acc, p| acc + p * rho.rho() * p),
    };
    Ok(QuantumState::from_matrix_unchecked(out))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyDelta {
    pub before: f64,
    pub after: f64,
    pub delta: f64,
}

/// Entropy change of a projective measurement with `family`.
pub fn entropy_delta(rho: &QuantumState, family: &ProjectorFamily) -> Result<EntropyDelta> {
    let before = von_neumann_entropy(rho)?;
    let after = von_neumann_entropy(&project(rho, family)?)?;
    Ok(EntropyDelta {
        before,
        after,
        delta: after - before,
    })
}

/// `Tr(rho_P f_k)` for each coordinate, with `rho` projected onto the
/// adiabatic basis of `frame`.
pub fn projected_diabatic_force(frame: &AdiabaticFrame, rho: &QuantumState) -> Result<Vec<f64>> {
    check_same_dim(rho.dim(), frame.dim())?;
    let projected = project(rho, &ProjectorFamily::rank_one(frame.dim()))?;
    Ok(frame
        .diabatic_forces()
        .iter()
        .map(|f| trace_product(projected.rho(), f.matrix()).re)
        .collect())
}

/// Unprojected counterpart `Tr(rho f_k)`.
pub fn mean_diabatic_force(frame: &AdiabaticFrame, rho: &QuantumState) -> Result<Vec<f64>> {
    check_same_dim(rho.dim(), frame.dim())?;
    Ok(frame
        .diabatic_forces()
        .iter()
        .map(|f| trace_product(rho.rho(), f.matrix()).re)
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct ProjectionJump {
    pub t: f64,
    /// Entropy change recorded by the run at the event.
    pub recorded: f64,
    /// `S(after) - S(before)` re-evaluated from the stored states.
    pub observed: f64,
    /// Drift accumulated by unitary evolution before the event.
    pub drift_before: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EntropyAudit {
    /// Largest `|S(t) - S(segment start)|` over projection-free segments.
    pub max_unitary_drift: f64,
    pub jumps: Vec<ProjectionJump>,
}

/// Entropy drift along a run, split at projection events.
pub fn unitary_invariance_audit(run: &Trajectory) -> Result<EntropyAudit> {
    let mut max_drift = 0.0f64;
    let mut jumps = Vec::new();
    let mut events = run.projections.iter().peekable();
    let mut segment_start: Option<f64> = None;
    for sample in &run.samples {
        if let Some(event) = events.peek() {
            if sample.t >= event.t {
                let before = von_neumann_entropy(&QuantumState::from_matrix_unchecked(event.rho_before.clone()))?;
                let after = von_neumann_entropy(&QuantumState::from_matrix_unchecked(event.rho_after.clone()))?;
                let start = segment_start.unwrap_or(before);
                let drift_before = (before - start).abs();
                max_drift = max_drift.max(drift_before);
                jumps.push(ProjectionJump {
                    t: event.t,
                    recorded: event.delta.delta,
                    observed: after - before,
                    drift_before,
                });
                segment_start = Some(after);
                events.next();
            }
        }
        let s = von_neumann_entropy(&QuantumState::from_matrix_unchecked(sample.rho.clone()))?;
        let start = *segment_start.get_or_insert(s);
        max_drift = max_drift.max((s - start).abs());
    }
    Ok(EntropyAudit {
        max_unitary_drift: max_drift,
        jumps,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicitySuite {
    pub draws: usize,
    pub passes: usize,
    pub min_delta: f64,
    pub tolerance: f64,
}

/// Projection entropy change for `draws` seeded random states in `dim` levels.
/// A draw passes when `delta >= -tolerance`.
pub fn monotonicity_suite(dim: usize, draws: usize, seed: u64, tolerance: f64) -> Result<MonotonicitySuite> {
    let mut rng = seeded(seed);
    monotonicity_suite_with(&mut rng, dim, draws, tolerance)
}

pub fn monotonicity_suite_with<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    draws: usize,
    tolerance: f64,
) -> Result<MonotonicitySuite> {
    let family = ProjectorFamily::rank_one(dim);
    let mut passes = 0;
    let mut min_delta = f64::INFINITY;
    for _ in 0..draws {
        let rho = random_state(rng, dim);
        let d = entropy_delta(&rho, &family)?;
        if d.delta >= -tolerance {
            passes += 1;
        }
        min_delta = min_delta.min(d.delta);
    }
    Ok(MonotonicitySuite {
        draws,
        passes,
        min_delta,
        tolerance,
    })
}
