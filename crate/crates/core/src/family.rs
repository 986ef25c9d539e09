//! Parameterized object Hamiltonians `H(x)`.

use crate::error::{Error, Result};
use crate::operator::{pauli, CMatrix, HermitianOperator};
use crate::units::HBAR;

/// A Hermitian operator valued function of the apparatus coordinates.
pub trait HamiltonianFamily: Send + Sync {
    /// Number of apparatus coordinates `n`.
    fn coords(&self) -> usize;

    /// Object dimension `m`.
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator>;

    /// Analytic `dH/dx^k`, one operator per coordinate, when available.
    fn gradient(&self, _x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        None
    }

    /// Centered-difference step per coordinate, used when `gradient` is absent.
    fn fd_steps(&self) -> Vec<f64> {
        vec![1e-5; self.coords()]
    }
}

pub(crate) fn check_coords(fam: &dyn HamiltonianFamily, x: &[f64]) -> Result<()> {
    if x.len() != fam.coords() {
        return Err(Error::validation(format!(
            "coordinate vector has length {}, family expects {}",
            x.len(),
            fam.coords()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain(format!("non-finite coordinates {x:?}")));
    }
    Ok(())
}

/// `dH/dx^k` for every coordinate: analytic if provided, otherwise centered
/// differences with the family's steps.
pub fn hamiltonian_gradient(fam: &dyn HamiltonianFamily, x: &[f64]) -> Result<Vec<HermitianOperator>> {
    check_coords(fam, x)?;
    if let Some(grad) = fam.gradient(x) {
        let grad = grad?;
        if grad.len() != fam.coords() {
            return Err(Error::validation(format!(
                "family gradient returned {} operators for {} coordinates",
                grad.len(),
                fam.coords()
            )));
        }
        return Ok(grad);
    }
    let steps = fam.fd_steps();
    let mut out = Vec::with_capacity(x.len());
    let mut probe = x.to_vec();
    for (k, &h) in steps.iter().enumerate() {
        probe[k] = x[k] + h;
        let plus = fam.evaluate(&probe)?;
        probe[k] = x[k] - h;
        let minus = fam.evaluate(&probe)?;
        probe[k] = x[k];
        let diff = (plus.matrix() - minus.matrix()).map(|z| z / (2.0 * h));
        out.push(HermitianOperator::hermitize(diff)?);
    }
    Ok(out)
}

/// One term `matrix * prod_k x_k^powers[k]` of a matrix polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct MonomialTerm {
    pub matrix: HermitianOperator,
    pub powers: Vec<u32>,
}

/// `H(x) = sum_t M_t * prod_k x_k^{p_tk}` with constant Hermitian `M_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialFamily {
    coords: usize,
    dim: usize,
    terms: Vec<MonomialTerm>,
}

impl PolynomialFamily {
    pub fn new(coords: usize, terms: Vec<MonomialTerm>) -> Result<Self> {
        let Some(first) = terms.first() else {
            return Err(Error::validation("polynomial family needs at least one term"));
        };
        let dim = first.matrix.dim();
        for (t, term) in terms.iter().enumerate() {
            if term.matrix.dim() != dim {
                return Err(Error::validation(format!(
                    "term {t} has dimension {}, expected {dim}",
                    term.matrix.dim()
                )));
            }
            if term.powers.len() != coords {
                return Err(Error::validation(format!(
                    "term {t} has {} exponents, expected {coords}",
                    term.powers.len()
                )));
            }
        }
        Ok(PolynomialFamily { coords, dim, terms })
    }

    /// `H(x) = a + x * b` in one coordinate.
    pub fn linear(a: HermitianOperator, b: HermitianOperator) -> Result<Self> {
        Self::new(
            1,
            vec![
                MonomialTerm { matrix: a, powers: vec![0] },
                MonomialTerm { matrix: b, powers: vec![1] },
            ],
        )
    }

    /// A constant family `H(x) = h0` over `coords` coordinates.
    pub fn constant(h0: HermitianOperator, coords: usize) -> Result<Self> {
        Self::new(coords, vec![MonomialTerm { matrix: h0, powers: vec![0; coords] }])
    }

    pub fn terms(&self) -> &[MonomialTerm] {
        &self.terms
    }

    /// Same family with `shift * I` added.
    pub fn shifted(&self, shift: f64) -> Self {
        let mut terms = self.terms.clone();
        terms.push(MonomialTerm {
            matrix: HermitianOperator::identity(self.dim).scaled(shift),
            powers: vec![0; self.coords],
        });
        PolynomialFamily { terms, ..self.clone() }
    }
}

fn monomial(x: &[f64], powers: &[u32]) -> f64 {
    x.iter().zip(powers).map(|(&v, &p)| v.powi(p as i32)).product()
}

impl HamiltonianFamily for PolynomialFamily {
    fn coords(&self) -> usize {
        self.coords
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        check_coords(self, x)?;
        let mut h = CMatrix::zeros(self.dim, self.dim);
        for term in &self.terms {
            let c = monomial(x, &term.powers);
            if c != 0.0 {
                h += term.matrix.matrix() * crate::operator::C64::new(c, 0.0);
            }
        }
        Ok(HermitianOperator::from_matrix_unchecked(h))
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        if let Err(e) = check_coords(self, x) {
            return Some(Err(e));
        }
        let grads = (0..self.coords)
            .map(|k| {
                let mut g = CMatrix::zeros(self.dim, self.dim);
                for term in &self.terms {
                    let p = term.powers[k];
                    if p == 0 {
                        continue;
                    }
                    let mut reduced = term.powers.clone();
                    reduced[k] -= 1;
                    let c = p as f64 * monomial(x, &reduced);
                    if c != 0.0 {
                        g += term.matrix.matrix() * crate::operator::C64::new(c, 0.0);
                    }
                }
                HermitianOperator::from_matrix_unchecked(g)
            })
            .collect();
        Some(Ok(grads))
    }
}

/// Spin one-half in a field of fixed magnitude whose direction rotates in the
/// x-z plane: `H(x) = -(hbar*gamma*B0/2) (sin x sigma_x + cos x sigma_z)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotatingFieldSpin {
    /// `gamma * B0`, the Larmor frequency.
    pub larmor: f64,
}

impl RotatingFieldSpin {
    /// `hbar * gamma * B0 / 2`.
    pub fn half_splitting(&self) -> f64 {
        HBAR * self.larmor / 2.0
    }
}

impl HamiltonianFamily for RotatingFieldSpin {
    fn coords(&self) -> usize {
        1
    }

    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        check_coords(self, x)?;
        let c = self.half_splitting();
        let (s, co) = x[0].sin_cos();
        pauli::x().scaled(-c * s).add(&pauli::z().scaled(-c * co))
    }

    fn gradient(&self, x: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        if let Err(e) = check_coords(self, x) {
            return Some(Err(e));
        }
        let c = self.half_splitting();
        let (s, co) = x[0].sin_cos();
        Some(pauli::x().scaled(-c * co).add(&pauli::z().scaled(c * s)).map(|g| vec![g]))
    }
}

/// Family defined by a closure, differentiated numerically.
pub struct FnFamily<F> {
    coords: usize,
    dim: usize,
    steps: Vec<f64>,
    f: F,
}

impl<F> FnFamily<F>
where
    F: Fn(&[f64]) -> Result<HermitianOperator> + Send + Sync,
{
    pub fn new(coords: usize, dim: usize, f: F) -> Self {
        FnFamily { coords, dim, steps: vec![1e-5; coords], f }
    }

    pub fn with_steps(mut self, steps: Vec<f64>) -> Self {
        self.steps = steps;
        self
    }
}

impl<F> HamiltonianFamily for FnFamily<F>
where
    F: Fn(&[f64]) -> Result<HermitianOperator> + Send + Sync,
{
    fn coords(&self) -> usize {
        self.coords
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<HermitianOperator> {
        check_coords(self, x)?;
        let h = (self.f)(x)?;
        if h.dim() != self.dim {
            return Err(Error::validation(format!(
                "family closure returned dimension {}, expected {}",
                h.dim(),
                self.dim
            )));
        }
        Ok(h)
    }

    fn fd_steps(&self) -> Vec<f64> {
        self.steps.clone()
    }
}
