use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::family::HamiltonianFamily;
use crate::thermo::kubo_friction;

/// Position-dependent mass matrix `mu_jk(x)`.
pub trait Metric: Send + Sync {
    fn mass(&self, x: &[f64]) -> DMatrix<f64>;

    /// `d mu / d x^k`; centered differences unless overridden.
    fn mass_derivative(&self, x: &[f64], k: usize) -> DMatrix<f64> {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut probe = x.to_vec();
        probe[k] = x[k] + h;
        let plus = self.mass(&probe);
        probe[k] = x[k] - h;
        let minus = self.mass(&probe);
        (plus - minus) / (2.0 * h)
    }

    /// Whether `mass` is independent of `x` (skips the implicit corrector).
    fn is_constant(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantMetric(pub DMatrix<f64>);

impl ConstantMetric {
    /// `mass * I` in `n` coordinates.
    pub fn scalar(n: usize, mass: f64) -> Self {
        ConstantMetric(DMatrix::identity(n, n) * mass)
    }
}

impl Metric for ConstantMetric {
    fn mass(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }

    fn mass_derivative(&self, _x: &[f64], _k: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.0.nrows(), self.0.ncols())
    }

    fn is_constant(&self) -> bool {
        true
    }
}

/// Metric given by a closure.
pub struct FnMetric<F>(pub F);

impl<F> Metric for FnMetric<F>
where
    F: Fn(&[f64]) -> DMatrix<f64> + Send + Sync,
{
    fn mass(&self, x: &[f64]) -> DMatrix<f64> {
        (self.0)(x)
    }
}

/// Apparatus potential `V(x)`.
pub trait Potential: Send + Sync {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|k| {
                let h = 1e-6 * (1.0 + x[k].abs());
                probe[k] = x[k] + h;
                let plus = self.value(&probe);
                probe[k] = x[k] - h;
                let minus = self.value(&probe);
                probe[k] = x[k];
                (plus - minus) / (2.0 * h)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPotential;

impl Potential for ZeroPotential {
    fn value(&self, _x: &[f64]) -> f64 {
        0.0
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        vec![0.0; x.len()]
    }
}

/// `V(x) = 1/2 sum_k stiffness_k (x_k - center_k)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicPotential {
    pub stiffness: Vec<f64>,
    pub center: Vec<f64>,
}

impl Potential for HarmonicPotential {
    fn value(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.stiffness)
            .zip(&self.center)
            .map(|((x, k), c)| 0.5 * k * (x - c).powi(2))
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.stiffness)
            .zip(&self.center)
            .map(|((x, k), c)| k * (x - c))
            .collect()
    }
}

/// The classical apparatus: its metric and potential.
#[derive(Clone)]
pub struct Apparatus {
    pub metric: Arc<dyn Metric>,
    pub potential: Arc<dyn Potential>,
}

impl fmt::Debug for Apparatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Apparatus").finish_non_exhaustive()
    }
}

impl Apparatus {
    /// Free particle(s) of equal `mass` in `n` coordinates.
    pub fn free(n: usize, mass: f64) -> Self {
        Apparatus {
            metric: Arc::new(ConstantMetric::scalar(n, mass)),
            potential: Arc::new(ZeroPotential),
        }
    }

    pub fn new(metric: impl Metric + 'static, potential: impl Potential + 'static) -> Self {
        Apparatus {
            metric: Arc::new(metric),
            potential: Arc::new(potential),
        }
    }

    /// Cholesky factor of the mass matrix, failing if it is not SPD.
    pub(crate) fn mass_cholesky(&self, x: &[f64]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mu = self.metric.mass(x);
        if mu.nrows() != x.len() || mu.ncols() != x.len() {
            return Err(Error::validation(format!(
                "metric is {}x{}, expected {n}x{n}",
                mu.nrows(),
                mu.ncols(),
                n = x.len()
            )));
        }
        if (&mu - mu.transpose()).amax() > 1e-12 * mu.amax().max(f64::MIN_POSITIVE) {
            return Err(Error::validation(format!("metric at x = {x:?} is not symmetric")));
        }
        mu.cholesky()
            .ok_or_else(|| Error::validation(format!("metric at x = {x:?} is not positive definite")))
    }

    pub fn kinetic_energy(&self, x: &[f64], v: &[f64]) -> f64 {
        let mu = self.metric.mass(x);
        let v = DVector::from_column_slice(v);
        0.5 * v.dot(&(mu * &v))
    }

    /// Kinetic plus potential energy.
    pub fn mechanical_energy(&self, state: &ApparatusState) -> f64 {
        self.kinetic_energy(&state.x, &state.v) + self.potential.value(&state.x)
    }
}

/// Coordinates and velocities of the apparatus.
#[derive(Debug, Clone, PartialEq)]
pub struct ApparatusState {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

impl ApparatusState {
    pub fn new(x: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if x.len() != v.len() {
            return Err(Error::validation(format!(
                "apparatus has {} coordinates but {} velocities",
                x.len(),
                v.len()
            )));
        }
        Ok(ApparatusState { x, v })
    }
}

type GammaFn = dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync;

/// Velocity-linear apparatus friction: the applied force is `-Gamma(x) v`.
#[derive(Clone, Default)]
pub struct FrictionSpec {
    gamma: Option<Arc<GammaFn>>,
}

impl fmt::Debug for FrictionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FrictionSpec").field("enabled", &self.enabled()).finish()
    }
}

impl FrictionSpec {
    pub fn none() -> Self {
        FrictionSpec { gamma: None }
    }

    pub fn constant(gamma: DMatrix<f64>) -> Self {
        FrictionSpec {
            gamma: Some(Arc::new(move |_x: &[f64]| Ok(gamma.clone()))),
        }
    }

    pub fn from_fn<F>(f: F) -> Self
    where
        F: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        FrictionSpec { gamma: Some(Arc::new(f)) }
    }

    /// Nyquist-Kubo friction of `family` evaluated at every visited point.
    pub fn kubo(family: Arc<dyn HamiltonianFamily>, beta: f64, eta: f64) -> Self {
        FrictionSpec::from_fn(move |x| Ok(kubo_friction(family.as_ref(), x, beta, eta)?.gamma))
    }

    pub fn enabled(&self) -> bool {
        self.gamma.is_some()
    }

    /// `Gamma(x)`, or `None` when friction is disabled.
    pub fn gamma(&self, x: &[f64]) -> Result<Option<DMatrix<f64>>> {
        match &self.gamma {
            None => Ok(None),
            Some(f) => {
                let g = f(x)?;
                if g.nrows() != x.len() || g.ncols() != x.len() {
                    return Err(Error::validation(format!(
                        "friction tensor is {}x{}, expected {n}x{n}",
                        g.nrows(),
                        g.ncols(),
                        n = x.len()
                    )));
                }
                Ok(Some(g))
            }
        }
    }
}
