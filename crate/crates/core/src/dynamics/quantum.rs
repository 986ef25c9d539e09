//! Fourth-order Runge-Kutta propagation of the density matrix in the moving
//! adiabatic frame, `i hbar d(rho)/dt = [H(x, v), rho]`.
//!
//! The heat and work rates `-Tr(rho f_k) v^k` and `-Tr(rho F_k) v^k` are
//! integrated as extra components of the same RK4 system, so the first-law
//! ledger closes at the integrator's order.

use crate::error::{Error, Result};
use crate::family::HamiltonianFamily;
use crate::frame::{build_frame, moving_frame_hamiltonian, AdiabaticFrame};
use crate::operator::{commute, trace_product, CMatrix, C64, I};
use crate::state::QuantumState;
use crate::tolerance::Tolerances;
use crate::units::HBAR;

/// Cubic Hermite path between two apparatus states `dt` apart. Its velocity
/// is the exact derivative of its position.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSegment {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub x1: Vec<f64>,
    pub v1: Vec<f64>,
    pub dt: f64,
}

impl PathSegment {
    /// A segment at rest at `x`.
    pub fn stationary(x: &[f64], dt: f64) -> Self {
        PathSegment {
            x0: x.to_vec(),
            v0: vec![0.0; x.len()],
            x1: x.to_vec(),
            v1: vec![0.0; x.len()],
            dt,
        }
    }

    /// Uniform motion from `x0` with velocity `v`.
    pub fn uniform(x0: &[f64], v: &[f64], dt: f64) -> Self {
        PathSegment {
            x0: x0.to_vec(),
            v0: v.to_vec(),
            x1: x0.iter().zip(v).map(|(x, v)| x + v * dt).collect(),
            v1: v.to_vec(),
            dt,
        }
    }

    pub fn position(&self, s: f64) -> Vec<f64> {
        let t = s / self.dt;
        let h00 = 2.0 * t.powi(3) - 3.0 * t * t + 1.0;
        let h10 = t.powi(3) - 2.0 * t * t + t;
        let h01 = -2.0 * t.powi(3) + 3.0 * t * t;
        let h11 = t.powi(3) - t * t;
        (0..self.x0.len())
            .map(|k| {
                h00 * self.x0[k] + h10 * self.dt * self.v0[k] + h01 * self.x1[k] + h11 * self.dt * self.v1[k]
            })
            .collect()
    }

    pub fn velocity(&self, s: f64) -> Vec<f64> {
        let t = s / self.dt;
        let d00 = 6.0 * t * t - 6.0 * t;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = -6.0 * t * t + 6.0 * t;
        let d11 = 3.0 * t * t - 2.0 * t;
        (0..self.x0.len())
            .map(|k| (d00 * self.x0[k] + d01 * self.x1[k]) / self.dt + d10 * self.v0[k] + d11 * self.v1[k])
            .collect()
    }

    fn validate(&self) -> Result<()> {
        let n = self.x0.len();
        if self.v0.len() != n || self.x1.len() != n || self.v1.len() != n {
            return Err(Error::validation("path segment vectors have inconsistent lengths"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct QuantumStep {
    pub state: QuantumState,
    /// Frame at the end of the segment, continued from the input frame.
    pub frame: AdiabaticFrame,
    /// `-int Tr(rho f_k) v^k dt` over the step.
    pub heat: f64,
    /// `-int Tr(rho F_k) v^k dt` over the step.
    pub work: f64,
}

struct Stage {
    generator: CMatrix,
    v: Vec<f64>,
    diabatic: Vec<CMatrix>,
    adiabatic: Vec<Vec<f64>>,
}

impl Stage {
    fn new(frame: &AdiabaticFrame, v: Vec<f64>) -> Result<Self> {
        let generator = moving_frame_hamiltonian(frame, &v)?.into_matrix();
        let diabatic = frame.diabatic_forces().into_iter().map(|f| f.into_matrix()).collect();
        let adiabatic = frame.adiabatic_forces().iter().map(|f| f.diagonal()).collect();
        Ok(Stage {
            generator,
            v,
            diabatic,
            adiabatic,
        })
    }

    /// `(d rho/dt, heat rate, work rate)` at `rho`.
    fn eval(&self, rho: &CMatrix) -> (CMatrix, f64, f64) {
        let drho = commute(&self.generator, rho).map(|z| z * (-I / HBAR));
        let mut heat = 0.0;
        let mut work = 0.0;
        for (k, &vk) in self.v.iter().enumerate() {
            if vk == 0.0 {
                continue;
            }
            heat -= trace_product(rho, &self.diabatic[k]).re * vk;
            let mean_adiabatic: f64 = self.adiabatic[k].iter().enumerate().map(|(i, f)| rho[(i, i)].re * f).sum();
            work -= mean_adiabatic * vk;
        }
        (drho, heat, work)
    }
}

/// Advance `state` across `path`, starting from `frame` at `path.x0`.
pub fn quantum_step(
    fam: &dyn HamiltonianFamily,
    frame: &AdiabaticFrame,
    state: &QuantumState,
    path: &PathSegment,
) -> Result<QuantumStep> {
    path.validate()?;
    if state.dim() != frame.dim() {
        return Err(Error::validation(format!(
            "state dimension {} does not match frame dimension {}",
            state.dim(),
            frame.dim()
        )));
    }
    let dt = path.dt;
    let moving = path.x0 != path.x1 || path.v0.iter().chain(&path.v1).any(|&v| v != 0.0);
    let (mid_frame, end_frame) = if moving {
        let mid = build_frame(fam, &path.position(dt / 2.0), Some(frame))?;
        let end = build_frame(fam, &path.x1, Some(&mid))?;
        (mid, end)
    } else {
        (frame.clone(), frame.clone())
    };

    let s0 = Stage::new(frame, path.v0.clone())?;
    let sm = Stage::new(&mid_frame, path.velocity(dt / 2.0))?;
    let s1 = Stage::new(&end_frame, path.v1.clone())?;

    let rho0 = state.rho();
    let half = C64::new(dt / 2.0, 0.0);
    let full = C64::new(dt, 0.0);

    let (k1, q1, w1) = s0.eval(rho0);
    let (k2, q2, w2) = sm.eval(&(rho0 + &k1 * half));
    let (k3, q3, w3) = sm.eval(&(rho0 + &k2 * half));
    let (k4, q4, w4) = s1.eval(&(rho0 + &k3 * full));

    let sixth = dt / 6.0;
    let rho1 = rho0 + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(sixth, 0.0);
    let heat = sixth * (q1 + 2.0 * q2 + 2.0 * q3 + q4);
    let work = sixth * (w1 + 2.0 * w2 + 2.0 * w3 + w4);

    let drift = (rho1.trace().re - rho0.trace().re).abs();
    let tol = Tolerances::global().trace_drift_per_step;
    if !drift.is_finite() || drift > tol || rho1.iter().any(|z| !z.is_finite()) {
        return Err(Error::StepSize(format!(
            "density-matrix trace drifted by {drift:e} in one step (limit {tol:e})"
        )));
    }
    Ok(QuantumStep {
        state: QuantumState::from_matrix_unchecked(rho1),
        frame: end_frame,
        heat,
        work,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::PolynomialFamily;
    use crate::operator::{pauli, HermitianOperator};
    use crate::random::{goe, seeded};

    fn crossing(gap: f64) -> PolynomialFamily {
        PolynomialFamily::linear(pauli::x().scaled(gap), pauli::z()).unwrap()
    }

    #[test]
    fn stationary_diagonal_state_is_unchanged() {
        let fam = crossing(0.5);
        let frame = build_frame(&fam, &[0.3], None).unwrap();
        let state = QuantumState::from_populations(&[0.3, 0.7]).unwrap();
        let step = quantum_step(&fam, &frame, &state, &PathSegment::stationary(&[0.3], 0.7)).unwrap();
        assert_eq!(step.state, state);
        assert_eq!(step.heat, 0.0);
        assert_eq!(step.work, 0.0);
    }

    #[test]
    fn coherence_rotates_at_bohr_frequency() {
        let fam = PolynomialFamily::constant(HermitianOperator::from_real_diagonal(&[-0.4, 0.9]), 1).unwrap();
        let mut frame = build_frame(&fam, &[0.0], None).unwrap();
        let r = 1.0 / 2f64.sqrt();
        let mut state = QuantumState::from_amplitudes(&[C64::new(r, 0.0), C64::new(r, 0.0)]).unwrap();
        let rho01 = state.rho()[(0, 1)];
        let omega = (-0.4 - 0.9) / HBAR;
        let dt = 0.005;
        for n in 1..=1000 {
            let step = quantum_step(&fam, &frame, &state, &PathSegment::stationary(&[0.0], dt)).unwrap();
            state = step.state;
            frame = step.frame;
            if n % 100 == 0 {
                let t = n as f64 * dt;
                let expected = rho01 * C64::new(0.0, -omega * t).exp();
                assert!((state.rho()[(0, 1)] - expected).norm() < 1e-9, "{} vs {expected}", state.rho()[(0, 1)]);
                assert!((state.rho()[(0, 1)].norm() - rho01.norm()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn purity_conserved_on_driven_three_level_system() {
        let mut rng = seeded(11);
        let fam = PolynomialFamily::linear(goe(&mut rng, 3), goe(&mut rng, 3)).unwrap();
        let v = [0.5];
        let dt = 0.005;
        let mut x = vec![-1.0];
        let mut frame = build_frame(&fam, &x, None).unwrap();
        let amps = crate::random::random_amplitudes(&mut rng, 3);
        let mut state = QuantumState::from_amplitudes(&amps).unwrap();
        for _ in 0..1000 {
            let seg = PathSegment::uniform(&x, &v, dt);
            let step = quantum_step(&fam, &frame, &state, &seg).unwrap();
            x = seg.x1;
            frame = step.frame;
            state = step.state;
        }
        assert!((state.purity() - 1.0).abs() < 1e-9);
        assert!((state.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hermite_segment_interpolates_endpoints() {
        let seg = PathSegment {
            x0: vec![0.0, 1.0],
            v0: vec![1.0, -2.0],
            x1: vec![0.5, 0.0],
            v1: vec![0.0, 3.0],
            dt: 0.5,
        };
        assert_eq!(seg.position(0.0), seg.x0);
        assert_eq!(seg.velocity(0.0), seg.v0);
        for (a, b) in seg.position(0.5).iter().zip(&seg.x1) {
            assert!((a - b).abs() < 1e-15);
        }
        for (a, b) in seg.velocity(0.5).iter().zip(&seg.v1) {
            assert!((a - b).abs() < 1e-14);
        }
        // Velocity is the derivative of position.
        let h = 1e-6;
        let fd: Vec<f64> = seg
            .position(0.2 + h)
            .iter()
            .zip(seg.position(0.2 - h))
            .map(|(p, m)| (p - m) / (2.0 * h))
            .collect();
        for (a, b) in fd.iter().zip(seg.velocity(0.2)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_segments() {
        let fam = crossing(0.5);
        let frame = build_frame(&fam, &[0.0], None).unwrap();
        let state = QuantumState::basis_state(2, 0).unwrap();
        assert!(quantum_step(&fam, &frame, &state, &PathSegment::stationary(&[0.0], 0.0)).is_err());
        let three = QuantumState::basis_state(3, 0).unwrap();
        assert!(quantum_step(&fam, &frame, &three, &PathSegment::stationary(&[0.0], 0.1)).is_err());
    }
}
