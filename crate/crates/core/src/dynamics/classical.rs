//! Generalized leapfrog (velocity Verlet for a position-dependent metric).
//!
//! With momenta `p = mu(x) v` the step is
//!
//! ```text
//! p' = p  + dt/2 [ G(x,  p') + F(x)  - Gamma(x)  v  ]      implicit in p'
//! x1 = x  + dt/2 [ mu(x)^-1 + mu(x1)^-1 ] p'              implicit in x1
//! p1 = p' + dt/2 [ G(x1, p') + F(x1) - Gamma(x1) v1 ]     linear in p1
//! ```
//!
//! where `G_k = 1/2 v^T (d mu/d x^k) v` and `F` collects `-grad V` and the
//! force exerted by the quantum object. Friction enters explicitly on the first
//! half kick and implicitly on the second, which makes the damped free motion
//! the trapezoidal (Cayley) map. For a constant metric the corrector loops
//! terminate immediately and the scheme is ordinary velocity Verlet.

use nalgebra::{DMatrix, DVector};

use super::apparatus::{Apparatus, ApparatusState, FrictionSpec};
use crate::error::{Error, Result};
use crate::family::HamiltonianFamily;
use crate::frame::{build_frame, AdiabaticFrame};
use crate::tolerance::Tolerances;

const MAX_CORRECTOR_ITERATIONS: usize = 100;

pub(crate) struct Drift {
    pub p_half: DVector<f64>,
    pub x1: Vec<f64>,
    pub gamma0: Option<DMatrix<f64>>,
}

fn converged(new: &DVector<f64>, old: &DVector<f64>, tol: f64) -> bool {
    (new - old).amax() <= tol * (1.0 + new.amax())
}

fn geodesic_term(app: &Apparatus, x: &[f64], v: &DVector<f64>) -> DVector<f64> {
    if app.metric.is_constant() {
        return DVector::zeros(x.len());
    }
    DVector::from_iterator(
        x.len(),
        (0..x.len()).map(|k| 0.5 * v.dot(&(app.metric.mass_derivative(x, k) * v))),
    )
}

pub(crate) fn kick_drift(
    app: &Apparatus,
    state: &ApparatusState,
    quantum_force: &[f64],
    friction: &FrictionSpec,
    dt: f64,
) -> Result<Drift> {
    let tol = Tolerances::global().corrector;
    let x0 = &state.x;
    let v0 = DVector::from_column_slice(&state.v);
    let chol0 = app.mass_cholesky(x0)?;
    let p0 = app.metric.mass(x0) * &v0;
    let gamma0 = friction.gamma(x0)?;

    let mut base = DVector::from_column_slice(quantum_force) - DVector::from_vec(app.potential.gradient(x0));
    if let Some(g) = &gamma0 {
        base -= g * &v0;
    }

    let mut p_half = &p0 + (dt / 2.0) * (&base + geodesic_term(app, x0, &v0));
    if !app.metric.is_constant() {
        let mut done = false;
        for _ in 0..MAX_CORRECTOR_ITERATIONS {
            let v_half = chol0.solve(&p_half);
            let next = &p0 + (dt / 2.0) * (&base + geodesic_term(app, x0, &v_half));
            let ok = converged(&next, &p_half, tol);
            p_half = next;
            if ok {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::StepSize("momentum corrector did not converge".into()));
        }
    }

    let u0 = chol0.solve(&p_half);
    let x0v = DVector::from_column_slice(x0);
    let mut x1 = &x0v + dt * &u0;
    if !app.metric.is_constant() {
        let mut done = false;
        for _ in 0..MAX_CORRECTOR_ITERATIONS {
            let u1 = app.mass_cholesky(x1.as_slice())?.solve(&p_half);
            let next = &x0v + (dt / 2.0) * (&u0 + u1);
            let ok = converged(&next, &x1, tol);
            x1 = next;
            if ok {
                done = true;
                break;
            }
        }
        if !done {
            return Err(Error::StepSize("position corrector did not converge".into()));
        }
    }
    Ok(Drift {
        p_half,
        x1: x1.as_slice().to_vec(),
        gamma0,
    })
}

pub(crate) struct Kick {
    pub v1: Vec<f64>,
    /// Energy removed by friction over the step.
    pub dissipated: f64,
}

pub(crate) fn final_kick(
    app: &Apparatus,
    v0: &[f64],
    drift: &Drift,
    quantum_force: &[f64],
    friction: &FrictionSpec,
    dt: f64,
) -> Result<Kick> {
    let x1 = &drift.x1;
    let chol1 = app.mass_cholesky(x1)?;
    let v_tilde = chol1.solve(&drift.p_half);
    let force = DVector::from_column_slice(quantum_force) - DVector::from_vec(app.potential.gradient(x1))
        + geodesic_term(app, x1, &v_tilde);
    let rhs = &drift.p_half + (dt / 2.0) * force;
    let gamma1 = friction.gamma(x1)?;
    let p1 = match &gamma1 {
        None => rhs,
        Some(g) => {
            let n = x1.len();
            let mu_inv = chol1.inverse();
            let lhs = DMatrix::identity(n, n) + (dt / 2.0) * g * mu_inv;
            lhs.lu()
                .solve(&rhs)
                .ok_or_else(|| Error::numerical("singular friction kick"))?
        }
    };
    let v1 = chol1.solve(&p1);
    let dissipated = match (&drift.gamma0, &gamma1) {
        (Some(g0), Some(g1)) => {
            let v_mid = (DVector::from_column_slice(v0) + &v1) / 2.0;
            dt * v_mid.dot(&((g0 + g1) / 2.0 * &v_mid))
        }
        _ => 0.0,
    };
    Ok(Kick {
        v1: v1.as_slice().to_vec(),
        dissipated,
    })
}

/// Force `F_k = -dW_level/dx^k` of one adiabatic level.
pub(crate) fn branch_force(frame: &AdiabaticFrame, level: usize) -> Vec<f64> {
    frame.level_slopes().iter().map(|s| -s[level]).collect()
}

#[derive(Debug, Clone)]
pub struct ClassicalStep {
    pub state: ApparatusState,
    pub frame: AdiabaticFrame,
    pub dissipated: f64,
}

/// Advance the apparatus one step under the branch Lagrangian
/// `L_k = L_A - W_k(x)`, plus optional friction.
pub fn classical_step_branch(
    app: &Apparatus,
    state: &ApparatusState,
    fam: &dyn HamiltonianFamily,
    frame: &AdiabaticFrame,
    level: usize,
    friction: &FrictionSpec,
    dt: f64,
) -> Result<ClassicalStep> {
    if level >= frame.dim() {
        return Err(Error::validation(format!(
            "branch index {level} out of range for dimension {}",
            frame.dim()
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::validation(format!("dt must be positive, got {dt}")));
    }
    let drift = kick_drift(app, state, &branch_force(frame, level), friction, dt)?;
    let frame1 = build_frame(fam, &drift.x1, Some(frame))?;
    let kick = final_kick(app, &state.v, &drift, &branch_force(&frame1, level), friction, dt)?;
    Ok(ClassicalStep {
        state: ApparatusState {
            x: drift.x1,
            v: kick.v1,
        },
        frame: frame1,
        dissipated: kick.dissipated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::apparatus::{ConstantMetric, FnMetric, HarmonicPotential, ZeroPotential};
    use crate::family::{MonomialTerm, PolynomialFamily};
    use crate::operator::HermitianOperator;

    fn flat_levels(n: usize) -> PolynomialFamily {
        PolynomialFamily::constant(HermitianOperator::from_real_diagonal(&[0.0, 1.0]), n).unwrap()
    }

    /// Level 0 is `kappa x^2 / 2`, level 1 sits far above.
    fn harmonic_level(kappa: f64) -> PolynomialFamily {
        PolynomialFamily::new(
            1,
            vec![
                MonomialTerm {
                    matrix: HermitianOperator::from_real_diagonal(&[0.5 * kappa, 0.0]),
                    powers: vec![2],
                },
                MonomialTerm {
                    matrix: HermitianOperator::from_real_diagonal(&[0.0, 100.0]),
                    powers: vec![0],
                },
            ],
        )
        .unwrap()
    }

    fn run(
        app: &Apparatus,
        fam: &PolynomialFamily,
        mut state: ApparatusState,
        friction: &FrictionSpec,
        dt: f64,
        steps: usize,
        mut visit: impl FnMut(usize, &ApparatusState, f64),
    ) -> ApparatusState {
        let mut frame = build_frame(fam, &state.x, None).unwrap();
        for n in 1..=steps {
            let step = classical_step_branch(app, &state, fam, &frame, 0, friction, dt).unwrap();
            state = step.state;
            frame = step.frame;
            visit(n, &state, step.dissipated);
        }
        state
    }

    #[test]
    fn uniform_motion_on_flat_levels() {
        let app = Apparatus::free(2, 4.0);
        let fam = flat_levels(2);
        let start = ApparatusState::new(vec![1.0, -2.0], vec![0.25, 0.5]).unwrap();
        let end = run(&app, &fam, start, &FrictionSpec::none(), 0.125, 80, |_, _, _| {});
        assert_eq!(end.x, vec![1.0 + 0.25 * 10.0, -2.0 + 0.5 * 10.0]);
        assert_eq!(end.v, vec![0.25, 0.5]);
    }

    #[test]
    fn harmonic_level_energy_does_not_drift() {
        let (kappa, mass): (f64, f64) = (4.0, 1.0);
        let omega = (kappa / mass).sqrt();
        let period = 2.0 * std::f64::consts::PI / omega;
        let dt = period / 200.0;
        let app = Apparatus::free(1, mass);
        let fam = harmonic_level(kappa);
        // Velocity Verlet exactly conserves the modified energy
        // v^2/2 + omega^2 x^2 (1 - omega^2 dt^2 / 4) / 2 on a linear force.
        let shadow = |s: &ApparatusState| {
            0.5 * mass * s.v[0].powi(2) + 0.5 * kappa * s.x[0].powi(2) * (1.0 - (omega * dt).powi(2) / 4.0)
        };
        let energy = |s: &ApparatusState| 0.5 * mass * s.v[0].powi(2) + 0.5 * kappa * s.x[0].powi(2);
        let start = ApparatusState::new(vec![1.0], vec![0.0]).unwrap();
        let e0 = energy(&start);
        let s0 = shadow(&start);
        let mut max_shadow = 0.0f64;
        let mut max_band = 0.0f64;
        run(&app, &fam, start, &FrictionSpec::none(), dt, 200 * 100, |n, s, _| {
            max_shadow = max_shadow.max((shadow(s) - s0).abs() / s0);
            if n % 200 == 0 {
                max_band = max_band.max((energy(s) - e0).abs() / e0);
            }
        });
        assert!(max_shadow < 1e-8, "{max_shadow}");
        assert!(max_band < (omega * dt).powi(2) / 4.0);
    }

    #[test]
    fn friction_dissipation_matches_kinetic_loss() {
        let (gamma, mass) = (0.3, 2.0);
        let app = Apparatus::free(1, mass);
        let fam = flat_levels(1);
        let friction = FrictionSpec::constant(DMatrix::from_element(1, 1, gamma));
        let start = ApparatusState::new(vec![0.0], vec![1.5]).unwrap();
        let k0 = app.kinetic_energy(&start.x, &start.v);
        let mut dissipated = 0.0;
        let mut last_v = start.v[0];
        let dt = 0.01;
        let steps = 1000;
        let end = run(&app, &fam, start, &friction, dt, steps, |_, s, d| {
            assert!(s.v[0] < last_v && s.v[0] > 0.0);
            last_v = s.v[0];
            dissipated += d;
        });
        let loss = k0 - app.kinetic_energy(&end.x, &end.v);
        assert!((loss - dissipated).abs() < 1e-6 * loss);
        let t = steps as f64 * dt;
        let exact = 1.5 * (-gamma * t / mass).exp();
        assert!((end.v[0] - exact).abs() < 1e-5 * exact);
    }

    #[test]
    fn position_dependent_metric_stays_bounded() {
        let app = Apparatus::new(
            FnMetric(|x: &[f64]| DMatrix::from_element(1, 1, 1.0 + x[0] * x[0])),
            HarmonicPotential {
                stiffness: vec![1.0],
                center: vec![0.0],
            },
        );
        let fam = flat_levels(1);
        let start = ApparatusState::new(vec![0.8], vec![0.0]).unwrap();
        let e0 = app.mechanical_energy(&start);
        let mut worst = 0.0f64;
        run(&app, &fam, start, &FrictionSpec::none(), 0.01, 5000, |_, s, _| {
            worst = worst.max((app.mechanical_energy(s) - e0).abs() / e0);
        });
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn rejects_invalid_inputs() {
        let fam = flat_levels(1);
        let frame = build_frame(&fam, &[0.0], None).unwrap();
        let state = ApparatusState::new(vec![0.0], vec![1.0]).unwrap();
        let app = Apparatus::free(1, 1.0);
        let none = FrictionSpec::none();
        assert!(classical_step_branch(&app, &state, &fam, &frame, 2, &none, 0.1).is_err());
        assert!(classical_step_branch(&app, &state, &fam, &frame, 0, &none, -0.1).is_err());
        let bad = Apparatus::new(ConstantMetric(DMatrix::from_element(1, 1, -1.0)), ZeroPotential);
        assert!(matches!(
            classical_step_branch(&bad, &state, &fam, &frame, 0, &none, 0.1),
            Err(Error::Validation(_))
        ));
    }
}
