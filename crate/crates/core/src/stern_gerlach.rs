//! Spin one-half atoms crossing an inhomogeneous magnetic field.

use std::sync::Arc;

use serde::Serialize;

use crate::dynamics::{
    run_branching, run_mean_force, sample_branches, Apparatus, EnergyLedger, Scenario, Trajectory, ZeroPotential,
    ConstantMetric,
};
use crate::error::{Error, Result};
use crate::family::{check_coords, HamiltonianFamily};
use crate::operator::{pauli, HermitianOperator, C64};
use crate::state::QuantumState;
use crate::units::HBAR;

/// A static magnetic field and its Jacobian `d B_i / d r_j`.
pub trait MagneticField: Send + Sync {
    fn field(&self, r: &[f64; 3]) -> [f64; 3];
    fn jacobian(&self, r: &[f64; 3]) -> [[f64; 3]; 3];
}

/// `B = (-b x, 0, B0 + b z)`: divergence free, `|B| = B0 + b z` on the axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearGradientField {
    pub b0: f64,
    pub gradient: f64,
}

impl MagneticField for LinearGradientField {
    fn field(&self, r: &[f64; 3]) -> [f64; 3] {
        [-self.gradient * r[0], 0.0, self.b0 + self.gradient * r[2]]
    }

    fn jacobian(&self, _r: &[f64; 3]) -> [[f64; 3]; 3] {
        let b = self.gradient;
        [[-b, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, b]]
    }
}

/// Uniform field along `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UniformField(pub [f64; 3]);

impl MagneticField for UniformField {
    fn field(&self, _r: &[f64; 3]) -> [f64; 3] {
        self.0
    }

    fn jacobian(&self, _r: &[f64; 3]) -> [[f64; 3]; 3] {
        [[0.0; 3]; 3]
    }
}

fn spin_coupling(gamma: f64, b: [f64; 3]) -> Result<HermitianOperator> {
    let k = -HBAR * gamma / 2.0;
    pauli::x()
        .scaled(k * b[0])
        .add(&pauli::y().scaled(k * b[1]))?
        .add(&pauli::z().scaled(k * b[2]))
}

fn point(r: &[f64]) -> [f64; 3] {
    [r[0], r[1], r[2]]
}

/// `H(r) = -hbar gamma S.B(r)` with `S = sigma / 2`.
#[derive(Clone)]
pub struct SternGerlachFamily {
    pub gamma: f64,
    pub field: Arc<dyn MagneticField>,
}

impl HamiltonianFamily for SternGerlachFamily {
    fn coords(&self) -> usize {
        3
    }

    fn dim(&self) -> usize {
        2
    }

    fn evaluate(&self, r: &[f64]) -> Result<HermitianOperator> {
        check_coords(self, r)?;
        spin_coupling(self.gamma, self.field.field(&point(r)))
    }

    fn gradient(&self, r: &[f64]) -> Option<Result<Vec<HermitianOperator>>> {
        if let Err(e) = check_coords(self, r) {
            return Some(Err(e));
        }
        let jac = self.field.jacobian(&point(r));
        Some((0..3).map(|j| spin_coupling(self.gamma, [jac[0][j], jac[1][j], jac[2][j]])).collect())
    }
}

#[derive(Clone)]
pub struct SternGerlachConfig {
    pub gamma: f64,
    pub mass: f64,
    pub field: Arc<dyn MagneticField>,
    pub r0: [f64; 3],
    pub v0: [f64; 3],
    /// Amplitudes `(C_+, C_-)` on the levels `W_+ = -hbar gamma |B| / 2` and
    /// `W_- = +hbar gamma |B| / 2`.
    pub amplitudes: [C64; 2],
    pub duration: f64,
    pub dt: f64,
}

impl std::fmt::Debug for SternGerlachConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SternGerlachConfig")
            .field("gamma", &self.gamma)
            .field("mass", &self.mass)
            .field("r0", &self.r0)
            .field("v0", &self.v0)
            .field("amplitudes", &self.amplitudes)
            .field("duration", &self.duration)
            .field("dt", &self.dt)
            .finish_non_exhaustive()
    }
}

impl SternGerlachConfig {
    pub fn validate(&self) -> Result<()> {
        let norm: f64 = self.amplitudes.iter().map(|c| c.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::validation(format!("spin amplitudes have norm {norm}, not 1")));
        }
        if !(self.mass > 0.0) {
            return Err(Error::validation(format!("mass must be positive, got {}", self.mass)));
        }
        if self.gamma == 0.0 || !self.gamma.is_finite() {
            return Err(Error::validation("gamma must be finite and nonzero"));
        }
        if !(self.dt > 0.0) || !(self.duration >= 0.0) {
            return Err(Error::validation("dt must be positive and duration non-negative"));
        }
        let b = self.field.field(&self.r0);
        if b.iter().map(|c| c * c).sum::<f64>() == 0.0 {
            return Err(Error::domain("field vanishes at the initial position; no adiabatic frame"));
        }
        Ok(())
    }

    pub fn family(&self) -> SternGerlachFamily {
        SternGerlachFamily {
            gamma: self.gamma,
            field: self.field.clone(),
        }
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Adiabatic index of the `+` level: levels are sorted ascending and
    /// `W_+` is the lower one when `gamma > 0`.
    pub fn plus_index(&self) -> usize {
        if self.gamma > 0.0 {
            0
        } else {
            1
        }
    }

    /// `(|C_+|^2, |C_-|^2)`.
    pub fn weights(&self) -> (f64, f64) {
        (self.amplitudes[0].norm_sqr(), self.amplitudes[1].norm_sqr())
    }

    /// Initial spin state in the adiabatic basis at `r0`.
    pub fn initial_state(&self) -> Result<QuantumState> {
        let [cp, cm] = self.amplitudes;
        let ordered = if self.plus_index() == 0 { [cp, cm] } else { [cm, cp] };
        QuantumState::from_amplitudes(&ordered)
    }

    pub fn scenario(&self) -> Result<Scenario> {
        self.validate()?;
        let metric = ConstantMetric::scalar(3, self.mass);
        Ok(Scenario::new(
            Arc::new(self.family()),
            Apparatus::new(metric, ZeroPotential),
            self.r0.to_vec(),
            self.v0.to_vec(),
            self.initial_state()?,
            self.dt,
            self.steps(),
        ))
    }
}

pub fn sg_hamiltonian(cfg: &SternGerlachConfig, r: &[f64; 3]) -> Result<HermitianOperator> {
    spin_coupling(cfg.gamma, cfg.field.field(r))
}

#[derive(Debug, Clone, Serialize)]
pub struct BranchSummary {
    pub weight: f64,
    pub final_position: Vec<f64>,
    pub final_velocity: Vec<f64>,
    pub ledger: EnergyLedger,
    /// `|dK + dW| / max(|dK|, |dW|)`: the branch converts level energy into
    /// kinetic energy and nothing else.
    pub energy_closure: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SgSummary {
    pub plus: Option<BranchSummary>,
    pub minus: Option<BranchSummary>,
    /// Final `r_+ - r_-` when both branches exist.
    pub separation: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SgRun {
    pub plus: Option<Trajectory>,
    pub minus: Option<Trajectory>,
    pub summary: SgSummary,
}

fn summarize(traj: &Trajectory, level: usize) -> BranchSummary {
    let first = traj.first();
    let last = traj.last();
    let dk = last.apparatus_energy - first.apparatus_energy;
    let dw = last.energies[level] - first.energies[level];
    let scale = dk.abs().max(dw.abs());
    BranchSummary {
        weight: traj.weight,
        final_position: last.x.clone(),
        final_velocity: last.v.clone(),
        ledger: last.ledger,
        energy_closure: if scale == 0.0 { 0.0 } else { (dk + dw).abs() / scale },
    }
}

/// Both branches of the beam, each following its own level.
pub fn sg_run(cfg: &SternGerlachConfig) -> Result<SgRun> {
    let scenario = cfg.scenario()?;
    let plus_index = cfg.plus_index();
    let mut plus = None;
    let mut minus = None;
    for traj in run_branching(&scenario)? {
        if traj.branch == Some(plus_index) {
            plus = Some(traj);
        } else {
            minus = Some(traj);
        }
    }
    let summary = SgSummary {
        plus: plus.as_ref().map(|t| summarize(t, plus_index)),
        minus: minus.as_ref().map(|t| summarize(t, 1 - plus_index)),
        separation: match (&plus, &minus) {
            (Some(p), Some(m)) => Some(p.last().x.iter().zip(&m.last().x).map(|(a, b)| a - b).collect()),
            _ => None,
        },
    };
    Ok(SgRun { plus, minus, summary })
}

/// Single trajectory under the mean spin force.
pub fn sg_mean_force(cfg: &SternGerlachConfig) -> Result<Trajectory> {
    run_mean_force(&cfg.scenario()?)
}

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    pub lower: f64,
    pub upper: f64,
    pub counts: Vec<usize>,
    /// Atoms landing outside `[lower, upper)`.
    pub outside: usize,
}

impl Histogram {
    pub fn new(lower: f64, upper: f64, bins: usize) -> Result<Self> {
        if !(upper > lower) || bins == 0 {
            return Err(Error::validation("histogram needs upper > lower and at least one bin"));
        }
        Ok(Histogram {
            lower,
            upper,
            counts: vec![0; bins],
            outside: 0,
        })
    }

    pub fn add(&mut self, value: f64, count: usize) {
        if value >= self.lower && value < self.upper {
            let bins = self.counts.len();
            let i = ((value - self.lower) / (self.upper - self.lower) * bins as f64) as usize;
            self.counts[i.min(bins - 1)] += count;
        } else {
            self.outside += count;
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SgBeam {
    pub atoms: usize,
    pub plus_count: usize,
    pub minus_count: usize,
    /// Detector histogram of the final z coordinate.
    pub histogram: Histogram,
}

/// Draw a spin outcome per atom and bin the branch endpoints on a detector
/// spanning `[lower, upper)` in z.
pub fn sg_beam(
    cfg: &SternGerlachConfig,
    run: &SgRun,
    atoms: usize,
    seed: u64,
    lower: f64,
    upper: f64,
    bins: usize,
) -> Result<SgBeam> {
    let (wp, wm) = cfg.weights();
    let counts = sample_branches(&[wp, wm], atoms, seed)?;
    let mut histogram = Histogram::new(lower, upper, bins)?;
    for (traj, count) in [(&run.plus, counts[0]), (&run.minus, counts[1])] {
        if count == 0 {
            continue;
        }
        let traj = traj
            .as_ref()
            .ok_or_else(|| Error::numerical("atoms drawn on a branch with zero weight"))?;
        histogram.add(traj.last().x[2], count);
    }
    Ok(SgBeam {
        atoms,
        plus_count: counts[0],
        minus_count: counts[1],
        histogram,
    })
}

/// Closed-form on-axis acceleration of the `+` branch, `hbar gamma b / (2M)`.
pub fn on_axis_acceleration(gamma: f64, gradient: f64, mass: f64) -> f64 {
    HBAR * gamma * gradient / (2.0 * mass)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::hermitian_eigenvalues;

    fn config(gradient: f64, amplitudes: [C64; 2]) -> SternGerlachConfig {
        SternGerlachConfig {
            gamma: 2.0,
            mass: 50.0,
            field: Arc::new(LinearGradientField { b0: 5.0, gradient }),
            r0: [0.0, 0.0, 0.0],
            v0: [0.0, 0.3, 0.1],
            amplitudes,
            duration: 2.0,
            dt: 0.01,
        }
    }

    fn up() -> [C64; 2] {
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)]
    }

    fn equal() -> [C64; 2] {
        let r = 1.0 / 2f64.sqrt();
        [C64::new(r, 0.0), C64::new(r, 0.0)]
    }

    #[test]
    fn axial_field_hamiltonian() {
        let cfg = SternGerlachConfig {
            field: Arc::new(UniformField([0.0, 0.0, 3.0])),
            ..config(0.0, up())
        };
        let h = sg_hamiltonian(&cfg, &[0.0; 3]).unwrap();
        let expected = pauli::z().scaled(-HBAR * cfg.gamma * 3.0 / 2.0);
        assert!((h.matrix() - expected.matrix()).norm() < 1e-15);
    }

    #[test]
    fn transverse_field_spectrum() {
        let (b0, b1) = (2.0, 1.5);
        let cfg = SternGerlachConfig {
            field: Arc::new(UniformField([b1, 0.0, b0])),
            ..config(0.0, up())
        };
        let w = hermitian_eigenvalues(&sg_hamiltonian(&cfg, &[0.0; 3]).unwrap()).unwrap();
        let half = HBAR * cfg.gamma * (b0 * b0 + b1 * b1).sqrt() / 2.0;
        assert!((w[0] + half).abs() < 1e-14 && (w[1] - half).abs() < 1e-14);
    }

    #[test]
    fn levels_follow_field_magnitude() {
        let cfg = config(0.8, up());
        for r in [[0.3, -0.2, 0.5], [1.0, 2.0, -1.0], [-0.4, 0.0, 0.9]] {
            let b = cfg.field.field(&r);
            let mag = b.iter().map(|c| c * c).sum::<f64>().sqrt();
            let w = hermitian_eigenvalues(&sg_hamiltonian(&cfg, &r).unwrap()).unwrap();
            assert!((w[0] + cfg.gamma * mag / 2.0).abs() < 1e-13);
            assert!((w[1] - cfg.gamma * mag / 2.0).abs() < 1e-13);
        }
    }

    #[test]
    fn analytic_gradient_matches_differences() {
        let fam = config(0.8, up()).family();
        let r = [0.3, -0.1, 0.4];
        let analytic = fam.gradient(&r).unwrap().unwrap();
        for j in 0..3 {
            let mut p = r;
            let mut m = r;
            p[j] += 1e-6;
            m[j] -= 1e-6;
            let fd = (fam.evaluate(&p).unwrap().matrix() - fam.evaluate(&m).unwrap().matrix()) / C64::new(2e-6, 0.0);
            assert!((fd - analytic[j].matrix()).norm() < 1e-8);
        }
    }

    #[test]
    fn single_branch_parabola() {
        let cfg = config(0.8, up());
        let run = sg_run(&cfg).unwrap();
        assert!(run.minus.is_none());
        let plus = run.plus.unwrap();
        assert_eq!(plus.weight, 1.0);
        let a = on_axis_acceleration(cfg.gamma, 0.8, cfg.mass);
        for s in &plus.samples {
            let z = cfg.r0[2] + cfg.v0[2] * s.t + 0.5 * a * s.t * s.t;
            assert!((s.x[2] - z).abs() <= 1e-9 * z.abs().max(1e-12));
            assert_eq!(s.x[0], 0.0);
        }
        assert!(run.summary.plus.unwrap().energy_closure < 1e-7);
    }

    #[test]
    fn equal_superposition_splits_symmetrically() {
        let cfg = config(0.8, equal());
        let run = sg_run(&cfg).unwrap();
        let p = run.summary.plus.as_ref().unwrap();
        let m = run.summary.minus.as_ref().unwrap();
        assert!((p.weight - 0.5).abs() < 1e-15 && (m.weight - 0.5).abs() < 1e-15);
        let dz_p = p.final_position[2] - cfg.r0[2] - cfg.v0[2] * cfg.duration;
        let dz_m = m.final_position[2] - cfg.r0[2] - cfg.v0[2] * cfg.duration;
        assert!(dz_p > 0.0 && dz_m < 0.0);
        assert!((dz_p + dz_m).abs() < 1e-9 * dz_p);
        assert!(run.summary.separation.unwrap()[2] > 0.0);
    }

    #[test]
    fn uniform_field_does_not_deflect() {
        let run = sg_run(&config(0.0, equal())).unwrap();
        for traj in [run.plus.unwrap(), run.minus.unwrap()] {
            let last = traj.last();
            assert!((last.v[2] - 0.1).abs() < 1e-15);
            assert!(last.v[0].abs() < 1e-15);
        }
    }

    #[test]
    fn mirror_gradient_swaps_branches() {
        let a = sg_run(&config(0.8, equal())).unwrap();
        let b = sg_run(&config(-0.8, equal())).unwrap();
        let pa = a.plus.unwrap().last().x.clone();
        let mb = b.minus.unwrap().last().x.clone();
        for k in 0..3 {
            assert!((pa[k] - mb[k]).abs() < 1e-10);
        }
    }

    #[test]
    fn negative_gamma_swaps_level_order() {
        let cfg = SternGerlachConfig {
            gamma: -2.0,
            ..config(0.8, up())
        };
        assert_eq!(cfg.plus_index(), 1);
        let run = sg_run(&cfg).unwrap();
        let a = on_axis_acceleration(cfg.gamma, 0.8, cfg.mass);
        let last = run.plus.unwrap().last().clone();
        let z = cfg.v0[2] * last.t + 0.5 * a * last.t * last.t;
        assert!((last.x[2] - z).abs() < 1e-9 * z.abs());
    }

    #[test]
    fn rejects_unnormalized_amplitudes() {
        let cfg = config(0.8, [C64::new(1.0, 0.0), C64::new(1.0, 0.0)]);
        assert!(matches!(sg_run(&cfg), Err(Error::Validation(_))));
    }

    #[test]
    fn beam_histogram_has_two_spots() {
        let cfg = config(0.8, equal());
        let run = sg_run(&cfg).unwrap();
        let beam = sg_beam(&cfg, &run, 1000, 4, -1.0, 1.0, 20).unwrap();
        assert_eq!(beam.plus_count + beam.minus_count, 1000);
        assert_eq!(beam.histogram.counts.iter().filter(|c| **c > 0).count(), 2);
    }
}
