//! Whole-trajectory drivers: branching, mean-force, and prescribed-path runs.

use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use serde::Serialize;

use super::apparatus::{Apparatus, ApparatusState, FrictionSpec};
use super::classical::{classical_step_branch, final_kick, kick_drift};
use super::ledger::{accumulate_ledger, mean_energy, EnergyLedger, LedgerIncrement};
use super::quantum::{quantum_step, PathSegment};
use crate::entropy::{entropy_delta, mean_diabatic_force, project, von_neumann_entropy, EntropyDelta, ProjectorFamily};
use crate::error::{Error, Result};
use crate::family::HamiltonianFamily;
use crate::frame::{build_frame, AdiabaticFrame};
use crate::operator::{trace_product, CMatrix};
use crate::random::seeded;
use crate::state::QuantumState;
use crate::tolerance::Tolerances;

const MAX_COUPLING_ITERATIONS: usize = 50;

/// One recorded point of a trajectory. `rho` is in the adiabatic basis at `x`.
#[derive(Debug, Clone, Serialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(skip)]
    pub rho: CMatrix,
    pub populations: Vec<f64>,
    pub energies: Vec<f64>,
    pub ledger: EnergyLedger,
    pub entropy: f64,
    /// `Tr(rho f_k)` per coordinate.
    pub diabatic_force: Vec<f64>,
    /// Kinetic plus potential energy of the apparatus (zero for driven runs).
    pub apparatus_energy: f64,
}

/// A projective measurement applied during a run.
#[derive(Debug, Clone, Serialize)]
pub struct ProjectionRecord {
    pub step: usize,
    pub t: f64,
    #[serde(skip)]
    pub rho_before: CMatrix,
    #[serde(skip)]
    pub rho_after: CMatrix,
    pub delta: EntropyDelta,
    /// `Tr(rho W)` after minus before. Zero for families diagonal in the
    /// adiabatic basis.
    pub energy_jump: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    /// Adiabatic level followed in branching mode.
    pub branch: Option<usize>,
    pub weight: f64,
    pub samples: Vec<Sample>,
    pub projections: Vec<ProjectionRecord>,
    /// Energy removed from the apparatus by friction.
    pub dissipated: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    pub fn first(&self) -> &Sample {
        &self.samples[0]
    }

    pub fn ledger(&self) -> &EnergyLedger {
        &self.last().ledger
    }

    pub fn duration(&self) -> f64 {
        self.last().t - self.first().t
    }
}

/// Measurement scheduled after `step` steps have completed (0 = before any).
#[derive(Debug, Clone)]
pub struct ProjectionEvent {
    pub step: usize,
    pub family: ProjectorFamily,
}

/// A coupled quantum/apparatus run.
#[derive(Clone)]
pub struct Scenario {
    pub family: Arc<dyn HamiltonianFamily>,
    pub apparatus: Apparatus,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    /// Initial state in the adiabatic basis at `x0`.
    pub initial: QuantumState,
    pub dt: f64,
    pub steps: usize,
    pub friction: FrictionSpec,
    /// Record every n-th step; the first and last are always kept.
    pub sample_every: usize,
    pub projections: Vec<ProjectionEvent>,
}

impl std::fmt::Debug for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scenario")
            .field("x0", &self.x0)
            .field("v0", &self.v0)
            .field("dt", &self.dt)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl Scenario {
    pub fn new(
        family: Arc<dyn HamiltonianFamily>,
        apparatus: Apparatus,
        x0: Vec<f64>,
        v0: Vec<f64>,
        initial: QuantumState,
        dt: f64,
        steps: usize,
    ) -> Self {
        Scenario {
            family,
            apparatus,
            x0,
            v0,
            initial,
            dt,
            steps,
            friction: FrictionSpec::none(),
            sample_every: 1,
            projections: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.family.coords();
        if self.x0.len() != n || self.v0.len() != n {
            return Err(Error::validation(format!(
                "initial position and velocity must have {n} components"
            )));
        }
        if self.initial.dim() != self.family.dim() {
            return Err(Error::validation(format!(
                "initial state has dimension {}, family has {}",
                self.initial.dim(),
                self.family.dim()
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(Error::validation("sample_every must be at least 1"));
        }
        for event in &self.projections {
            if event.step > self.steps {
                return Err(Error::validation(format!(
                    "projection at step {} is past the end of the run",
                    event.step
                )));
            }
            if event.family.dim() != self.family.dim() {
                return Err(Error::validation("projector family dimension does not match the family"));
            }
        }
        self.initial.validate(Tolerances::global())
    }

    /// Branch weights `rho_kk` of the initial state.
    pub fn weights(&self) -> Result<Vec<f64>> {
        branch_weights(&self.initial)
    }
}

fn branch_weights(state: &QuantumState) -> Result<Vec<f64>> {
    let weights = state.populations();
    let total: f64 = weights.iter().sum();
    let tol = Tolerances::global().trace;
    if (total - 1.0).abs() > tol {
        return Err(Error::validation(format!("branch weights sum to {total}, not 1")));
    }
    if let Some(w) = weights.iter().find(|w| **w < -tol) {
        return Err(Error::validation(format!("negative branch weight {w}")));
    }
    Ok(weights.into_iter().map(|w| w.clamp(0.0, 1.0)).collect())
}

struct Recorder {
    samples: Vec<Sample>,
    projections: Vec<ProjectionRecord>,
    sample_every: usize,
    steps: usize,
}

impl Recorder {
    fn new(sample_every: usize, steps: usize) -> Self {
        Recorder {
            samples: Vec::new(),
            projections: Vec::new(),
            sample_every,
            steps,
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn record(
        &mut self,
        step: usize,
        t: f64,
        x: &[f64],
        v: &[f64],
        frame: &AdiabaticFrame,
        state: &QuantumState,
        ledger: &EnergyLedger,
        apparatus_energy: f64,
        forced: bool,
    ) -> Result<()> {
        if !(forced || step % self.sample_every == 0 || step == self.steps) {
            return Ok(());
        }
        self.samples.push(Sample {
            t,
            x: x.to_vec(),
            v: v.to_vec(),
            rho: state.rho().clone(),
            populations: state.populations(),
            energies: frame.energies().to_vec(),
            ledger: *ledger,
            entropy: von_neumann_entropy(state)?,
            diabatic_force: mean_diabatic_force(frame, state)?,
            apparatus_energy,
        });
        Ok(())
    }

    /// Apply every projection scheduled at `step`. Returns whether any fired.
    fn project(
        &mut self,
        events: &[ProjectionEvent],
        step: usize,
        t: f64,
        frame: &AdiabaticFrame,
        state: &mut QuantumState,
        ledger: &mut EnergyLedger,
    ) -> Result<bool> {
        let mut fired = false;
        for event in events.iter().filter(|e| e.step == step) {
            let delta = entropy_delta(state, &event.family)?;
            let after = project(state, &event.family)?;
            let e_before = mean_energy(frame, state);
            let e_after = mean_energy(frame, &after);
            let jump = e_after - e_before;
            // The measurement changes the energy by neither heat nor work;
            // shift the reference so the ledger keeps closing.
            ledger.e_initial += jump;
            ledger.e_mean = e_after;
            self.projections.push(ProjectionRecord {
                step,
                t,
                rho_before: state.rho().clone(),
                rho_after: after.rho().clone(),
                delta,
                energy_jump: jump,
            });
            *state = after;
            fired = true;
        }
        Ok(fired)
    }

    fn finish(self, branch: Option<usize>, weight: f64, dissipated: f64) -> Trajectory {
        Trajectory {
            branch,
            weight,
            samples: self.samples,
            projections: self.projections,
            dissipated,
        }
    }
}

fn check_state(state: &QuantumState, step: usize) -> Result<()> {
    state.validate(Tolerances::global()).map_err(|e| match e {
        Error::Validation(msg) => Error::StepSize(format!("state invalid after step {step}: {msg}")),
        other => other,
    })
}

/// Run the apparatus along level `level` with the quantum state co-evolved
/// along the resulting path.
fn run_branch(scenario: &Scenario, level: usize, weight: f64, state0: QuantumState) -> Result<Trajectory> {
    let fam = scenario.family.as_ref();
    let app = &scenario.apparatus;
    let mut frame = build_frame(fam, &scenario.x0, None)?;
    let mut app_state = ApparatusState::new(scenario.x0.clone(), scenario.v0.clone())?;
    let mut state = state0;
    let mut ledger = EnergyLedger::start(&frame, &state);
    let mut rec = Recorder::new(scenario.sample_every, scenario.steps);
    let mut dissipated = 0.0;
    let mut t = 0.0;

    let fired = rec.project(&scenario.projections, 0, t, &frame, &mut state, &mut ledger)?;
    rec.record(0, t, &app_state.x, &app_state.v, &frame, &state, &ledger, app.mechanical_energy(&app_state), fired)?;
    for step in 1..=scenario.steps {
        let cstep = classical_step_branch(app, &app_state, fam, &frame, level, &scenario.friction, scenario.dt)?;
        let path = PathSegment {
            x0: app_state.x.clone(),
            v0: app_state.v.clone(),
            x1: cstep.state.x.clone(),
            v1: cstep.state.v.clone(),
            dt: scenario.dt,
        };
        let q = quantum_step(fam, &frame, &state, &path)?;
        check_state(&q.state, step)?;
        ledger = accumulate_ledger(&ledger, &q.frame, &q.state, LedgerIncrement { heat: q.heat, work: q.work });
        frame = q.frame;
        state = q.state;
        app_state = cstep.state;
        dissipated += cstep.dissipated;
        t = step as f64 * scenario.dt;
        let fired = rec.project(&scenario.projections, step, t, &frame, &mut state, &mut ledger)?;
        rec.record(step, t, &app_state.x, &app_state.v, &frame, &state, &ledger, app.mechanical_energy(&app_state), fired)?;
    }
    Ok(rec.finish(Some(level), weight, dissipated))
}

/// One trajectory per adiabatic level with nonzero weight `rho_kk(0)`; the
/// apparatus on branch k moves under `L_A - W_k`, and the quantum state on
/// that branch starts in `|k>`.
pub fn run_branching(scenario: &Scenario) -> Result<Vec<Trajectory>> {
    scenario.validate()?;
    let weights = scenario.weights()?;
    let m = weights.len();
    weights
        .iter()
        .enumerate()
        .filter(|(_, w)| **w > 0.0)
        .map(|(k, &w)| run_branch(scenario, k, w, QuantumState::basis_state(m, k)?))
        .collect()
}

/// Draw `draws` branch labels from `weights` with a seeded generator and
/// return the count per label.
pub fn sample_branches(weights: &[f64], draws: usize, seed: u64) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > Tolerances::global().trace {
        return Err(Error::validation(format!("branch weights sum to {total}, not 1")));
    }
    let dist = WeightedIndex::new(weights).map_err(|e| Error::validation(format!("invalid branch weights: {e}")))?;
    let mut rng = seeded(seed);
    let mut counts = vec![0usize; weights.len()];
    for _ in 0..draws {
        counts[dist.sample(&mut rng)] += 1;
    }
    Ok(counts)
}

#[derive(Debug, Clone, Serialize)]
pub struct SampledRun {
    pub trajectories: Vec<Trajectory>,
    /// Draws assigned to each adiabatic level.
    pub counts: Vec<usize>,
}

/// Branching run plus `draws` seeded branch assignments.
pub fn run_branching_sampled(scenario: &Scenario, draws: usize, seed: u64) -> Result<SampledRun> {
    let trajectories = run_branching(scenario)?;
    let counts = sample_branches(&scenario.weights()?, draws, seed)?;
    Ok(SampledRun { trajectories, counts })
}

/// `Tr(rho (F_k + f_k)) = -Tr(rho U^dag dH/dx^k U)` for each coordinate.
pub fn mean_quantum_force(frame: &AdiabaticFrame, state: &QuantumState) -> Vec<f64> {
    frame
        .transformed_gradients()
        .iter()
        .map(|g| -trace_product(state.rho(), g.matrix()).re)
        .collect()
}

/// Single self-consistent trajectory: the apparatus feels the mean quantum
/// force while the state evolves along the apparatus path.
pub fn run_mean_force(scenario: &Scenario) -> Result<Trajectory> {
    scenario.validate()?;
    let fam = scenario.family.as_ref();
    let app = &scenario.apparatus;
    let friction = &scenario.friction;
    let dt = scenario.dt;
    let tol = Tolerances::global().corrector;

    let mut frame = build_frame(fam, &scenario.x0, None)?;
    let mut app_state = ApparatusState::new(scenario.x0.clone(), scenario.v0.clone())?;
    let mut state = scenario.initial.clone();
    let mut ledger = EnergyLedger::start(&frame, &state);
    let mut rec = Recorder::new(scenario.sample_every, scenario.steps);
    let mut dissipated = 0.0;
    let mut t = 0.0;

    let fired = rec.project(&scenario.projections, 0, t, &frame, &mut state, &mut ledger)?;
    rec.record(0, t, &app_state.x, &app_state.v, &frame, &state, &ledger, app.mechanical_energy(&app_state), fired)?;
    let mut force = mean_quantum_force(&frame, &state);
    for step in 1..=scenario.steps {
        let drift = kick_drift(app, &app_state, &force, friction, dt)?;
        let mut v1 = app_state.v.clone();
        let mut converged = None;
        for _ in 0..MAX_COUPLING_ITERATIONS {
            let path = PathSegment {
                x0: app_state.x.clone(),
                v0: app_state.v.clone(),
                x1: drift.x1.clone(),
                v1: v1.clone(),
                dt,
            };
            let q = quantum_step(fam, &frame, &state, &path)?;
            let force1 = mean_quantum_force(&q.frame, &q.state);
            let kick = final_kick(app, &app_state.v, &drift, &force1, friction, dt)?;
            let change = kick.v1.iter().zip(&v1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let scale = 1.0 + kick.v1.iter().map(|v| v.abs()).fold(0.0, f64::max);
            v1 = kick.v1.clone();
            if change <= tol * scale {
                converged = Some((q, force1, kick));
                break;
            }
        }
        let Some((q, force1, kick)) = converged else {
            return Err(Error::StepSize(format!(
                "mean-force coupling did not converge at step {step}"
            )));
        };
        check_state(&q.state, step)?;
        ledger = accumulate_ledger(&ledger, &q.frame, &q.state, LedgerIncrement { heat: q.heat, work: q.work });
        frame = q.frame;
        state = q.state;
        app_state = ApparatusState {
            x: drift.x1,
            v: kick.v1,
        };
        force = force1;
        dissipated += kick.dissipated;
        t = step as f64 * dt;
        if rec.project(&scenario.projections, step, t, &frame, &mut state, &mut ledger)? {
            force = mean_quantum_force(&frame, &state);
            rec.record(step, t, &app_state.x, &app_state.v, &frame, &state, &ledger, app.mechanical_energy(&app_state), true)?;
        } else {
            rec.record(step, t, &app_state.x, &app_state.v, &frame, &state, &ledger, app.mechanical_energy(&app_state), false)?;
        }
    }
    Ok(rec.finish(None, 1.0, dissipated))
}

/// Apparatus path prescribed as a function of time.
pub trait DrivenPath: Send + Sync {
    fn coords(&self) -> usize;
    fn position(&self, t: f64) -> Vec<f64>;
    fn velocity(&self, t: f64) -> Vec<f64>;
}

/// `x(t) = start + velocity * t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPath {
    pub start: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl DrivenPath for LinearPath {
    fn coords(&self) -> usize {
        self.start.len()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        self.start.iter().zip(&self.velocity).map(|(x, v)| x + v * t).collect()
    }

    fn velocity(&self, _t: f64) -> Vec<f64> {
        self.velocity.clone()
    }
}

/// `path` traversed `speed` times as fast.
pub struct Rescaled<P> {
    pub path: P,
    pub speed: f64,
}

impl<P: DrivenPath> DrivenPath for Rescaled<P> {
    fn coords(&self) -> usize {
        self.path.coords()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        self.path.position(self.speed * t)
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        self.path.velocity(self.speed * t).into_iter().map(|v| v * self.speed).collect()
    }
}

/// Quantum evolution along a prescribed apparatus path.
#[derive(Clone)]
pub struct DrivenScenario {
    pub family: Arc<dyn HamiltonianFamily>,
    pub path: Arc<dyn DrivenPath>,
    /// Initial state in the adiabatic basis at `path.position(0)`.
    pub initial: QuantumState,
    pub dt: f64,
    pub steps: usize,
    pub sample_every: usize,
    pub projections: Vec<ProjectionEvent>,
}

impl DrivenScenario {
    pub fn new(
        family: Arc<dyn HamiltonianFamily>,
        path: Arc<dyn DrivenPath>,
        initial: QuantumState,
        dt: f64,
        steps: usize,
    ) -> Self {
        DrivenScenario {
            family,
            path,
            initial,
            dt,
            steps,
            sample_every: 1,
            projections: Vec::new(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.path.coords() != self.family.coords() {
            return Err(Error::validation("path and family have different coordinate counts"));
        }
        if self.initial.dim() != self.family.dim() {
            return Err(Error::validation("initial state dimension does not match the family"));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(Error::validation("sample_every must be at least 1"));
        }
        self.initial.validate(Tolerances::global())
    }
}

pub fn run_driven(scenario: &DrivenScenario) -> Result<Trajectory> {
    scenario.validate()?;
    let fam = scenario.family.as_ref();
    let path = scenario.path.as_ref();
    let dt = scenario.dt;
    let mut frame = build_frame(fam, &path.position(0.0), None)?;
    let mut state = scenario.initial.clone();
    let mut ledger = EnergyLedger::start(&frame, &state);
    let mut rec = Recorder::new(scenario.sample_every, scenario.steps);

    let fired = rec.project(&scenario.projections, 0, 0.0, &frame, &mut state, &mut ledger)?;
    rec.record(0, 0.0, &path.position(0.0), &path.velocity(0.0), &frame, &state, &ledger, 0.0, fired)?;
    for step in 1..=scenario.steps {
        let t0 = (step - 1) as f64 * dt;
        let t1 = step as f64 * dt;
        let seg = PathSegment {
            x0: path.position(t0),
            v0: path.velocity(t0),
            x1: path.position(t1),
            v1: path.velocity(t1),
            dt,
        };
        let q = quantum_step(fam, &frame, &state, &seg)?;
        check_state(&q.state, step)?;
        ledger = accumulate_ledger(&ledger, &q.frame, &q.state, LedgerIncrement { heat: q.heat, work: q.work });
        frame = q.frame;
        state = q.state;
        let fired = rec.project(&scenario.projections, step, t1, &frame, &mut state, &mut ledger)?;
        rec.record(step, t1, &seg.x1, &seg.v1, &frame, &state, &ledger, 0.0, fired)?;
    }
    Ok(rec.finish(None, 1.0, 0.0))
}

#[derive(Debug, Clone, Serialize)]
pub struct DiabaticAverage {
    /// Time average of `Tr(rho f_k)` per coordinate.
    pub mean: Vec<f64>,
    /// Euclidean norm of `mean`.
    pub magnitude: f64,
    /// `|Q| / |W|` at the end of the run.
    pub heat_to_work_ratio: f64,
    pub ledger: EnergyLedger,
}

/// Average diabatic force along the scenario's path traversed `speed` times
/// as fast. The step count is kept, so the step length along the path is too.
pub fn time_averaged_diabatic_force(scenario: &DrivenScenario, speed: f64) -> Result<DiabaticAverage> {
    if !(speed > 0.0) || !speed.is_finite() {
        return Err(Error::validation(format!("velocity scale must be positive, got {speed}")));
    }
    let rescaled = DrivenScenario {
        path: Arc::new(Rescaled {
            path: ArcPath(scenario.path.clone()),
            speed,
        }),
        dt: scenario.dt / speed,
        sample_every: 1,
        ..scenario.clone()
    };
    let run = run_driven(&rescaled)?;
    let n = scenario.family.coords();

    // Trapezoidal time average over the recorded samples.
    let mut mean = vec![0.0; n];
    let duration = run.duration();
    if duration > 0.0 {
        for w in run.samples.windows(2) {
            let h = w[1].t - w[0].t;
            for k in 0..n {
                mean[k] += 0.5 * h * (w[0].diabatic_force[k] + w[1].diabatic_force[k]);
            }
        }
        mean.iter_mut().for_each(|m| *m /= duration);
    } else {
        mean = run.first().diabatic_force.clone();
    }
    let magnitude = mean.iter().map(|m| m * m).sum::<f64>().sqrt();
    let ledger = *run.ledger();
    Ok(DiabaticAverage {
        mean,
        magnitude,
        heat_to_work_ratio: ledger.heat_to_work_ratio(),
        ledger,
    })
}

struct ArcPath(Arc<dyn DrivenPath>);

impl DrivenPath for ArcPath {
    fn coords(&self) -> usize {
        self.0.coords()
    }

    fn position(&self, t: f64) -> Vec<f64> {
        self.0.position(t)
    }

    fn velocity(&self, t: f64) -> Vec<f64> {
        self.0.velocity(t)
    }
}
