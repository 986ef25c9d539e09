//! Coupled quantum/apparatus integration with a first-law energy ledger.

mod apparatus;
mod classical;
mod ledger;
mod quantum;
mod run;

pub use apparatus::{
    Apparatus, ApparatusState, ConstantMetric, FnMetric, FrictionSpec, HarmonicPotential, Metric, Potential,
    ZeroPotential,
};
pub use classical::{classical_step_branch, ClassicalStep};
pub use ledger::{accumulate_ledger, mean_energy, EnergyLedger, LedgerIncrement};
pub use quantum::{quantum_step, PathSegment, QuantumStep};
pub use run::{
    mean_quantum_force, run_branching, run_branching_sampled, run_driven, run_mean_force, sample_branches,
    time_averaged_diabatic_force, DiabaticAverage, DrivenPath, DrivenScenario, LinearPath, ProjectionEvent,
    ProjectionRecord, Rescaled, SampledRun, Sample, Scenario, Trajectory,
};
