//! Machine-readable run report.

use serde::{Deserialize, Serialize};

use crate::dynamics::{EnergyLedger, Trajectory};
use crate::tolerance::Tolerances;

use super::config::ScenarioConfig;

/// One asserted invariant with its measured value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub limit: f64,
}

impl Check {
    /// Passes when `measured <= limit`.
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: measured <= limit,
            measured,
            limit,
        }
    }

    /// Passes when `measured >= limit`.
    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: measured >= limit,
            measured,
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub label: String,
    pub branch: Option<usize>,
    pub weight: f64,
    pub samples: usize,
    pub t_final: f64,
    pub x_final: Vec<f64>,
    pub v_final: Vec<f64>,
    pub ledger: EnergyLedger,
    pub dissipated: f64,
    pub projections: usize,
    /// Output file name, relative to the output directory.
    pub csv: Option<String>,
}

impl TrajectorySummary {
    pub fn new(label: &str, traj: &Trajectory, csv: Option<String>) -> Self {
        let last = traj.last();
        TrajectorySummary {
            label: label.to_string(),
            branch: traj.branch,
            weight: traj.weight,
            samples: traj.samples.len(),
            t_final: last.t,
            x_final: last.x.clone(),
            v_final: last.v.clone(),
            ledger: last.ledger,
            dissipated: traj.dissipated,
            projections: traj.projections.len(),
            csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool_version: String,
    pub config: ScenarioConfig,
    /// Git blob id of the canonical config text.
    pub config_hash: String,
    pub tolerances: Tolerances,
    pub trajectories: Vec<TrajectorySummary>,
    pub checks: Vec<Check>,
    /// Scenario-specific results.
    pub results: serde_json::Value,
    pub files: Vec<String>,
    pub wall_clock_seconds: f64,
    pub passed: bool,
}

impl RunReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}
