use serde::{Deserialize, Serialize};

use crate::frame::AdiabaticFrame;
use crate::state::QuantumState;

/// Running first-law bookkeeping: `E(t) - E(0) = Q + W` up to `residual`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub e_initial: f64,
    /// `Tr(rho W)`.
    pub e_mean: f64,
    /// Accumulated heat, carried by the diabatic forces.
    pub heat: f64,
    /// Accumulated work, carried by the adiabatic forces.
    pub work: f64,
    /// `e_mean - e_initial - heat - work`.
    pub residual: f64,
}

/// Heat and work increments over one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LedgerIncrement {
    pub heat: f64,
    pub work: f64,
}

pub fn mean_energy(frame: &AdiabaticFrame, state: &QuantumState) -> f64 {
    frame
        .energies()
        .iter()
        .zip(state.populations())
        .map(|(w, p)| w * p)
        .sum()
}

impl LedgerIncrement {
    /// `-Tr(rho f_k) dx^k` and `-Tr(rho F_k) dx^k` with forces from a single frame.
    pub fn midpoint(frame: &AdiabaticFrame, state: &QuantumState, dx: &[f64]) -> Self {
        let mut inc = LedgerIncrement::default();
        let rho = state.rho();
        let populations = state.populations();
        for ((d, f), slopes) in dx.iter().zip(frame.diabatic_forces()).zip(frame.level_slopes()) {
            if *d == 0.0 {
                continue;
            }
            inc.heat -= crate::operator::trace_product(rho, f.matrix()).re * d;
            // F_k = -dW/dx^k
            let mean_f: f64 = populations.iter().zip(&slopes).map(|(p, s)| -p * s).sum();
            inc.work -= mean_f * d;
        }
        inc
    }

    /// Trapezoidal rule between the frames at both ends of `dx`.
    pub fn trapezoid(start: &AdiabaticFrame, end: &AdiabaticFrame, state: &QuantumState, dx: &[f64]) -> Self {
        let a = Self::midpoint(start, state, dx);
        let b = Self::midpoint(end, state, dx);
        LedgerIncrement {
            heat: 0.5 * (a.heat + b.heat),
            work: 0.5 * (a.work + b.work),
        }
    }
}

impl EnergyLedger {
    pub fn start(frame: &AdiabaticFrame, state: &QuantumState) -> Self {
        let e = mean_energy(frame, state);
        EnergyLedger {
            e_initial: e,
            e_mean: e,
            heat: 0.0,
            work: 0.0,
            residual: 0.0,
        }
    }

    pub fn delta_e(&self) -> f64 {
        self.e_mean - self.e_initial
    }

    /// `|residual| / max(|dE|, |Q|, |W|, floor)`.
    pub fn relative_residual(&self, floor: f64) -> f64 {
        let scale = self.delta_e().abs().max(self.heat.abs()).max(self.work.abs()).max(floor);
        if scale == 0.0 {
            0.0
        } else {
            self.residual.abs() / scale
        }
    }

    /// Ratio `|Q| / |W|` (infinite when no work was done).
    pub fn heat_to_work_ratio(&self) -> f64 {
        if self.work == 0.0 {
            if self.heat == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            self.heat.abs() / self.work.abs()
        }
    }
}

/// Add one step's increments and re-evaluate the mean energy on `state`.
pub fn accumulate_ledger(
    ledger: &EnergyLedger,
    frame: &AdiabaticFrame,
    state: &QuantumState,
    increment: LedgerIncrement,
) -> EnergyLedger {
    let heat = ledger.heat + increment.heat;
    let work = ledger.work + increment.work;
    let e_mean = mean_energy(frame, state);
    EnergyLedger {
        e_initial: ledger.e_initial,
        e_mean,
        heat,
        work,
        residual: e_mean - ledger.e_initial - heat - work,
    }
}
