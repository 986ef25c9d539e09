//! Scenario execution.

use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use serde_json::json;

use crate::dynamics::{
    run_branching, run_branching_sampled, run_driven, run_mean_force, Apparatus, ConstantMetric, DrivenScenario,
    FrictionSpec, HarmonicPotential, LinearPath, ProjectionEvent, Scenario, Trajectory, ZeroPotential,
};
use crate::entropy::{
    entropy_delta, entropy_of_spectrum, monotonicity_suite, unitary_invariance_audit, ProjectorFamily,
};
use crate::error::{Error, Result};
use crate::family::{HamiltonianFamily, PolynomialFamily};
use crate::operator::{hermitian_eigenvalues, C64};
use crate::random::{goe, seeded};
use crate::state::QuantumState;
use crate::stern_gerlach::{sg_beam, sg_mean_force, sg_run, LinearGradientField, SternGerlachConfig};
use crate::thermo::{
    boltzmann_weights, default_eta, entropy_temperature, kubo_friction, maxwell_check, mean_level_spacing,
};
use crate::tolerance::Tolerances;

use super::config::{
    CustomConfig, FrictionConfig, RunMode, ScenarioConfig, ScenarioKind, SternGerlachSpec, ThermoFamily,
};
use super::output::{git_blob_hash, write_report, write_thermo_csv, write_trajectory_csv};
use super::report::{Check, RunReport, TrajectorySummary};

/// Relative ledger residuals are measured against this absolute floor.
const LEDGER_FLOOR: f64 = 1e-12;
const ENTROPY_DRIFT_LIMIT: f64 = 1e-7;
const ENTROPY_JUMP_LIMIT: f64 = 1e-10;

struct Outputs<'a> {
    dir: Option<&'a Path>,
    files: Vec<String>,
}

impl Outputs<'_> {
    fn path(&mut self, name: &str) -> Option<std::path::PathBuf> {
        let dir = self.dir?;
        self.files.push(name.to_string());
        Some(dir.join(name))
    }
}

struct Collected {
    trajectories: Vec<TrajectorySummary>,
    checks: Vec<Check>,
    results: serde_json::Value,
}

impl Collected {
    fn new() -> Self {
        Collected {
            trajectories: Vec::new(),
            checks: Vec::new(),
            results: json!({}),
        }
    }
}

/// Execute `config`, writing outputs under `out_dir` when given. The report
/// is written last as `report.json`.
pub fn run(config: &ScenarioConfig, out_dir: Option<&Path>) -> Result<RunReport> {
    config.validate()?;
    let started = Instant::now();
    let tol = config.tolerances.unwrap_or(*Tolerances::global());
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let mut out = Outputs {
        dir: out_dir,
        files: Vec::new(),
    };
    let collected = match config.kind {
        ScenarioKind::SternGerlach => run_stern_gerlach(config, &tol, &mut out)?,
        ScenarioKind::CustomFamily => run_custom(config, &tol, &mut out)?,
        ScenarioKind::ThermoCurve => run_thermo(config, &mut out)?,
        ScenarioKind::Kubo => run_kubo(config)?,
        ScenarioKind::EntropyAudit => run_entropy_audit(config)?,
    };
    let report_path = out.path("report.json");
    let passed = collected.checks.iter().all(|c| c.passed);
    let report = RunReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: config.clone(),
        config_hash: git_blob_hash(&config.canonical_json()),
        tolerances: tol,
        trajectories: collected.trajectories,
        checks: collected.checks,
        results: collected.results,
        files: out.files,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        passed,
    };
    if let Some(path) = report_path {
        write_report(&path, &report)?;
    }
    Ok(report)
}

fn trajectory_checks(label: &str, traj: &Trajectory, tol: &Tolerances, checks: &mut Vec<Check>) -> Result<()> {
    checks.push(Check::at_most(
        format!("{label}: ledger residual (relative)"),
        traj.ledger().relative_residual(LEDGER_FLOOR),
        tol.ledger,
    ));
    let audit = unitary_invariance_audit(traj)?;
    checks.push(Check::at_most(
        format!("{label}: entropy drift without projection"),
        audit.max_unitary_drift,
        ENTROPY_DRIFT_LIMIT,
    ));
    for (i, jump) in audit.jumps.iter().enumerate() {
        checks.push(Check::at_most(
            format!("{label}: projection {i} entropy jump matches audit"),
            (jump.observed - jump.recorded).abs(),
            ENTROPY_JUMP_LIMIT,
        ));
    }
    let last = QuantumState::from_matrix_unchecked(traj.last().rho.clone());
    let valid = last.validate(tol).is_ok();
    checks.push(Check {
        name: format!("{label}: final state valid"),
        passed: valid,
        measured: (last.trace() - 1.0).abs(),
        limit: tol.trace,
    });
    Ok(())
}

fn emit(
    label: &str,
    traj: &Trajectory,
    tol: &Tolerances,
    out: &mut Outputs,
    collected: &mut Collected,
) -> Result<()> {
    let name = format!("trajectory_{label}.csv");
    let csv = match out.path(&name) {
        Some(path) => {
            write_trajectory_csv(&path, traj)?;
            Some(name)
        }
        None => None,
    };
    trajectory_checks(label, traj, tol, &mut collected.checks)?;
    collected.trajectories.push(TrajectorySummary::new(label, traj, csv));
    Ok(())
}

fn sg_config(config: &ScenarioConfig) -> SternGerlachConfig {
    let spec = config.stern_gerlach.clone().unwrap_or_default();
    let [p, m] = spec.amplitudes;
    SternGerlachConfig {
        gamma: spec.gamma,
        mass: spec.mass,
        field: Arc::new(LinearGradientField {
            b0: spec.b0,
            gradient: spec.gradient,
        }),
        r0: spec.r0,
        v0: spec.v0,
        amplitudes: [C64::new(p[0], p[1]), C64::new(m[0], m[1])],
        duration: config.duration,
        dt: config.dt,
    }
}

fn run_stern_gerlach(config: &ScenarioConfig, tol: &Tolerances, out: &mut Outputs) -> Result<Collected> {
    let cfg = sg_config(config);
    let spec: SternGerlachSpec = config.stern_gerlach.clone().unwrap_or_default();
    let mut c = Collected::new();
    if config.mode == RunMode::MeanForce {
        let traj = sg_mean_force(&cfg)?;
        emit("mean", &traj, tol, out, &mut c)?;
        c.results = json!({ "final_position": traj.last().x });
        return Ok(c);
    }

    let run = sg_run(&cfg)?;
    let (wp, wm) = cfg.weights();
    for (label, traj, summary, expected) in [
        ("plus", &run.plus, &run.summary.plus, wp),
        ("minus", &run.minus, &run.summary.minus, wm),
    ] {
        let (Some(traj), Some(summary)) = (traj, summary) else {
            continue;
        };
        emit(label, traj, tol, out, &mut c)?;
        c.checks.push(Check::at_most(
            format!("{label}: branch weight equals |C|^2"),
            (traj.weight - expected).abs(),
            0.0,
        ));
        c.checks.push(Check::at_most(
            format!("{label}: kinetic gain balances level energy"),
            summary.energy_closure,
            1e-7,
        ));
    }
    c.results = json!({
        "weights": { "plus": wp, "minus": wm },
        "summary": run.summary,
    });

    if config.mode == RunMode::Sampled {
        let seed = config.seed.expect("validated");
        let (lower, upper, bins) = match &spec.detector {
            Some(d) => (d.lower, d.upper, d.bins),
            None => {
                let zs: Vec<f64> = [&run.plus, &run.minus]
                    .iter()
                    .filter_map(|t| t.as_ref().map(|t| t.last().x[2]))
                    .collect();
                let lo = zs.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let margin = ((hi - lo) * 0.5).max(1e-3);
                (lo - margin, hi + margin, 50)
            }
        };
        let beam = sg_beam(&cfg, &run, spec.atoms, seed, lower, upper, bins)?;
        let n = spec.atoms as f64;
        let sigma = (n * wp * (1.0 - wp)).sqrt();
        c.checks.push(Check::at_most(
            "sampled: plus count within 3 sigma",
            (beam.plus_count as f64 - n * wp).abs(),
            3.0 * sigma,
        ));
        c.results["beam"] = serde_json::to_value(&beam)?;
    }
    Ok(c)
}

fn custom_scenario(config: &ScenarioConfig, custom: &CustomConfig) -> Result<(Scenario, Arc<PolynomialFamily>)> {
    let family = Arc::new(custom.family.build()?);
    let n = custom.family.coords;
    let metric = ConstantMetric::scalar(n, custom.mass);
    let apparatus = match &custom.stiffness {
        Some(k) => {
            if k.len() != n {
                return Err(Error::validation("custom.stiffness must have one entry per coordinate"));
            }
            Apparatus::new(
                metric,
                HarmonicPotential {
                    stiffness: k.clone(),
                    center: custom.x0.clone(),
                },
            )
        }
        None => Apparatus::new(metric, ZeroPotential),
    };
    let mut scenario = Scenario::new(
        family.clone(),
        apparatus,
        custom.x0.clone(),
        custom.v0.clone(),
        custom.initial.build()?,
        config.dt,
        config.steps(),
    );
    scenario.sample_every = config.sample_every;
    scenario.friction = match &custom.friction {
        None => FrictionSpec::none(),
        Some(FrictionConfig::Constant(rows)) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(Error::validation("custom.friction.constant must be an n x n matrix"));
            }
            FrictionSpec::constant(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        }
        Some(FrictionConfig::Kubo { beta, eta }) => FrictionSpec::kubo(family.clone(), *beta, *eta),
    };
    let m = family.dim();
    scenario.projections = custom
        .projections
        .iter()
        .map(|p| {
            Ok(ProjectionEvent {
                step: p.step,
                family: match &p.blocks {
                    None => ProjectorFamily::rank_one(m),
                    Some(b) => ProjectorFamily::from_blocks(m, b.clone())?,
                },
            })
        })
        .collect::<Result<_>>()?;
    Ok((scenario, family))
}

fn run_custom(config: &ScenarioConfig, tol: &Tolerances, out: &mut Outputs) -> Result<Collected> {
    let custom = config.custom.as_ref().expect("validated");
    let (scenario, family) = custom_scenario(config, custom)?;
    let mut c = Collected::new();
    match config.mode {
        RunMode::Branching => {
            for traj in run_branching(&scenario)? {
                emit(&format!("branch_{}", traj.branch.unwrap_or(0)), &traj, tol, out, &mut c)?;
            }
        }
        RunMode::Sampled => {
            let sampled = run_branching_sampled(&scenario, custom.draws, config.seed.expect("validated"))?;
            for traj in &sampled.trajectories {
                emit(&format!("branch_{}", traj.branch.unwrap_or(0)), traj, tol, out, &mut c)?;
            }
            c.results = json!({ "counts": sampled.counts });
        }
        RunMode::MeanForce => {
            let traj = run_mean_force(&scenario)?;
            emit("mean", &traj, tol, out, &mut c)?;
        }
        RunMode::Driven => {
            let mut driven = DrivenScenario::new(
                family,
                Arc::new(LinearPath {
                    start: custom.x0.clone(),
                    velocity: custom.v0.clone(),
                }),
                scenario.initial.clone(),
                config.dt,
                config.steps(),
            );
            driven.sample_every = config.sample_every;
            driven.projections = scenario.projections.clone();
            let traj = run_driven(&driven)?;
            emit("driven", &traj, tol, out, &mut c)?;
            c.results = json!({ "heat_to_work_ratio": traj.ledger().heat_to_work_ratio() });
        }
    }
    Ok(c)
}

fn thermo_family(family: &ThermoFamily, seed: Option<u64>) -> Result<PolynomialFamily> {
    match family {
        ThermoFamily::Goe { dim } => {
            let seed = seed.ok_or_else(|| Error::validation("seed is required for a goe family"))?;
            let mut rng = seeded(seed);
            let a = goe(&mut rng, *dim);
            let b = goe(&mut rng, *dim);
            PolynomialFamily::linear(a, b)
        }
        ThermoFamily::Explicit(spec) => spec.build(),
    }
}

fn run_thermo(config: &ScenarioConfig, out: &mut Outputs) -> Result<Collected> {
    let spec = config.thermo.as_ref().expect("validated");
    let family = thermo_family(&spec.family, config.seed)?;
    let mut levels = hermitian_eigenvalues(&family.evaluate(&spec.x)?)?;
    levels.sort_by(f64::total_cmp);
    let spacing = mean_level_spacing(&levels)?;
    let sigma = spec.sigma_spacings * spacing;
    let grid = match &spec.grid {
        Some(g) => g.values(),
        None => {
            let m = levels.len();
            let (lo, hi) = (levels[m / 4], levels[(3 * m / 4).min(m - 1)]);
            (0..21).map(|i| lo + (hi - lo) * i as f64 / 20.0).collect()
        }
    };
    let curve = entropy_temperature(&levels, &grid, sigma)?;
    // Information entropy of the canonical state at each microcanonical
    // temperature, reported next to the thermodynamic entropy.
    let canonical: Vec<f64> = curve
        .temperature
        .iter()
        .map(|t| entropy_of_spectrum(&boltzmann_weights(&levels, 1.0 / t)))
        .collect::<Result<_>>()?;
    if let Some(path) = out.path("thermo_curve.csv") {
        write_thermo_csv(&path, &curve, &canonical)?;
    }
    let mut c = Collected::new();
    let identity = curve.identity_residual.iter().cloned().fold(0.0, f64::max);
    c.checks.push(Check::at_most("omega = k_B T G (relative)", identity, 0.02));
    let mut results = json!({
        "mean_level_spacing": spacing,
        "sigma": sigma,
        "dimension": levels.len(),
    });
    if spec.maxwell {
        // A handful of grid energies keeps the root finding affordable.
        let stride = (grid.len() / 5).max(1);
        let energies: Vec<f64> = grid.iter().step_by(stride).cloned().collect();
        let report = maxwell_check(&family, &spec.x, &energies, sigma, spec.step)?;
        c.checks.push(Check::at_most(
            "shell force = T dS/dx = -dE/dx at fixed S (relative)",
            report.max_deviation,
            0.05,
        ));
        results["maxwell"] = serde_json::to_value(&report)?;
    }
    c.results = results;
    Ok(c)
}

fn run_kubo(config: &ScenarioConfig) -> Result<Collected> {
    let spec = config.kubo.as_ref().expect("validated");
    let family = thermo_family(&spec.family, config.seed)?;
    let eta = match spec.eta {
        Some(eta) => eta,
        None => default_eta(&hermitian_eigenvalues(&family.evaluate(&spec.x)?)?)?,
    };
    let tensor = kubo_friction(&family, &spec.x, spec.beta, eta)?;
    let mut c = Collected::new();
    if family.terms().iter().all(|t| t.matrix.is_real()) {
        c.checks.push(Check::at_most("friction tensor symmetric", tensor.asymmetry(), 1e-8));
    }
    c.checks.push(Check::at_least("friction diagonal non-negative", tensor.min_diagonal(), -1e-10));
    c.results = json!({ "friction": tensor });
    Ok(c)
}

fn run_entropy_audit(config: &ScenarioConfig) -> Result<Collected> {
    let spec = config.entropy_audit.clone().unwrap_or_default();
    let suite = monotonicity_suite(spec.dim, spec.draws, config.seed.expect("validated"), 1e-12)?;
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let plus = QuantumState::from_amplitudes(&[C64::new(r, 0.0), C64::new(r, 0.0)])?;
    let superposition = entropy_delta(&plus, &ProjectorFamily::rank_one(2))?;
    let mut c = Collected::new();
    c.checks.push(Check::at_least(
        "projection never lowers entropy (passing draws)",
        suite.passes as f64,
        suite.draws as f64,
    ));
    c.checks.push(Check::at_most(
        "equal superposition gains ln 2",
        (superposition.delta - 2f64.ln()).abs(),
        1e-12,
    ));
    c.results = json!({ "monotonicity": suite, "superposition": superposition });
    Ok(c)
}
