//! JSON scenario configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::family::{MonomialTerm, PolynomialFamily};
use crate::operator::{CMatrix, HermitianOperator, C64};
use crate::state::QuantumState;
use crate::tolerance::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    SternGerlach,
    CustomFamily,
    ThermoCurve,
    Kubo,
    EntropyAudit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Branching,
    MeanForce,
    Sampled,
    /// Prescribed uniform apparatus motion (custom families only).
    Driven,
}

/// Complex matrix as separate real and imaginary row lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSpec {
    pub re: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub im: Option<Vec<Vec<f64>>>,
}

impl MatrixSpec {
    pub fn to_operator(&self, field: &str) -> Result<HermitianOperator> {
        let m = self.re.len();
        let bad = || Error::validation(format!("{field} must be a square matrix"));
        if m == 0 || self.re.iter().any(|r| r.len() != m) {
            return Err(bad());
        }
        if let Some(im) = &self.im {
            if im.len() != m || im.iter().any(|r| r.len() != m) {
                return Err(bad());
            }
        }
        let mat = CMatrix::from_fn(m, m, |i, j| {
            C64::new(self.re[i][j], self.im.as_ref().map_or(0.0, |im| im[i][j]))
        });
        HermitianOperator::new(mat).map_err(|e| Error::validation(format!("{field}: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermSpec {
    pub matrix: MatrixSpec,
    pub powers: Vec<u32>,
}

/// `H(x) = sum_t M_t prod_k x_k^{p_tk}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub coords: usize,
    pub terms: Vec<TermSpec>,
}

impl FamilySpec {
    pub fn build(&self) -> Result<PolynomialFamily> {
        let terms = self
            .terms
            .iter()
            .enumerate()
            .map(|(t, term)| {
                Ok(MonomialTerm {
                    matrix: term.matrix.to_operator(&format!("family.terms[{t}].matrix"))?,
                    powers: term.powers.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        PolynomialFamily::new(self.coords, terms)
    }
}

/// Initial object state in the adiabatic basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSpec {
    Populations(Vec<f64>),
    /// `[re, im]` pairs.
    Amplitudes(Vec<[f64; 2]>),
}

impl InitialSpec {
    pub fn build(&self) -> Result<QuantumState> {
        match self {
            InitialSpec::Populations(p) => QuantumState::from_populations(p),
            InitialSpec::Amplitudes(a) => {
                QuantumState::from_amplitudes(&a.iter().map(|[re, im]| C64::new(*re, *im)).collect::<Vec<_>>())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionConfig {
    /// Constant `Gamma`, row-major.
    Constant(Vec<Vec<f64>>),
    /// Nyquist-Kubo friction of the object family at every visited point.
    Kubo { beta: f64, eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionSpec {
    pub step: usize,
    /// Index blocks in the adiabatic basis; rank-one projectors when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomConfig {
    pub family: FamilySpec,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    /// Harmonic restoring stiffness per coordinate, about `x0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stiffness: Option<Vec<f64>>,
    pub initial: InitialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub friction: Option<FrictionConfig>,
    #[serde(default)]
    pub projections: Vec<ProjectionSpec>,
    /// Branch draws in sampled mode.
    #[serde(default = "default_atoms")]
    pub draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub lower: f64,
    pub upper: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SternGerlachSpec {
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default = "default_b0")]
    pub b0: f64,
    #[serde(default = "default_gradient")]
    pub gradient: f64,
    #[serde(default)]
    pub r0: [f64; 3],
    #[serde(default = "default_velocity")]
    pub v0: [f64; 3],
    /// `(C_+, C_-)` as `[re, im]` pairs.
    #[serde(default = "default_amplitudes")]
    pub amplitudes: [[f64; 2]; 2],
    #[serde(default = "default_atoms")]
    pub atoms: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorSpec>,
}

impl Default for SternGerlachSpec {
    fn default() -> Self {
        SternGerlachSpec {
            gamma: default_gamma(),
            mass: default_mass(),
            b0: default_b0(),
            gradient: default_gradient(),
            r0: [0.0; 3],
            v0: default_velocity(),
            amplitudes: default_amplitudes(),
            atoms: default_atoms(),
            detector: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self.points {
            0 => Vec::new(),
            1 => vec![self.start],
            n => (0..n)
                .map(|i| self.start + (self.stop - self.start) * i as f64 / (n - 1) as f64)
                .collect(),
        }
    }
}

/// Random-matrix family `A + x B` with GOE members, or an explicit family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThermoFamily {
    Goe { dim: usize },
    Explicit(FamilySpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermoConfig {
    pub family: ThermoFamily,
    pub x: Vec<f64>,
    /// Energy grid; the central half of the spectrum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    /// Smoothing width in units of the mean level spacing.
    #[serde(default = "default_sigma_spacings")]
    pub sigma_spacings: f64,
    #[serde(default = "default_true")]
    pub maxwell: bool,
    #[serde(default = "default_fd_step")]
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KuboConfig {
    pub family: ThermoFamily,
    pub x: Vec<f64>,
    pub beta: f64,
    /// Tenth of the mean level spacing when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyAuditConfig {
    #[serde(default = "default_audit_dim")]
    pub dim: usize,
    #[serde(default = "default_draws")]
    pub draws: usize,
}

impl Default for EntropyAuditConfig {
    fn default() -> Self {
        EntropyAuditConfig {
            dim: default_audit_dim(),
            draws: default_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    #[serde(default)]
    pub mode: RunMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Overrides the profile selected by the environment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stern_gerlach: Option<SternGerlachSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub custom: Option<CustomConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thermo: Option<ThermoConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kubo: Option<KuboConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy_audit: Option<EntropyAuditConfig>,
}

fn default_dt() -> f64 {
    1e-3
}
fn default_duration() -> f64 {
    1.0
}
fn default_sample_every() -> usize {
    1
}
fn default_mass() -> f64 {
    1.0
}
fn default_gamma() -> f64 {
    1.0
}
fn default_b0() -> f64 {
    1.0
}
fn default_gradient() -> f64 {
    0.1
}
fn default_velocity() -> [f64; 3] {
    [0.0, 1.0, 0.0]
}
fn default_amplitudes() -> [[f64; 2]; 2] {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    [[r, 0.0], [r, 0.0]]
}
fn default_atoms() -> usize {
    10_000
}
fn default_sigma_spacings() -> f64 {
    5.0
}
fn default_true() -> bool {
    true
}
fn default_fd_step() -> f64 {
    1e-4
}
fn default_audit_dim() -> usize {
    4
}
fn default_draws() -> usize {
    1000
}

/// Keys present in the document but not understood by the parser.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOutcome {
    pub config: ScenarioConfig,
    pub unknown_keys: Vec<String>,
}

/// Dotted key path without the markers for optional layers.
fn display_path(path: &serde_ignored::Path) -> String {
    path.to_string()
        .split('.')
        .filter(|part| *part != "?")
        .collect::<Vec<_>>()
        .join(".")
}

fn parse_error(e: serde_json::Error) -> Error {
    Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parse and validate a configuration. Unknown keys are an error when
/// `strict`, and are returned for the caller to warn about otherwise.
pub fn parse_config(text: &str, strict: bool) -> Result<ParseOutcome> {
    let mut unknown = Vec::new();
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig =
        serde_ignored::deserialize(&mut de, |path| unknown.push(display_path(&path))).map_err(parse_error)?;
    de.end().map_err(parse_error)?;
    if strict && !unknown.is_empty() {
        return Err(Error::validation(format!("unknown configuration keys: {}", unknown.join(", "))));
    }
    config.validate()?;
    Ok(ParseOutcome {
        config,
        unknown_keys: unknown,
    })
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::validation(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.duration >= 0.0) || !self.duration.is_finite() {
            return Err(Error::validation(format!(
                "duration must be non-negative, got {}",
                self.duration
            )));
        }
        if self.sample_every == 0 {
            return Err(Error::validation("sample_every must be at least 1"));
        }
        if let Some(tol) = &self.tolerances {
            tol.validate()?;
        }
        if self.mode == RunMode::Sampled && self.seed.is_none() {
            return Err(Error::validation("seed is required for sampled mode"));
        }
        match self.kind {
            ScenarioKind::SternGerlach => {
                if self.mode == RunMode::Driven {
                    return Err(Error::validation("mode: driven is only available for custom_family"));
                }
            }
            ScenarioKind::CustomFamily => {
                let c = self.custom.as_ref().ok_or_else(|| Error::validation("custom: section is required"))?;
                c.family.build()?;
                c.initial.build()?;
                if c.x0.len() != c.family.coords || c.v0.len() != c.family.coords {
                    return Err(Error::validation("custom.x0 and custom.v0 must have one entry per coordinate"));
                }
                if !(c.mass > 0.0) {
                    return Err(Error::validation("custom.mass must be positive"));
                }
            }
            ScenarioKind::ThermoCurve => {
                let t = self.thermo.as_ref().ok_or_else(|| Error::validation("thermo: section is required"))?;
                if !(t.sigma_spacings > 0.0) {
                    return Err(Error::validation("thermo.sigma_spacings must be positive"));
                }
                if !(t.step > 0.0) {
                    return Err(Error::validation("thermo.step must be positive"));
                }
            }
            ScenarioKind::Kubo => {
                let k = self.kubo.as_ref().ok_or_else(|| Error::validation("kubo: section is required"))?;
                if let Some(eta) = k.eta {
                    if !(eta > 0.0) {
                        return Err(Error::validation("kubo.eta must be positive"));
                    }
                }
            }
            ScenarioKind::EntropyAudit => {
                if self.seed.is_none() {
                    return Err(Error::validation("seed is required for entropy_audit"));
                }
            }
        }
        Ok(())
    }

    /// Canonical JSON text used for hashing and echoing.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration serializes")
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            kind: ScenarioKind::SternGerlach,
            mode: RunMode::Branching,
            seed: None,
            dt: default_dt(),
            duration: default_duration(),
            sample_every: default_sample_every(),
            tolerances: None,
            stern_gerlach: Some(SternGerlachSpec::default()),
            custom: None,
            thermo: None,
            kubo: None,
            entropy_audit: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_stern_gerlach() {
        let out = parse_config(r#"{"kind": "stern_gerlach"}"#, true).unwrap();
        assert_eq!(out.config.dt, default_dt());
        assert_eq!(out.config.mode, RunMode::Branching);
        assert!(out.unknown_keys.is_empty());
    }

    #[test]
    fn negative_dt_names_field() {
        let err = parse_config(r#"{"kind": "stern_gerlach", "dt": -0.1}"#, true).unwrap_err();
        assert!(matches!(&err, Error::Validation(m) if m.contains("dt")));
    }

    #[test]
    fn malformed_json_has_position() {
        let err = parse_config("{\n  \"kind\": \"stern_gerlach\",\n  \"dt\": ,\n}", true).unwrap_err();
        match err {
            Error::Parse { line, column, .. } => {
                assert_eq!(line, 3);
                assert!(column > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_strict_and_lenient() {
        let text = r#"{"kind": "stern_gerlach", "colour": 1, "stern_gerlach": {"mass": 2.0, "spin": 3}}"#;
        let err = parse_config(text, true).unwrap_err();
        assert!(err.to_string().contains("colour"));
        let out = parse_config(text, false).unwrap();
        assert_eq!(out.unknown_keys, vec!["colour".to_string(), "stern_gerlach.spin".to_string()]);
        assert_eq!(out.config.stern_gerlach.unwrap().mass, 2.0);
    }

    #[test]
    fn round_trip() {
        let text = r#"{
            "kind": "custom_family", "mode": "mean_force", "seed": 7, "dt": 0.01, "duration": 2.0,
            "custom": {
                "family": {"coords": 1, "terms": [
                    {"matrix": {"re": [[0, 0.5], [0.5, 0]]}, "powers": [0]},
                    {"matrix": {"re": [[1, 0], [0, -1]]}, "powers": [1]}
                ]},
                "x0": [-2.0], "v0": [1.0],
                "initial": {"amplitudes": [[1, 0], [0, 0]]},
                "projections": [{"step": 10}]
            }
        }"#;
        let cfg = parse_config(text, true).unwrap().config;
        let again = parse_config(&cfg.canonical_json(), true).unwrap().config;
        assert_eq!(cfg, again);
    }

    #[test]
    fn sampled_mode_requires_seed() {
        assert!(parse_config(r#"{"kind": "stern_gerlach", "mode": "sampled"}"#, true).is_err());
        assert!(parse_config(r#"{"kind": "stern_gerlach", "mode": "sampled", "seed": 1}"#, true).is_ok());
    }

    #[test]
    fn non_hermitian_family_rejected() {
        let text = r#"{"kind": "custom_family", "custom": {
            "family": {"coords": 1, "terms": [{"matrix": {"re": [[0, 1], [0, 0]]}, "powers": [1]}]},
            "x0": [0.0], "v0": [0.0], "initial": {"populations": [1, 0]}}}"#;
        assert!(matches!(parse_config(text, true), Err(Error::Validation(_))));
    }
}
