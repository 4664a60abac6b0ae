//! TOML run configuration: parsing, validation, defaults and presets.

use std::path::PathBuf;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::experiments::{MonteCarloConfig, ReferenceRule, PAPER_PATHS};
use crate::model::{
    make_builtin, Assumption, BuiltinModel, ModelDescriptor, ModelError, UserModel,
};
use crate::theta::SolverOptions;

/// Step grid of the desk-scale convergence runs.
pub const DESK_DELTA_GRID: [f64; 5] = [2e-2, 1e-2, 4e-3, 2e-3, 1e-3];
/// Fine-grid reference step at desk and full scale.
pub const DESK_REFERENCE_DELTA: f64 = 1e-4;
pub const PAPER_REFERENCE_DELTA: f64 = 1e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("{key}: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Offending key, when known.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Parse(_) => None,
            ConfigError::Invalid { key, .. } => Some(key),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Path,
    Ml,
    Moments,
    Convergence,
    Stability,
    Validate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Path => "path",
            Command::Ml => "ml",
            Command::Moments => "moments",
            Command::Convergence => "convergence",
            Command::Stability => "stability",
            Command::Validate => "validate",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Preset {
    #[default]
    Desk,
    Paper,
}

/// A catalog model or user expressions (`kind = "user"`).
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Builtin(BuiltinModel),
    User(UserModel),
}

impl ModelSpec {
    pub fn build(&self) -> Result<ModelDescriptor, ModelError> {
        match self {
            ModelSpec::Builtin(b) => make_builtin(b),
            ModelSpec::User(u) => u.build(),
        }
    }
}

impl Serialize for ModelSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Tagged<'a> {
            kind: &'static str,
            #[serde(flatten)]
            model: &'a UserModel,
        }
        match self {
            ModelSpec::Builtin(b) => b.serialize(s),
            ModelSpec::User(u) => Tagged {
                kind: "user",
                model: u,
            }
            .serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for ModelSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(d)?;
        match table.get("kind").and_then(|k| k.as_str()) {
            Some("user") => {
                table.remove("kind");
                UserModel::deserialize(toml::Value::Table(table))
                    .map(ModelSpec::User)
                    .map_err(D::Error::custom)
            }
            Some(_) => BuiltinModel::deserialize(toml::Value::Table(table))
                .map(ModelSpec::Builtin)
                .map_err(D::Error::custom),
            None => Err(D::Error::custom("model needs a string `kind`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySweep {
    pub thetas: Vec<f64>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MomentSpec {
    pub p: Vec<u32>,
    pub t: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlSpec {
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSpec {
    /// Empty means every assumption the model declares constants for.
    #[serde(default)]
    pub assumptions: Vec<Assumption>,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    #[serde(default = "default_n_x")]
    pub n_x: usize,
}

impl Default for ValidateSpec {
    fn default() -> Self {
        Self {
            assumptions: Vec::new(),
            x_max: default_x_max(),
            n_t: default_n_t(),
            n_x: default_n_x(),
        }
    }
}

fn default_x_max() -> f64 {
    1e3
}

fn default_n_t() -> usize {
    21
}

fn default_n_x() -> usize {
    401
}

fn default_alpha() -> f64 {
    0.9
}

fn default_theta() -> f64 {
    1.0
}

fn default_horizon() -> f64 {
    1.0
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Fully validated description of one CLI run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_grid: Option<Vec<f64>>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub emit_svg: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub mc: MonteCarloConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySweep>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ml: Option<MlSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSpec>,
}

impl RunConfig {
    fn bare(command: Command) -> Self {
        Self {
            command,
            alpha: default_alpha(),
            theta: default_theta(),
            horizon: default_horizon(),
            delta: None,
            delta_grid: None,
            output_dir: default_output_dir(),
            emit_svg: false,
            model: None,
            mc: MonteCarloConfig::default(),
            solver: SolverOptions::default(),
            reference: None,
            stability: None,
            moments: None,
            ml: None,
            validate: None,
        }
    }

    /// Desk-scale configuration used when no file is given.
    pub fn default_for(command: Command) -> Self {
        let mut c = Self::bare(command);
        let bs = Some(ModelSpec::Builtin(BuiltinModel::black_scholes(0.02, 0.2)));
        match command {
            Command::Path | Command::Convergence | Command::Validate => c.model = bs,
            Command::Stability => {
                c.model = Some(ModelSpec::Builtin(BuiltinModel::StabilityLinear {
                    x0: 1.0,
                }));
                c.horizon = 50.0;
            }
            Command::Ml | Command::Moments => {}
        }
        c.fill_defaults();
        c
    }

    /// Fills command-specific fields left unset.
    fn fill_defaults(&mut self) {
        match self.command {
            Command::Path => {
                self.delta.get_or_insert(1e-4);
            }
            Command::Moments => {
                self.delta.get_or_insert(1e-3);
                self.moments.get_or_insert_with(|| MomentSpec {
                    p: vec![1, 2],
                    t: vec![0.5, 1.0],
                });
            }
            Command::Ml => {
                self.ml.get_or_insert_with(|| MlSpec {
                    z: vec![-2.0, -1.0, 0.0, 1.0],
                });
            }
            Command::Convergence => {
                let grid = self
                    .delta_grid
                    .get_or_insert_with(|| DESK_DELTA_GRID.to_vec());
                let finest = grid.iter().copied().fold(f64::INFINITY, f64::min);
                let exact = matches!(
                    self.model,
                    Some(ModelSpec::Builtin(BuiltinModel::BlackScholes { .. }))
                );
                if self.reference.is_none() && finest.is_finite() {
                    self.reference = Some(if exact {
                        ReferenceRule::ClosedForm {
                            clock_delta: finest / 10.0,
                        }
                    } else {
                        ReferenceRule::FineGrid {
                            delta0: DESK_REFERENCE_DELTA.min(finest),
                        }
                    });
                }
            }
            Command::Stability => {
                if self.stability.is_none() {
                    let (thetas, deltas) = match self.delta {
                        Some(d) => (vec![self.theta], vec![d]),
                        None => (vec![0.0, 0.25, 0.5, 1.0], vec![2.0, 1.0, 0.5]),
                    };
                    self.stability = Some(StabilitySweep { thetas, deltas });
                }
            }
            Command::Validate => {
                self.validate.get_or_insert_with(ValidateSpec::default);
            }
        }
    }

    /// Switches to the full-scale experiment sizes.
    pub fn apply_preset(&mut self, preset: Preset) {
        if preset == Preset::Desk {
            return;
        }
        self.mc.n_paths = self.mc.n_paths.max(PAPER_PATHS);
        if let Some(ReferenceRule::FineGrid { delta0 }) = &mut self.reference {
            *delta0 = delta0.min(PAPER_REFERENCE_DELTA);
        }
    }

    /// Rough single-thread cost in seconds, for the full-scale warning.
    pub fn estimated_seconds(&self) -> f64 {
        const SECONDS_PER_STEP: f64 = 1e-7;
        let n = self.mc.n_paths as f64;
        let clock_steps = |d: f64| self.horizon.powf(self.alpha) / d;
        let steps = match self.command {
            Command::Convergence => {
                let grid = self.delta_grid.as_deref().unwrap_or(&[]);
                let base = self.reference.map_or(1.0, |r| match r {
                    ReferenceRule::ClosedForm { clock_delta } => clock_delta,
                    ReferenceRule::FineGrid { delta0 } => delta0,
                });
                grid.iter().map(|&d| 10.0 * clock_steps(d)).sum::<f64>() + 12.0 * clock_steps(base)
            }
            Command::Stability => self.stability.as_ref().map_or(0.0, |s| {
                s.thetas.len() as f64
                    * s.deltas
                        .iter()
                        .map(|&d| 10.0 * self.horizon / d)
                        .sum::<f64>()
            }),
            Command::Moments => clock_steps(self.delta.unwrap_or(1.0)),
            Command::Path | Command::Ml | Command::Validate => 0.0,
        };
        n * steps * SECONDS_PER_STEP
    }

    /// Remarks attached to otherwise valid settings.
    pub fn notes(&self) -> Vec<String> {
        let mut thetas = vec![self.theta];
        if self.command == Command::Stability {
            if let Some(s) = &self.stability {
                thetas = s.thetas.clone();
            }
        }
        let mut notes = Vec::new();
        if matches!(
            self.command,
            Command::Stability | Command::Convergence | Command::Path
        ) {
            for t in thetas.into_iter().filter(|&t| t < 0.5) {
                notes.push(format!(
                    "theta = {t} is outside [0.5, 1], where step-size-free mean-square stability \
                     and the strong convergence order are proven"
                ));
            }
        }
        if self.command == Command::Stability {
            notes.push("stable flag uses |phi| < 1; the proof only rules out phi >= 1".into());
        }
        notes
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    key,
                    format!("expected a finite value > 0, got {v}"),
                ))
            }
        };
        let unit = |key: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(ConfigError::invalid(
                    key,
                    format!("expected a value in [0, 1], got {v}"),
                ))
            }
        };
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(ConfigError::invalid(
                "alpha",
                format!("expected a value in (0, 1], got {}", self.alpha),
            ));
        }
        unit("theta", self.theta)?;
        positive("horizon", self.horizon)?;
        if let Some(d) = self.delta {
            positive("delta", d)?;
            if matches!(self.command, Command::Path | Command::Moments) && d >= 1.0 {
                return Err(ConfigError::invalid(
                    "delta",
                    format!("expected a value in (0, 1), got {d}"),
                ));
            }
        }
        if let Some(grid) = &self.delta_grid {
            if grid.is_empty() {
                return Err(ConfigError::invalid(
                    "delta_grid",
                    "expected at least one step size",
                ));
            }
            for (i, &d) in grid.iter().enumerate() {
                positive(&format!("delta_grid[{i}]"), d)?;
            }
        }
        if self.mc.n_paths == 0 {
            return Err(ConfigError::invalid(
                "mc.n_paths",
                "expected an integer >= 1, got 0",
            ));
        }
        if self.mc.max_concurrency == Some(0) {
            return Err(ConfigError::invalid(
                "mc.max_concurrency",
                "expected an integer >= 1, got 0",
            ));
        }
        positive("solver.tol", self.solver.tol)?;
        if self.solver.max_iter == 0 {
            return Err(ConfigError::invalid(
                "solver.max_iter",
                "expected an integer >= 1, got 0",
            ));
        }
        match self.reference {
            Some(ReferenceRule::ClosedForm { clock_delta }) => {
                positive("reference.clock_delta", clock_delta)?
            }
            Some(ReferenceRule::FineGrid { delta0 }) => positive("reference.delta0", delta0)?,
            None => {}
        }
        if let Some(s) = &self.stability {
            if s.thetas.is_empty() || s.deltas.is_empty() {
                return Err(ConfigError::invalid(
                    "stability",
                    "thetas and deltas must be non-empty",
                ));
            }
            for (i, &t) in s.thetas.iter().enumerate() {
                unit(&format!("stability.thetas[{i}]"), t)?;
            }
            for (i, &d) in s.deltas.iter().enumerate() {
                positive(&format!("stability.deltas[{i}]"), d)?;
                if self.horizon / d < 1.0 {
                    return Err(ConfigError::invalid(
                        format!("stability.deltas[{i}]"),
                        format!("expected a step <= horizon {}, got {d}", self.horizon),
                    ));
                }
            }
        }
        if let Some(m) = &self.moments {
            if m.p.is_empty() || m.t.is_empty() {
                return Err(ConfigError::invalid("moments", "p and t must be non-empty"));
            }
            if let Some(i) = m.p.iter().position(|&p| p == 0) {
                return Err(ConfigError::invalid(
                    format!("moments.p[{i}]"),
                    "expected an integer >= 1, got 0",
                ));
            }
            for (i, &t) in m.t.iter().enumerate() {
                if !(t >= 0.0 && t.is_finite()) {
                    return Err(ConfigError::invalid(
                        format!("moments.t[{i}]"),
                        format!("expected a finite value >= 0, got {t}"),
                    ));
                }
            }
            if m.t.iter().all(|&t| t == 0.0) {
                return Err(ConfigError::invalid(
                    "moments.t",
                    "expected at least one positive time",
                ));
            }
        }
        if let Some(ml) = &self.ml {
            if let Some((i, z)) = ml.z.iter().enumerate().find(|(_, z)| !z.is_finite()) {
                return Err(ConfigError::invalid(
                    format!("ml.z[{i}]"),
                    format!("expected a finite value, got {z}"),
                ));
            }
        }
        if let Some(v) = &self.validate {
            positive("validate.x_max", v.x_max)?;
            if v.n_t < 2 || v.n_x < 2 || v.n_t * v.n_x < 1000 {
                return Err(ConfigError::invalid(
                    "validate",
                    format!(
                        "expected n_t, n_x >= 2 and n_t * n_x >= 1000, got {} x {}",
                        v.n_t, v.n_x
                    ),
                ));
            }
        }
        let needs_model = matches!(
            self.command,
            Command::Convergence | Command::Stability | Command::Validate
        );
        match &self.model {
            None if needs_model => {
                return Err(ConfigError::invalid(
                    "model",
                    format!("required by the {} command", self.command.name()),
                ))
            }
            Some(spec) => {
                spec.build().map_err(|e| match e {
                    ModelError::Expression { field, source } => {
                        ConfigError::invalid(format!("model.{field}"), source.to_string())
                    }
                    ModelError::InvalidParameter { name, reason } => {
                        ConfigError::invalid(format!("model.{name}"), reason)
                    }
                    other => ConfigError::invalid("model", other.to_string()),
                })?;
                if matches!(self.reference, Some(ReferenceRule::ClosedForm { .. }))
                    && !matches!(spec, ModelSpec::Builtin(BuiltinModel::BlackScholes { .. }))
                {
                    return Err(ConfigError::invalid(
                        "reference",
                        "closed_form needs a model with a closed-form solution",
                    ));
                }
            }
            None => {}
        }
        Ok(())
    }
}

/// Parses, fills command defaults and validates a TOML run configuration.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let mut config: RunConfig =
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    config.fill_defaults();
    config.validate()?;
    Ok(config)
}

/// Serializes a configuration back to TOML.
pub fn emit_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("run configurations always serialize")
}
