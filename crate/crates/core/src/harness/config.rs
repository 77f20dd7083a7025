//! TOML experiment configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::JansenRitParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// `ẋ = −p x + u`, `y = x`.
    ScalarLinear,
    JansenRit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSection {
    pub kind: PlantKind,
    pub p_true: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jansen_rit: Option<JansenRitParams>,
    /// Boundedness guard on `|x|∞`.
    #[serde(default = "default_guard")]
    pub guard: f64,
}

fn default_guard() -> f64 {
    1e6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Static,
    Dynamic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSection {
    pub mode: SamplingMode,
    pub m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub td: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorSection {
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_stride")]
    pub record_stride: usize,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputKind {
    Sine,
    PiecewiseUniform,
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub kind: InputKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// Angular frequency (rad/s) of the sine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObserverClass {
    Luenberger,
    CircleCriterion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSection {
    pub class: ObserverClass,
    pub xhat0: Vec<f64>,
    /// Real closed-loop eigenvalues for Luenberger design.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub targets: Vec<f64>,
    /// Certificate file, resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains_file: Option<String>,
    #[serde(default = "default_synthesis_budget")]
    pub synthesis_budget: usize,
}

fn default_synthesis_budget() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Also write per-observer output errors for `pe-check`.
    #[serde(default)]
    pub output_errors: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub plant: PlantSection,
    pub theta: ThetaSection,
    pub sampling: SamplingSection,
    pub monitor: MonitorSection,
    pub sim: SimSection,
    pub input: InputSection,
    pub observer: ObserverSection,
    #[serde(default)]
    pub output: OutputSection,
}

fn need<T: Copy>(v: Option<T>, key: &str) -> Result<T, ConfigError> {
    v.ok_or_else(|| ConfigError::Invalid(format!("{key} is required")))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        toml::to_string(self).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            ConfigError::Invalid(m) => ConfigError::Invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn n_p(&self) -> usize {
        match self.plant.kind {
            PlantKind::ScalarLinear => 1,
            PlantKind::JansenRit => 2,
        }
    }

    pub fn n_x(&self) -> usize {
        match self.plant.kind {
            PlantKind::ScalarLinear => 1,
            PlantKind::JansenRit => 6,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        let (n_p, n_x) = (self.n_p(), self.n_x());
        if self.plant.p_true.len() != n_p {
            return bad(format!("plant.p_true needs {n_p} entries"));
        }
        if self.plant.x0.len() != n_x {
            return bad(format!("plant.x0 needs {n_x} entries"));
        }
        if self.observer.xhat0.len() != n_x {
            return bad(format!("observer.xhat0 needs {n_x} entries"));
        }
        if !(self.plant.guard > 0.0) {
            return bad("plant.guard must be > 0".into());
        }
        if let Some(jr) = &self.plant.jansen_rit {
            jr.validate().map_err(|e| ConfigError::Invalid(format!("plant.jansen_rit: {e}")))?;
        }
        let th = &self.theta;
        if th.lower.len() != n_p || th.upper.len() != n_p {
            return bad(format!("theta.lower and theta.upper need {n_p} entries"));
        }
        if let Some(j) = (0..n_p).find(|&j| !(th.lower[j] < th.upper[j])) {
            return bad(format!("theta.lower[{j}] must be < theta.upper[{j}]"));
        }
        let s = &self.sampling;
        if s.m == 0 {
            return bad("sampling.m must be >= 1".into());
        }
        match s.mode {
            SamplingMode::Static => {
                if s.alpha.is_some() || s.td.is_some() {
                    return bad("sampling.alpha and sampling.td are only valid in dynamic mode".into());
                }
            }
            SamplingMode::Dynamic => {
                let alpha = need(s.alpha, "sampling.alpha (dynamic mode)")?;
                if !(alpha > 0.0 && alpha < 1.0) {
                    return bad(format!("sampling.alpha = {alpha} violates alpha in (0,1)"));
                }
                let td = need(s.td, "sampling.td (dynamic mode)")?;
                if !(td > 0.0) {
                    return bad(format!("sampling.td = {td} must be > 0"));
                }
            }
        }
        if !(self.monitor.lambda > 0.0) {
            return bad("monitor.lambda must be > 0".into());
        }
        if !(self.sim.dt > 0.0 && self.sim.t_final > self.sim.dt) {
            return bad("sim.dt must be > 0 and below sim.t_final".into());
        }
        if self.sim.record_stride == 0 {
            return bad("sim.record_stride must be >= 1".into());
        }
        let i = &self.input;
        match i.kind {
            InputKind::PiecewiseUniform => {
                let (lo, hi) = (need(i.low, "input.low")?, need(i.high, "input.high")?);
                if !(lo < hi) {
                    return bad("input.low must be < input.high".into());
                }
                if !(need(i.hold, "input.hold")? > 0.0) {
                    return bad("input.hold must be > 0".into());
                }
                need(i.seed, "input.seed")?;
            }
            InputKind::Sine => {
                need(i.amplitude, "input.amplitude")?;
                need(i.omega, "input.omega")?;
            }
            InputKind::Constant => {
                need(i.offset, "input.offset")?;
            }
        }
        match (self.observer.class, self.plant.kind) {
            (ObserverClass::Luenberger, PlantKind::ScalarLinear) => {
                if self.observer.targets.len() != n_x {
                    return bad(format!("observer.targets needs {n_x} entries"));
                }
                if self.observer.targets.iter().any(|t| !(*t < 0.0)) {
                    return bad("observer.targets must be negative".into());
                }
            }
            (ObserverClass::CircleCriterion, PlantKind::JansenRit) => {}
            (c, k) => return bad(format!("observer.class {c:?} does not fit plant.kind {k:?}")),
        }
        Ok(())
    }
}

/// Sweep for the table command: one base config run for every `m` in both
/// sampling modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Base experiment, resolved against the sweep file's directory.
    pub base: String,
    pub m_values: Vec<usize>,
    pub alpha: f64,
    pub td: f64,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        if s.m_values.is_empty() || s.m_values.contains(&0) {
            return Err(ConfigError::Invalid("m_values must be non-empty and >= 1".into()));
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return Err(ConfigError::Invalid(format!(
                "alpha = {} violates alpha in (0,1)",
                s.alpha
            )));
        }
        if !(s.td > 0.0) {
            return Err(ConfigError::Invalid("td must be > 0".into()));
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const SCALAR: &str = r#"
[plant]
kind = "scalar_linear"
p_true = [1.5]
x0 = [1.0]

[theta]
lower = [1.0]
upper = [2.0]

[sampling]
mode = "static"
m = 5

[monitor]
lambda = 0.1

[sim]
dt = 0.01
t_final = 50.0
record_stride = 10

[input]
kind = "sine"
amplitude = 1.0
omega = 1.0

[observer]
class = "luenberger"
xhat0 = [0.0]
targets = [-3.0]
"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ExperimentConfig::from_toml(SCALAR).unwrap();
        assert_eq!(c.sampling.m, 5);
        assert_eq!(c.plant.guard, 1e6);
        let again = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_alpha_outside_unit_interval() {
        let text = SCALAR
            .replace("mode = \"static\"", "mode = \"dynamic\"\nalpha = 1.2\ntd = 10.0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("alpha in (0,1)"), "{err}");
    }

    #[test]
    fn rejects_dynamic_keys_in_static_mode() {
        let text = SCALAR.replace("m = 5", "m = 5\nalpha = 0.5");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_theta() {
        let text = SCALAR.replace("lambda = 0.1", "lambda = 0.1\nlamda = 2.0");
        let err = ExperimentConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("lamda"), "{err}");
        let text = SCALAR.replace("upper = [2.0]", "upper = [0.5]");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
