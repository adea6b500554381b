//! Experiment configuration: strict JSON parsing, defaults, range checks and
//! the provenance hash.

use std::collections::BTreeSet;
use std::fmt;

use serde::de::{self, Deserializer, MapAccess, SeqAccess, Visitor};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

pub const DEFAULT_SWEEP: [f64; 8] = [0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 100.0];
pub const DESK_SAMPLES: usize = 5_000;
pub const DESK_EVAL: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("invalid values:\n  {}", .0.join("\n  "))]
    Range(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    Dubins(DubinsConfig),
    ScalarLqg(ScalarLqgConfig),
    DoubleIntegrator(DoubleIntegratorConfig),
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self::Dubins(DubinsConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DubinsConfig {
    pub speed: f64,
    pub dt: f64,
    pub horizon: usize,
    pub sigma_w: f64,
    pub heading_weight: f64,
    pub control_weight: f64,
    pub aspect: f64,
}

impl Default for DubinsConfig {
    fn default() -> Self {
        let p = trfe_core::systems::DubinsParams::<f64>::default();
        Self {
            speed: p.speed,
            dt: p.dt,
            horizon: p.horizon,
            sigma_w: p.sigma_w,
            heading_weight: p.heading_weight,
            control_weight: p.control_weight,
            aspect: p.aspect,
        }
    }
}

/// `x⁺ = a x + b(u + w)`, `y = x + v`, stage cost `q x² + ½ r u²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalarLqgConfig {
    pub a: f64,
    pub b: f64,
    pub q: f64,
    pub r: f64,
    pub sigma_w: f64,
    pub x0_var: f64,
    pub horizon: usize,
}

impl Default for ScalarLqgConfig {
    fn default() -> Self {
        Self {
            a: 1.0,
            b: 1.0,
            q: 1.0,
            r: 1.0,
            sigma_w: 0.1,
            x0_var: 0.01,
            horizon: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoubleIntegratorConfig {
    pub dt: f64,
    pub q_vel: f64,
    pub r: f64,
    pub sigma_w: f64,
    pub x0_mean: [f64; 2],
    pub x0_var: f64,
    pub horizon: usize,
}

impl Default for DoubleIntegratorConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            q_vel: 0.1,
            r: 1.0,
            sigma_w: 0.3,
            x0_mean: [1.0, 0.0],
            x0_var: 0.01,
            horizon: 30,
        }
    }
}

impl SystemConfig {
    pub fn horizon(&self) -> usize {
        match self {
            Self::Dubins(c) => c.horizon,
            Self::ScalarLqg(c) => c.horizon,
            Self::DoubleIntegrator(c) => c.horizon,
        }
    }

    fn keys(name: &str) -> Option<&'static [&'static str]> {
        match name {
            "dubins" => Some(&["name", "speed", "dt", "horizon", "sigma_w", "heading_weight", "control_weight", "aspect"]),
            "scalar_lqg" => Some(&["name", "a", "b", "q", "r", "sigma_w", "x0_var", "horizon"]),
            "double_integrator" => Some(&["name", "dt", "q_vel", "r", "sigma_w", "x0_mean", "x0_var", "horizon"]),
            _ => None,
        }
    }

    fn check(&self, errs: &mut Vec<String>) {
        let mut positive = |name: &str, v: f64| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("system.{name} must be positive and finite, got {v}"));
            }
        };
        match self {
            Self::Dubins(c) => {
                for (n, v) in [
                    ("speed", c.speed),
                    ("dt", c.dt),
                    ("sigma_w", c.sigma_w),
                    ("heading_weight", c.heading_weight),
                    ("control_weight", c.control_weight),
                    ("aspect", c.aspect),
                ] {
                    positive(n, v);
                }
            }
            Self::ScalarLqg(c) => {
                for (n, v) in [("b", c.b), ("q", c.q), ("r", c.r), ("sigma_w", c.sigma_w), ("x0_var", c.x0_var)] {
                    positive(n, v);
                }
                if !c.a.is_finite() {
                    errs.push(format!("system.a must be finite, got {}", c.a));
                }
            }
            Self::DoubleIntegrator(c) => {
                for (n, v) in [("dt", c.dt), ("q_vel", c.q_vel), ("r", c.r), ("sigma_w", c.sigma_w), ("x0_var", c.x0_var)] {
                    positive(n, v);
                }
                if c.x0_mean.iter().any(|v| !v.is_finite()) {
                    errs.push("system.x0_mean must be finite".into());
                }
            }
        }
        if self.horizon() == 0 {
            errs.push("system.horizon must be positive".into());
        }
    }
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    /// Monte Carlo rollouts in the frozen bank.
    pub n_samples: usize,
    /// Points on the log-spaced inverse-temperature grid.
    pub n_betas: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Hessian samples for the semiconvexity estimate.
    pub n_alpha: usize,
    /// Sensor noise standard deviations to sweep.
    pub sigma_v: Vec<f64>,
    /// Bisection tolerance; `null` selects `10⁻⁴·max(J_ol, 1)`.
    pub epsilon: Option<f64>,
    pub seed: u64,
    /// Episodes for the simulated LQG baseline.
    pub n_eval: usize,
    /// Cap the inverse-temperature grid at the convexity ceiling.
    pub certify: bool,
    pub output_dir: Option<String>,
    /// Desk-scale profile, also set by the `--desk-scale` flag.
    pub desk_scale: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            n_samples: 50_000,
            n_betas: 60,
            beta_min: 1e-3,
            beta_max: 1e3,
            n_alpha: 256,
            sigma_v: DEFAULT_SWEEP.to_vec(),
            epsilon: None,
            seed: 0,
            n_eval: 2000,
            certify: true,
            output_dir: None,
            desk_scale: false,
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "system",
    "n_samples",
    "n_betas",
    "beta_min",
    "beta_max",
    "n_alpha",
    "sigma_v",
    "epsilon",
    "seed",
    "n_eval",
    "certify",
    "output_dir",
    "desk_scale",
];

impl ExperimentConfig {
    /// Every range violation, in field order.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        self.system.check(&mut errs);
        if self.n_samples < 2 {
            errs.push(format!("n_samples must be at least 2, got {}", self.n_samples));
        }
        if self.n_betas == 0 {
            errs.push("n_betas must be positive".into());
        }
        if !(self.beta_min > 0.0 && self.beta_min.is_finite()) {
            errs.push(format!("beta_min must be positive and finite, got {}", self.beta_min));
        }
        if !(self.beta_max.is_finite() && self.beta_max >= self.beta_min) {
            errs.push(format!("beta_max must be finite and at least beta_min, got {}", self.beta_max));
        }
        if self.n_alpha == 0 {
            errs.push("n_alpha must be positive".into());
        }
        if self.sigma_v.is_empty() {
            errs.push("sigma_v must list at least one value".into());
        }
        for (k, &s) in self.sigma_v.iter().enumerate() {
            if !(s > 0.0 && s.is_finite()) {
                errs.push(format!("sigma_v[{k}] must be positive and finite, got {s}"));
            }
        }
        let mut seen = BTreeSet::new();
        for &s in &self.sigma_v {
            if !seen.insert(s.to_bits()) {
                errs.push(format!("sigma_v lists {s} twice"));
            }
        }
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e.is_finite()) {
                errs.push(format!("epsilon must be positive, got {e}"));
            }
        }
        if self.n_eval == 0 {
            errs.push("n_eval must be positive".into());
        }
        errs
    }

    /// Applies the desk-scale profile.
    pub fn desk(mut self) -> Self {
        self.desk_scale = true;
        self.n_samples = self.n_samples.min(DESK_SAMPLES);
        self.n_eval = self.n_eval.min(DESK_EVAL);
        self
    }

    /// SHA-256 of the resolved configuration, excluding the sweep values and
    /// the output directory, so a sweep can be extended in place.
    pub fn hash(&self) -> String {
        let mut keyed = self.clone();
        keyed.sigma_v.clear();
        keyed.output_dir = None;
        let text = serde_json::to_string(&keyed).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_pretty_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Parses and validates a JSON config. An empty or all-whitespace document
/// resolves to the defaults.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigError> {
    if raw.trim().is_empty() {
        return Ok(ExperimentConfig::default());
    }
    let StrictValue(mut value) = serde_json::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| ConfigError::Parse("top level must be a JSON object".into()))?;
    let mut unknown: Vec<String> = obj.keys().filter(|k| !TOP_KEYS.contains(&k.as_str())).cloned().collect();
    if let Some(sys) = obj.get_mut("system") {
        let sys = sys
            .as_object_mut()
            .ok_or_else(|| ConfigError::Parse("system must be an object".into()))?;
        let name = match sys.get("name") {
            None => {
                sys.insert("name".into(), Value::String("dubins".into()));
                "dubins".to_string()
            }
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(ConfigError::Parse(format!("system.name must be a string, got {other}"))),
        };
        let keys = SystemConfig::keys(&name).ok_or_else(|| {
            ConfigError::Parse(format!(
                "unknown system {name:?}; expected one of dubins, scalar_lqg, double_integrator"
            ))
        })?;
        unknown.extend(sys.keys().filter(|k| !keys.contains(&k.as_str())).map(|k| format!("system.{k}")));
    }
    if !unknown.is_empty() {
        return Err(ConfigError::UnknownKeys(unknown));
    }
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let errs = cfg.violations();
    if errs.is_empty() {
        Ok(if cfg.desk_scale { cfg.desk() } else { cfg })
    } else {
        Err(ConfigError::Range(errs))
    }
}

/// A JSON value whose objects are rejected if any key repeats.
struct StrictValue(Value);

impl<'de> Deserialize<'de> for StrictValue {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        d.deserialize_any(StrictVisitor).map(StrictValue)
    }
}

struct StrictVisitor;

impl<'de> Visitor<'de> for StrictVisitor {
    type Value = Value;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a JSON value")
    }

    fn visit_bool<E>(self, v: bool) -> Result<Value, E> {
        Ok(Value::Bool(v))
    }
    fn visit_i64<E>(self, v: i64) -> Result<Value, E> {
        Ok(Value::from(v))
    }
    fn visit_u64<E>(self, v: u64) -> Result<Value, E> {
        Ok(Value::from(v))
    }
    fn visit_f64<E>(self, v: f64) -> Result<Value, E> {
        Ok(Value::from(v))
    }
    fn visit_str<E>(self, v: &str) -> Result<Value, E> {
        Ok(Value::String(v.to_owned()))
    }
    fn visit_string<E>(self, v: String) -> Result<Value, E> {
        Ok(Value::String(v))
    }
    fn visit_unit<E>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }
    fn visit_none<E>(self) -> Result<Value, E> {
        Ok(Value::Null)
    }
    fn visit_some<D: Deserializer<'de>>(self, d: D) -> Result<Value, D::Error> {
        StrictValue::deserialize(d).map(|v| v.0)
    }

    fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Value, A::Error> {
        let mut out = Vec::new();
        while let Some(StrictValue(v)) = seq.next_element()? {
            out.push(v);
        }
        Ok(Value::Array(out))
    }

    fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<Value, A::Error> {
        let mut out = Map::new();
        while let Some(key) = map.next_key::<String>()? {
            if out.contains_key(&key) {
                return Err(de::Error::custom(format!("duplicate key {key:?}")));
            }
            let StrictValue(v) = map.next_value()?;
            out.insert(key, v);
        }
        Ok(Value::Object(out))
    }
}

/// Parses `raw`, then applies the command-line flags and a `TRFE_SEED` value.
pub fn resolve(raw: &str, desk_scale: bool, no_certify: bool, env_seed: Option<&str>) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = validate_config(raw)?;
    if let Some(s) = env_seed {
        cfg.seed = s
            .trim()
            .parse()
            .map_err(|_| ConfigError::Range(vec![format!("TRFE_SEED must be an unsigned integer, got {s:?}")]))?;
    }
    if no_certify {
        cfg.certify = false;
    }
    Ok(if desk_scale { cfg.desk() } else { cfg })
}
