use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analytic::{GameParams, TimeGrid};
use crate::error::{Error, Result};
use crate::learner::LearnerConfig;

/// How `J(R̂, m)` is evaluated for the relative error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Evaluator {
    /// Monte Carlo with common random numbers for candidate and reference.
    #[default]
    MonteCarlo,
    /// Exact expectation of the Euler scheme (noise free).
    Exact,
}

/// Everything needed to rerun a sweep. `game.lambda_se` is replaced by each
/// entry of `lambda_se_values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub game: GameParams,
    /// Simulation step `δ`; `T/δ` must be a whole number.
    pub dt: f64,
    pub learner: LearnerConfig,
    pub lambda_se_values: Vec<f64>,
    pub n_eval_paths: usize,
    #[serde(default)]
    pub evaluator: Evaluator,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    /// The reference experiment: `T = 0.1, δ = 0.02`, the reference model,
    /// `K = 10, I = 400, n = 50, r = 0.01, η = 0.05`, `λ_SE ∈ {0, 1, 3}`.
    fn default() -> Self {
        ExperimentConfig {
            game: GameParams::reference(1.0),
            dt: 0.02,
            learner: LearnerConfig::default(),
            lambda_se_values: vec![0.0, 1.0, 3.0],
            n_eval_paths: 10_000,
            evaluator: Evaluator::MonteCarlo,
            output_dir: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::from_step(self.game.horizon, self.dt)
    }

    pub fn validate(&self) -> Result<()> {
        self.game.validate()?;
        self.grid()?;
        self.learner.validate()?;
        if self.lambda_se_values.is_empty() {
            return Err(Error::config(
                "lambda_se_values",
                "need at least one temperature",
            ));
        }
        if let Some(v) = self
            .lambda_se_values
            .iter()
            .find(|v| !(v.is_finite() && **v >= 0.0))
        {
            return Err(Error::config(
                "lambda_se_values",
                format!("temperatures must be finite and >= 0, got {v}"),
            ));
        }
        if self.evaluator == Evaluator::MonteCarlo && self.n_eval_paths < 2 {
            return Err(Error::config("n_eval_paths", "need at least 2 paths"));
        }
        Ok(())
    }

    /// Parses and validates.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_value(value)
    }

    fn from_value(value: Value) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(schema_error)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Applies `key=value` overrides in order, e.g. `learner.step_size=0.1`.
    /// Values are read as JSON where possible and as bare strings otherwise.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        let mut value = serde_json::to_value(self)?;
        for raw in overrides {
            let (key, v) = parse_override(raw.as_ref())?;
            set_dotted(&mut value, &key, v)?;
        }
        Self::from_value(value)
    }
}

/// Splits `a.b.c=value`.
pub fn parse_override(raw: &str) -> Result<(String, Value)> {
    let (key, val) = raw
        .split_once('=')
        .ok_or_else(|| Error::config(raw, "override must look like key=value"))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(Error::config(key, "malformed dotted key"));
    }
    let val = val.trim();
    let parsed = serde_json::from_str(val).unwrap_or_else(|_| Value::String(val.to_string()));
    Ok((key.to_string(), parsed))
}

fn set_dotted(root: &mut Value, key: &str, new: Value) -> Result<()> {
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (depth, part) in parts.iter().enumerate() {
        let here = parts[..=depth].join(".");
        let map = match node {
            Value::Object(map) => map,
            _ => return Err(Error::config(here, "is not a section")),
        };
        if depth + 1 == parts.len() {
            let known = map.contains_key(*part) || optional_key(&parts[..depth], part);
            if !known {
                return Err(Error::config(here, "unknown configuration key"));
            }
            map.insert(part.to_string(), new);
            return Ok(());
        }
        node = map
            .get_mut(*part)
            .ok_or_else(|| Error::config(here, "unknown configuration section"))?;
    }
    unreachable!("dotted key has at least one part")
}

/// Keys that may be absent from a serialized config.
fn optional_key(section: &[&str], key: &str) -> bool {
    matches!(
        (section, key),
        ([], "output_dir") | (["learner", "init"], "sigma2_means")
    )
}

/// Maps serde's "missing field `X`" / "unknown field `X`" to a config error
/// naming `X`.
fn schema_error(e: serde_json::Error) -> Error {
    let msg = e.to_string();
    for prefix in ["missing field `", "unknown field `"] {
        if let Some(rest) = msg.strip_prefix(prefix) {
            if let Some(end) = rest.find('`') {
                return Error::config(&rest[..end], msg.clone());
            }
        }
    }
    Error::Json(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips() {
        let cfg = ExperimentConfig::default();
        assert_eq!(
            ExperimentConfig::from_json_str(&cfg.to_json()).unwrap(),
            cfg
        );
    }

    #[test]
    fn missing_field_is_named() {
        let mut v = serde_json::to_value(ExperimentConfig::default()).unwrap();
        v["game"].as_object_mut().unwrap().remove("A");
        match ExperimentConfig::from_json_str(&v.to_string()) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "A"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn overrides_are_typed_and_checked() {
        let cfg = ExperimentConfig::default();
        let out = cfg
            .with_overrides(&[
                "learner.step_size=0.1",
                "lambda_se_values=[3]",
                "learner.estimator=two_point",
            ])
            .unwrap();
        assert_eq!(out.learner.step_size, 0.1);
        assert_eq!(out.lambda_se_values, vec![3.0]);
        assert!(matches!(
            cfg.with_overrides(&["learner.stepsize=0.1"]),
            Err(Error::Config { field, .. }) if field == "learner.stepsize"
        ));
        assert!(cfg.with_overrides(&["learner.step_size=fast"]).is_err());
        assert!(cfg.with_overrides(&["dt=0.03"]).is_err());
        assert!(cfg.with_overrides(&["seed"]).is_err());
        assert_eq!(
            cfg.with_overrides(&["output_dir=out"]).unwrap().output_dir,
            Some(PathBuf::from("out"))
        );
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let cfg = ExperimentConfig {
            lambda_se_values: vec![],
            ..ExperimentConfig::default()
        };
        assert!(
            matches!(cfg.validate(), Err(Error::Config { field, .. }) if field == "lambda_se_values")
        );
    }
}
