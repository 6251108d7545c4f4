use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::aggregation::{AggregatorConfig, AsleepPolicy, Rule, DEFAULT_ALPHA};
use crate::distributions::{GridDomain, ParametricDistribution, DEFAULT_GRID};
use crate::error::{Error, Result};
use crate::synthetic::{Method, MixtureScenario, DEFAULT_HORIZON, DEFAULT_SEGMENTS};

/// Version stamped into every JSON summary.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Synth,
    Aggregate,
}

/// Scenario options for synthetic runs. Missing components use the defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub method: Method,
    pub horizon: usize,
    pub segments: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<[ParametricDistribution; 3]>,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            method: Method::Method1,
            horizon: DEFAULT_HORIZON,
            segments: DEFAULT_SEGMENTS,
            components: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub domain: GridDomain,
    pub rule: Rule,
    pub alpha: f64,
    pub confidence: bool,
    #[serde(default)]
    pub lenient: bool,
    #[serde(default)]
    pub asleep_policy: AsleepPolicy,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub input: Option<PathBuf>,
    pub out: PathBuf,
    /// Rounds whose learner CDF is exported to `cdf_snapshots.csv`.
    #[serde(default)]
    pub snapshots: Vec<u64>,
}

impl RunConfig {
    pub fn new(mode: Mode, out: PathBuf) -> Self {
        Self {
            mode,
            domain: GridDomain::unit(DEFAULT_GRID).expect("default domain"),
            rule: Rule::Aa,
            alpha: DEFAULT_ALPHA,
            confidence: false,
            lenient: false,
            asleep_policy: AsleepPolicy::default(),
            seed: None,
            scenario: None,
            input: None,
            out,
            snapshots: Vec::new(),
        }
    }

    /// Overlay a JSON document on top of this config (file values win).
    pub fn merge_json(&self, overrides: &Value) -> Result<Self> {
        let mut base =
            serde_json::to_value(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        merge(&mut base, overrides);
        serde_json::from_value(base).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn merge_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        self.merge_json(&value)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        match self.mode {
            Mode::Synth => {
                if self.seed.is_none() {
                    return Err(Error::InvalidConfig(
                        "synthetic runs need an explicit --seed".into(),
                    ));
                }
                self.scenario()?.validate(&self.domain)?;
            }
            Mode::Aggregate => {
                if self.input.is_none() {
                    return Err(Error::InvalidConfig("aggregate needs --input".into()));
                }
            }
        }
        Ok(())
    }

    pub fn scenario(&self) -> Result<MixtureScenario> {
        let spec = self.scenario.clone().unwrap_or_default();
        let seed = self
            .seed
            .ok_or_else(|| Error::InvalidConfig("missing seed".into()))?;
        Ok(MixtureScenario {
            components: spec
                .components
                .unwrap_or_else(|| MixtureScenario::default_components(&self.domain)),
            horizon: spec.horizon,
            segments: spec.segments,
            method: spec.method,
            seed,
        })
    }

    pub fn aggregator(&self, rule: Rule, experts: usize) -> Result<AggregatorConfig> {
        Ok(AggregatorConfig::new(rule, self.domain, experts)?
            .with_alpha(self.alpha)?
            .with_confidence(self.confidence)
            .with_asleep_policy(self.asleep_policy))
    }
}

fn merge(base: &mut Value, overrides: &Value) {
    match (base, overrides) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}
