//! TOML run configuration.
//!
//! ```toml
//! schema_version = 1
//!
//! [data]
//! path = "claims.csv"
//! loss_column = "amountPaid"
//!
//! [[agents]]
//! label = "CA"
//! distortions = [{ family = "kahneman_tversky", gamma = 0.4 }]
//!
//! [[agents]]
//! label = "TX"
//! distortions = [{ family = "power", gamma = 0.4 }]
//!
//! [insurer]
//! alpha = 0.15
//!
//! [welfare]
//! weights = "equal"
//!
//! [sweep]
//! agent = "TX"
//! parameter = "gamma"
//! values = [0.3, 0.4, 0.5]
//! ```
//!
//! Relative paths are resolved against the directory holding the config.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::distortion::{validate, Distortion, DistortionSet, Family};
use crate::posolver::{RobustOptions, WeightRule, DEFAULT_PRODUCT_CAP};

pub const SCHEMA_VERSION: u32 = 1;

/// Invalid configuration; maps to exit code 4.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub data: DataSection,
    pub agents: Vec<AgentConfig>,
    pub insurer: Option<InsurerSection>,
    #[serde(default)]
    pub welfare: WelfareSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub sweep: Option<SweepSection>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub loss_column: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub label: String,
    /// Value of the agent column in the data; defaults to `label`.
    pub endowment_column: Option<String>,
    /// File of per-month probabilities; the uniform space when absent.
    pub weights_file: Option<PathBuf>,
    pub distortions: Vec<Family>,
}

impl AgentConfig {
    pub fn data_label(&self) -> &str {
        self.endowment_column.as_deref().unwrap_or(&self.label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InsurerSection {
    pub alpha: f64,
}

/// `"equal"`, `"last"` or an explicit list of shares.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(String),
    Shares(Vec<f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Named("equal".into())
    }
}

impl WeightSpec {
    pub fn rule(&self) -> Result<WeightRule, ConfigError> {
        match self {
            WeightSpec::Named(name) => match name.as_str() {
                "equal" => Ok(WeightRule::Equal),
                "last" | "all-to-last" => Ok(WeightRule::AllToLast),
                other => Err(ConfigError(format!("unknown weight rule {other:?}"))),
            },
            WeightSpec::Shares(s) => Ok(WeightRule::Shares(s.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WelfareSection {
    #[serde(default)]
    pub weights: WeightSpec,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default = "default_cap")]
    pub product_cap: u64,
    #[serde(default = "default_true")]
    pub coordinate_ascent: bool,
}

fn default_cap() -> u64 {
    DEFAULT_PRODUCT_CAP
}

fn default_true() -> bool {
    true
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection { product_cap: DEFAULT_PRODUCT_CAP, coordinate_ascent: true }
    }
}

impl SolverSection {
    pub fn options(&self) -> RobustOptions {
        RobustOptions { product_cap: self.product_cap, coordinate_ascent: self.coordinate_ascent }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub agent: String,
    pub parameter: String,
    pub values: Vec<f64>,
}

impl RunConfig {
    /// Parses and validates a config file, resolving relative paths against
    /// its directory.
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let mut config = RunConfig::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.path.as_mut() {
            fix(p);
        }
        if let Some(p) = self.output.dir.as_mut() {
            fix(p);
        }
        for a in &mut self.agents {
            if let Some(p) = a.weights_file.as_mut() {
                fix(p);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.agents.is_empty() {
            return Err(ConfigError("at least one agent is required".into()));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if self.agents[..i].iter().any(|b| b.label == a.label) {
                return Err(ConfigError(format!("duplicate agent label {:?}", a.label)));
            }
            self.distortion_set(i)?;
        }
        if let Some(ins) = self.insurer {
            if !(ins.alpha > 0.0 && ins.alpha < 1.0) {
                return Err(ConfigError(format!("insurer alpha {} outside (0, 1)", ins.alpha)));
            }
        }
        if let WeightRule::Shares(s) = self.welfare.weights.rule()? {
            check_shares(&s, self.agents.len())?;
        }
        if let Some(sweep) = &self.sweep {
            let idx = self
                .agent_index(&sweep.agent)
                .ok_or_else(|| ConfigError(format!("sweep agent {:?} not configured", sweep.agent)))?;
            if sweep.values.is_empty() {
                return Err(ConfigError("sweep needs at least one value".into()));
            }
            if self.agents[idx].distortions.len() != 1 {
                return Err(ConfigError("swept agent must have a single distortion".into()));
            }
            for v in &sweep.values {
                let family = with_parameter(&self.agents[idx].distortions[0], &sweep.parameter, *v)?;
                Distortion::new(family)
                    .map_err(|e| ConfigError(format!("sweep value {v}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn agent_index(&self, label: &str) -> Option<usize> {
        self.agents.iter().position(|a| a.label == label)
    }

    /// Validated candidate set of agent `i`.
    pub fn distortion_set(&self, i: usize) -> Result<DistortionSet, ConfigError> {
        let a = &self.agents[i];
        let mut ds = Vec::with_capacity(a.distortions.len());
        for f in &a.distortions {
            let report = validate(f);
            if !report.is_valid() {
                return Err(ConfigError(format!(
                    "agent {}: distortion {f} is invalid: {:?}",
                    a.label, report.violations
                )));
            }
            ds.push(Distortion::new(f.clone()).map_err(|e| ConfigError(format!("agent {}: {e}", a.label)))?);
        }
        DistortionSet::new(ds).map_err(|e| ConfigError(format!("agent {}: {e}", a.label)))
    }

    pub fn insurer_alpha(&self, flag: Option<f64>) -> Result<f64, ConfigError> {
        let alpha = flag
            .or(self.insurer.map(|i| i.alpha))
            .ok_or_else(|| ConfigError("no insurer alpha in config or --alpha".into()))?;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(ConfigError(format!("insurer alpha {alpha} outside (0, 1)")));
        }
        Ok(alpha)
    }
}

pub fn check_shares(shares: &[f64], agents: usize) -> Result<(), ConfigError> {
    if shares.len() != agents {
        return Err(ConfigError(format!("{} welfare shares for {agents} agents", shares.len())));
    }
    if shares.iter().any(|s| !s.is_finite() || *s < 0.0) || shares.iter().sum::<f64>() <= 0.0 {
        return Err(ConfigError("welfare shares must be non-negative with a positive sum".into()));
    }
    Ok(())
}

/// Copy of `family` with the named parameter replaced.
pub fn with_parameter(family: &Family, parameter: &str, value: f64) -> Result<Family, ConfigError> {
    let out = match (family, parameter) {
        (Family::Power { .. }, "gamma") => Family::Power { gamma: value },
        (Family::KahnemanTversky { .. }, "gamma") => Family::KahnemanTversky { gamma: value },
        (Family::Prelec1 { .. }, "alpha") => Family::Prelec1 { alpha: value },
        (Family::Prelec2 { beta, .. }, "alpha") => Family::Prelec2 { alpha: value, beta: *beta },
        (Family::Prelec2 { alpha, .. }, "beta") => Family::Prelec2 { alpha: *alpha, beta: value },
        (Family::Tvar { .. }, "alpha") => Family::Tvar { alpha: value },
        _ => {
            return Err(ConfigError(format!("{family} has no sweepable parameter {parameter:?}")))
        }
    };
    Ok(out)
}
