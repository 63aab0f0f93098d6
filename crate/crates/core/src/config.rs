//! Pipeline configuration: defaults, overlaid by a TOML file, overlaid by
//! `section.key=value` overrides.

use crate::anomaly::AnomalyParams;
use crate::features::{IndividualParams, InteractionParams};
use crate::lanes::AssignmentParams;
use crate::scoring::{ExtrapolationParams, ScoreWeights};
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScoringParams {
    /// ε in the 1/(x + ε) orientation of time-like features.
    pub epsilon: f64,
    /// Loss weight = 1 + scale·score_ac.
    pub loss_weight_scale: f64,
}

impl Default for ScoringParams {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            loss_weight_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitParams {
    pub seed: u64,
    pub ood_fraction: f64,
    pub val_fraction_of_id: f64,
    /// train / val / test for the uniform split.
    pub uniform_ratios: [f64; 3],
}

impl Default for SplitParams {
    fn default() -> Self {
        Self {
            seed: 0,
            ood_fraction: 0.2,
            val_fraction_of_id: 0.2,
            uniform_ratios: [0.64, 0.16, 0.20],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PipelineConfig {
    pub assignment: AssignmentParams,
    pub individual: IndividualParams,
    pub interaction: InteractionParams,
    pub extrapolation: ExtrapolationParams,
    pub anomaly: AnomalyParams,
    pub scoring: ScoringParams,
    pub weights: ScoreWeights,
    pub split: SplitParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("override `{0}` must look like section.key=value")]
    BadOverride(String),
    #[error("invalid config value: {0}")]
    Invalid(String),
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), ConfigError> {
    let mut parts = key.split('.').peekable();
    let mut table = root;
    while let Some(part) = parts.next() {
        if parts.peek().is_none() {
            table.insert(part.to_string(), value);
            return Ok(());
        }
        table = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| ConfigError::BadOverride(key.to_string()))?;
    }
    Err(ConfigError::BadOverride(key.to_string()))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl PipelineConfig {
    /// Defaults < `file` < `overrides` (each `section.key=value`, value in
    /// TOML syntax; bare words are taken as strings).
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = match file {
            Some(path) => std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    /// As [`PipelineConfig::load`] with the file contents given directly.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut table = toml::Table::try_from(PipelineConfig::default()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        merge(&mut table, text.parse::<toml::Table>()?);
        for o in overrides {
            let (key, raw) = o.split_once('=').ok_or_else(|| ConfigError::BadOverride(o.clone()))?;
            let value = format!("v = {raw}")
                .parse::<toml::Table>()
                .ok()
                .and_then(|mut t| t.remove("v"))
                .unwrap_or_else(|| toml::Value::String(raw.to_string()));
            set_path(&mut table, key.trim(), value)?;
        }
        let cfg: PipelineConfig = table.try_into()?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<(), ConfigError> {
        let bad = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.assignment.sigma_d <= 0.0 || self.assignment.sigma_theta <= 0.0 {
            return bad("assignment sigmas must be positive");
        }
        if self.anomaly.resample_len < 2 {
            return bad("anomaly.resample_len must be at least 2");
        }
        if self.scoring.epsilon <= 0.0 {
            return bad("scoring.epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.split.ood_fraction) || !(0.0..=1.0).contains(&self.split.val_fraction_of_id) {
            return bad("split fractions must lie in [0, 1]");
        }
        self.weights.resolve().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn layering_order() {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        writeln!(f, "[interaction]\ngate_distance = 30.0\nreach_radius = 3.0\n[weights.individual]\nanomaly = 0.5").unwrap();
        let cfg = PipelineConfig::load(Some(f.path()), &["interaction.gate_distance=20".into()]).unwrap();
        assert_eq!(cfg.interaction.gate_distance, 20.0);
        assert_eq!(cfg.interaction.reach_radius, 3.0);
        assert_eq!(cfg.weights.individual["anomaly"], 0.5);
        assert_eq!(cfg.weights.individual["max_speed"], 1.0);
        assert_eq!(cfg.assignment, AssignmentParams::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = PipelineConfig::default();
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(PipelineConfig::load(None, &["scoring.epsilon=0".into()]).is_err());
        assert!(PipelineConfig::load(None, &["weights.interaction.min_ttc=-1".into()]).is_err());
        assert!(PipelineConfig::load(None, &["nonsense".into()]).is_err());
    }
}
