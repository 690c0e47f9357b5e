//! The JSON config file. Every field is optional; flags override it and the
//! merged result is echoed into each run manifest.

use std::path::{Path, PathBuf};

use glmkit::data::{SamplerConfig, SynthConfig};
use glmkit::encoder::EncoderConfig;
use glmkit::features::{InputFormat, ModelVariant};
use glmkit::train::{Metric, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    /// Relation classification on knowledge-graph subgraphs.
    #[serde(rename = "cn")]
    Cn,
    #[serde(rename = "1hop")]
    OneHop,
    #[serde(rename = "2hop")]
    TwoHop,
    /// Synthetic text + graph relation and source classification.
    #[serde(rename = "joint")]
    Joint,
}

impl std::str::FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "cn" | "conceptnet" => Ok(Self::Cn),
            "1hop" => Ok(Self::OneHop),
            "2hop" => Ok(Self::TwoHop),
            "joint" => Ok(Self::Joint),
            _ => Err(format!("unknown task '{s}' (expected cn, 1hop, 2hop or joint)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub task: Task,
    /// Tab-separated knowledge graph for the `cn` task.
    pub kg: Option<PathBuf>,
    /// Relation count of the joint task.
    pub relations: usize,
    pub sampler: SamplerConfig,
    pub synth: SynthConfig,
    pub variant: ModelVariant,
    /// Close every input with the end-of-sequence token.
    pub append_eos: bool,
    /// Train the source head next to the relation head.
    pub joint: bool,
    pub seeds: usize,
    pub metric: Metric,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            task: Task::Cn,
            kg: None,
            relations: 4,
            sampler: SamplerConfig::default(),
            synth: SynthConfig::default(),
            variant: ModelVariant::Lglm,
            append_eos: false,
            joint: false,
            seeds: 1,
            metric: Metric::Accuracy,
            encoder: EncoderConfig::desk(),
            train: TrainConfig::default(),
        }
    }
}

impl Config {
    pub fn input_format(&self) -> InputFormat {
        InputFormat {
            variant: self.variant,
            append_eos: self.append_eos,
        }
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_config_keeps_defaults() {
        let c = Config::parse(r#"{"task": "2hop", "train": {"mode": "probe"}, "sampler": {"radius": 3}}"#).unwrap();
        assert_eq!(c.task, Task::TwoHop);
        assert_eq!(c.sampler.radius, 3);
        assert_eq!(c.sampler.per_entity, 2);
        assert_eq!(c.train.batch_size, 32);
    }

    #[test]
    fn unknown_field_reports_line() {
        let err = Config::parse("{\n  \"task\": \"cn\",\n  \"radius\": 2\n}").unwrap_err();
        assert_eq!(err.line(), 3);
        assert!(err.to_string().contains("radius"));
    }

    #[test]
    fn round_trip() {
        let c = Config::default();
        assert_eq!(Config::parse(&serde_json::to_string(&c).unwrap()).unwrap(), c);
    }
}
