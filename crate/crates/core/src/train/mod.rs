//! Classification heads on the `<mask0>` embedding, the joint loss, and the
//! linear-probe and finetune training loops.

mod head;
mod loss;
mod metrics;
mod optim;
mod trainer;

pub use head::{export_heads, import_heads_bytes, load_heads, save_heads, ClassificationHead, Heads};
pub use loss::{cross_entropy, loss, LossParts, LossWeights};
pub use metrics::{accuracy, macro_f1, mean_std, Metric};
pub use optim::{AdamW, AdamWConfig};
pub use trainer::{
    evaluate, instance_gradients, instance_loss, predict, readout_embeddings, train, write_trace, Logits, MetricRecord,
    Scores, TrainOutcome,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    /// Encoder and heads are updated.
    Finetune,
    /// Only the heads are updated; the encoder stays frozen.
    #[serde(alias = "probe")]
    LinearProbe,
}

impl std::str::FromStr for TrainMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "finetune" | "ft" => Ok(Self::Finetune),
            "probe" | "linear_probe" | "linear-probe" | "lp" => Ok(Self::LinearProbe),
            _ => Err(format!("unknown mode '{s}' (expected probe or finetune)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    /// Falls back to 1e-4 for finetuning and 5e-3 for probing.
    pub lr: Option<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a dev-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    pub optimizer: AdamWConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Finetune,
            lr: None,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
            loss_weights: LossWeights::default(),
            optimizer: AdamWConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_mode(mode: TrainMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr.unwrap_or(match self.mode {
            TrainMode::Finetune => 1e-4,
            TrainMode::LinearProbe => 5e-3,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let lr = self.learning_rate();
        if !(lr.is_finite() && lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs and patience must be at least 1".into(),
            ));
        }
        let o = &self.optimizer;
        if !(0.0..1.0).contains(&o.beta1) || !(0.0..1.0).contains(&o.beta2) || o.eps <= 0.0 || o.weight_decay < 0.0 {
            return Err(Error::Config(
                "optimizer needs betas in [0, 1), eps > 0, weight_decay >= 0".into(),
            ));
        }
        self.loss_weights.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_defaults() {
        assert_eq!(TrainConfig::for_mode(TrainMode::Finetune).learning_rate(), 1e-4);
        assert_eq!(TrainConfig::for_mode(TrainMode::LinearProbe).learning_rate(), 5e-3);
        let c = TrainConfig::default();
        assert_eq!((c.batch_size, c.max_epochs, c.patience), (32, 50, 5));
        assert_eq!(
            c.loss_weights,
            LossWeights {
                relation: 0.9,
                source: 0.1
            }
        );
    }

    #[test]
    fn config_json() {
        let c: TrainConfig = serde_json::from_str(r#"{"mode": "probe", "seed": 4}"#).unwrap();
        assert_eq!(c.mode, TrainMode::LinearProbe);
        assert_eq!(c.seed, 4);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3}"#).is_err());
    }

    #[test]
    fn invalid_configs() {
        let bad = TrainConfig {
            patience: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            lr: Some(-1.0),
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
