use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::position::BucketTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// `relu(x W_i) W_o`
    Plain,
    /// `(gelu(x W_i) * (x W_gate)) W_o`
    Gated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_head: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub num_distance_buckets: usize,
    pub max_distance: usize,
    /// Divide attention logits by `sqrt(d_head)`.
    pub attention_scaling: bool,
    pub activation: Activation,
    /// Scale-only RMS normalization after the last layer.
    pub final_norm: bool,
    pub norm_eps: f64,
    /// Dropout on the attention and feed-forward branches; training only.
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl EncoderConfig {
    /// Small enough to train on a CPU in seconds.
    pub fn desk() -> Self {
        Self {
            num_layers: 2,
            d_model: 64,
            num_heads: 4,
            d_head: 16,
            d_ff: 128,
            vocab_size: 1000,
            num_distance_buckets: 32,
            max_distance: 128,
            attention_scaling: true,
            activation: Activation::Plain,
            final_norm: true,
            norm_eps: 1e-6,
            dropout: 0.0,
        }
    }

    pub fn inner_dim(&self) -> usize {
        self.num_heads * self.d_head
    }

    pub fn bucket_table(&self) -> BucketTable {
        BucketTable::new(self.num_distance_buckets, self.max_distance)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_model", self.d_model),
            ("num_heads", self.num_heads),
            ("d_head", self.d_head),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_distance", self.max_distance),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.num_distance_buckets < 4 || !self.num_distance_buckets.is_multiple_of(2) {
            return Err(Error::Config("num_distance_buckets must be even and at least 4".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must be in [0, 1)".into()));
        }
        Ok(())
    }
}
