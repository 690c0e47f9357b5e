//! Bidirectional transformer encoder with per-head relative-position biases.
//!
//! Each layer is pre-norm (scale-only RMS norm) self-attention followed by a
//! pre-norm feed-forward block, both residual. Attention logits get
//! `B_P[h][i][j] = table[bucket(P[i][j])][h]` plus the additive mask; one
//! bias table serves every layer.

mod backward;
mod checkpoint;
mod config;
mod forward;
mod params;

pub use backward::backward;
pub use checkpoint::{export_weights, import_weights, import_weights_bytes, save_weights};
pub use config::{Activation, EncoderConfig};
pub use forward::{attention, encode, encode_compiled, sequence_encode, CompiledPlan, ForwardCache};
pub use params::{FeedForward, LayerParams, ParameterSet};

pub(crate) use forward::forward;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point element type of parameters and activations.
pub trait Scalar: NdFloat + FromPrimitive {}

impl<T: NdFloat + FromPrimitive> Scalar for T {}

/// Forward pass that keeps activations for [`backward`].
pub fn encode_for_training<T: Scalar>(
    tokens: &[crate::tokenizer::TokenId],
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
    dropout_rng: Option<&mut dyn rand::RngCore>,
) -> crate::Result<(ndarray::Array2<T>, ForwardCache<T>)> {
    let (out, cache) = forward(tokens, plan, params, config, true, dropout_rng)?;
    Ok((out, cache.expect("cache requested")))
}
