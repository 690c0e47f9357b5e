//! Weight import/export in the safetensors container.
//!
//! | tensor name                                                          | shape                 |
//! |----------------------------------------------------------------------|-----------------------|
//! | `shared.weight`                                                      | `vocab x d_model`     |
//! | `encoder.block.{l}.layer.0.layer_norm.weight`                        | `d_model`             |
//! | `encoder.block.{l}.layer.0.SelfAttention.{q,k,v}.weight`             | `inner x d_model`     |
//! | `encoder.block.{l}.layer.0.SelfAttention.o.weight`                   | `d_model x inner`     |
//! | `encoder.block.0.layer.0.SelfAttention.relative_attention_bias.weight` | `buckets x heads`   |
//! | `encoder.block.{l}.layer.1.layer_norm.weight`                        | `d_model`             |
//! | `encoder.block.{l}.layer.1.DenseReluDense.wi.weight` (plain)         | `d_ff x d_model`      |
//! | `encoder.block.{l}.layer.1.DenseReluDense.wi_0/wi_1.weight` (gated)  | `d_ff x d_model`      |
//! | `encoder.block.{l}.layer.1.DenseReluDense.wo.weight`                 | `d_model x d_ff`      |
//! | `encoder.final_layer_norm.weight`                                    | `d_model`             |
//!
//! Linear weights are stored `out x in`, as pretrained checkpoints of this
//! family are; in memory they are kept `in x out`. Files written here carry
//! the encoder config as JSON under the `glmkit.config` metadata key.
//! Files without it are treated as pretrained: the config is inferred from
//! shapes, attention scaling is turned off, and the bias table gains its
//! three sentinel rows.

use std::collections::HashMap;
use std::path::Path;

use ndarray::{Array1, Array2};
use safetensors::tensor::{Dtype, SafeTensors, TensorView};

use super::{Activation, EncoderConfig, FeedForward, LayerParams, ParameterSet};
use crate::error::{Error, Result};

const CONFIG_KEY: &str = "glmkit.config";
const BIAS_NAME: &str = "encoder.block.0.layer.0.SelfAttention.relative_attention_bias.weight";

fn is_linear(name: &str) -> bool {
    name.contains("SelfAttention.") && !name.ends_with("relative_attention_bias.weight")
        || name.contains("DenseReluDense.")
}

fn container_err(e: safetensors::SafeTensorError) -> Error {
    Error::Container(e.to_string())
}

/// Serializes `params` (and `config` as metadata) to safetensors bytes.
pub fn export_weights(params: &ParameterSet<f32>, config: &EncoderConfig) -> Result<Vec<u8>> {
    let mut owned: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, t) in params.tensors() {
        let (shape, values): (Vec<usize>, Vec<f32>) = if is_linear(&name) {
            let t2 = t.into_dimensionality::<ndarray::Ix2>().expect("linear weights are 2-d");
            (vec![t2.ncols(), t2.nrows()], t2.t().iter().copied().collect())
        } else {
            (t.shape().to_vec(), t.iter().copied().collect())
        };
        owned.push((name, shape, values.iter().flat_map(|v| v.to_le_bytes()).collect()));
    }
    let views: Vec<(String, TensorView<'_>)> = owned
        .iter()
        .map(|(name, shape, bytes)| {
            TensorView::new(Dtype::F32, shape.clone(), bytes)
                .map(|v| (name.clone(), v))
                .map_err(container_err)
        })
        .collect::<Result<_>>()?;
    let metadata = HashMap::from([(CONFIG_KEY.to_string(), serde_json::to_string(config)?)]);
    safetensors::serialize(views, &Some(metadata)).map_err(container_err)
}

pub fn save_weights(path: &Path, params: &ParameterSet<f32>, config: &EncoderConfig) -> Result<()> {
    std::fs::write(path, export_weights(params, config)?)?;
    Ok(())
}

struct Reader<'a> {
    st: SafeTensors<'a>,
}

impl Reader<'_> {
    fn has(&self, name: &str) -> bool {
        self.st.tensor(name).is_ok()
    }

    fn raw(&self, name: &str) -> Result<(Vec<usize>, Vec<f32>)> {
        let t = self
            .st
            .tensor(name)
            .map_err(|_| Error::MissingTensor(name.to_string()))?;
        if t.dtype() != Dtype::F32 {
            return Err(Error::Container(format!("{name}: expected F32, found {:?}", t.dtype())));
        }
        let values = t
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Ok((t.shape().to_vec(), values))
    }

    fn shape(&self, name: &str) -> Result<Vec<usize>> {
        Ok(self
            .st
            .tensor(name)
            .map_err(|_| Error::MissingTensor(name.to_string()))?
            .shape()
            .to_vec())
    }

    fn vector(&self, name: &str, len: usize) -> Result<Array1<f32>> {
        let (shape, values) = self.raw(name)?;
        if shape != [len] {
            return Err(Error::Shape {
                name: name.to_string(),
                expected: vec![len],
                found: shape,
            });
        }
        Ok(Array1::from(values))
    }

    /// Reads a 2-d tensor stored with `stored` shape and returns it in
    /// memory layout (transposed for linear weights).
    fn matrix(&self, name: &str, stored: [usize; 2]) -> Result<Array2<f32>> {
        let (shape, values) = self.raw(name)?;
        if shape != stored {
            return Err(Error::Shape {
                name: name.to_string(),
                expected: stored.to_vec(),
                found: shape,
            });
        }
        let a = Array2::from_shape_vec((stored[0], stored[1]), values).expect("length checked by shape");
        Ok(if is_linear(name) {
            a.reversed_axes().as_standard_layout().to_owned()
        } else {
            a
        })
    }
}

fn infer_config(r: &Reader<'_>) -> Result<EncoderConfig> {
    let emb = r.shape("shared.weight")?;
    let bias = r.shape(BIAS_NAME)?;
    let q = r.shape("encoder.block.0.layer.0.SelfAttention.q.weight")?;
    let gated = r.has("encoder.block.0.layer.1.DenseReluDense.wi_0.weight");
    let wi = r.shape(if gated {
        "encoder.block.0.layer.1.DenseReluDense.wi_0.weight"
    } else {
        "encoder.block.0.layer.1.DenseReluDense.wi.weight"
    })?;
    let num_layers = (0..)
        .take_while(|l| r.has(&format!("encoder.block.{l}.layer.0.SelfAttention.q.weight")))
        .count();
    let (vocab, d_model) = (emb[0], emb[1]);
    let num_heads = bias[1];
    let inner = q[0];
    if num_heads == 0 || inner % num_heads != 0 {
        return Err(Error::Container(format!(
            "inner dim {inner} not divisible by {num_heads} heads"
        )));
    }
    Ok(EncoderConfig {
        num_layers,
        d_model,
        num_heads,
        d_head: inner / num_heads,
        d_ff: wi[0],
        vocab_size: vocab,
        num_distance_buckets: bias[0],
        max_distance: 128,
        attention_scaling: false,
        activation: if gated { Activation::Gated } else { Activation::Plain },
        final_norm: r.has("encoder.final_layer_norm.weight"),
        norm_eps: 1e-6,
        dropout: 0.0,
    })
}

/// Loads weights. Returns the parameters with an extended bias table and the
/// config they run under.
pub fn import_weights_bytes(bytes: &[u8]) -> Result<(ParameterSet<f32>, EncoderConfig)> {
    let (_, meta) = SafeTensors::read_metadata(bytes).map_err(container_err)?;
    let own_config = meta
        .metadata()
        .as_ref()
        .and_then(|m| m.get(CONFIG_KEY))
        .map(|s| serde_json::from_str::<EncoderConfig>(s))
        .transpose()?;
    let r = Reader {
        st: SafeTensors::deserialize(bytes).map_err(container_err)?,
    };
    let pretrained = own_config.is_none();
    let config = match own_config {
        Some(c) => c,
        None => infer_config(&r)?,
    };
    config.validate()?;
    let d = config.d_model;
    let inner = config.inner_dim();
    let dff = config.d_ff;

    let mut layers = Vec::with_capacity(config.num_layers);
    for l in 0..config.num_layers {
        let p = |s: &str| format!("encoder.block.{l}.{s}");
        let (wi, wi_gate) = match config.activation {
            Activation::Plain => (r.matrix(&p("layer.1.DenseReluDense.wi.weight"), [dff, d])?, None),
            Activation::Gated => (
                r.matrix(&p("layer.1.DenseReluDense.wi_0.weight"), [dff, d])?,
                Some(r.matrix(&p("layer.1.DenseReluDense.wi_1.weight"), [dff, d])?),
            ),
        };
        layers.push(LayerParams {
            attn_norm: r.vector(&p("layer.0.layer_norm.weight"), d)?,
            q: r.matrix(&p("layer.0.SelfAttention.q.weight"), [inner, d])?,
            k: r.matrix(&p("layer.0.SelfAttention.k.weight"), [inner, d])?,
            v: r.matrix(&p("layer.0.SelfAttention.v.weight"), [inner, d])?,
            o: r.matrix(&p("layer.0.SelfAttention.o.weight"), [d, inner])?,
            ff_norm: r.vector(&p("layer.1.layer_norm.weight"), d)?,
            ff: FeedForward {
                wi,
                wi_gate,
                wo: r.matrix(&p("layer.1.DenseReluDense.wo.weight"), [d, dff])?,
            },
        });
    }
    let bias_rows = if pretrained {
        config.num_distance_buckets
    } else {
        config.num_distance_buckets + 3
    };
    let mut params = ParameterSet {
        embedding: r.matrix("shared.weight", [config.vocab_size, d])?,
        layers,
        rel_bias: r.matrix(BIAS_NAME, [bias_rows, config.num_heads])?,
        final_norm: if config.final_norm {
            Some(r.vector("encoder.final_layer_norm.weight", d)?)
        } else {
            None
        },
    };
    if pretrained {
        params = params.extend_sentinel_buckets(&config)?;
    }
    params.check(&config)?;
    Ok((params, config))
}

pub fn import_weights(path: &Path) -> Result<(ParameterSet<f32>, EncoderConfig)> {
    import_weights_bytes(&std::fs::read(path)?)
}
