use ndarray::{Array1, Array2, ArrayViewD, ArrayViewMutD, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Activation, EncoderConfig, Scalar};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward<T> {
    /// `d_model x d_ff`
    pub wi: Array2<T>,
    /// `d_model x d_ff`, gated activation only.
    pub wi_gate: Option<Array2<T>>,
    /// `d_ff x d_model`
    pub wo: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub attn_norm: Array1<T>,
    /// `d_model x inner`, heads laid out contiguously along the columns.
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    /// `inner x d_model`
    pub o: Array2<T>,
    pub ff_norm: Array1<T>,
    pub ff: FeedForward<T>,
}

/// Every encoder weight. The relative-bias table (`rows x num_heads`) is
/// shared by all layers.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSet<T> {
    /// `vocab_size x d_model`
    pub embedding: Array2<T>,
    pub layers: Vec<LayerParams<T>>,
    pub rel_bias: Array2<T>,
    pub final_norm: Option<Array1<T>>,
}

fn normal<T: Scalar>(rng: &mut impl Rng, shape: (usize, usize), std: f64) -> Array2<T> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn(shape, || T::from_f64(dist.sample(rng)).unwrap())
}

impl<T: Scalar> ParameterSet<T> {
    /// Random initialization with fan-in scaled normals and unit norm
    /// scales. The sentinel bias rows start as copies of the `+inf` row.
    pub fn random(config: &EncoderConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let d = config.d_model;
        let inner = config.inner_dim();
        let dff = config.d_ff;
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                attn_norm: Array1::ones(d),
                q: normal(rng, (d, inner), ((d * config.d_head) as f64).powf(-0.5)),
                k: normal(rng, (d, inner), (d as f64).powf(-0.5)),
                v: normal(rng, (d, inner), (d as f64).powf(-0.5)),
                o: normal(rng, (inner, d), (inner as f64).powf(-0.5)),
                ff_norm: Array1::ones(d),
                ff: FeedForward {
                    wi: normal(rng, (d, dff), (d as f64).powf(-0.5)),
                    wi_gate: (config.activation == Activation::Gated)
                        .then(|| normal(rng, (d, dff), (d as f64).powf(-0.5))),
                    wo: normal(rng, (dff, d), (dff as f64).powf(-0.5)),
                },
            })
            .collect();
        let params = Self {
            embedding: normal(rng, (config.vocab_size, d), 1.0),
            layers,
            rel_bias: normal(
                rng,
                (config.num_distance_buckets, config.num_heads),
                (d as f64).powf(-0.5),
            ),
            final_norm: config.final_norm.then(|| Array1::ones(d)),
        };
        params.extend_sentinel_buckets(config)
    }

    /// All-zero set with the same shapes; used for gradients and optimizer
    /// moments.
    pub fn zeros_like(&self) -> Self {
        let z1 = |a: &Array1<T>| Array1::zeros(a.raw_dim());
        let z2 = |a: &Array2<T>| Array2::zeros(a.raw_dim());
        Self {
            embedding: z2(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: z1(&l.attn_norm),
                    q: z2(&l.q),
                    k: z2(&l.k),
                    v: z2(&l.v),
                    o: z2(&l.o),
                    ff_norm: z1(&l.ff_norm),
                    ff: FeedForward {
                        wi: z2(&l.ff.wi),
                        wi_gate: l.ff.wi_gate.as_ref().map(z2),
                        wo: z2(&l.ff.wo),
                    },
                })
                .collect(),
            rel_bias: z2(&self.rel_bias),
            final_norm: self.final_norm.as_ref().map(z1),
        }
    }

    /// Appends the G2G, T2G and G2T rows, each a copy of the largest
    /// positive-distance bucket.
    pub fn extend_sentinel_buckets(mut self, config: &EncoderConfig) -> Result<Self> {
        let rows = self.rel_bias.nrows();
        if rows == config.num_distance_buckets + 3 {
            return Err(Error::AlreadyExtended);
        }
        if rows != config.num_distance_buckets {
            return Err(Error::BiasRows {
                expected: config.num_distance_buckets,
                found: rows,
            });
        }
        let source = self.rel_bias.row(config.bucket_table().positive_infinity()).to_owned();
        for _ in 0..3 {
            self.rel_bias.push_row(source.view()).expect("row width matches");
        }
        Ok(self)
    }

    /// Named views in a fixed order. Names follow the checkpoint name map.
    pub fn tensors(&self) -> Vec<(String, ArrayViewD<'_, T>)> {
        let mut out = vec![("shared.weight".to_string(), self.embedding.view().into_dyn())];
        for (l, layer) in self.layers.iter().enumerate() {
            let p = |s: &str| format!("encoder.block.{l}.{s}");
            out.push((p("layer.0.layer_norm.weight"), layer.attn_norm.view().into_dyn()));
            out.push((p("layer.0.SelfAttention.q.weight"), layer.q.view().into_dyn()));
            out.push((p("layer.0.SelfAttention.k.weight"), layer.k.view().into_dyn()));
            out.push((p("layer.0.SelfAttention.v.weight"), layer.v.view().into_dyn()));
            out.push((p("layer.0.SelfAttention.o.weight"), layer.o.view().into_dyn()));
            out.push((p("layer.1.layer_norm.weight"), layer.ff_norm.view().into_dyn()));
            match &layer.ff.wi_gate {
                None => out.push((p("layer.1.DenseReluDense.wi.weight"), layer.ff.wi.view().into_dyn())),
                Some(gate) => {
                    out.push((p("layer.1.DenseReluDense.wi_0.weight"), layer.ff.wi.view().into_dyn()));
                    out.push((p("layer.1.DenseReluDense.wi_1.weight"), gate.view().into_dyn()));
                }
            }
            out.push((p("layer.1.DenseReluDense.wo.weight"), layer.ff.wo.view().into_dyn()));
        }
        out.push((
            "encoder.block.0.layer.0.SelfAttention.relative_attention_bias.weight".to_string(),
            self.rel_bias.view().into_dyn(),
        ));
        if let Some(n) = &self.final_norm {
            out.push(("encoder.final_layer_norm.weight".to_string(), n.view().into_dyn()));
        }
        out
    }

    /// Mutable views in the same order as [`tensors`](Self::tensors).
    pub fn tensors_mut(&mut self) -> Vec<ArrayViewMutD<'_, T>> {
        let mut out = vec![self.embedding.view_mut().into_dyn()];
        for layer in &mut self.layers {
            out.push(layer.attn_norm.view_mut().into_dyn());
            out.push(layer.q.view_mut().into_dyn());
            out.push(layer.k.view_mut().into_dyn());
            out.push(layer.v.view_mut().into_dyn());
            out.push(layer.o.view_mut().into_dyn());
            out.push(layer.ff_norm.view_mut().into_dyn());
            out.push(layer.ff.wi.view_mut().into_dyn());
            if let Some(g) = &mut layer.ff.wi_gate {
                out.push(g.view_mut().into_dyn());
            }
            out.push(layer.ff.wo.view_mut().into_dyn());
        }
        out.push(self.rel_bias.view_mut().into_dyn());
        if let Some(n) = &mut self.final_norm {
            out.push(n.view_mut().into_dyn());
        }
        out
    }

    /// `self += other * scale`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        for (mut a, (_, b)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.scaled_add(scale, &b);
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ParameterSet<U> {
        let c1 = |a: &Array1<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        let c2 = |a: &Array2<T>| a.mapv(|v| U::from_f64(v.to_f64().unwrap()).unwrap());
        ParameterSet {
            embedding: c2(&self.embedding),
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    attn_norm: c1(&l.attn_norm),
                    q: c2(&l.q),
                    k: c2(&l.k),
                    v: c2(&l.v),
                    o: c2(&l.o),
                    ff_norm: c1(&l.ff_norm),
                    ff: FeedForward {
                        wi: c2(&l.ff.wi),
                        wi_gate: l.ff.wi_gate.as_ref().map(c2),
                        wo: c2(&l.ff.wo),
                    },
                })
                .collect(),
            rel_bias: c2(&self.rel_bias),
            final_norm: self.final_norm.as_ref().map(c1),
        }
    }

    /// Checks every shape against `config`.
    pub fn check(&self, config: &EncoderConfig) -> Result<()> {
        let d = config.d_model;
        let inner = config.inner_dim();
        let shape = |name: &str, found: &[usize], expected: &[usize]| {
            if found == expected {
                Ok(())
            } else {
                Err(Error::Shape {
                    name: name.to_string(),
                    expected: expected.to_vec(),
                    found: found.to_vec(),
                })
            }
        };
        shape("embedding", self.embedding.shape(), &[config.vocab_size, d])?;
        if self.layers.len() != config.num_layers {
            return Err(Error::Config(format!(
                "config has {} layers, parameters have {}",
                config.num_layers,
                self.layers.len()
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            shape(&format!("layer {l} q"), layer.q.shape(), &[d, inner])?;
            shape(&format!("layer {l} k"), layer.k.shape(), &[d, inner])?;
            shape(&format!("layer {l} v"), layer.v.shape(), &[d, inner])?;
            shape(&format!("layer {l} o"), layer.o.shape(), &[inner, d])?;
            shape(&format!("layer {l} attn_norm"), layer.attn_norm.shape(), &[d])?;
            shape(&format!("layer {l} ff_norm"), layer.ff_norm.shape(), &[d])?;
            shape(&format!("layer {l} wi"), layer.ff.wi.shape(), &[d, config.d_ff])?;
            shape(&format!("layer {l} wo"), layer.ff.wo.shape(), &[config.d_ff, d])?;
            if (config.activation == Activation::Gated) != layer.ff.wi_gate.is_some() {
                return Err(Error::Config(format!(
                    "layer {l}: gate weights do not match activation"
                )));
            }
        }
        let rows = config.num_distance_buckets + 3;
        if self.rel_bias.nrows() != rows {
            return Err(Error::BiasRows {
                expected: rows,
                found: self.rel_bias.nrows(),
            });
        }
        shape("rel_bias", self.rel_bias.shape(), &[rows, config.num_heads])?;
        if config.final_norm != self.final_norm.is_some() {
            return Err(Error::Config("final norm presence does not match config".into()));
        }
        Ok(())
    }

    /// Sum of squares over all tensors, for gradient-norm reporting.
    pub fn squared_norm(&self) -> T {
        self.tensors()
            .iter()
            .map(|(_, t)| t.iter().fold(T::zero(), |acc, &v| acc + v * v))
            .fold(T::zero(), |a, b| a + b)
    }

    /// Bias-table row for `bucket`.
    pub fn bias_row(&self, bucket: usize) -> ndarray::ArrayView1<'_, T> {
        self.rel_bias.index_axis(Axis(0), bucket)
    }
}

impl ParameterSet<f32> {
    /// Order-sensitive FNV-1a hash over every parameter's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for (name, t) in self.tensors() {
            for b in name.bytes().chain(t.iter().flat_map(|v| v.to_bits().to_le_bytes())) {
                h ^= b as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unextended(config: &EncoderConfig) -> ParameterSet<f32> {
        let mut p = ParameterSet::<f32>::random(config, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        p.rel_bias = p
            .rel_bias
            .slice(ndarray::s![..config.num_distance_buckets, ..])
            .to_owned();
        p
    }

    #[test]
    fn sentinel_rows_copy_the_positive_infinity_row() {
        let config = EncoderConfig::desk();
        let before = unextended(&config);
        let after = before.clone().extend_sentinel_buckets(&config).unwrap();
        assert_eq!(after.rel_bias.nrows(), 35);
        for row in 32..35 {
            let same = after
                .rel_bias
                .row(row)
                .iter()
                .zip(after.rel_bias.row(31))
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same, "row {row}");
        }
        for row in 0..32 {
            assert_eq!(after.rel_bias.row(row), before.rel_bias.row(row));
        }
        assert_eq!(after.layers, before.layers);
        assert_eq!(after.embedding, before.embedding);
        assert!(matches!(
            after.extend_sentinel_buckets(&config),
            Err(Error::AlreadyExtended)
        ));
    }

    #[test]
    fn random_init_is_seeded_and_checked() {
        let config = EncoderConfig::desk();
        let a = ParameterSet::<f32>::random(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = ParameterSet::<f32>::random(&config, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a.checksum(), b.checksum());
        a.check(&config).unwrap();
        assert!(a.all_finite());
        assert_eq!(a.tensors().len(), a.zeros_like().tensors_mut().len());
    }
}
