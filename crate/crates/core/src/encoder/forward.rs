use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;

use super::{Activation, EncoderConfig, ParameterSet, Scalar};
use crate::error::{Error, Result};
use crate::position::{sequence_plan, BucketTable, PositionPlan, MASKED};
use crate::tokenizer::TokenId;

/// A position plan reduced to what attention needs: a bias-table row per
/// attended pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompiledPlan {
    buckets: Array2<Option<u16>>,
}

impl CompiledPlan {
    pub fn new(plan: &PositionPlan, table: &BucketTable) -> Self {
        Self {
            buckets: Array2::from_shape_fn((plan.len(), plan.len()), |(i, j)| {
                if plan.attends(i, j) {
                    table.bucketize(plan.position(i, j)).ok().map(|b| b as u16)
                } else {
                    None
                }
            }),
        }
    }

    /// Direct construction from bucket ids; `None` marks a masked pair.
    pub fn from_buckets(buckets: Array2<Option<u16>>) -> Self {
        assert_eq!(buckets.nrows(), buckets.ncols(), "plan must be square");
        Self { buckets }
    }

    pub fn len(&self) -> usize {
        self.buckets.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.is_empty()
    }

    pub fn bucket(&self, i: usize, j: usize) -> Option<usize> {
        self.buckets[[i, j]].map(usize::from)
    }

    /// Per head, `n x n` additive logits: bias-table entry where the pair
    /// attends, [`MASKED`] elsewhere.
    pub fn head_biases<T: Scalar>(&self, rel_bias: &Array2<T>) -> Vec<Array2<T>> {
        let masked = T::from_f32(MASKED).unwrap();
        (0..rel_bias.ncols())
            .map(|h| self.buckets.mapv(|b| b.map_or(masked, |b| rel_bias[[b as usize, h]])))
            .collect()
    }
}

pub(crate) fn rms_norm<T: Scalar>(x: &Array2<T>, scale: &Array1<T>, eps: f64) -> (Array2<T>, Array1<T>) {
    let d = T::from_usize(x.ncols()).unwrap();
    let eps = T::from_f64(eps).unwrap();
    let inv = x.map_axis(Axis(1), |row| {
        let ms = row.iter().fold(T::zero(), |a, &v| a + v * v) / d;
        T::one() / (ms + eps).sqrt()
    });
    let mut y = x.clone();
    Zip::from(y.rows_mut()).and(&inv).for_each(|mut row, &r| {
        Zip::from(&mut row).and(scale).for_each(|v, &g| *v = *v * r * g);
    });
    (y, inv)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

pub(crate) fn gelu<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C).unwrap();
    let a = T::from_f64(GELU_A).unwrap();
    let half = T::from_f64(0.5).unwrap();
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh())
}

pub(crate) fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::from_f64(GELU_C).unwrap();
    let a = T::from_f64(GELU_A).unwrap();
    let half = T::from_f64(0.5).unwrap();
    let three = T::from_f64(3.0).unwrap();
    let t = (c * (x + a * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + three * a * x * x)
}

fn softmax_rows<T: Scalar>(scores: &mut Array2<T>) {
    for mut row in scores.rows_mut() {
        let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        let mut sum = T::zero();
        row.mapv_inplace(|v| {
            let e = (v - max).exp();
            sum += e;
            e
        });
        row.mapv_inplace(|v| v / sum);
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LayerCache<T> {
    pub x: Array2<T>,
    pub inv1: Array1<T>,
    pub y1: Array2<T>,
    pub q: Array2<T>,
    pub k: Array2<T>,
    pub v: Array2<T>,
    pub probs: Vec<Array2<T>>,
    pub ctx: Array2<T>,
    pub attn_drop: Option<Array2<T>>,
    pub x_mid: Array2<T>,
    pub inv2: Array1<T>,
    pub y2: Array2<T>,
    pub h_pre: Array2<T>,
    pub h_gate: Option<Array2<T>>,
    pub h_act: Array2<T>,
    pub ff_drop: Option<Array2<T>>,
}

/// Activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache<T> {
    pub(crate) tokens: Vec<TokenId>,
    pub(crate) layers: Vec<LayerCache<T>>,
    pub(crate) x_last: Array2<T>,
    pub(crate) inv_final: Option<Array1<T>>,
}

fn scale_of<T: Scalar>(config: &EncoderConfig) -> T {
    if config.attention_scaling {
        T::one() / T::from_usize(config.d_head).unwrap().sqrt()
    } else {
        T::one()
    }
}

/// `(q, k, v, per-head weights, concatenated head outputs)`.
pub(crate) type AttentionParts<T> = (Array2<T>, Array2<T>, Array2<T>, Vec<Array2<T>>, Array2<T>);

/// Multi-head attention over already-normalized states `y`:
/// `softmax(Q K^T * scale + B_P + M) V` per head, heads concatenated, before
/// the output projection. Also returns the attention weights per head.
pub(crate) fn attend<T: Scalar>(
    y: &Array2<T>,
    biases: &[Array2<T>],
    wq: &Array2<T>,
    wk: &Array2<T>,
    wv: &Array2<T>,
    config: &EncoderConfig,
) -> AttentionParts<T> {
    let q = y.dot(wq);
    let k = y.dot(wk);
    let v = y.dot(wv);
    let scale = scale_of::<T>(config);
    let dh = config.d_head;
    let mut ctx = Array2::zeros((y.nrows(), config.inner_dim()));
    let mut probs = Vec::with_capacity(config.num_heads);
    for (h, bias) in biases.iter().enumerate() {
        let cols = s![.., h * dh..(h + 1) * dh];
        let mut scores = q.slice(cols).dot(&k.slice(cols).t());
        Zip::from(&mut scores).and(bias).for_each(|s, &b| *s = *s * scale + b);
        softmax_rows(&mut scores);
        ctx.slice_mut(cols).assign(&scores.dot(&v.slice(cols)));
        probs.push(scores);
    }
    (q, k, v, probs, ctx)
}

/// Biased, masked attention of `layer` on normalized states `x`, heads concatenated,
/// without the output projection.
pub fn attention<T: Scalar>(
    x: &Array2<T>,
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
    layer: usize,
) -> Result<Array2<T>> {
    if x.nrows() != plan.len() {
        return Err(Error::PlanLength {
            plan: plan.len(),
            tokens: x.nrows(),
        });
    }
    let l = params
        .layers
        .get(layer)
        .ok_or_else(|| Error::Config(format!("no layer {layer}")))?;
    let biases = plan.head_biases(&params.rel_bias);
    Ok(attend(x, &biases, &l.q, &l.k, &l.v, config).4)
}

fn dropout_mask<T: Scalar>(shape: (usize, usize), p: f64, rng: &mut (impl Rng + ?Sized)) -> Array2<T> {
    let keep = T::from_f64(1.0 / (1.0 - p)).unwrap();
    Array2::from_shape_simple_fn(shape, || if rng.random::<f64>() < p { T::zero() } else { keep })
}

fn check_inputs<T: Scalar>(
    tokens: &[TokenId],
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    if tokens.len() != plan.len() {
        return Err(Error::PlanLength {
            plan: plan.len(),
            tokens: tokens.len(),
        });
    }
    if let Some(&id) = tokens.iter().find(|&&id| id as usize >= params.embedding.nrows()) {
        return Err(Error::TokenOutOfRange {
            id,
            vocab: params.embedding.nrows(),
        });
    }
    if params.rel_bias.nrows() != config.num_distance_buckets + 3 {
        return Err(Error::BiasRows {
            expected: config.num_distance_buckets + 3,
            found: params.rel_bias.nrows(),
        });
    }
    Ok(())
}

/// Forward pass. With `dropout_rng` set and a non-zero dropout rate the
/// branches are dropped; otherwise the pass is deterministic.
pub(crate) fn forward<T: Scalar>(
    tokens: &[TokenId],
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
    keep_cache: bool,
    mut dropout_rng: Option<&mut dyn rand::RngCore>,
) -> Result<(Array2<T>, Option<ForwardCache<T>>)> {
    check_inputs(tokens, plan, params, config)?;
    let n = tokens.len();
    let mut x = params
        .embedding
        .select(Axis(0), &tokens.iter().map(|&t| t as usize).collect::<Vec<_>>());
    let biases = plan.head_biases(&params.rel_bias);
    let mut caches = Vec::new();
    let p = config.dropout;

    for layer in &params.layers {
        let (y1, inv1) = rms_norm(&x, &layer.attn_norm, config.norm_eps);
        let (q, k, v, probs, ctx) = attend(&y1, &biases, &layer.q, &layer.k, &layer.v, config);
        let mut branch = ctx.dot(&layer.o);
        let attn_drop = match dropout_rng.as_deref_mut() {
            Some(rng) if p > 0.0 => Some(dropout_mask::<T>((n, config.d_model), p, rng)),
            _ => None,
        };
        if let Some(m) = &attn_drop {
            branch *= m;
        }
        let x_mid = &x + &branch;

        let (y2, inv2) = rms_norm(&x_mid, &layer.ff_norm, config.norm_eps);
        let h_pre = y2.dot(&layer.ff.wi);
        let (h_gate, h_act) = match (config.activation, &layer.ff.wi_gate) {
            (Activation::Gated, Some(gate)) => {
                let g = y2.dot(gate);
                let act = Zip::from(&h_pre).and(&g).map_collect(|&a, &b| gelu(a) * b);
                (Some(g), act)
            }
            _ => (None, h_pre.mapv(|v| v.max(T::zero()))),
        };
        let mut ff = h_act.dot(&layer.ff.wo);
        let ff_drop = match dropout_rng.as_deref_mut() {
            Some(rng) if p > 0.0 => Some(dropout_mask::<T>((n, config.d_model), p, rng)),
            _ => None,
        };
        if let Some(m) = &ff_drop {
            ff *= m;
        }
        let x_out = &x_mid + &ff;

        if keep_cache {
            caches.push(LayerCache {
                x,
                inv1,
                y1,
                q,
                k,
                v,
                probs,
                ctx,
                attn_drop,
                x_mid,
                inv2,
                y2,
                h_pre,
                h_gate,
                h_act,
                ff_drop,
            });
        }
        x = x_out;
    }

    let (out, inv_final) = match &params.final_norm {
        Some(scale) => {
            let (y, inv) = rms_norm(&x, scale, config.norm_eps);
            (y, Some(inv))
        }
        None => (x.clone(), None),
    };
    let cache = keep_cache.then(|| ForwardCache {
        tokens: tokens.to_vec(),
        layers: caches,
        x_last: x,
        inv_final,
    });
    Ok((out, cache))
}

/// Final-layer embedding of every token, `n x d_model`.
pub fn encode_compiled<T: Scalar>(
    tokens: &[TokenId],
    plan: &CompiledPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
) -> Result<Array2<T>> {
    Ok(forward(tokens, plan, params, config, false, None)?.0)
}

pub fn encode<T: Scalar>(
    tokens: &[TokenId],
    plan: &PositionPlan,
    params: &ParameterSet<T>,
    config: &EncoderConfig,
) -> Result<Array2<T>> {
    if tokens.len() != plan.len() {
        return Err(Error::PlanLength {
            plan: plan.len(),
            tokens: tokens.len(),
        });
    }
    encode_compiled(tokens, &CompiledPlan::new(plan, &config.bucket_table()), params, config)
}

/// Plain text encoding: sequence distances, nothing masked.
pub fn sequence_encode<T: Scalar>(
    tokens: &[TokenId],
    params: &ParameterSet<T>,
    config: &EncoderConfig,
) -> Result<Array2<T>> {
    if tokens.is_empty() {
        return Err(Error::EmptyInput);
    }
    encode(tokens, &sequence_plan(tokens.len()), params, config)
}
