use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{loss, AdamW, Heads, LossWeights, Metric, TrainConfig, TrainMode};
use crate::encoder::{backward, encode_compiled, encode_for_training, EncoderConfig, ParameterSet, Scalar};
use crate::error::{Error, Result};
use crate::features::EncodedInstance;

/// Instances per gradient chunk. Chunks may run on different threads but are
/// summed in a fixed order, so results do not depend on the thread count.
const CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct Logits<T> {
    pub relation: Array1<T>,
    pub source: Option<Array1<T>>,
}

fn argmax<T: Scalar>(v: ArrayView1<'_, T>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn check_instance<T: Scalar>(inst: &EncodedInstance, heads: &Heads<T>) -> Result<()> {
    if inst.readout >= inst.tokens.len() {
        return Err(Error::Readout(0));
    }
    let classes = heads.relation.num_classes();
    if inst.relation >= classes {
        return Err(Error::Label {
            label: inst.relation,
            classes,
        });
    }
    if let Some(src) = &heads.source {
        match inst.source {
            Some(s) if s < src.num_classes() => {}
            Some(s) => {
                return Err(Error::Label {
                    label: s,
                    classes: src.num_classes(),
                })
            }
            None => {
                return Err(Error::InconsistentLabels(
                    "joint head but instance has no source label".into(),
                ))
            }
        }
    }
    Ok(())
}

fn head_logits<T: Scalar>(h: ArrayView1<'_, T>, heads: &Heads<T>) -> Logits<T> {
    Logits {
        relation: heads.relation.logits(h),
        source: heads.source.as_ref().map(|s| s.logits(h)),
    }
}

/// Loss on a readout embedding. Accumulates head gradients when asked and
/// returns the gradient w.r.t. the embedding plus the predicted relation.
fn head_pass<T: Scalar>(
    h: ArrayView1<'_, T>,
    inst: &EncodedInstance,
    heads: &Heads<T>,
    weights: LossWeights,
    grads: Option<&mut Heads<T>>,
) -> Result<(T, Array1<T>, usize)> {
    let logits = head_logits(h, heads);
    let parts = loss(
        logits.relation.view(),
        logits.source.as_ref().map(|s| s.view()),
        inst.relation,
        inst.source,
        weights,
    )?;
    let mut dh = heads.relation.weight.dot(&parts.d_relation);
    if let (Some(src), Some(d)) = (&heads.source, &parts.d_source) {
        dh += &src.weight.dot(d);
    }
    if let Some(g) = grads {
        let outer = |w: &mut Array2<T>, d: &Array1<T>| {
            for (mut row, &hv) in w.rows_mut().into_iter().zip(h.iter()) {
                row.scaled_add(hv, d);
            }
        };
        outer(&mut g.relation.weight, &parts.d_relation);
        g.relation.bias += &parts.d_relation;
        if let (Some(gs), Some(d)) = (g.source.as_mut(), &parts.d_source) {
            outer(&mut gs.weight, d);
            gs.bias += d;
        }
    }
    Ok((parts.loss, dh, argmax(logits.relation.view())))
}

/// Logits from the final-layer embedding of the readout token.
pub fn predict<T: Scalar>(
    inst: &EncodedInstance,
    config: &EncoderConfig,
    params: &ParameterSet<T>,
    heads: &Heads<T>,
) -> Result<Logits<T>> {
    check_instance(inst, heads)?;
    let out = encode_compiled(&inst.tokens, &inst.plan, params, config)?;
    Ok(head_logits(out.row(inst.readout), heads))
}

pub fn instance_loss<T: Scalar>(
    inst: &EncodedInstance,
    config: &EncoderConfig,
    params: &ParameterSet<T>,
    heads: &Heads<T>,
    weights: LossWeights,
) -> Result<T> {
    check_instance(inst, heads)?;
    let out = encode_compiled(&inst.tokens, &inst.plan, params, config)?;
    Ok(head_pass(out.row(inst.readout), inst, heads, weights, None)?.0)
}

#[allow(clippy::too_many_arguments)]
fn accumulate<T: Scalar>(
    inst: &EncodedInstance,
    config: &EncoderConfig,
    params: &ParameterSet<T>,
    heads: &Heads<T>,
    weights: LossWeights,
    grads: &mut ParameterSet<T>,
    head_grads: &mut Heads<T>,
    dropout_rng: Option<&mut dyn RngCore>,
) -> Result<(T, usize)> {
    let (out, cache) = encode_for_training(&inst.tokens, &inst.plan, params, config, dropout_rng)?;
    let (l, dh, pred) = head_pass(out.row(inst.readout), inst, heads, weights, Some(head_grads))?;
    let mut d_out = Array2::zeros(out.raw_dim());
    d_out.row_mut(inst.readout).assign(&dh);
    backward(&cache, &inst.plan, params, config, &d_out, grads);
    Ok((l, pred))
}

/// Loss of one instance with its gradients w.r.t. every encoder and head
/// parameter.
pub fn instance_gradients<T: Scalar>(
    inst: &EncodedInstance,
    config: &EncoderConfig,
    params: &ParameterSet<T>,
    heads: &Heads<T>,
    weights: LossWeights,
) -> Result<(T, ParameterSet<T>, Heads<T>)> {
    check_instance(inst, heads)?;
    let mut grads = params.zeros_like();
    let mut head_grads = heads.zeros_like();
    let (l, _) = accumulate(inst, config, params, heads, weights, &mut grads, &mut head_grads, None)?;
    Ok((l, grads, head_grads))
}

/// Final-layer embedding of each instance's readout token.
pub fn readout_embeddings(
    data: &[EncodedInstance],
    config: &EncoderConfig,
    params: &ParameterSet<f32>,
) -> Result<Vec<Array1<f32>>> {
    data.par_iter()
        .map(|inst| {
            if inst.readout >= inst.tokens.len() {
                return Err(Error::Readout(0));
            }
            let out = encode_compiled(&inst.tokens, &inst.plan, params, config)?;
            Ok(out.row(inst.readout).to_owned())
        })
        .collect()
}

/// One line of the metrics trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub metric: f64,
}

pub fn write_trace(trace: &[MetricRecord], mut w: impl Write) -> Result<()> {
    for r in trace {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ParameterSet<f32>,
    pub heads: Heads<f32>,
    pub trace: Vec<MetricRecord>,
    /// Epoch (1-based) whose parameters were kept.
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub loss: f64,
    pub relation: f64,
    pub source: Option<f64>,
    pub predictions: Vec<usize>,
}

fn score_readouts(
    data: &[EncodedInstance],
    embeddings: &[Array1<f32>],
    heads: &Heads<f32>,
    weights: LossWeights,
    metric: Metric,
) -> Result<Scores> {
    let mut total = 0.0f64;
    let mut predictions = Vec::with_capacity(data.len());
    let mut source_pred = Vec::new();
    for (inst, h) in data.iter().zip(embeddings) {
        check_instance(inst, heads)?;
        let (l, _, pred) = head_pass(h.view(), inst, heads, weights, None)?;
        total += l as f64;
        predictions.push(pred);
        if let Some(src) = &heads.source {
            source_pred.push(argmax(src.logits(h.view()).view()));
        }
    }
    let gold: Vec<usize> = data.iter().map(|i| i.relation).collect();
    let source = match &heads.source {
        Some(_) => {
            let gold_src: Vec<usize> = data.iter().map(|i| i.source.unwrap_or(usize::MAX)).collect();
            Some(metric.score(&source_pred, &gold_src)?)
        }
        None => None,
    };
    Ok(Scores {
        loss: total / data.len() as f64,
        relation: metric.score(&predictions, &gold)?,
        source,
        predictions,
    })
}

/// Mean loss and `metric` of the relation (and source) predictions.
pub fn evaluate(
    data: &[EncodedInstance],
    config: &EncoderConfig,
    params: &ParameterSet<f32>,
    heads: &Heads<f32>,
    metric: Metric,
    weights: LossWeights,
) -> Result<Scores> {
    if data.is_empty() {
        return Err(Error::EmptySplit("evaluation"));
    }
    let embeddings = readout_embeddings(data, config, params)?;
    score_readouts(data, &embeddings, heads, weights, metric)
}

struct Batch {
    grads: Option<ParameterSet<f32>>,
    head_grads: Heads<f32>,
    loss: f64,
    predictions: Vec<usize>,
}

impl Batch {
    fn merge(mut self, other: Self) -> Self {
        if let (Some(a), Some(b)) = (self.grads.as_mut(), other.grads.as_ref()) {
            a.add_scaled(b, 1.0);
        }
        self.head_grads.add_scaled(&other.head_grads, 1.0);
        self.loss += other.loss;
        self.predictions.extend(other.predictions);
        self
    }
}

fn non_finite(epoch: usize, step: usize, index: usize, loss: f64, params_ok: bool, heads_ok: bool) -> Error {
    Error::NonFiniteLoss {
        epoch,
        step,
        detail: format!(
            "instance {index} gave loss {loss}; encoder parameters finite: {params_ok}; head parameters finite: {heads_ok}"
        ),
    }
}

/// Fits heads (and, when finetuning, the encoder) on `train_set`, stopping
/// early on dev loss and restoring the best epoch's parameters.
pub fn train(
    train_set: &[EncodedInstance],
    dev_set: &[EncodedInstance],
    config: &EncoderConfig,
    params: ParameterSet<f32>,
    heads: Heads<f32>,
    tc: &TrainConfig,
    metric: Metric,
) -> Result<TrainOutcome> {
    tc.validate()?;
    config.validate()?;
    params.check(config)?;
    if train_set.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    if dev_set.is_empty() {
        return Err(Error::EmptySplit("dev"));
    }
    for inst in train_set.iter().chain(dev_set) {
        check_instance(inst, &heads)?;
    }

    let finetune = tc.mode == TrainMode::Finetune;
    let lr = tc.learning_rate();
    let weights = tc.loss_weights;
    let (probe_train, probe_dev) = if finetune {
        (None, None)
    } else {
        (
            Some(readout_embeddings(train_set, config, &params)?),
            Some(readout_embeddings(dev_set, config, &params)?),
        )
    };

    let mut params = params;
    let mut heads = heads;
    let mut enc_opt = finetune.then(|| {
        let views: Vec<_> = params.tensors().into_iter().map(|(_, t)| t).collect();
        AdamW::new(tc.optimizer, lr, &views)
    });
    let mut head_opt = {
        let views: Vec<_> = heads.tensors().into_iter().map(|(_, t)| t).collect();
        AdamW::new(tc.optimizer, lr, &views)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut trace = Vec::new();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best: Option<(Option<ParameterSet<f32>>, Heads<f32>)> = None;
    let mut epochs_run = 0;

    for epoch in 1..=tc.max_epochs {
        epochs_run = epoch;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_pred = Vec::with_capacity(order.len());
        let mut epoch_gold = Vec::with_capacity(order.len());

        for (step, batch) in order.chunks(tc.batch_size).enumerate() {
            let run_chunk = |c: usize, chunk: &[usize]| -> Result<Batch> {
                let mut out = Batch {
                    grads: finetune.then(|| params.zeros_like()),
                    head_grads: heads.zeros_like(),
                    loss: 0.0,
                    predictions: Vec::with_capacity(chunk.len()),
                };
                for (k, &idx) in chunk.iter().enumerate() {
                    let inst = &train_set[idx];
                    let (l, pred) = match (&mut out.grads, &probe_train) {
                        (Some(g), _) => {
                            let mut drop_rng = (config.dropout > 0.0).then(|| {
                                let mut r = ChaCha8Rng::seed_from_u64(tc.seed);
                                let pos = (step * tc.batch_size + c * CHUNK + k) as u64;
                                r.set_stream(((epoch as u64) << 32) | pos);
                                r
                            });
                            let dr = drop_rng.as_mut().map(|r| r as &mut dyn RngCore);
                            accumulate(inst, config, &params, &heads, weights, g, &mut out.head_grads, dr)?
                        }
                        (None, Some(emb)) => {
                            let (l, _, p) =
                                head_pass(emb[idx].view(), inst, &heads, weights, Some(&mut out.head_grads))?;
                            (l, p)
                        }
                        (None, None) => unreachable!("probe embeddings are computed up front"),
                    };
                    if !l.is_finite() {
                        return Err(non_finite(
                            epoch,
                            step,
                            idx,
                            l as f64,
                            params.all_finite(),
                            heads.all_finite(),
                        ));
                    }
                    out.loss += l as f64;
                    out.predictions.push(pred);
                }
                Ok(out)
            };
            let parts: Vec<Batch> = if finetune {
                batch
                    .par_chunks(CHUNK)
                    .enumerate()
                    .map(|(c, chunk)| run_chunk(c, chunk))
                    .collect::<Result<_>>()?
            } else {
                vec![run_chunk(0, batch)?]
            };
            let mut total = parts.into_iter().reduce(Batch::merge).expect("batch is non-empty");
            let inv = 1.0 / batch.len() as f32;
            if let (Some(g), Some(opt)) = (total.grads.as_mut(), enc_opt.as_mut()) {
                for mut t in g.tensors_mut() {
                    t.mapv_inplace(|v| v * inv);
                }
                let gv: Vec<_> = g.tensors().into_iter().map(|(_, t)| t).collect();
                opt.step(params.tensors_mut(), gv);
            }
            for mut t in total.head_grads.tensors_mut() {
                t.mapv_inplace(|v| v * inv);
            }
            let hv: Vec<_> = total.head_grads.tensors().into_iter().map(|(_, t)| t).collect();
            head_opt.step(heads.tensors_mut(), hv);

            epoch_loss += total.loss;
            epoch_pred.extend(total.predictions);
            epoch_gold.extend(batch.iter().map(|&i| train_set[i].relation));
        }

        trace.push(MetricRecord {
            epoch,
            split: "train".into(),
            loss: epoch_loss / train_set.len() as f64,
            metric: metric.score(&epoch_pred, &epoch_gold)?,
        });

        let dev = match &probe_dev {
            Some(emb) => score_readouts(dev_set, emb, &heads, weights, metric)?,
            None => evaluate(dev_set, config, &params, &heads, metric, weights)?,
        };
        if !dev.loss.is_finite() {
            return Err(non_finite(
                epoch,
                0,
                0,
                dev.loss,
                params.all_finite(),
                heads.all_finite(),
            ));
        }
        log::debug!(
            "epoch {epoch}: dev loss {:.5}, {} {:.4}",
            dev.loss,
            metric,
            dev.relation
        );
        trace.push(MetricRecord {
            epoch,
            split: "dev".into(),
            loss: dev.loss,
            metric: dev.relation,
        });

        if dev.loss < best_loss {
            best_loss = dev.loss;
            best_epoch = epoch;
            best = Some((finetune.then(|| params.clone()), heads.clone()));
        } else if epoch - best_epoch >= tc.patience {
            log::info!("early stop after epoch {epoch}; best dev loss at epoch {best_epoch}");
            break;
        }
    }

    if let Some((p, h)) = best {
        if let Some(p) = p {
            params = p;
        }
        heads = h;
    }
    Ok(TrainOutcome {
        params,
        heads,
        trace,
        best_epoch,
        epochs_run,
    })
}
