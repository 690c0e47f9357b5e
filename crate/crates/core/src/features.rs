//! Turns labeled instances into encoder inputs.

use serde::{Deserialize, Serialize};

use crate::data::LabeledInstance;
use crate::encoder::CompiledPlan;
use crate::error::{Error, Result};
use crate::graph::{to_levi, tokenize_levi, GraphOfTriplets};
use crate::position::{build_graph, build_joint, sequence_plan, BucketTable, PositionPlan, Variant};
use crate::tokenizer::{TokenId, Tokenizer};

/// How an instance's graph reaches the encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelVariant {
    /// Graph structure, attention limited to shared triplets.
    Lglm,
    /// Graph structure, all pairs attend.
    Gglm,
    /// Graph flattened to text.
    Sequence,
}

impl std::str::FromStr for ModelVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lglm" | "local" => Ok(Self::Lglm),
            "gglm" | "global" => Ok(Self::Gglm),
            "sequence" | "seq" => Ok(Self::Sequence),
            _ => Err(format!("unknown variant '{s}' (expected lglm, gglm or sequence)")),
        }
    }
}

/// Variant plus whether an end-of-sequence token closes the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputFormat {
    pub variant: ModelVariant,
    /// Sequence inputs end with the token; graph inputs get it as the last
    /// text token, so a graph-only input becomes a one-token text segment
    /// followed by the graph.
    pub append_eos: bool,
}

impl From<ModelVariant> for InputFormat {
    fn from(variant: ModelVariant) -> Self {
        Self {
            variant,
            append_eos: false,
        }
    }
}

/// Encoder-ready instance.
#[derive(Debug, Clone)]
pub struct EncodedInstance {
    pub tokens: Vec<TokenId>,
    pub plan: CompiledPlan,
    /// Index of the `<mask0>` token whose embedding feeds the heads.
    pub readout: usize,
    pub relation: usize,
    pub source: Option<usize>,
}

/// Token ids and position plan for a graph with optional leading text.
pub fn instance_plan(
    graph: &GraphOfTriplets,
    text: Option<&str>,
    tok: &dyn Tokenizer,
    format: impl Into<InputFormat>,
) -> Result<(Vec<TokenId>, PositionPlan)> {
    let format = format.into();
    let eos = match format.append_eos {
        true => Some(
            tok.eos_id()
                .ok_or_else(|| Error::Config("tokenizer has no end-of-sequence token".into()))?,
        ),
        false => None,
    };
    let mut tokens = text.map(|t| tok.encode(t)).unwrap_or_default();
    match format.variant {
        ModelVariant::Sequence => {
            tokens.extend(tok.encode(&graph.linearize()));
            tokens.extend(eos);
            let n = tokens.len();
            Ok((tokens, sequence_plan(n)))
        }
        variant @ (ModelVariant::Lglm | ModelVariant::Gglm) => {
            tokens.extend(eos);
            let text_len = tokens.len();
            let elg = tokenize_levi(&to_levi(graph)?, tok)?;
            tokens.extend(elg.token_ids());
            let v = if variant == ModelVariant::Lglm {
                Variant::Local
            } else {
                Variant::Global
            };
            let plan = if text_len == 0 {
                build_graph(&elg, v)
            } else {
                build_joint(Some(&elg), text_len, v)
            };
            Ok((tokens, plan))
        }
    }
}

/// Position of the single `<mask0>` token.
pub fn readout_index(tokens: &[TokenId], tok: &dyn Tokenizer) -> Result<usize> {
    let mask = tok.mask_ids()[0];
    let mut hits = tokens.iter().enumerate().filter(|(_, &t)| t == mask).map(|(i, _)| i);
    match (hits.next(), hits.next()) {
        (Some(i), None) => Ok(i),
        _ => Err(Error::Readout(tokens.iter().filter(|&&t| t == mask).count())),
    }
}

pub fn featurize(
    inst: &LabeledInstance,
    tok: &dyn Tokenizer,
    format: impl Into<InputFormat>,
    table: &BucketTable,
) -> Result<EncodedInstance> {
    let (tokens, plan) = instance_plan(&inst.graph, inst.text.as_deref(), tok, format)?;
    let readout = readout_index(&tokens, tok)?;
    Ok(EncodedInstance {
        plan: CompiledPlan::new(&plan, table),
        tokens,
        readout,
        relation: inst.relation_label,
        source: inst.source_label.map(|s| s.index()),
    })
}

pub fn featurize_all(
    instances: &[LabeledInstance],
    tok: &dyn Tokenizer,
    format: impl Into<InputFormat>,
    table: &BucketTable,
) -> Result<Vec<EncodedInstance>> {
    let format = format.into();
    instances.iter().map(|i| featurize(i, tok, format, table)).collect()
}
