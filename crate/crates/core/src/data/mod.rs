//! Dataset construction: knowledge-graph subgraph sampling and synthetic tasks.

mod cn;
mod instance;
mod kg;
mod sampler;
mod stats;
mod synth;

pub use cn::{build_cn_dataset, CnDataset, SamplerConfig, SeedRecord};
pub use instance::{read_jsonl, write_jsonl, LabeledInstance, SourceLabel};
pub use kg::{synthetic_kg, KnowledgeGraph, LoadReport};
pub use sampler::{check_seed, sample_subgraph, SubgraphFamily, SubgraphMode};
pub use stats::{stats, stats_by_radius, GraphStats, MeanStd};
pub use synth::{synth_graph_task, synth_joint_task, GraphTask, SynthConfig, LABEL_WORDS};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Train, dev and test instances with the label names they index into.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<LabeledInstance>,
    pub dev: Vec<LabeledInstance>,
    pub test: Vec<LabeledInstance>,
    pub labels: Vec<String>,
    /// Label index meaning "no relation", for joint tasks.
    pub no_relation: Option<usize>,
}

/// Label metadata stored next to the split files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub labels: Vec<String>,
    #[serde(default)]
    pub no_relation: Option<usize>,
    #[serde(default)]
    pub joint: bool,
}

impl Splits {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            labels: self.labels.clone(),
            no_relation: self.no_relation,
            joint: self.all().any(|i| i.source_label.is_some()),
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &LabeledInstance> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }

    /// Every string a tokenizer must cover: triplet fields and texts.
    pub fn texts(&self) -> Vec<&str> {
        let mut out = Vec::new();
        for i in self.all() {
            for t in i.graph.triplets() {
                out.extend([t.head.as_str(), t.relation.as_str(), t.tail.as_str()]);
            }
            out.extend(i.text.as_deref());
        }
        out
    }

    /// Checks every instance and that train and dev share no instance.
    pub fn validate(&self) -> Result<()> {
        for i in self.all() {
            i.validate(self.labels.len(), self.no_relation)?;
        }
        check_disjoint(&self.train, &self.dev)
    }
}

pub fn check_disjoint(a: &[LabeledInstance], b: &[LabeledInstance]) -> Result<()> {
    let keys: HashSet<(String, Option<&str>)> = a.iter().map(|i| (i.graph.linearize(), i.text.as_deref())).collect();
    match b
        .iter()
        .position(|i| keys.contains(&(i.graph.linearize(), i.text.as_deref())))
    {
        Some(k) => Err(Error::Config(format!(
            "instance {k} of the second split also occurs in the first"
        ))),
        None => Ok(()),
    }
}
