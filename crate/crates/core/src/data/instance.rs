use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{sentinel_index, GraphOfTriplets};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceLabel {
    Entailed,
    NotEntailed,
    NoRelation,
}

impl SourceLabel {
    pub const COUNT: usize = 3;

    pub fn index(self) -> usize {
        match self {
            Self::Entailed => 0,
            Self::NotEntailed => 1,
            Self::NoRelation => 2,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        [Self::Entailed, Self::NotEntailed, Self::NoRelation].get(i).copied()
    }
}

/// One classification example. The target triplet's relation is masked;
/// `relation_label` indexes the dataset's label list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabeledInstance {
    pub graph: GraphOfTriplets,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub relation_label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_label: Option<SourceLabel>,
    pub radius: usize,
    pub mask_level: usize,
}

impl LabeledInstance {
    /// Checks the masking and label-consistency rules. `no_relation` is the
    /// label index meaning "no relation", if the label set has one.
    pub fn validate(&self, num_labels: usize, no_relation: Option<usize>) -> Result<()> {
        let target = self.graph.target().ok_or(Error::NoTarget)?;
        if sentinel_index(&self.graph.triplets()[target].relation) != Some(0) {
            return Err(Error::InvalidTriplet {
                index: target,
                reason: "target relation is not masked".into(),
            });
        }
        if self.relation_label >= num_labels {
            return Err(Error::Label {
                label: self.relation_label,
                classes: num_labels,
            });
        }
        if let Some(source) = self.source_label {
            let rel_none = Some(self.relation_label) == no_relation;
            let src_none = source == SourceLabel::NoRelation;
            if rel_none != src_none {
                return Err(Error::InconsistentLabels(format!(
                    "relation label {} with source {:?}",
                    self.relation_label, source
                )));
            }
        }
        Ok(())
    }
}

/// Line-delimited JSON, one instance per line.
pub fn write_jsonl(instances: &[LabeledInstance], mut w: impl Write) -> Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(r: impl BufRead, origin: &str) -> Result<Vec<LabeledInstance>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}
