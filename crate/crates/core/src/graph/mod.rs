//! Graphs of triplets and their Levi-graph forms.
//!
//! A [`GraphOfTriplets`] is a set of verbalized `(head, relation, tail)` facts.
//! [`to_levi`] turns every relation into its own node between head and tail;
//! [`tokenize_levi`] then splits every node into one node per token, which is
//! the structure the encoder reads.

mod io;
mod levi;
mod masking;
mod verbalize;

pub use io::{read_graph, read_tsv, write_tsv, GraphFile};
pub use levi::{to_levi, tokenize_levi, ExtendedLeviGraph, LeviGraph, TokenNode, Unit, UnitKind};
pub use masking::{mask_subgraph, mask_target_relation, masked_units};
pub use verbalize::{verbalize_relation, KNOWN_RELATIONS, LABEL_RELATIONS};

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of mask sentinels available (`<mask0>` .. `<mask99>`).
pub const NUM_SENTINELS: usize = 100;

/// Surface text of the `k`-th mask sentinel.
pub fn sentinel(k: usize) -> String {
    format!("<mask{k}>")
}

/// Returns `Some(k)` if `text` is the `k`-th mask sentinel.
pub fn sentinel_index(text: &str) -> Option<usize> {
    let k: usize = text.strip_prefix("<mask")?.strip_suffix('>')?.parse().ok()?;
    (k < NUM_SENTINELS).then_some(k)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
}

impl Triplet {
    pub fn new(head: impl Into<String>, relation: impl Into<String>, tail: impl Into<String>) -> Self {
        Self {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        let bad = |reason: &str| Error::InvalidTriplet {
            index,
            reason: reason.to_string(),
        };
        for (field, name) in [(&self.head, "head"), (&self.relation, "relation"), (&self.tail, "tail")] {
            if field.trim().is_empty() {
                return Err(bad(&format!("{name} is empty")));
            }
        }
        if self.head == self.tail {
            return Err(bad("head and tail are the same concept"));
        }
        Ok(())
    }
}

/// An ordered, duplicate-free collection of triplets with an optional target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphFile", into = "GraphFile")]
pub struct GraphOfTriplets {
    triplets: Vec<Triplet>,
    target: Option<usize>,
    mask_level: Option<usize>,
}

impl GraphOfTriplets {
    pub fn new(triplets: Vec<Triplet>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(triplets.len());
        for (i, t) in triplets.iter().enumerate() {
            t.validate(i)?;
            if !seen.insert(t) {
                return Err(Error::DuplicateTriplet {
                    head: t.head.clone(),
                    relation: t.relation.clone(),
                    tail: t.tail.clone(),
                });
            }
        }
        Ok(Self {
            triplets,
            target: None,
            mask_level: None,
        })
    }

    /// Builds a graph whose target relation is already masked.
    pub fn with_target(triplets: Vec<Triplet>, target: usize) -> Result<Self> {
        let mut g = Self::new(triplets)?;
        if target >= g.len() {
            return Err(Error::TripletOutOfRange {
                index: target,
                len: g.len(),
            });
        }
        if sentinel_index(&g.triplets[target].relation) != Some(0) {
            return Err(Error::InvalidTriplet {
                index: target,
                reason: format!("target relation must be {}", sentinel(0)),
            });
        }
        g.target = Some(target);
        Ok(g)
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn target(&self) -> Option<usize> {
        self.target
    }

    pub fn mask_level(&self) -> Option<usize> {
        self.mask_level
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    /// Distinct concepts in first-appearance order.
    pub fn concepts(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for t in &self.triplets {
            for c in [t.head.as_str(), t.tail.as_str()] {
                if seen.insert(c) {
                    out.push(c);
                }
            }
        }
        out
    }

    /// Flattens the graph to text for sequence baselines: one
    /// `head relation tail` clause per triplet, joined by ` . `.
    pub fn linearize(&self) -> String {
        self.triplets
            .iter()
            .map(|t| format!("{} {} {}", t.head, t.relation, t.tail))
            .collect::<Vec<_>>()
            .join(" . ")
    }
}
