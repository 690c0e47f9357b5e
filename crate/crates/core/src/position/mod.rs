//! Relative-position (P) and attention-mask (M) plans.
//!
//! Tokens of the same triplet see each other at their signed distance inside
//! that triplet's token span. What happens between tokens that share no span
//! depends on the variant: the local variant masks the pair out, the global
//! variant relates it through the G2G sentinel. Joint plans add a text
//! segment, related to graph tokens through T2G / G2T.

mod bucket;
mod export;

pub use bucket::BucketTable;
pub use export::{read_plan_binary, write_plan_binary, PlanJson};

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::ExtendedLeviGraph;

/// Additive mask value for forbidden pairs. Large enough that softmax gives
/// exactly zero weight in single precision, small enough to stay finite.
pub const MASKED: f32 = -1e9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum RelativePosition {
    Distance(i32),
    G2G,
    T2G,
    G2T,
    #[default]
    None,
}

impl fmt::Display for RelativePosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Distance(d) => write!(f, "{d}"),
            Self::G2G => f.write_str("G2G"),
            Self::T2G => f.write_str("T2G"),
            Self::G2T => f.write_str("G2T"),
            Self::None => f.write_str("-"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Local,
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlanKind {
    Local,
    Global,
    Sequence,
}

impl From<Variant> for PlanKind {
    fn from(v: Variant) -> Self {
        match v {
            Variant::Local => Self::Local,
            Variant::Global => Self::Global,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Graph,
    Text,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositionPlan {
    positions: Array2<RelativePosition>,
    attend: Array2<bool>,
    segments: Vec<Segment>,
    kind: PlanKind,
    /// Set when a joint plan was requested without text.
    pub fell_back_to_graph: bool,
}

impl PositionPlan {
    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn kind(&self) -> PlanKind {
        self.kind
    }

    pub fn position(&self, i: usize, j: usize) -> RelativePosition {
        self.positions[[i, j]]
    }

    pub fn positions(&self) -> &Array2<RelativePosition> {
        &self.positions
    }

    pub fn attends(&self, i: usize, j: usize) -> bool {
        self.attend[[i, j]]
    }

    pub fn attend(&self) -> &Array2<bool> {
        &self.attend
    }

    /// M as additive values: 0 where attention is allowed, [`MASKED`] elsewhere.
    pub fn mask(&self) -> Array2<f32> {
        self.attend.mapv(|a| if a { 0.0 } else { MASKED })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Bucket ids for every pair; masked pairs get `None`.
    pub fn buckets(&self, table: &BucketTable) -> Array2<Option<usize>> {
        self.positions.mapv(|rp| table.bucketize(rp).ok())
    }

    /// Same content, ignoring the fallback flag and plan kind.
    pub fn same_matrices(&self, other: &Self) -> bool {
        self.positions == other.positions && self.attend == other.attend && self.segments == other.segments
    }
}

/// Signed within-span distance for every token pair sharing at least one
/// triplet span. A pair found in several spans keeps the distance with the
/// smallest magnitude; if `+d` and `-d` both occur the sign is taken so that
/// the token with the smaller (unit text, offset) key sees the other at `+d`,
/// which keeps the result antisymmetric.
pub fn triplet_relative_positions(elg: &ExtendedLeviGraph) -> BTreeMap<(usize, usize), i32> {
    let key = |i: usize| {
        let t = &elg.tokens[i];
        (
            elg.unit_tokens[t.unit]
                .clone()
                .map(|k| elg.tokens[k].id)
                .collect::<Vec<_>>(),
            t.unit,
            t.offset,
        )
    };
    let mut out: BTreeMap<(usize, usize), i32> = BTreeMap::new();
    for span in &elg.triplet_spans {
        for (a, &i) in span.iter().enumerate() {
            for (b, &j) in span.iter().enumerate() {
                let d = b as i32 - a as i32;
                out.entry((i, j))
                    .and_modify(|cur| {
                        if d.abs() < cur.abs() {
                            *cur = d;
                        } else if d.abs() == cur.abs() && d != *cur {
                            *cur = if key(i) < key(j) { d.abs() } else { -d.abs() };
                        }
                    })
                    .or_insert(d);
            }
        }
    }
    out
}

fn graph_plan(elg: &ExtendedLeviGraph, variant: Variant) -> PositionPlan {
    let n = elg.len();
    let distances = triplet_relative_positions(elg);
    let (fill, attend_default) = match variant {
        Variant::Local => (RelativePosition::None, false),
        Variant::Global => (RelativePosition::G2G, true),
    };
    let mut positions = Array2::from_elem((n, n), fill);
    let mut attend = Array2::from_elem((n, n), attend_default);
    for (&(i, j), &d) in &distances {
        positions[[i, j]] = RelativePosition::Distance(d);
        attend[[i, j]] = true;
    }
    for i in 0..n {
        positions[[i, i]] = RelativePosition::Distance(0);
        attend[[i, i]] = true;
    }
    PositionPlan {
        positions,
        attend,
        segments: vec![Segment::Graph; n],
        kind: variant.into(),
        fell_back_to_graph: false,
    }
}

/// Attention restricted to tokens of a common triplet.
pub fn build_local(elg: &ExtendedLeviGraph) -> PositionPlan {
    graph_plan(elg, Variant::Local)
}

/// Every pair attends; pairs without a common triplet use G2G.
pub fn build_global(elg: &ExtendedLeviGraph) -> PositionPlan {
    graph_plan(elg, Variant::Global)
}

pub fn build_graph(elg: &ExtendedLeviGraph, variant: Variant) -> PositionPlan {
    graph_plan(elg, variant)
}

/// Plain left-to-right text: P[i][j] = j - i, nothing masked.
pub fn sequence_plan(n: usize) -> PositionPlan {
    PositionPlan {
        positions: Array2::from_shape_fn((n, n), |(i, j)| RelativePosition::Distance(j as i32 - i as i32)),
        attend: Array2::from_elem((n, n), true),
        segments: vec![Segment::Text; n],
        kind: PlanKind::Sequence,
        fell_back_to_graph: false,
    }
}

/// Text followed by graph. `text_len` counts text tokens, which occupy
/// indices `0..text_len`; graph tokens follow in Levi order.
pub fn build_joint(elg: Option<&ExtendedLeviGraph>, text_len: usize, variant: Variant) -> PositionPlan {
    let elg = match elg {
        Some(e) if !e.is_empty() => e,
        _ => return sequence_plan(text_len),
    };
    let graph = graph_plan(elg, variant);
    if text_len == 0 {
        log::warn!("joint plan requested without text; using the graph-only plan");
        return PositionPlan {
            fell_back_to_graph: true,
            ..graph
        };
    }
    let g = elg.len();
    let n = text_len + g;
    let mut positions = Array2::from_elem((n, n), RelativePosition::None);
    let mut attend = Array2::from_elem((n, n), true);
    for i in 0..n {
        for j in 0..n {
            positions[[i, j]] = match (i < text_len, j < text_len) {
                (true, true) => RelativePosition::Distance(j as i32 - i as i32),
                (true, false) => RelativePosition::T2G,
                (false, true) => RelativePosition::G2T,
                (false, false) => {
                    attend[[i, j]] = graph.attend[[i - text_len, j - text_len]];
                    graph.positions[[i - text_len, j - text_len]]
                }
            };
        }
    }
    let mut segments = vec![Segment::Text; text_len];
    segments.extend(std::iter::repeat_n(Segment::Graph, g));
    PositionPlan {
        positions,
        attend,
        segments,
        kind: variant.into(),
        fell_back_to_graph: false,
    }
}

/// Checks that `perm` is a bijection on `0..n`.
pub fn validate_permutation(perm: &[usize], n: usize) -> Result<()> {
    if perm.len() != n {
        return Err(Error::NotAPermutation(n));
    }
    let mut seen = vec![false; n];
    for &p in perm {
        if p >= n || std::mem::replace(&mut seen[p], true) {
            return Err(Error::NotAPermutation(n));
        }
    }
    Ok(())
}

/// Reorders tokens: new position `a` holds old token `perm[a]`, so
/// `P'[a][b] = P[perm[a]][perm[b]]`.
pub fn permute_plan(plan: &PositionPlan, perm: &[usize]) -> Result<PositionPlan> {
    let n = plan.len();
    validate_permutation(perm, n)?;
    Ok(PositionPlan {
        positions: Array2::from_shape_fn((n, n), |(a, b)| plan.positions[[perm[a], perm[b]]]),
        attend: Array2::from_shape_fn((n, n), |(a, b)| plan.attend[[perm[a], perm[b]]]),
        segments: perm.iter().map(|&p| plan.segments[p]).collect(),
        kind: plan.kind,
        fell_back_to_graph: plan.fell_back_to_graph,
    })
}

#[cfg(test)]
mod tests;
