use std::collections::{HashMap, VecDeque};
use std::ops::Range;

use serde::Serialize;

use super::GraphOfTriplets;
use crate::error::{Error, Result};
use crate::tokenizer::{TokenId, Tokenizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitKind {
    Concept,
    Relation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unit {
    pub kind: UnitKind,
    pub text: String,
    /// Indices of the triplets this unit takes part in.
    pub triplets: Vec<usize>,
}

/// Levi graph: concepts deduplicated by exact text, one relation unit per
/// triplet, edges `head -> relation -> tail`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LeviGraph {
    pub units: Vec<Unit>,
    pub edges: Vec<(usize, usize)>,
    /// `[head, relation, tail]` unit ids per triplet.
    pub triplet_units: Vec<[usize; 3]>,
}

pub fn to_levi(g: &GraphOfTriplets) -> Result<LeviGraph> {
    if g.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let mut units: Vec<Unit> = Vec::new();
    let mut concept_ids: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::with_capacity(2 * g.len());
    let mut triplet_units = Vec::with_capacity(g.len());

    let mut concept = |units: &mut Vec<Unit>, text: &str, t: usize| -> usize {
        let id = *concept_ids.entry(text.to_string()).or_insert_with(|| {
            units.push(Unit {
                kind: UnitKind::Concept,
                text: text.to_string(),
                triplets: Vec::new(),
            });
            units.len() - 1
        });
        units[id].triplets.push(t);
        id
    };

    for (t, triplet) in g.triplets().iter().enumerate() {
        let head = concept(&mut units, &triplet.head, t);
        units.push(Unit {
            kind: UnitKind::Relation,
            text: triplet.relation.clone(),
            triplets: vec![t],
        });
        let rel = units.len() - 1;
        let tail = concept(&mut units, &triplet.tail, t);
        edges.push((head, rel));
        edges.push((rel, tail));
        triplet_units.push([head, rel, tail]);
    }
    Ok(LeviGraph {
        units,
        edges,
        triplet_units,
    })
}

impl LeviGraph {
    pub fn concept_count(&self) -> usize {
        self.units.iter().filter(|u| u.kind == UnitKind::Concept).count()
    }

    pub fn relation_count(&self) -> usize {
        self.units.iter().filter(|u| u.kind == UnitKind::Relation).count()
    }

    /// Undirected adjacency lists, neighbours sorted by unit id.
    pub fn neighbours(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.units.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        adj
    }

    /// Breadth-first order and undirected hop distance from `start`.
    /// Unreachable units are absent from the order and `None` in distances.
    pub fn bfs(&self, start: usize) -> (Vec<usize>, Vec<Option<usize>>) {
        let adj = self.neighbours();
        let mut dist = vec![None; self.units.len()];
        let mut order = Vec::new();
        let mut queue = VecDeque::new();
        dist[start] = Some(0);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            order.push(u);
            let d = dist[u].unwrap_or(0);
            for &v in &adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        (order, dist)
    }

    /// Largest hop distance from `start` to any reachable unit.
    pub fn eccentricity(&self, start: usize) -> usize {
        self.bfs(start).1.into_iter().flatten().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TokenNode {
    pub id: TokenId,
    pub surface: String,
    pub unit: usize,
    pub offset: usize,
}

/// One node per token. Tokens are laid out unit by unit in Levi order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtendedLeviGraph {
    pub tokens: Vec<TokenNode>,
    /// Per triplet: head tokens, relation tokens, tail tokens.
    pub triplet_spans: Vec<Vec<usize>>,
    pub edges: Vec<(usize, usize)>,
    pub unit_tokens: Vec<Range<usize>>,
}

pub fn tokenize_levi(lv: &LeviGraph, tok: &dyn Tokenizer) -> Result<ExtendedLeviGraph> {
    let mut tokens = Vec::new();
    let mut unit_tokens = Vec::with_capacity(lv.units.len());
    for (u, unit) in lv.units.iter().enumerate() {
        let ids = tok.encode(&unit.text);
        if ids.is_empty() {
            return Err(Error::EmptyUnit {
                unit: u,
                text: unit.text.clone(),
            });
        }
        let start = tokens.len();
        for (offset, id) in ids.into_iter().enumerate() {
            tokens.push(TokenNode {
                id,
                surface: tok.surface(id),
                unit: u,
                offset,
            });
        }
        unit_tokens.push(start..tokens.len());
    }

    let mut edges = Vec::new();
    for range in &unit_tokens {
        edges.extend(range.clone().zip(range.clone().skip(1)));
    }
    for &(a, b) in &lv.edges {
        edges.push((unit_tokens[a].end - 1, unit_tokens[b].start));
    }

    let triplet_spans = lv
        .triplet_units
        .iter()
        .map(|units| units.iter().flat_map(|&u| unit_tokens[u].clone()).collect())
        .collect();

    Ok(ExtendedLeviGraph {
        tokens,
        triplet_spans,
        edges,
        unit_tokens,
    })
}

impl ExtendedLeviGraph {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token_ids(&self) -> Vec<TokenId> {
        self.tokens.iter().map(|t| t.id).collect()
    }

    /// Wraps a plain token sequence as a one-triplet graph whose single span
    /// covers every token in order.
    pub fn single_span(ids: &[TokenId], tok: &dyn Tokenizer) -> Self {
        let tokens = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| TokenNode {
                id,
                surface: tok.surface(id),
                unit: 0,
                offset: i,
            })
            .collect();
        let n = ids.len();
        Self {
            tokens,
            triplet_spans: vec![(0..n).collect()],
            edges: (0..n).zip(1..n).collect(),
            unit_tokens: std::iter::once(0..n).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triplet;
    use crate::tokenizer::WhitespaceTokenizer;

    pub(crate) fn fig2a() -> GraphOfTriplets {
        GraphOfTriplets::new(vec![
            Triplet::new("black poodle", "is a", "dog"),
            Triplet::new("dog", "is a", "animal"),
            Triplet::new("cat", "is a", "animal"),
        ])
        .unwrap()
    }

    #[test]
    fn levi_of_fig2a() {
        let lv = to_levi(&fig2a()).unwrap();
        assert_eq!(lv.concept_count(), 4);
        assert_eq!(lv.relation_count(), 3);
        assert_eq!(lv.edges.len(), 6);
        let animal = lv.units.iter().find(|u| u.text == "animal").unwrap();
        assert_eq!(animal.triplets, vec![1, 2]);
    }

    #[test]
    fn levi_minimal_and_parallel() {
        let g = GraphOfTriplets::new(vec![Triplet::new("A", "r", "B")]).unwrap();
        let lv = to_levi(&g).unwrap();
        assert_eq!((lv.concept_count(), lv.relation_count(), lv.edges.len()), (2, 1, 2));

        let g = GraphOfTriplets::new(vec![Triplet::new("A", "r1", "B"), Triplet::new("A", "r2", "B")]).unwrap();
        let lv = to_levi(&g).unwrap();
        assert_eq!((lv.concept_count(), lv.relation_count(), lv.edges.len()), (2, 2, 4));
    }

    #[test]
    fn empty_graph_rejected() {
        let g = GraphOfTriplets::new(vec![]).unwrap();
        assert!(matches!(to_levi(&g), Err(Error::EmptyGraph)));
    }

    #[test]
    fn extended_levi_of_fig2a() {
        let g = fig2a();
        let tok = WhitespaceTokenizer::fit([g.linearize().as_str()], 1000);
        let elg = tokenize_levi(&to_levi(&g).unwrap(), &tok).unwrap();
        assert_eq!(elg.len(), 11);
        let span: Vec<&str> = elg.triplet_spans[1]
            .iter()
            .map(|&i| elg.tokens[i].surface.as_str())
            .collect();
        assert_eq!(span, ["dog", "is", "a", "animal"]);
        // 4 intra-unit edges ("black poodle" and three "is a") + 6 Levi edges.
        assert_eq!(elg.edges.len(), 10);
    }

    #[test]
    fn masked_relation_is_one_sentinel_token() {
        let g = GraphOfTriplets::with_target(vec![Triplet::new("dog", "<mask0>", "big animal")], 0).unwrap();
        let tok = WhitespaceTokenizer::fit(["dog big animal"], 1000);
        let elg = tokenize_levi(&to_levi(&g).unwrap(), &tok).unwrap();
        let ids: Vec<TokenId> = elg.triplet_spans[0].iter().map(|&i| elg.tokens[i].id).collect();
        assert_eq!(ids.len(), 4);
        assert_eq!(ids[1], tok.mask_ids()[0]);
        assert_eq!(ids.iter().filter(|&&id| id == tok.mask_ids()[0]).count(), 1);
    }

    #[test]
    fn zero_token_unit_is_named() {
        struct Nothing;
        impl Tokenizer for Nothing {
            fn vocab_size(&self) -> usize {
                1
            }
            fn mask_ids(&self) -> &[TokenId] {
                &[]
            }
            fn eos_id(&self) -> Option<TokenId> {
                None
            }
            fn encode(&self, _: &str) -> Vec<TokenId> {
                Vec::new()
            }
            fn surface(&self, _: TokenId) -> String {
                String::new()
            }
        }
        let g = GraphOfTriplets::new(vec![Triplet::new("A", "r", "B")]).unwrap();
        let err = tokenize_levi(&to_levi(&g).unwrap(), &Nothing).unwrap_err();
        assert!(err.to_string().contains("`A`"));
    }
}
