use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::KnowledgeGraph;
use crate::error::{Error, Result};
use crate::graph::{to_levi, GraphOfTriplets, UnitKind};

/// Which triplets make up a sampled subgraph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubgraphMode {
    /// Only the sampled triplets.
    #[default]
    Sampled,
    /// Every knowledge-graph triplet between entities of the sampled ones.
    Induced,
}

/// Nested subgraphs around one seed triplet; `levels[k]` holds the
/// knowledge-graph indices of the radius-`k+1` graph, seed first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubgraphFamily {
    pub seed: usize,
    pub levels: Vec<Vec<usize>>,
}

/// Largest Levi distance from the seed's relation unit to any concept unit
/// of `triplets` (seed first). Relation units are left out: every new
/// triplet on the frontier would otherwise count as an extension.
fn seed_eccentricity(kg: &KnowledgeGraph, triplets: &[usize]) -> Result<usize> {
    let g = GraphOfTriplets::new(triplets.iter().map(|&i| kg.triplets()[i].clone()).collect())?;
    let lv = to_levi(&g)?;
    let (_, dist) = lv.bfs(lv.triplet_units[0][1]);
    Ok(lv
        .units
        .iter()
        .zip(&dist)
        .filter(|(u, _)| u.kind == UnitKind::Concept)
        .filter_map(|(_, d)| *d)
        .max()
        .unwrap_or(0))
}

/// Fails unless the seed is the only triplet joining its two entities.
pub fn check_seed(kg: &KnowledgeGraph, seed: usize) -> Result<()> {
    let t = kg.triplets().get(seed).ok_or(Error::TripletOutOfRange {
        index: seed,
        len: kg.len(),
    })?;
    match kg.connecting(&t.head, &t.tail) {
        1 => Ok(()),
        n => Err(Error::SeedSkipped(format!(
            "{} {} {}: {n} triplets connect its head and tail",
            t.head, t.relation, t.tail
        ))),
    }
}

/// Grows radius-1..=`r` subgraphs around `seed`. Each step visits the
/// current frontier entities in order and admits up to `per_entity` random
/// incident triplets per entity, keeping only those that raise the seed
/// relation's eccentricity. A step that admits nothing repeats the previous
/// graph.
pub fn sample_subgraph(
    kg: &KnowledgeGraph,
    seed: usize,
    r: usize,
    per_entity: usize,
    mode: SubgraphMode,
    rng: &mut impl Rng,
) -> Result<SubgraphFamily> {
    if r == 0 {
        return Err(Error::Config("radius must be at least 1".into()));
    }
    check_seed(kg, seed)?;
    let s = &kg.triplets()[seed];
    let mut current = vec![seed];
    let mut members: HashSet<usize> = HashSet::from([seed]);
    let mut entities: BTreeSet<&str> = BTreeSet::from([s.head.as_str(), s.tail.as_str()]);
    let mut frontier: Vec<&str> = vec![s.head.as_str(), s.tail.as_str()];
    let mut levels = vec![current.clone()];

    for _ in 1..r {
        let base = seed_eccentricity(kg, &current)?;
        let mut next_frontier = Vec::new();
        for &entity in &frontier {
            let mut candidates: Vec<usize> = kg
                .incident(entity)
                .iter()
                .copied()
                .filter(|i| !members.contains(i))
                .collect();
            candidates.shuffle(rng);
            let mut admitted = 0;
            for cand in candidates {
                if admitted == per_entity {
                    break;
                }
                let mut trial = current.clone();
                trial.push(cand);
                if seed_eccentricity(kg, &trial)? <= base {
                    continue;
                }
                current.push(cand);
                members.insert(cand);
                admitted += 1;
                let t = &kg.triplets()[cand];
                for e in [t.head.as_str(), t.tail.as_str()] {
                    if entities.insert(e) {
                        next_frontier.push(e);
                    }
                }
            }
        }
        if mode == SubgraphMode::Induced {
            for &e in &entities {
                for &i in kg.incident(e) {
                    let t = &kg.triplets()[i];
                    if !members.contains(&i) && entities.contains(t.head.as_str()) && entities.contains(t.tail.as_str())
                    {
                        members.insert(i);
                        current.push(i);
                    }
                }
            }
        }
        frontier = next_frontier;
        levels.push(current.clone());
    }
    Ok(SubgraphFamily { seed, levels })
}
