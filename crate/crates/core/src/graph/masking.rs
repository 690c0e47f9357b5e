use std::collections::HashMap;

use super::levi::{to_levi, UnitKind};
use super::{sentinel, sentinel_index, GraphOfTriplets, NUM_SENTINELS};
use crate::error::{Error, Result};

/// Replaces the relation of triplet `index` with the first mask sentinel and
/// marks it as the prediction target.
pub fn mask_target_relation(g: &GraphOfTriplets, index: usize) -> Result<GraphOfTriplets> {
    if index >= g.len() {
        return Err(Error::TripletOutOfRange { index, len: g.len() });
    }
    if sentinel_index(&g.triplets[index].relation).is_some() {
        return Err(Error::AlreadyMasked(index));
    }
    let mut triplets = g.triplets.clone();
    triplets[index].relation = sentinel(0);
    GraphOfTriplets::with_target(triplets, index)
}

/// Levi units within hop distance `m` of the target relation unit, in
/// breadth-first order. The target relation unit itself comes first.
pub fn masked_units(g: &GraphOfTriplets, m: usize) -> Result<Vec<usize>> {
    let target = g.target.ok_or(Error::NoTarget)?;
    let lv = to_levi(g)?;
    let start = lv.triplet_units[target][1];
    let (order, dist) = lv.bfs(start);
    Ok(order.into_iter().filter(|&u| dist[u].is_some_and(|d| d <= m)).collect())
}

/// Masks every Levi unit within distance `m` of the target relation, giving
/// each one its own sentinel in breadth-first order.
pub fn mask_subgraph(g: &GraphOfTriplets, m: usize) -> Result<GraphOfTriplets> {
    let target = g.target.ok_or(Error::NoTarget)?;
    let lv = to_levi(g)?;
    let units = masked_units(g, m)?;

    // Fresh sentinels start after any already present in the graph.
    let first_free = lv
        .units
        .iter()
        .filter_map(|u| sentinel_index(&u.text))
        .max()
        .map_or(1, |k| k + 1);
    let fresh: Vec<usize> = units
        .iter()
        .copied()
        .filter(|&u| u != lv.triplet_units[target][1])
        .collect();
    if first_free + fresh.len() > NUM_SENTINELS {
        return Err(Error::SentinelsExhausted {
            needed: first_free + fresh.len(),
            available: NUM_SENTINELS,
        });
    }

    let mut concept_names: HashMap<&str, String> = HashMap::new();
    let mut relation_names: HashMap<usize, String> = HashMap::new();
    for (k, &u) in fresh.iter().enumerate() {
        let name = sentinel(first_free + k);
        let unit = &lv.units[u];
        match unit.kind {
            UnitKind::Concept => {
                concept_names.insert(unit.text.as_str(), name);
            }
            UnitKind::Relation => {
                relation_names.insert(unit.triplets[0], name);
            }
        }
    }

    let rename = |text: &str| concept_names.get(text).cloned().unwrap_or_else(|| text.to_string());
    let triplets = g
        .triplets
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let mut t = t.clone();
            t.head = rename(&t.head);
            t.tail = rename(&t.tail);
            if let Some(name) = relation_names.get(&i) {
                t.relation = name.clone();
            }
            t
        })
        .collect();
    let mut out = GraphOfTriplets::with_target(triplets, target)?;
    out.mask_level = Some(m);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Triplet;

    fn fig2a_target() -> GraphOfTriplets {
        let g = GraphOfTriplets::new(vec![
            Triplet::new("black poodle", "is a", "dog"),
            Triplet::new("dog", "is a", "animal"),
            Triplet::new("cat", "is a", "animal"),
        ])
        .unwrap();
        mask_target_relation(&g, 1).unwrap()
    }

    #[test]
    fn target_relation_masked() {
        let g = fig2a_target();
        assert_eq!(g.triplets()[1], Triplet::new("dog", "<mask0>", "animal"));
        assert_eq!(g.triplets()[0].relation, "is a");
        assert_eq!(g.target(), Some(1));
    }

    #[test]
    fn target_errors() {
        let g = fig2a_target();
        assert!(matches!(
            mask_target_relation(&g, 5),
            Err(Error::TripletOutOfRange { index: 5, len: 3 })
        ));
        assert!(matches!(mask_target_relation(&g, 1), Err(Error::AlreadyMasked(1))));
        let single = GraphOfTriplets::new(vec![Triplet::new("a", "r", "b")]).unwrap();
        assert_eq!(mask_target_relation(&single, 0).unwrap().target(), Some(0));
    }

    #[test]
    fn subgraph_levels() {
        let g = fig2a_target();
        let m0 = mask_subgraph(&g, 0).unwrap();
        assert_eq!(m0.triplets(), g.triplets());
        assert_eq!(m0.mask_level(), Some(0));

        let m1 = mask_subgraph(&g, 1).unwrap();
        assert_eq!(m1.triplets()[1], Triplet::new("<mask1>", "<mask0>", "<mask2>"));
        assert_eq!(m1.triplets()[0], Triplet::new("black poodle", "is a", "<mask1>"));
        assert_eq!(m1.triplets()[2], Triplet::new("cat", "is a", "<mask2>"));

        let m2 = mask_subgraph(&g, 2).unwrap();
        assert_eq!(m2.triplets()[0], Triplet::new("black poodle", "<mask3>", "<mask1>"));
        assert_eq!(m2.triplets()[2], Triplet::new("cat", "<mask4>", "<mask2>"));

        let m3 = mask_subgraph(&g, 3).unwrap();
        assert!(m3.triplets().iter().all(|t| [&t.head, &t.relation, &t.tail]
            .iter()
            .all(|s| sentinel_index(s).is_some())));
    }

    #[test]
    fn subgraph_requires_target() {
        let g = GraphOfTriplets::new(vec![Triplet::new("a", "r", "b")]).unwrap();
        assert!(matches!(mask_subgraph(&g, 1), Err(Error::NoTarget)));
    }

    #[test]
    fn sentinel_supply_is_bounded() {
        // Star of 120 leaves around the head: m=2 needs 1 + 1 + 120 sentinels.
        let mut triplets = vec![Triplet::new("hub", "r", "x")];
        triplets.extend((0..120).map(|i| Triplet::new("hub", "s", format!("leaf{i}"))));
        let g = mask_target_relation(&GraphOfTriplets::new(triplets).unwrap(), 0).unwrap();
        assert!(mask_subgraph(&g, 1).is_ok());
        assert!(matches!(mask_subgraph(&g, 2), Err(Error::SentinelsExhausted { .. })));
    }
}
