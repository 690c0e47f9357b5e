use proptest::prelude::*;

use super::*;
use crate::graph::{to_levi, tokenize_levi, GraphOfTriplets, Triplet};
use crate::tokenizer::{Tokenizer, WhitespaceTokenizer};

fn elg_of(triplets: Vec<Triplet>) -> ExtendedLeviGraph {
    let g = GraphOfTriplets::new(triplets).unwrap();
    let tok = WhitespaceTokenizer::fit([g.linearize().as_str()], 1000);
    tokenize_levi(&to_levi(&g).unwrap(), &tok).unwrap()
}

fn fig2a() -> ExtendedLeviGraph {
    elg_of(vec![
        Triplet::new("black poodle", "is a", "dog"),
        Triplet::new("dog", "is a", "animal"),
        Triplet::new("cat", "is a", "animal"),
    ])
}

// Token layout of fig2a: black poodle is a dog is a animal cat is a
const BLACK: usize = 0;
const DOG: usize = 4;
const ANIMAL: usize = 7;
const CAT: usize = 8;

fn index_of(elg: &ExtendedLeviGraph, surface: &str) -> usize {
    elg.tokens.iter().position(|t| t.surface == surface).unwrap()
}

#[test]
fn fig2a_layout() {
    let elg = fig2a();
    assert_eq!(index_of(&elg, "black"), BLACK);
    assert_eq!(index_of(&elg, "dog"), DOG);
    assert_eq!(index_of(&elg, "animal"), ANIMAL);
    assert_eq!(index_of(&elg, "cat"), CAT);
}

#[test]
fn fig2a_distances() {
    let elg = fig2a();
    let d = triplet_relative_positions(&elg);
    assert_eq!(d[&(DOG, ANIMAL)], 3);
    assert_eq!(d[&(DOG, BLACK)], -4);
    assert_eq!(d[&(DOG, DOG)], 0);
    // Both "a" tokens sit directly left of "animal".
    let left: Vec<usize> = (0..elg.len()).filter(|&j| d.get(&(ANIMAL, j)) == Some(&-1)).collect();
    assert_eq!(left.len(), 2);
    assert!(left.iter().all(|&j| elg.tokens[j].surface == "a"));
    assert!(!d.contains_key(&(DOG, CAT)));
}

#[test]
fn local_plan() {
    let elg = fig2a();
    let plan = build_local(&elg);
    assert!(!plan.attends(DOG, CAT));
    assert_eq!(plan.position(DOG, CAT), RelativePosition::None);
    assert!(plan.attends(DOG, ANIMAL));
    assert_eq!(plan.mask()[[DOG, CAT]], MASKED);
    assert_eq!(plan.mask()[[DOG, ANIMAL]], 0.0);

    let single = build_local(&elg_of(vec![Triplet::new("a b", "r s", "c")]));
    assert!(single.attend().iter().all(|&a| a));

    let disjoint = build_local(&elg_of(vec![Triplet::new("a", "r", "b"), Triplet::new("c", "s", "d")]));
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(disjoint.attends(i, j), (i < 3) == (j < 3), "({i},{j})");
        }
    }
}

#[test]
fn global_plan() {
    let elg = fig2a();
    let plan = build_global(&elg);
    assert_eq!(plan.position(DOG, CAT), RelativePosition::G2G);
    assert_eq!(plan.position(CAT, BLACK), RelativePosition::G2G);
    assert_eq!(plan.position(BLACK, CAT), RelativePosition::G2G);
    assert!(plan.attend().iter().all(|&a| a));

    let single = elg_of(vec![Triplet::new("a b", "r", "c")]);
    assert!(build_global(&single).same_matrices(&build_local(&single)));
}

#[test]
fn parallel_relations_take_the_nearest_distance() {
    // "A r B" and "A s t u B": A->B is +2 in one span and +4 in the other.
    let elg = elg_of(vec![Triplet::new("A", "r", "B"), Triplet::new("A", "s t u", "B")]);
    let a = index_of(&elg, "A");
    let b = index_of(&elg, "B");
    let plan = build_local(&elg);
    assert_eq!(plan.position(a, b), RelativePosition::Distance(2));
    assert_eq!(plan.position(b, a), RelativePosition::Distance(-2));
}

#[test]
fn opposite_edges_stay_antisymmetric() {
    let elg = elg_of(vec![Triplet::new("A", "r", "B"), Triplet::new("B", "s", "A")]);
    let a = index_of(&elg, "A");
    let b = index_of(&elg, "B");
    let plan = build_local(&elg);
    let (RelativePosition::Distance(ab), RelativePosition::Distance(ba)) = (plan.position(a, b), plan.position(b, a))
    else {
        panic!("expected distances");
    };
    assert_eq!(ab.abs(), 2);
    assert_eq!(ab, -ba);
}

#[test]
fn joint_plan() {
    let elg = fig2a();
    let plan = build_joint(Some(&elg), 6, Variant::Local);
    assert_eq!(plan.len(), 17);
    for i in 0..17 {
        for j in 0..17 {
            let expected = match (i < 6, j < 6) {
                (true, false) => Some(RelativePosition::T2G),
                (false, true) => Some(RelativePosition::G2T),
                _ => None,
            };
            if let Some(e) = expected {
                assert_eq!(plan.position(i, j), e);
                assert!(plan.attends(i, j));
            }
        }
    }
    assert_eq!(plan.position(0, 2), RelativePosition::Distance(2));
    assert_eq!(plan.position(2, 0), RelativePosition::Distance(-2));
    assert!(!plan.attends(6 + DOG, 6 + CAT));
    assert_eq!(&plan.segments()[..6], &[Segment::Text; 6]);

    assert!(build_joint(None, 3, Variant::Global).same_matrices(&sequence_plan(3)));
    assert_eq!(build_joint(None, 3, Variant::Global).kind(), PlanKind::Sequence);

    let fallback = build_joint(Some(&elg), 0, Variant::Global);
    assert!(fallback.fell_back_to_graph);
    assert!(fallback.same_matrices(&build_global(&elg)));
}

#[test]
fn sequence_distances() {
    let plan = sequence_plan(3);
    assert_eq!(plan.position(0, 2), RelativePosition::Distance(2));
    assert_eq!(plan.position(2, 0), RelativePosition::Distance(-2));
}

#[test]
fn permutation_examples() {
    let plan = build_global(&fig2a());
    let id: Vec<usize> = (0..plan.len()).collect();
    assert_eq!(permute_plan(&plan, &id).unwrap(), plan);

    let mut swap = id.clone();
    swap.swap(DOG, CAT);
    let p = permute_plan(&plan, &swap).unwrap();
    for a in 0..plan.len() {
        for b in 0..plan.len() {
            assert_eq!(p.position(a, b), plan.position(swap[a], swap[b]));
        }
    }

    let rev = permute_plan(&sequence_plan(3), &[2, 1, 0]).unwrap();
    assert_eq!(rev.position(0, 2), RelativePosition::Distance(-2));
    assert_eq!(rev.position(2, 0), RelativePosition::Distance(2));
    assert_eq!(rev.position(0, 1), RelativePosition::Distance(-1));
    assert_eq!(rev.position(1, 2), RelativePosition::Distance(-1));

    assert!(matches!(
        permute_plan(&plan, &[0, 0, 1]),
        Err(Error::NotAPermutation(_))
    ));
    let mut dup = id.clone();
    dup[0] = 1;
    assert!(matches!(permute_plan(&plan, &dup), Err(Error::NotAPermutation(_))));
}

#[test]
fn binary_export_round_trip() {
    let plan = build_local(&fig2a());
    let table = BucketTable::default();
    let mut buf = Vec::new();
    write_plan_binary(&plan, &table, &mut buf).unwrap();
    assert_eq!(buf.len(), 8 + 5 * 11 * 11);
    assert_eq!(&buf[..4], &11u32.to_le_bytes());
    let (kind, buckets, mask) = read_plan_binary(buf.as_slice()).unwrap();
    assert_eq!(kind, PlanKind::Local);
    assert_eq!(&mask, plan.attend());
    assert_eq!(buckets[[DOG, ANIMAL]], Some(table.distance_bucket(3) as u32));
    assert_eq!(buckets[[DOG, CAT]], None);

    let json = PlanJson::new(&build_global(&fig2a()), &table);
    assert_eq!(json.positions[DOG][CAT], "G2G");
    assert_eq!(json.buckets[DOG][CAT], Some(32));
    assert_eq!(json.positions[DOG][BLACK], "-4");
}

const WORDS: [&str; 8] = ["dog", "cat", "big", "red", "house", "tree", "old", "car"];

fn arb_graph() -> impl Strategy<Value = Vec<Triplet>> {
    let phrase = |max: usize| proptest::collection::vec(0..WORDS.len(), 1..=max);
    proptest::collection::vec((0..6usize, phrase(3), 0..6usize), 1..7).prop_map(move |raw| {
        let concept = |c: usize| format!("c{c} {}", WORDS[c]);
        let mut out: Vec<Triplet> = Vec::new();
        for (h, rel, t) in raw {
            if h == t {
                continue;
            }
            let rel = rel.iter().map(|&w| WORDS[w]).collect::<Vec<_>>().join(" ");
            let trip = Triplet::new(concept(h), rel, concept(t));
            if !out.contains(&trip) {
                out.push(trip);
            }
        }
        if out.is_empty() {
            out.push(Triplet::new("c0 dog", "is", "c1 cat"));
        }
        out
    })
}

proptest! {
    #[test]
    fn antisymmetry_and_diagonal(triplets in arb_graph()) {
        let elg = elg_of(triplets);
        for plan in [build_local(&elg), build_global(&elg)] {
            for i in 0..plan.len() {
                prop_assert_eq!(plan.position(i, i), RelativePosition::Distance(0));
                prop_assert!(plan.attends(i, i));
                for j in 0..plan.len() {
                    prop_assert_eq!(plan.attends(i, j), plan.attends(j, i));
                    if !plan.attends(i, j) {
                        prop_assert_eq!(plan.position(i, j), RelativePosition::None);
                    }
                    if let (RelativePosition::Distance(a), RelativePosition::Distance(b)) =
                        (plan.position(i, j), plan.position(j, i))
                    {
                        prop_assert_eq!(a, -b);
                    }
                }
            }
        }
    }

    #[test]
    fn local_and_global_agree_where_local_attends(triplets in arb_graph()) {
        let elg = elg_of(triplets);
        let local = build_local(&elg);
        let global = build_global(&elg);
        prop_assert!(global.attend().iter().all(|&a| a));
        for i in 0..local.len() {
            for j in 0..local.len() {
                if local.attends(i, j) {
                    prop_assert_eq!(local.position(i, j), global.position(i, j));
                } else {
                    prop_assert_eq!(global.position(i, j), RelativePosition::G2G);
                }
            }
        }
    }

    #[test]
    fn single_span_is_a_sequence(n in 1usize..40) {
        let words: Vec<String> = (0..n).map(|i| format!("w{i}")).collect();
        let tok = WhitespaceTokenizer::fit(words.iter().map(String::as_str), 1000);
        let ids = tok.encode(&words.join(" "));
        let elg = ExtendedLeviGraph::single_span(&ids, &tok);
        let plan = build_local(&elg);
        let expected = PositionPlan { segments: vec![Segment::Graph; n], ..sequence_plan(n) };
        prop_assert!(plan.same_matrices(&expected));
    }

    #[test]
    fn bucket_monotone(d1 in 0i32..400, extra in 0i32..400) {
        let table = BucketTable::default();
        let d2 = d1 + extra;
        prop_assert!(table.distance_bucket(d1) <= table.distance_bucket(d2));
        prop_assert!(table.distance_bucket(-d1) <= table.distance_bucket(-d2));
        if d1 >= 128 {
            prop_assert_eq!(table.distance_bucket(d1), table.positive_infinity());
        }
    }

    #[test]
    fn permutation_commutes_with_bucketing(triplets in arb_graph(), seed in any::<u64>(), global in any::<bool>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let elg = elg_of(triplets);
        let plan = if global { build_global(&elg) } else { build_local(&elg) };
        let mut perm: Vec<usize> = (0..plan.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let table = BucketTable::default();
        let permuted = permute_plan(&plan, &perm).unwrap().buckets(&table);
        let buckets = plan.buckets(&table);
        for a in 0..plan.len() {
            for b in 0..plan.len() {
                prop_assert_eq!(permuted[[a, b]], buckets[[perm[a], perm[b]]]);
            }
        }
    }
}
