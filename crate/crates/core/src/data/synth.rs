use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LabeledInstance, SourceLabel, Splits};
use crate::error::{Error, Result};
use crate::graph::{GraphOfTriplets, Triplet};

/// Words whose presence decides the label of the graph-only tasks.
pub const LABEL_WORDS: [&str; 8] = ["red", "green", "blue", "yellow", "purple", "orange", "white", "black"];
/// Label-independent filler attached to the target's tail.
const SHAPE_WORDS: [&str; 8] = ["round", "square", "flat", "long", "small", "large", "soft", "hard"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GraphTask {
    /// The label word is the target triplet's tail.
    #[serde(rename = "1hop")]
    OneHop,
    /// The label word sits in a triplet hanging off the target's head.
    #[serde(rename = "2hop")]
    TwoHop,
}

impl std::str::FromStr for GraphTask {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "1hop" => Ok(Self::OneHop),
            "2hop" => Ok(Self::TwoHop),
            _ => Err(format!("unknown graph task '{s}' (expected 1hop or 2hop)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub classes: usize,
    pub num_entities: usize,
    /// Share of no-relation instances in the joint task.
    pub no_relation_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            train: 2000,
            dev: 400,
            test: 400,
            classes: 4,
            num_entities: 200,
            no_relation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn check(&self, max_classes: usize) -> Result<()> {
        if self.classes < 2 || self.classes > max_classes {
            return Err(Error::Config(format!(
                "classes must be in 2..={max_classes}, got {}",
                self.classes
            )));
        }
        if self.train < self.classes * 10 || self.dev == 0 || self.test == 0 {
            return Err(Error::Config(format!(
                "need at least {} training instances and non-empty dev and test splits",
                self.classes * 10
            )));
        }
        if self.num_entities < 4 {
            return Err(Error::Config("need at least 4 entities".into()));
        }
        if !(0.0..1.0).contains(&self.no_relation_fraction) {
            return Err(Error::Config("no_relation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

fn entity(rng: &mut impl Rng, n: usize) -> String {
    format!("e{}", rng.random_range(0..n))
}

fn distinct_entities(rng: &mut impl Rng, n: usize, k: usize) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(k);
    while out.len() < k {
        let e = entity(rng, n);
        if !out.contains(&e) {
            out.push(e);
        }
    }
    out
}

fn graph_instance(task: GraphTask, label: usize, cfg: &SynthConfig, rng: &mut impl Rng) -> Result<LabeledInstance> {
    let ents = distinct_entities(rng, cfg.num_entities, 2);
    let (head, tail) = (&ents[0], &ents[1]);
    let shape = *SHAPE_WORDS.choose(rng).expect("non-empty");
    let word = LABEL_WORDS[label];
    let triplets = match task {
        GraphTask::OneHop => vec![
            Triplet::new(head, "<mask0>", word),
            Triplet::new(head, "is near", tail),
            Triplet::new(tail, "has shape", shape),
        ],
        GraphTask::TwoHop => vec![
            Triplet::new(head, "<mask0>", tail),
            Triplet::new(head, "has color", word),
            Triplet::new(tail, "has shape", shape),
        ],
    };
    Ok(LabeledInstance {
        graph: GraphOfTriplets::with_target(triplets, 0)?,
        text: None,
        relation_label: label,
        source_label: None,
        radius: 2,
        mask_level: 0,
    })
}

/// Fills the three splits with distinct instances from `make`, each split
/// cycling through `labels` and then shuffled.
fn fill_splits(
    cfg: &SynthConfig,
    labels: &[usize],
    mut make: impl FnMut(usize, &mut ChaCha8Rng) -> Result<LabeledInstance>,
) -> Result<[Vec<LabeledInstance>; 3]> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen = HashSet::new();
    let mut out: [Vec<LabeledInstance>; 3] = Default::default();
    for (split, n) in out.iter_mut().zip([cfg.train, cfg.dev, cfg.test]) {
        for i in 0..n {
            let label = labels[i % labels.len()];
            let mut tries = 0;
            let inst = loop {
                let inst = make(label, &mut rng)?;
                let key = (inst.graph.linearize(), inst.text.clone());
                if seen.insert(key) {
                    break inst;
                }
                tries += 1;
                if tries > 1000 {
                    return Err(Error::Config("too few entities to make distinct instances".into()));
                }
            };
            split.push(inst);
        }
        split.shuffle(&mut rng);
    }
    Ok(out)
}

/// Balanced graph-only task over `cfg.classes` colour labels. No instance
/// appears twice across splits.
pub fn synth_graph_task(task: GraphTask, cfg: &SynthConfig) -> Result<Splits> {
    cfg.check(LABEL_WORDS.len())?;
    let labels: Vec<usize> = (0..cfg.classes).collect();
    let [train, dev, test] = fill_splits(cfg, &labels, |label, rng| graph_instance(task, label, cfg, rng))?;
    Ok(Splits {
        train,
        dev,
        test,
        labels: LABEL_WORDS[..cfg.classes].iter().map(|s| s.to_string()).collect(),
        no_relation: None,
    })
}

fn relation_word(k: usize) -> String {
    format!("rel{k}")
}

/// Text plus graph with relation and source labels. Relations `rel0..`
/// are stated in the text for entailed instances and appear only as a
/// two-step path between head and tail for not-entailed ones. The
/// no-relation share adds a masked edge between otherwise unconnected
/// entities. Labels are `rel0..rel{n-1}` then `no-relation`.
pub fn synth_joint_task(num_relations: usize, cfg: &SynthConfig) -> Result<Splits> {
    if num_relations < 2 {
        return Err(Error::Config(format!("need at least 2 relations, got {num_relations}")));
    }
    let cfg = SynthConfig {
        classes: num_relations + 1,
        ..cfg.clone()
    };
    cfg.check(usize::MAX)?;
    let none = num_relations;
    // Label per instance position: no-relation spread evenly at the given
    // rate, relations cycling through the remaining positions.
    let f = cfg.no_relation_fraction;
    let mut next_rel = 0;
    let slots: Vec<usize> = (0..20 * num_relations)
        .map(|i| {
            if ((i + 1) as f64 * f).floor() > (i as f64 * f).floor() {
                none
            } else {
                next_rel += 1;
                (next_rel - 1) % num_relations
            }
        })
        .collect();
    let mut counter = 0usize;

    let [train, dev, test] = fill_splits(&cfg, &slots, |label, rng| {
        let ents = distinct_entities(rng, cfg.num_entities, 4);
        let (h, t, x, y) = (&ents[0], &ents[1], &ents[2], &ents[3]);
        let noise = |rng: &mut ChaCha8Rng| format!("attr{}", rng.random_range(0..8));
        let neutral = format!("{h} and {t} are mentioned together .");
        let (text, context, source) = if label == none {
            let ctx = vec![Triplet::new(h, noise(rng), x), Triplet::new(t, noise(rng), y)];
            (neutral, ctx, SourceLabel::NoRelation)
        } else {
            counter += 1;
            let rel = relation_word(label);
            if counter % 2 == 1 {
                let ctx = vec![Triplet::new(h, noise(rng), x), Triplet::new(t, noise(rng), y)];
                (format!("{h} {rel} {t} ."), ctx, SourceLabel::Entailed)
            } else {
                let ctx = vec![Triplet::new(h, rel.clone(), x), Triplet::new(x, rel, t)];
                (neutral, ctx, SourceLabel::NotEntailed)
            }
        };
        let mut triplets = vec![Triplet::new(h, "<mask0>", t)];
        triplets.extend(context);
        Ok(LabeledInstance {
            graph: GraphOfTriplets::with_target(triplets, 0)?,
            text: Some(text),
            relation_label: label,
            source_label: Some(source),
            radius: 2,
            mask_level: 0,
        })
    })?;
    let mut labels: Vec<String> = (0..num_relations).map(relation_word).collect();
    labels.push("no-relation".into());
    Ok(Splits {
        train,
        dev,
        test,
        labels,
        no_relation: Some(none),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{to_levi, UnitKind};

    fn small() -> SynthConfig {
        SynthConfig {
            train: 200,
            dev: 40,
            test: 40,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn two_hop_label_only_outside_target() {
        let s = synth_graph_task(GraphTask::TwoHop, &small()).unwrap();
        for inst in s.train.iter().chain(&s.test) {
            let ts = inst.graph.triplets();
            let word = LABEL_WORDS[inst.relation_label];
            assert!(ts[0].head != word && ts[0].tail != word);
            assert_eq!(ts[1].head, ts[0].head);
            assert_eq!(ts[1].tail, word);
            // Label concept is two Levi hops from the mask's head concept.
            let lv = to_levi(&inst.graph).unwrap();
            let (_, dist) = lv.bfs(lv.triplet_units[0][1]);
            let label_unit = lv
                .units
                .iter()
                .position(|u| u.kind == UnitKind::Concept && u.text == word)
                .unwrap();
            assert_eq!(dist[label_unit], Some(3));
        }
    }

    #[test]
    fn two_hop_target_tokens_carry_no_label_signal() {
        // Entities are drawn without regard to the label, so per-label entity
        // frequencies come from the same distribution; check no entity maps
        // to a single label across many draws.
        let s = synth_graph_task(GraphTask::TwoHop, &SynthConfig { train: 2000, ..small() }).unwrap();
        let mut per_entity: std::collections::HashMap<&str, HashSet<usize>> = Default::default();
        for inst in &s.train {
            per_entity
                .entry(&inst.graph.triplets()[0].head)
                .or_default()
                .insert(inst.relation_label);
        }
        let single = per_entity.values().filter(|l| l.len() == 1).count();
        assert!(
            single * 10 < per_entity.len(),
            "{single} of {} entities tied to one label",
            per_entity.len()
        );
    }

    #[test]
    fn one_hop_bag_of_target_tokens_solves_it() {
        let s = synth_graph_task(GraphTask::OneHop, &small()).unwrap();
        let hits = s
            .test
            .iter()
            .filter(|inst| {
                let t = &inst.graph.triplets()[0];
                let guess = [t.head.as_str(), t.tail.as_str()]
                    .iter()
                    .find_map(|w| LABEL_WORDS.iter().position(|l| l == w));
                guess == Some(inst.relation_label)
            })
            .count();
        assert!(hits as f64 / s.test.len() as f64 > 0.95);
    }

    #[test]
    fn balanced_distinct_and_deterministic() {
        let a = synth_graph_task(GraphTask::TwoHop, &small()).unwrap();
        let mut counts = [0; 4];
        for i in &a.train {
            counts[i.relation_label] += 1;
        }
        assert_eq!(counts, [50; 4]);
        let all: HashSet<String> = a
            .train
            .iter()
            .chain(&a.dev)
            .chain(&a.test)
            .map(|i| i.graph.linearize())
            .collect();
        assert_eq!(all.len(), 280);
        let b = synth_graph_task(GraphTask::TwoHop, &small()).unwrap();
        assert_eq!(a.train, b.train);
    }

    #[test]
    fn size_precondition() {
        let cfg = SynthConfig { train: 30, ..small() };
        assert!(synth_graph_task(GraphTask::OneHop, &cfg).is_err());
    }

    #[test]
    fn joint_marginals_and_consistency() {
        let s = synth_joint_task(5, &SynthConfig { train: 1000, ..small() }).unwrap();
        assert_eq!(s.labels.len(), 6);
        let none = s.no_relation.unwrap();
        let n_none = s.train.iter().filter(|i| i.relation_label == none).count();
        assert!((n_none as f64 / 1000.0 - 0.1).abs() < 0.01, "{n_none}");
        for inst in s.train.iter().chain(&s.dev) {
            inst.validate(6, Some(none)).unwrap();
            let text = inst.text.as_deref().unwrap();
            match inst.source_label.unwrap() {
                SourceLabel::Entailed => assert!(text.contains(&relation_word(inst.relation_label))),
                SourceLabel::NotEntailed => {
                    assert!(!text.contains("rel"));
                    let rel = relation_word(inst.relation_label);
                    assert!(inst.graph.triplets()[1..].iter().all(|t| t.relation == rel));
                }
                SourceLabel::NoRelation => {
                    let ts = inst.graph.triplets();
                    let (h, t) = (&ts[0].head, &ts[0].tail);
                    let joined = ts[1..]
                        .iter()
                        .any(|x| (&x.head == h && &x.tail == t) || (&x.head == t && &x.tail == h));
                    assert!(!joined);
                    assert!(!text.contains("rel") && ts[1..].iter().all(|t| !t.relation.starts_with("rel")));
                }
            }
        }
    }

    #[test]
    fn entailed_cue_is_only_in_text() {
        let s = synth_joint_task(3, &small()).unwrap();
        for inst in s.train.iter().filter(|i| i.source_label == Some(SourceLabel::Entailed)) {
            assert!(inst.graph.triplets().iter().all(|t| !t.relation.starts_with("rel")));
        }
    }
}
