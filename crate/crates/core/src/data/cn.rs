use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{check_seed, sample_subgraph, SubgraphMode};
use super::{KnowledgeGraph, LabeledInstance, Splits};
use crate::error::{Error, Result};
use crate::graph::{mask_subgraph, sentinel, verbalize_relation, GraphOfTriplets, Triplet, LABEL_RELATIONS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    pub radius: usize,
    pub mask_level: usize,
    pub per_entity: usize,
    pub train_per_class: usize,
    pub dev_per_class: usize,
    pub test_per_class: usize,
    pub labels: Vec<String>,
    pub mode: SubgraphMode,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            radius: 1,
            mask_level: 0,
            per_entity: 2,
            train_per_class: 800,
            dev_per_class: 100,
            test_per_class: 100,
            labels: LABEL_RELATIONS.iter().map(|s| s.to_string()).collect(),
            mode: SubgraphMode::Sampled,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    /// 8 / 1 / 1 instances per class.
    pub fn desk() -> Self {
        Self {
            train_per_class: 8,
            dev_per_class: 1,
            test_per_class: 1,
            ..Self::default()
        }
    }

    pub fn per_class(&self) -> usize {
        self.train_per_class + self.dev_per_class + self.test_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.radius == 0 {
            return Err(Error::Config("radius must be at least 1".into()));
        }
        if self.train_per_class == 0 || self.dev_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::Config("per-class counts must be positive".into()));
        }
        if self.labels.len() < 2 {
            return Err(Error::Config("need at least two label relations".into()));
        }
        for l in &self.labels {
            verbalize_relation(l)?;
        }
        Ok(())
    }
}

/// Where an instance came from, for the seed manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub split: String,
    pub class: usize,
    pub kg_index: usize,
    /// Stream of the per-instance generator derived from the master seed.
    pub stream: u64,
}

#[derive(Debug, Clone)]
pub struct CnDataset {
    pub splits: Splits,
    pub seeds: Vec<SeedRecord>,
    /// Seed triplets passed over, with the reason.
    pub skipped: Vec<String>,
}

fn class_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Verbalized radius-`r` graph around the seed with the seed relation
/// masked and, for `m >= 1`, the neighbourhood masked too.
fn cn_instance(kg: &KnowledgeGraph, triplets: &[usize], class: usize, cfg: &SamplerConfig) -> Result<LabeledInstance> {
    let mut out = Vec::with_capacity(triplets.len());
    for (k, &i) in triplets.iter().enumerate() {
        let t = &kg.triplets()[i];
        let rel = if k == 0 {
            sentinel(0)
        } else {
            verbalize_relation(&t.relation)?.to_string()
        };
        out.push(Triplet::new(t.head.clone(), rel, t.tail.clone()));
    }
    let g = mask_subgraph(&GraphOfTriplets::with_target(out, 0)?, cfg.mask_level)?;
    Ok(LabeledInstance {
        graph: g,
        text: None,
        relation_label: class,
        source_label: None,
        radius: cfg.radius,
        mask_level: cfg.mask_level,
    })
}

/// Balanced train/dev/test splits: for each label relation, eligible seed
/// triplets are shuffled and the first `per_class()` become instances.
pub fn build_cn_dataset(kg: &KnowledgeGraph, cfg: &SamplerConfig) -> Result<CnDataset> {
    cfg.validate()?;
    let by_rel = kg.by_relation();
    let needed = cfg.per_class();
    let mut skipped = Vec::new();
    let mut jobs: Vec<(usize, usize, u64)> = Vec::new();

    for (class, label) in cfg.labels.iter().enumerate() {
        let mut eligible = Vec::new();
        for &i in by_rel.get(label.as_str()).map_or(&[][..], Vec::as_slice) {
            match check_seed(kg, i) {
                Ok(()) => eligible.push(i),
                Err(e) => skipped.push(e.to_string()),
            }
        }
        if eligible.len() < needed {
            return Err(Error::InsufficientSeeds {
                class: label.clone(),
                available: eligible.len(),
                needed,
            });
        }
        eligible.shuffle(&mut class_rng(cfg.seed, class as u64));
        for (k, &i) in eligible[..needed].iter().enumerate() {
            jobs.push((class, i, ((class as u64 + 1) << 32) | k as u64));
        }
    }

    let built: Vec<LabeledInstance> = jobs
        .par_iter()
        .map(|&(class, i, stream)| {
            let fam = sample_subgraph(
                kg,
                i,
                cfg.radius,
                cfg.per_entity,
                cfg.mode,
                &mut class_rng(cfg.seed, stream),
            )?;
            cn_instance(kg, fam.levels.last().expect("radius >= 1"), class, cfg)
        })
        .collect::<Result<_>>()?;

    let mut splits = Splits {
        labels: cfg.labels.clone(),
        ..Splits::default()
    };
    let mut seeds = Vec::with_capacity(jobs.len());
    for (inst, &(class, kg_index, stream)) in built.into_iter().zip(&jobs) {
        let k = (stream & 0xffff_ffff) as usize;
        let split = if k < cfg.train_per_class {
            splits.train.push(inst);
            "train"
        } else if k < cfg.train_per_class + cfg.dev_per_class {
            splits.dev.push(inst);
            "dev"
        } else {
            splits.test.push(inst);
            "test"
        };
        seeds.push(SeedRecord {
            split: split.into(),
            class,
            kg_index,
            stream,
        });
    }
    Ok(CnDataset { splits, seeds, skipped })
}
