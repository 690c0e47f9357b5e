//! `build-dataset`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use glmkit::data::{
    build_cn_dataset, stats, synth_graph_task, synth_joint_task, write_jsonl, GraphTask, KnowledgeGraph, SeedRecord,
    Splits, SubgraphMode,
};
use serde::Serialize;

use crate::config::{Config, Task};
use crate::manifest::Run;
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// cn, 1hop, 2hop or joint.
    #[arg(long)]
    task: Option<Task>,
    /// Tab-separated `head relation tail` knowledge graph (cn task).
    #[arg(long, value_name = "TSV")]
    kg: Option<PathBuf>,
    /// Subgraph radius.
    #[arg(long = "r")]
    radius: Option<usize>,
    /// Mask level; 0 masks only the target relation.
    #[arg(long = "m")]
    mask_level: Option<usize>,
    /// Train instances per class; dev and test get an eighth of it each
    /// (at least one).
    #[arg(long)]
    per_class: Option<usize>,
    /// Triplets admitted per frontier entity and radius step.
    #[arg(long)]
    per_entity: Option<usize>,
    /// Keep every triplet between sampled entities.
    #[arg(long)]
    induced: bool,
    /// Synthetic split sizes.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    dev: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    /// Classes of the synthetic graph tasks.
    #[arg(long)]
    classes: Option<usize>,
    /// Relation count of the joint task.
    #[arg(long)]
    relations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

impl Args {
    fn apply(&self, cfg: &mut Config) {
        if let Some(t) = self.task {
            cfg.task = t;
        }
        if self.kg.is_some() {
            cfg.kg.clone_from(&self.kg);
        }
        let s = &mut cfg.sampler;
        if let Some(r) = self.radius {
            s.radius = r;
        }
        if let Some(m) = self.mask_level {
            s.mask_level = m;
        }
        if let Some(n) = self.per_class {
            s.train_per_class = n;
            s.dev_per_class = (n / 8).max(1);
            s.test_per_class = (n / 8).max(1);
        }
        if let Some(n) = self.per_entity {
            s.per_entity = n;
        }
        if self.induced {
            s.mode = SubgraphMode::Induced;
        }
        let y = &mut cfg.synth;
        for (flag, field) in [
            (self.train, &mut y.train),
            (self.dev, &mut y.dev),
            (self.test, &mut y.test),
        ] {
            if let Some(n) = flag {
                *field = n;
            }
        }
        if let Some(c) = self.classes {
            y.classes = c;
        }
        if let Some(r) = self.relations {
            cfg.relations = r;
        }
        if let Some(seed) = self.seed {
            cfg.sampler.seed = seed;
            cfg.synth.seed = seed;
        }
    }
}

#[derive(Serialize)]
struct SeedManifest<'a> {
    kg_triplets: usize,
    dropped_unknown_relation: usize,
    dropped_self_loop: usize,
    dropped_duplicate: usize,
    skipped_seed_triplets: usize,
    seeds: &'a [SeedRecord],
}

fn build_cn(cfg: &Config, run: &mut Run, out: &Path) -> anyhow::Result<Splits> {
    let path = cfg
        .kg
        .as_deref()
        .ok_or_else(|| usage("the cn task needs a knowledge graph: pass --kg FILE or set `kg` in the config"))?;
    if !path.is_file() {
        return Err(usage(format!("knowledge graph {} does not exist", path.display())));
    }
    let bytes = run.read(path)?;
    let (kg, report) = KnowledgeGraph::from_tsv(&bytes[..], &path.display().to_string())
        .with_context(|| format!("loading {}", path.display()))?;
    log::info!("{}: kept {} triplets, dropped {report:?}", path.display(), kg.len());
    let ds = build_cn_dataset(&kg, &cfg.sampler)?;
    log::info!("{} seed triplets skipped", ds.skipped.len());
    run.seeds.push(cfg.sampler.seed);
    run.write_json(
        &out.join("seeds.json"),
        &SeedManifest {
            kg_triplets: kg.len(),
            dropped_unknown_relation: report.unknown_relation,
            dropped_self_loop: report.self_loop,
            dropped_duplicate: report.duplicate,
            skipped_seed_triplets: ds.skipped.len(),
            seeds: &ds.seeds,
        },
    )?;
    Ok(ds.splits)
}

pub fn build(args: Args, mut cfg: Config, config_file: Option<&Path>) -> anyhow::Result<()> {
    args.apply(&mut cfg);
    let mut run = Run::start(config_file)?;
    let out = &args.out;
    let splits = match cfg.task {
        Task::Cn => build_cn(&cfg, &mut run, out)?,
        Task::OneHop | Task::TwoHop => {
            run.seeds.push(cfg.synth.seed);
            let task = if cfg.task == Task::OneHop {
                GraphTask::OneHop
            } else {
                GraphTask::TwoHop
            };
            synth_graph_task(task, &cfg.synth)?
        }
        Task::Joint => {
            run.seeds.push(cfg.synth.seed);
            synth_joint_task(cfg.relations, &cfg.synth)?
        }
    };
    splits.validate()?;

    for (name, split) in [("train", &splits.train), ("dev", &splits.dev), ("test", &splits.test)] {
        let mut bytes = Vec::new();
        write_jsonl(split, &mut bytes)?;
        run.write(&out.join(format!("{name}.jsonl")), &bytes)?;
        let s = stats(split.iter().map(|i| &i.graph))?;
        println!(
            "{name}: {} instances, nodes {}, edges {}, degree {}",
            s.graphs, s.nodes, s.edges, s.mean_degree
        );
    }
    run.write_json(&out.join("labels.json"), &splits.meta())?;
    run.finish(&cfg, Some(&out.join("manifest.json")))
}
