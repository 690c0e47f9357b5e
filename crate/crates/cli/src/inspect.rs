//! `inspect` and `export-plan`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use glmkit::features::{instance_plan, ModelVariant};
use glmkit::graph::{read_graph, to_levi, tokenize_levi, ExtendedLeviGraph, GraphOfTriplets, UnitKind};
use glmkit::position::{write_plan_binary, PlanJson, PositionPlan, Segment, MASKED};
use glmkit::tokenizer::{TokenId, Tokenizer, WhitespaceTokenizer};
use serde::Serialize;

use crate::config::Config;
use crate::manifest::Run;
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct PlanArgs {
    /// Graph file: `.json` or tab-separated triplets.
    graph: PathBuf,
    /// lglm, gglm or sequence.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// Text placed before the graph.
    #[arg(long)]
    text: Option<String>,
    /// End the input with the end-of-sequence token.
    #[arg(long)]
    eos: bool,
    /// Vocabulary file written by `train`; by default one is fitted on the
    /// graph itself.
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct InspectArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Also write tokens, units and the plan as JSON.
    #[arg(long, value_name = "FILE")]
    json: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum Format {
    Json,
    Binary,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// Defaults to binary for `.bin` files and JSON otherwise.
    #[arg(long)]
    format: Option<Format>,
    #[arg(long)]
    out: PathBuf,
}

impl PlanArgs {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        cfg.append_eos |= self.eos;
    }
}

struct Prepared {
    graph: GraphOfTriplets,
    elg: Option<ExtendedLeviGraph>,
    tokens: Vec<TokenId>,
    surfaces: Vec<String>,
    plan: PositionPlan,
}

fn prepare(args: &PlanArgs, cfg: &Config, run: &mut Run) -> anyhow::Result<Prepared> {
    run.read(&args.graph)?;
    let graph = read_graph(&args.graph).with_context(|| format!("reading graph {}", args.graph.display()))?;
    let tok = match &args.vocab {
        Some(p) => {
            serde_json::from_slice(&run.read(p)?).with_context(|| format!("parsing vocabulary {}", p.display()))?
        }
        None => {
            let mut texts: Vec<&str> = graph
                .triplets()
                .iter()
                .flat_map(|t| [t.head.as_str(), t.relation.as_str(), t.tail.as_str()])
                .collect();
            texts.extend(args.text.as_deref());
            WhitespaceTokenizer::fit(texts, cfg.encoder.vocab_size)
        }
    };
    let elg = match cfg.variant {
        ModelVariant::Sequence => None,
        _ => Some(tokenize_levi(&to_levi(&graph)?, &tok)?),
    };
    let (tokens, plan) = instance_plan(&graph, args.text.as_deref(), &tok, cfg.input_format())?;
    let surfaces = tokens.iter().map(|&t| tok.surface(t)).collect();
    Ok(Prepared {
        graph,
        elg,
        tokens,
        surfaces,
        plan,
    })
}

/// Right-aligned square grid with token indices on both axes and token
/// surfaces on the rows.
fn grid(labels: &[String], cell: impl Fn(usize, usize) -> String) -> String {
    let n = labels.len();
    let cells: Vec<Vec<String>> = (0..n).map(|i| (0..n).map(|j| cell(i, j)).collect()).collect();
    let w = cells
        .iter()
        .flatten()
        .map(|c| c.chars().count())
        .chain([n.saturating_sub(1).to_string().len()])
        .max()
        .unwrap_or(1);
    let iw = n.saturating_sub(1).to_string().len();
    let lw = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0);
    let mut s = format!("{:>iw$} {:<lw$} |", "", "");
    for j in 0..n {
        let _ = write!(s, " {j:>w$}");
    }
    s.push('\n');
    for (i, row) in cells.iter().enumerate() {
        let _ = write!(s, "{i:>iw$} {:<lw$} |", labels[i]);
        for c in row {
            let _ = write!(s, " {c:>w$}");
        }
        s.push('\n');
    }
    s
}

fn variant_name(v: ModelVariant) -> &'static str {
    match v {
        ModelVariant::Lglm => "lglm",
        ModelVariant::Gglm => "gglm",
        ModelVariant::Sequence => "sequence",
    }
}

fn render(p: &Prepared, variant: ModelVariant) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "graph: {} triplets", p.graph.len());
    for (k, t) in p.graph.triplets().iter().enumerate() {
        let _ = writeln!(s, "  {k}: ({}; {}; {})", t.head, t.relation, t.tail);
    }
    let text_len = p.plan.segments().iter().filter(|&&g| g == Segment::Text).count();
    if let Some(elg) = &p.elg {
        let _ = writeln!(
            s,
            "\nextended Levi graph: {} units, {} edges",
            elg.unit_tokens.len(),
            elg.edges.len()
        );
        let lv = to_levi(&p.graph).expect("graph was already converted");
        for (u, (unit, range)) in lv.units.iter().zip(&elg.unit_tokens).enumerate() {
            let kind = match unit.kind {
                UnitKind::Concept => "concept",
                UnitKind::Relation => "relation",
            };
            let _ = writeln!(
                s,
                "  u{u} {kind:<8} {:?} tokens {}..{}",
                unit.text,
                range.start + text_len,
                range.end + text_len
            );
        }
        let edges: Vec<String> = elg
            .edges
            .iter()
            .map(|(a, b)| format!("{}->{}", a + text_len, b + text_len))
            .collect();
        let _ = writeln!(s, "  edges: {}", edges.join(" "));
    }

    let n = p.tokens.len();
    let _ = writeln!(s, "\ntokens: {n}");
    for (i, (id, surface)) in p.tokens.iter().zip(&p.surfaces).enumerate() {
        let seg = match p.plan.segments()[i] {
            Segment::Graph => "graph",
            Segment::Text => "text",
        };
        let _ = writeln!(s, "  {i:>3} {seg:<5} {id:>5} {surface}");
    }

    let _ = writeln!(s, "\nP ({}, {n} x {n}; x = masked)", variant_name(variant));
    s.push_str(&grid(&p.surfaces, |i, j| {
        if p.plan.attends(i, j) {
            p.plan.position(i, j).to_string()
        } else {
            "x".into()
        }
    }));
    let _ = writeln!(s, "\nM (0 = attend, {MASKED:e} = blocked)");
    s.push_str(&grid(&p.surfaces, |i, j| {
        if p.plan.attends(i, j) {
            "0".into()
        } else {
            format!("{MASKED:e}")
        }
    }));
    s
}

#[derive(Serialize)]
struct UnitJson {
    kind: UnitKind,
    text: String,
    tokens: [usize; 2],
}

#[derive(Serialize)]
struct InspectJson {
    variant: ModelVariant,
    tokens: Vec<String>,
    token_ids: Vec<TokenId>,
    units: Vec<UnitJson>,
    edges: Vec<(usize, usize)>,
    plan: PlanJson,
}

fn inspect_json(p: &Prepared, cfg: &Config) -> InspectJson {
    let offset = p.plan.segments().iter().filter(|&&g| g == Segment::Text).count();
    let (units, edges) = match &p.elg {
        Some(elg) => {
            let lv = to_levi(&p.graph).expect("graph was already converted");
            let units = lv
                .units
                .into_iter()
                .zip(&elg.unit_tokens)
                .map(|(u, r)| UnitJson {
                    kind: u.kind,
                    text: u.text,
                    tokens: [r.start + offset, r.end + offset],
                })
                .collect();
            let edges = elg.edges.iter().map(|&(a, b)| (a + offset, b + offset)).collect();
            (units, edges)
        }
        None => (Vec::new(), Vec::new()),
    };
    InspectJson {
        variant: cfg.variant,
        tokens: p.surfaces.clone(),
        token_ids: p.tokens.clone(),
        units,
        edges,
        plan: PlanJson::new(&p.plan, &cfg.encoder.bucket_table()),
    }
}

fn sibling_manifest(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    path.with_file_name(name)
}

pub fn inspect(args: InspectArgs, mut cfg: Config, config_file: Option<&Path>) -> anyhow::Result<()> {
    args.plan.apply(&mut cfg);
    let mut run = Run::start(config_file)?;
    let p = prepare(&args.plan, &cfg, &mut run)?;
    print!("{}", render(&p, cfg.variant));
    match &args.json {
        Some(path) => {
            run.write_json(path, &inspect_json(&p, &cfg))?;
            run.finish(&cfg, Some(&sibling_manifest(path)))
        }
        None => run.finish(&cfg, None),
    }
}

pub fn export(args: ExportArgs, mut cfg: Config, config_file: Option<&Path>) -> anyhow::Result<()> {
    args.plan.apply(&mut cfg);
    if args.out.is_dir() {
        return Err(usage(format!("--out {} is a directory", args.out.display())));
    }
    let mut run = Run::start(config_file)?;
    let p = prepare(&args.plan, &cfg, &mut run)?;
    let table = cfg.encoder.bucket_table();
    let format = args.format.unwrap_or(match args.out.extension() {
        Some(e) if e == "bin" => Format::Binary,
        _ => Format::Json,
    });
    match format {
        Format::Json => run.write_json(&args.out, &PlanJson::new(&p.plan, &table))?,
        Format::Binary => {
            let mut bytes = Vec::new();
            write_plan_binary(&p.plan, &table, &mut bytes)?;
            run.write(&args.out, &bytes)?;
        }
    }
    println!(
        "{} tokens, {:?} plan -> {}",
        p.plan.len(),
        p.plan.kind(),
        args.out.display()
    );
    run.finish(&cfg, Some(&sibling_manifest(&args.out)))
}
