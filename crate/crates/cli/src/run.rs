//! `train` and `eval`.

use std::path::{Path, PathBuf};

use anyhow::Context;
use glmkit::data::{read_jsonl, DatasetMeta, LabeledInstance, SourceLabel, Splits};
use glmkit::encoder::{export_weights, import_weights_bytes, EncoderConfig, ParameterSet};
use glmkit::features::{featurize_all, ModelVariant};
use glmkit::tokenizer::WhitespaceTokenizer;
use glmkit::train::{
    evaluate, export_heads, import_heads_bytes, mean_std, train as fit, write_trace, Heads, Metric, TrainConfig,
    TrainMode,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::Config;
use crate::manifest::Run;
use crate::usage;

#[derive(Debug, clap::Args)]
pub struct TrainArgs {
    /// Directory written by `build-dataset`.
    #[arg(long)]
    data: PathBuf,
    /// lglm, gglm or sequence.
    #[arg(long)]
    variant: Option<ModelVariant>,
    /// probe or finetune.
    #[arg(long)]
    mode: Option<TrainMode>,
    /// End every input with the end-of-sequence token.
    #[arg(long)]
    eos: bool,
    /// Add the source head and train on the weighted two-head loss.
    #[arg(long)]
    joint: bool,
    /// Independent runs with seeds `seed`, `seed + 1`, ...
    #[arg(long)]
    seeds: Option<usize>,
    /// Encoder checkpoint (safetensors) to start from instead of random
    /// weights.
    #[arg(long, value_name = "FILE")]
    weights: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// accuracy or macro-f1, for the dev scores in the trace.
    #[arg(long)]
    metric: Option<Metric>,
    /// Encoder depth for randomly initialized runs.
    #[arg(long)]
    layers: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// train, dev or test.
    #[arg(long, default_value = "test")]
    split: String,
    /// Defaults to the metric the run was trained with.
    #[arg(long)]
    metric: Option<Metric>,
    /// Score only the first N seeds of the run.
    #[arg(long)]
    seeds: Option<usize>,
}

/// Shared settings of a training run, stored as `run.json`.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunInfo {
    variant: ModelVariant,
    #[serde(default)]
    append_eos: bool,
    joint: bool,
    metric: Metric,
    labels: Vec<String>,
    no_relation: Option<usize>,
    seeds: Vec<u64>,
    encoder: EncoderConfig,
    train: TrainConfig,
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    best_epoch: usize,
    epochs_run: usize,
    dev_loss: f64,
    dev_metric: f64,
    dev_source_metric: Option<f64>,
    encoder_checksum_initial: String,
    encoder_checksum_final: String,
}

#[derive(Debug, Serialize)]
struct SeedScore {
    seed: u64,
    loss: f64,
    relation: f64,
    source: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    split: String,
    metric: Metric,
    per_seed: Vec<SeedScore>,
    mean: f64,
    std: f64,
    source_mean: Option<f64>,
    source_std: Option<f64>,
}

fn seed_dir(run: &Path, k: usize) -> PathBuf {
    run.join(format!("seed-{k}"))
}

fn read_split(run: &mut Run, dir: &Path, name: &str) -> anyhow::Result<Vec<LabeledInstance>> {
    let path = dir.join(format!("{name}.jsonl"));
    let bytes = run.read(&path)?;
    Ok(read_jsonl(&bytes[..], &path.display().to_string())?)
}

fn load_dataset(run: &mut Run, dir: &Path) -> anyhow::Result<(Splits, DatasetMeta)> {
    if !dir.is_dir() {
        return Err(usage(format!("dataset directory {} does not exist", dir.display())));
    }
    let meta_path = dir.join("labels.json");
    let meta: DatasetMeta =
        serde_json::from_slice(&run.read(&meta_path)?).with_context(|| format!("parsing {}", meta_path.display()))?;
    let splits = Splits {
        train: read_split(run, dir, "train")?,
        dev: read_split(run, dir, "dev")?,
        test: read_split(run, dir, "test")?,
        labels: meta.labels.clone(),
        no_relation: meta.no_relation,
    };
    splits.validate()?;
    Ok((splits, meta))
}

fn summary_line(label: &str, values: &[f64]) -> String {
    let (m, s) = mean_std(values).unwrap_or((f64::NAN, f64::NAN));
    format!("{label}: {m:.4} ± {s:.4} over {} seeds", values.len())
}

impl TrainArgs {
    fn apply(&self, cfg: &mut Config) {
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        cfg.joint |= self.joint;
        cfg.append_eos |= self.eos;
        if let Some(n) = self.seeds {
            cfg.seeds = n;
        }
        if let Some(m) = self.metric {
            cfg.metric = m;
        }
        if let Some(l) = self.layers {
            cfg.encoder.num_layers = l;
        }
        let t = &mut cfg.train;
        if let Some(m) = self.mode {
            t.mode = m;
        }
        if self.lr.is_some() {
            t.lr = self.lr;
        }
        if let Some(e) = self.epochs {
            t.max_epochs = e;
        }
        if let Some(b) = self.batch_size {
            t.batch_size = b;
        }
        if let Some(p) = self.patience {
            t.patience = p;
        }
        if let Some(s) = self.seed {
            t.seed = s;
        }
    }
}

pub fn train(args: TrainArgs, mut cfg: Config, config_file: Option<&Path>) -> anyhow::Result<()> {
    args.apply(&mut cfg);
    if cfg.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    cfg.train.validate()?;
    let mut run = Run::start(config_file)?;
    let (splits, meta) = load_dataset(&mut run, &args.data)?;
    if cfg.joint && !meta.joint {
        return Err(usage(format!(
            "--joint needs source labels, which {} lacks",
            args.data.display()
        )));
    }

    let pretrained = match &args.weights {
        Some(p) => {
            let (params, config) = import_weights_bytes(&run.read(p)?)
                .with_context(|| format!("loading encoder weights {}", p.display()))?;
            if args.layers.is_some() && config.num_layers != cfg.encoder.num_layers {
                return Err(usage("--layers cannot change the depth of a loaded checkpoint"));
            }
            cfg.encoder = config;
            Some(params)
        }
        None => None,
    };
    cfg.encoder.validate()?;

    let texts = splits.texts();
    let tok = WhitespaceTokenizer::fit(texts.iter().copied(), cfg.encoder.vocab_size);
    let all_words = WhitespaceTokenizer::fit(texts.iter().copied(), usize::MAX)
        .words()
        .len();
    if all_words > tok.words().len() {
        log::warn!(
            "vocabulary of {} holds {} of {all_words} words; the rest map to <unk>",
            cfg.encoder.vocab_size,
            tok.words().len()
        );
    }
    let table = cfg.encoder.bucket_table();
    let train_set = featurize_all(&splits.train, &tok, cfg.input_format(), &table)?;
    let dev_set = featurize_all(&splits.dev, &tok, cfg.input_format(), &table)?;

    let out = &args.out;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.train.seed + k).collect();
    run.seeds.clone_from(&seeds);
    run.write_json(&out.join("vocab.json"), &tok)?;
    run.write_json(
        &out.join("run.json"),
        &RunInfo {
            variant: cfg.variant,
            append_eos: cfg.append_eos,
            joint: cfg.joint,
            metric: cfg.metric,
            labels: splits.labels.clone(),
            no_relation: splits.no_relation,
            seeds: seeds.clone(),
            encoder: cfg.encoder.clone(),
            train: cfg.train.clone(),
        },
    )?;

    let mut dev_scores = Vec::new();
    for (k, &seed) in seeds.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = match &pretrained {
            Some(p) => p.clone(),
            None => ParameterSet::random(&cfg.encoder, &mut rng)?,
        };
        let heads = Heads::random(
            cfg.encoder.d_model,
            splits.labels.len(),
            cfg.joint.then_some(SourceLabel::COUNT),
            &mut rng,
        )?;
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let initial = params.checksum();
        let outcome = fit(&train_set, &dev_set, &cfg.encoder, params, heads, &tc, cfg.metric)
            .with_context(|| format!("training seed {seed}"))?;
        let dev = evaluate(
            &dev_set,
            &cfg.encoder,
            &outcome.params,
            &outcome.heads,
            cfg.metric,
            tc.loss_weights,
        )?;

        let dir = seed_dir(out, k);
        run.write(
            &dir.join("encoder.safetensors"),
            &export_weights(&outcome.params, &cfg.encoder)?,
        )?;
        run.write(&dir.join("heads.safetensors"), &export_heads(&outcome.heads)?)?;
        let mut trace = Vec::new();
        write_trace(&outcome.trace, &mut trace)?;
        run.write(&dir.join("trace.jsonl"), &trace)?;
        run.write_json(
            &dir.join("summary.json"),
            &SeedSummary {
                seed,
                best_epoch: outcome.best_epoch,
                epochs_run: outcome.epochs_run,
                dev_loss: dev.loss,
                dev_metric: dev.relation,
                dev_source_metric: dev.source,
                encoder_checksum_initial: format!("{initial:016x}"),
                encoder_checksum_final: format!("{:016x}", outcome.params.checksum()),
            },
        )?;
        let source = dev
            .source
            .map(|s| format!(", source {} {s:.4}", cfg.metric))
            .unwrap_or_default();
        println!(
            "seed {seed}: best epoch {} of {}, dev loss {:.4}, dev {} {:.4}{source}",
            outcome.best_epoch, outcome.epochs_run, dev.loss, cfg.metric, dev.relation
        );
        dev_scores.push(dev.relation);
    }
    println!("{}", summary_line(&format!("dev {}", cfg.metric), &dev_scores));
    run.finish(&cfg, Some(&out.join("manifest.json")))
}

pub fn eval(args: EvalArgs, mut cfg: Config, config_file: Option<&Path>) -> anyhow::Result<()> {
    let mut run = Run::start(config_file)?;
    if !matches!(args.split.as_str(), "train" | "dev" | "test") {
        return Err(usage(format!(
            "unknown split `{}` (expected train, dev or test)",
            args.split
        )));
    }
    let info_path = args.run.join("run.json");
    if !info_path.is_file() {
        return Err(usage(format!("{} is not a training run directory", args.run.display())));
    }
    let info: RunInfo =
        serde_json::from_slice(&run.read(&info_path)?).with_context(|| format!("parsing {}", info_path.display()))?;
    let vocab_path = args.run.join("vocab.json");
    let tok: WhitespaceTokenizer =
        serde_json::from_slice(&run.read(&vocab_path)?).with_context(|| format!("parsing {}", vocab_path.display()))?;

    let count = args.seeds.unwrap_or(info.seeds.len());
    if count == 0 || count > info.seeds.len() {
        return Err(usage(format!(
            "--seeds {count}: the run has {} seeds",
            info.seeds.len()
        )));
    }
    cfg.variant = info.variant;
    cfg.append_eos = info.append_eos;
    cfg.joint = info.joint;
    cfg.metric = args.metric.unwrap_or(info.metric);
    cfg.seeds = count;
    cfg.encoder = info.encoder.clone();
    cfg.train = info.train.clone();
    run.seeds = info.seeds[..count].to_vec();

    let (splits, _) = load_dataset(&mut run, &args.data)?;
    if splits.labels != info.labels {
        return Err(usage("dataset labels differ from the labels the run was trained on"));
    }
    let split = match args.split.as_str() {
        "train" => &splits.train,
        "dev" => &splits.dev,
        _ => &splits.test,
    };
    let data = featurize_all(split, &tok, cfg.input_format(), &info.encoder.bucket_table())?;

    let mut per_seed = Vec::with_capacity(count);
    for (k, &seed) in info.seeds[..count].iter().enumerate() {
        let dir = seed_dir(&args.run, k);
        let (params, config) = import_weights_bytes(&run.read(&dir.join("encoder.safetensors"))?)?;
        let heads = import_heads_bytes(&run.read(&dir.join("heads.safetensors"))?)?;
        let scores = evaluate(&data, &config, &params, &heads, cfg.metric, info.train.loss_weights)?;
        let source = scores.source.map(|s| format!(", source {s:.4}")).unwrap_or_default();
        println!(
            "seed {seed}: {} {} {:.4}{source}",
            args.split, cfg.metric, scores.relation
        );
        per_seed.push(SeedScore {
            seed,
            loss: scores.loss,
            relation: scores.relation,
            source: scores.source,
        });
    }
    let rel: Vec<f64> = per_seed.iter().map(|s| s.relation).collect();
    let src: Vec<f64> = per_seed.iter().filter_map(|s| s.source).collect();
    println!("{}", summary_line(&format!("{} {}", args.split, cfg.metric), &rel));
    if !src.is_empty() {
        println!(
            "{}",
            summary_line(&format!("{} source {}", args.split, cfg.metric), &src)
        );
    }
    let (mean, std) = mean_std(&rel).expect("at least one seed");
    let source_stats = mean_std(&src);
    let report = EvalReport {
        split: args.split.clone(),
        metric: cfg.metric,
        per_seed,
        mean,
        std,
        source_mean: source_stats.map(|s| s.0),
        source_std: source_stats.map(|s| s.1),
    };
    run.write_json(&args.run.join(format!("eval-{}.json", args.split)), &report)?;
    run.finish(&cfg, Some(&args.run.join(format!("eval-{}.manifest.json", args.split))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_format() {
        assert_eq!(
            summary_line("test accuracy", &[0.5, 0.7]),
            "test accuracy: 0.6000 ± 0.1414 over 2 seeds"
        );
        assert_eq!(summary_line("x", &[1.0]), "x: 1.0000 ± 0.0000 over 1 seeds");
    }

    #[test]
    fn finetune_flag_overrides_config() {
        let mut cfg = Config::parse(r#"{"train": {"mode": "probe", "lr": 0.01}}"#).unwrap();
        let args = TrainArgs {
            data: PathBuf::new(),
            variant: Some(ModelVariant::Gglm),
            mode: Some(TrainMode::Finetune),
            joint: true,
            eos: false,
            seeds: Some(3),
            weights: None,
            out: PathBuf::new(),
            lr: None,
            epochs: Some(2),
            batch_size: None,
            patience: None,
            seed: Some(9),
            metric: None,
            layers: None,
        };
        args.apply(&mut cfg);
        assert_eq!(cfg.train.mode, TrainMode::Finetune);
        assert_eq!(cfg.train.lr, Some(0.01));
        assert_eq!((cfg.train.max_epochs, cfg.train.seed, cfg.seeds), (2, 9, 3));
        assert!(cfg.joint);
        assert_eq!(cfg.variant, ModelVariant::Gglm);
    }
}
