use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use glmkit::data::synthetic_kg;
use glmkit::encoder::{save_weights, EncoderConfig, ParameterSet};
use glmkit::position::read_plan_binary;
use glmkit::train::load_heads;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn glmkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_glmkit"))
        .args(args)
        .env("GLMKIT_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = glmkit(args);
    assert!(
        out.status.success(),
        "glmkit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn sha(path: &Path) -> String {
    format!("{:x}", Sha256::digest(std::fs::read(path).unwrap()))
}

fn line_count(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().count()
}

fn write_kg(dir: &Path) -> PathBuf {
    let kg = synthetic_kg(400, 2500, &mut ChaCha8Rng::seed_from_u64(1));
    let text: String = kg
        .triplets()
        .iter()
        .map(|t| format!("{}\t{}\t{}\n", t.head, t.relation, t.tail))
        .collect();
    let path = dir.join("kg.tsv");
    std::fs::write(&path, text).unwrap();
    path
}

fn write_fig2a(dir: &Path) -> PathBuf {
    let path = dir.join("fig2a.tsv");
    std::fs::write(&path, "black poodle\tis a\tdog\ndog\tis a\tanimal\ncat\tis a\tanimal\n").unwrap();
    path
}

/// Cells of the relative-position grid printed by `inspect`.
fn p_grid(stdout: &str) -> Vec<Vec<String>> {
    let mut lines = stdout.lines().skip_while(|l| !l.starts_with("P (")).skip(2);
    let mut rows = Vec::new();
    for l in lines.by_ref() {
        if l.trim().is_empty() {
            break;
        }
        let (_, cells) = l.split_once('|').unwrap();
        rows.push(cells.split_whitespace().map(String::from).collect());
    }
    rows
}

fn synth_dataset(dir: &Path, task: &str) -> PathBuf {
    let out = dir.join(task);
    ok(&[
        "build-dataset",
        "--task",
        task,
        "--train",
        "64",
        "--dev",
        "16",
        "--test",
        "16",
        "--seed",
        "3",
        "--out",
        p(&out),
    ]);
    out
}

#[test]
fn cn_dataset_at_desk_scale_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let kg = write_kg(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let stdout = ok(&[
            "build-dataset",
            "--task",
            "cn",
            "--kg",
            p(&kg),
            "--r",
            "2",
            "--m",
            "1",
            "--per-class",
            "8",
            "--out",
            p(out),
        ]);
        assert!(stdout.contains("train: 136 instances"), "{stdout}");
    }
    assert_eq!(line_count(&a.join("train.jsonl")), 136);
    assert_eq!(line_count(&a.join("dev.jsonl")), 17);
    assert_eq!(line_count(&a.join("test.jsonl")), 17);
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "labels.json", "seeds.json"] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["sampler"]["radius"], 2);
    assert_eq!(m["config"]["sampler"]["mask_level"], 1);
    assert_eq!(m["inputs"][p(&kg)], sha(&kg));
    assert_eq!(m["outputs"][p(&a.join("train.jsonl"))], sha(&a.join("train.jsonl")));
    assert!(m["wall_clock_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn missing_kg_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let r = glmkit(&["build-dataset", "--task", "cn", "--out", p(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("--kg"));
    let r = glmkit(&[
        "build-dataset",
        "--task",
        "cn",
        "--kg",
        "/nonexistent/kg.tsv",
        "--out",
        p(&out),
    ]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.join("train.jsonl").exists());
}

#[test]
fn config_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, "{\n  \"task\": \"2hop\",\n  \"radius\": 2\n}\n").unwrap();
    let r = glmkit(&["--config", p(&cfg), "build-dataset", "--out", p(&dir.path().join("d"))]);
    assert_eq!(r.status.code(), Some(2));
    let err = String::from_utf8_lossy(&r.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"task": "1hop", "synth": {"train": 64, "dev": 8, "test": 8, "seed": 5}}"#,
    )
    .unwrap();
    let out = dir.path().join("d");
    ok(&["--config", p(&cfg), "build-dataset", "--train", "48", "--out", p(&out)]);
    assert_eq!(line_count(&out.join("train.jsonl")), 48);
    assert_eq!(line_count(&out.join("dev.jsonl")), 8);
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["task"], "1hop");
    assert_eq!(m["config"]["synth"]["train"], 48);
    assert_eq!(m["config"]["synth"]["seed"], 5);
    assert_eq!(m["config_file"], p(&cfg));
}

#[test]
fn inspect_global_shows_g2g_grid() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_fig2a(dir.path());
    let json = dir.path().join("plan.json");
    let stdout = ok(&["inspect", p(&g), "--variant", "gglm", "--json", p(&json)]);
    let grid = p_grid(&stdout);
    assert_eq!(grid.len(), 11);
    assert!(grid.iter().all(|r| r.len() == 11));
    // "black" and "cat" share no triplet.
    assert_eq!(grid[0][8], "G2G");
    assert_eq!(grid[0][1], "1");
    assert_eq!(grid[7][8], "-3");
    assert!(!grid.iter().flatten().any(|c| c == "x"));

    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(v["plan"]["n"], 11);
    assert_eq!(v["units"].as_array().unwrap().len(), 7);
    assert!(dir.path().join("plan.json.manifest.json").exists());
}

#[test]
fn inspect_local_renders_masked_entries() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_fig2a(dir.path());
    let grid = p_grid(&ok(&["inspect", p(&g), "--variant", "lglm"]));
    assert_eq!(grid.len(), 11);
    assert_eq!(grid[0][8], "x");
    assert_eq!(grid[0][1], "1");
    assert!(!grid.iter().flatten().any(|c| c == "G2G"));
}

#[test]
fn inspect_empty_graph_fails() {
    let dir = tempfile::tempdir().unwrap();
    let g = dir.path().join("empty.tsv");
    std::fs::write(&g, "# nothing\n").unwrap();
    let r = glmkit(&["inspect", p(&g)]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("no triplets"));
}

#[test]
fn export_plan_binary_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_fig2a(dir.path());
    let out = dir.path().join("plan.bin");
    ok(&[
        "export-plan",
        p(&g),
        "--variant",
        "gglm",
        "--text",
        "a dog",
        "--out",
        p(&out),
    ]);
    let (_, buckets, attend) = read_plan_binary(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(buckets.dim(), (13, 13));
    assert!(attend.iter().all(|&a| a));
    assert_eq!(buckets[[0, 5]], Some(33));
    assert_eq!(buckets[[5, 0]], Some(34));
    assert_eq!(buckets[[2, 10]], Some(32));
}

#[test]
fn probe_keeps_the_encoder_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(dir.path(), "2hop");
    let config = EncoderConfig {
        num_layers: 1,
        ..EncoderConfig::desk()
    };
    let weights = dir.path().join("w.safetensors");
    let params = ParameterSet::<f32>::random(&config, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    save_weights(&weights, &params, &config).unwrap();

    let probe = dir.path().join("probe");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--mode",
        "probe",
        "--weights",
        p(&weights),
        "--epochs",
        "3",
        "--out",
        p(&probe),
    ]);
    assert_eq!(sha(&probe.join("seed-0/encoder.safetensors")), sha(&weights));
    assert_eq!(line_count(&probe.join("seed-0/trace.jsonl")), 6);

    let ft = dir.path().join("ft");
    ok(&[
        "train",
        "--data",
        p(&data),
        "--mode",
        "finetune",
        "--weights",
        p(&weights),
        "--epochs",
        "1",
        "--out",
        p(&ft),
    ]);
    assert_ne!(sha(&ft.join("seed-0/encoder.safetensors")), sha(&weights));
}

#[test]
fn eval_over_seeds_prints_mean_and_std() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(dir.path(), "1hop");
    let run = dir.path().join("run");
    let stdout = ok(&[
        "train",
        "--data",
        p(&data),
        "--layers",
        "1",
        "--mode",
        "probe",
        "--epochs",
        "2",
        "--seeds",
        "3",
        "--out",
        p(&run),
    ]);
    assert!(stdout.contains("over 3 seeds"), "{stdout}");
    let stdout = ok(&[
        "eval",
        "--data",
        p(&data),
        "--run",
        p(&run),
        "--metric",
        "accuracy",
        "--seeds",
        "2",
    ]);
    let last = stdout.lines().last().unwrap();
    assert!(last.starts_with("test accuracy: "), "{last}");
    assert!(last.contains(" ± "), "{last}");
    assert!(last.ends_with("over 2 seeds"), "{last}");
    assert_eq!(stdout.lines().filter(|l| l.starts_with("seed ")).count(), 2);
    assert!(run.join("eval-test.json").exists());
    assert!(run.join("eval-test.manifest.json").exists());

    let again = ok(&[
        "eval",
        "--data",
        p(&data),
        "--run",
        p(&run),
        "--metric",
        "accuracy",
        "--seeds",
        "2",
    ]);
    assert_eq!(stdout, again);

    let r = glmkit(&["eval", "--data", p(&data), "--run", p(&run), "--seeds", "4"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn joint_training_uses_both_heads() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth_dataset(dir.path(), "joint");
    let run = dir.path().join("run");
    let stdout = ok(&[
        "train",
        "--data",
        p(&data),
        "--variant",
        "gglm",
        "--joint",
        "--layers",
        "1",
        "--epochs",
        "1",
        "--out",
        p(&run),
    ]);
    assert!(stdout.contains("source accuracy"), "{stdout}");
    let heads = load_heads(&run.join("seed-0/heads.safetensors")).unwrap();
    assert_eq!(heads.source.as_ref().map(|h| h.num_classes()), Some(3));
    let info: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(info["joint"], true);
    assert_eq!(info["variant"], "gglm");
    assert_eq!(info["train"]["loss_weights"]["relation"], 0.9);
    assert_eq!(info["train"]["loss_weights"]["source"], 0.1);
    let eval = ok(&["eval", "--data", p(&data), "--run", p(&run)]);
    assert!(eval.contains("test source accuracy"), "{eval}");

    let plain = synth_dataset(dir.path(), "2hop");
    let r = glmkit(&[
        "train",
        "--data",
        p(&plain),
        "--joint",
        "--out",
        p(&dir.path().join("bad")),
    ]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let r = Command::new(env!("CARGO_BIN_EXE_glmkit"))
        .args(["inspect", "whatever.tsv"])
        .env("GLMKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(glmkit(&["train", "--bogus"]).status.code(), Some(2));
}

#[test]
fn eos_flag_adds_a_text_token() {
    let dir = tempfile::tempdir().unwrap();
    let g = write_fig2a(dir.path());
    let grid = p_grid(&ok(&["inspect", p(&g), "--variant", "gglm", "--eos"]));
    assert_eq!(grid.len(), 12);
    assert_eq!(grid[0][1], "T2G");
    assert_eq!(grid[1][0], "G2T");
}
