use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emgttl::dataset::load_dataset;
use emgttl::trainer::{load_checkpoint, weights_hash};
use serde_json::{json, Value};

fn emgttl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emgttl"))
        .args(args)
        .env_remove("EMGTTL_THREADS")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth(dir: &Path, name: &str, classes: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    let classes = classes.to_string();
    let seed = seed.to_string();
    let o = emgttl(&[
        "synth", "--classes", &classes, "--subjects", "1", "--trials", "3", "--duration-s", "3",
        "--rate-hz", "200", "--channels", "5", "--seed", &seed, "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    out.join("manifest.json")
}

fn run_config(manifest: &Path, model: Value, epochs: usize) -> Value {
    json!({
        "dataset": {
            "manifest": manifest,
            "split": {"train_trial_ids": [1, 2], "test_trial_ids": [3]},
            "segmentation": {"window_ms": 500, "step_ms": 250}
        },
        "preprocess": {"chain": {"custom": [{"filter": {"kind": {"notch": {"f0_hz": 50, "q": 35}}}}]}},
        "model": model,
        "train": {"learning_rate": 0.002, "epochs": epochs, "batch_size": 16, "seed": 1}
    })
}

fn small_model() -> Value {
    json!({"embed_dim": 32, "num_layers": 2, "num_heads": 4, "encoder_hidden": 64,
           "head_hidden": [32, 16], "dropout_p": 0.0})
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p.to_str().unwrap().to_string()
}

fn tree(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn synth_defaults_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["x", "y"] {
        let out = dir.path().join(name);
        let o = emgttl(&["synth", "--seed", "4", "--duration-s", "0.5", "--out", out.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (manifest, trials) = load_dataset(&dir.path().join("x/manifest.json")).unwrap();
    assert_eq!((manifest.classes.len(), manifest.channels), (4, 5));
    assert_eq!(trials.len(), manifest.trials.len());
    assert_eq!(tree(&dir.path().join("x")), tree(&dir.path().join("y")));

    let o = emgttl(&["synth", "--channels", "0", "--out", dir.path().join("z").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(code(&emgttl(&["synth", "--channels", "many", "--out", "z"])), 2);
}

#[test]
fn train_overfits_and_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "a", 4, 1);
    let mut cfg = run_config(&manifest, small_model(), 100);
    cfg["dataset"]["eval_split"] = json!("train");
    cfg["train"]["learning_rate"] = json!(0.001);
    let cfg = write(dir.path(), "train.json", &cfg);
    let ckpt = dir.path().join("a.emgt");
    let o = emgttl(&["train", "--config", &cfg, "--out", ckpt.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout.clone()).unwrap();
    let last = stdout.lines().last().unwrap();
    let acc: f64 = last.strip_prefix("accuracy=").unwrap().parse().unwrap();
    assert!(acc >= 0.99, "{last}");
    assert!(stderr(&o).contains("resolved config"));
    let history = fs::read_to_string(dir.path().join("a.history.ndjson")).unwrap();
    assert_eq!(history.lines().count(), 100);
    assert_eq!(load_checkpoint(&ckpt).unwrap().provenance.epochs, 100);
}

#[test]
fn train_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "a", 4, 1);
    let out = dir.path().join("x.emgt");
    let out = out.to_str().unwrap();

    let bad = run_config(&manifest, json!({"embed_dim": 65, "num_heads": 8}), 1);
    let o = emgttl(&["train", "--config", &write(dir.path(), "bad.json", &bad), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("d mod h"), "{}", stderr(&o));

    let mut missing = run_config(&manifest, small_model(), 1);
    missing["dataset"].as_object_mut().unwrap().remove("manifest");
    let o = emgttl(&["train", "--config", &write(dir.path(), "m.json", &missing), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("manifest"), "{}", stderr(&o));

    let absent = run_config(&dir.path().join("nowhere.json"), small_model(), 1);
    let o = emgttl(&["train", "--config", &write(dir.path(), "n.json", &absent), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("dataset.manifest"), "{}", stderr(&o));

    let mut typo = run_config(&manifest, small_model(), 1);
    typo["train"]["learnig_rate"] = json!(0.1);
    let o = emgttl(&["train", "--config", &write(dir.path(), "t.json", &typo), "--out", out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learnig_rate"));
}

#[test]
fn finetune_records_provenance_and_rejects_mismatches() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path(), "a", 6, 1);
    let b = synth(dir.path(), "b", 4, 2);
    let src = dir.path().join("a.emgt");
    let cfg_a = write(dir.path(), "a.json", &run_config(&a, small_model(), 2));
    let o = emgttl(&["train", "--config", &cfg_a, "--out", src.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let cfg_b = write(dir.path(), "b.json", &run_config(&b, json!({}), 2));
    let dst = dir.path().join("b.emgt");
    let o = emgttl(&[
        "finetune", "--config", &cfg_b, "--from", src.to_str().unwrap(), "--out", dst.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().trim_end().lines().last().unwrap().starts_with("accuracy="));
    let source = load_checkpoint(&src).unwrap();
    let tuned = load_checkpoint(&dst).unwrap();
    assert_eq!(tuned.provenance.source_checkpoint, Some(weights_hash(&source.weights)));
    assert_eq!(tuned.weights.config.num_classes, 4);
    assert_eq!(tuned.weights.config.embed_dim, 32);

    let o = emgttl(&["finetune", "--config", &cfg_b, "--from", "missing.emgt", "--out", "x.emgt"]);
    assert_eq!(code(&o), 1);

    let mut short = run_config(&b, json!({}), 1);
    short["dataset"]["segmentation"] = json!({"window_ms": 250, "step_ms": 100});
    let cfg = write(dir.path(), "short.json", &short);
    let o = emgttl(&["finetune", "--config", &cfg, "--from", src.to_str().unwrap(), "--out", "x.emgt"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("E_pos"), "{}", stderr(&o));
}

#[test]
fn eval_report_and_verify_contracts() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), "a", 3, 1);
    let ckpt = dir.path().join("a.emgt");
    let cfg = write(dir.path(), "a.json", &run_config(&manifest, small_model(), 1));
    assert_eq!(code(&emgttl(&["train", "--config", &cfg, "--out", ckpt.to_str().unwrap()])), 0);

    let o = emgttl(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--config", &cfg]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let metrics: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(metrics["accuracy"].as_f64().unwrap() >= 0.0);

    let mut empty = run_config(&manifest, small_model(), 1);
    empty["dataset"]["split"] = json!({"train_trial_ids": [1, 2, 3], "test_trial_ids": []});
    let empty = write(dir.path(), "empty.json", &empty);
    let o = emgttl(&["eval", "--ckpt", ckpt.to_str().unwrap(), "--config", &empty]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("empty evaluation set"), "{}", stderr(&o));

    let o = emgttl(&["report", "--config", &cfg, "--seeds", "1"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("need ≥ 2 seeds"));

    let variants = json!([
        {"variant_id": 1, "embed_dim": 16, "num_layers": 1, "encoder_hidden": 16, "num_heads": 2,
         "head_hidden": [8, 8]}
    ]);
    let v = write(dir.path(), "variants.json", &variants);
    let o = emgttl(&["report", "--config", &cfg, "--variants", &v, "--seeds", "2"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "variant_id,window_ms,mean_accuracy,std_accuracy,param_count");
    assert_eq!(lines.len(), 3);

    let o = emgttl(&["verify", "--suite", "gradcheck"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8(o.stdout).unwrap().contains("full model"));
    assert_eq!(code(&emgttl(&["verify", "--suite", "nope"])), 2);
}
