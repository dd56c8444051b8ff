//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use emgttl::cli::cmd_verify;
use emgttl::dataset::{
    build_split, synth_generate, write_dataset, SegmentationConfig, SplitSegments,
    SplitSpec, SynthSpec,
};
use emgttl::dsp::{preprocess_all, FilterSpec, PreprocessChain, SignalTrial, Stage, DEFAULT_MU};
use emgttl::model::{init_weights, ModelConfig, ModelWeights, Positional, VARIANTS};
use emgttl::trainer::{
    evaluate, load_checkpoint, save_checkpoint, train, transfer, weights_hash, Checkpoint,
    Provenance, TrainConfig, TrainError, TransferMode, CHECKPOINT_VERSION, HEAD_PREFIX,
};
use emgttl::verify::{self, Suite, SuiteReport};

const FS: f64 = 200.0;
const CHANNELS: usize = 5;

struct Criterion {
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Result<String, String>,
}

fn out_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    fs::create_dir_all(&dir).expect("target tmpdir is writable");
    dir
}

fn chain() -> PreprocessChain {
    PreprocessChain::Custom(vec![Stage::Filter(FilterSpec::notch(50.0))])
}

fn synth_spec(classes: usize, trials: usize, duration_s: f64) -> SynthSpec {
    SynthSpec {
        num_classes: classes,
        subjects: 1,
        trials_per_class: trials,
        duration_s,
        sample_rate_hz: FS,
        channels: CHANNELS,
    }
}

fn preprocessed(spec: &SynthSpec, seed: u64) -> Vec<SignalTrial> {
    let (_, raw) = synth_generate(spec, seed).expect("valid spec");
    preprocess_all(&raw, &chain(), DEFAULT_MU, 1).expect("valid chain")
}

fn split(trials: &[SignalTrial], train: &[u32], test: &[u32]) -> SplitSegments {
    let g = SegmentationConfig::standard().geometry(FS, CHANNELS).expect("valid geometry");
    build_split(trials, &SplitSpec::new(train.to_vec(), test.to_vec()), g).expect("valid split")
}

fn suite(report: SuiteReport) -> Result<String, String> {
    let total = report.checks.len();
    let failed: Vec<String> = report
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{}: {}", c.name, c.detail))
        .collect();
    if failed.is_empty() {
        Ok(format!("{total} checks"))
    } else {
        Err(failed.join("; "))
    }
}

fn gradient_oracle() -> Result<String, String> {
    let text = cmd_verify(Suite::Gradcheck).map_err(|e| e.to_string())?;
    let worst = verify::gradcheck_suite()
        .checks
        .iter()
        .filter(|c| c.name.starts_with("full model"))
        .map(|c| c.detail.clone())
        .collect::<Vec<_>>()
        .join("; ");
    let checks = text.lines().filter(|l| l.starts_with("PASS")).count();
    Ok(format!("{checks} checks at 64-bit; {worst}"))
}

fn mulaw() -> Result<String, String> {
    suite(verify::mulaw_suite())
}

fn dsp() -> Result<String, String> {
    suite(verify::dsp_suite())
}

fn segmentation() -> Result<String, String> {
    suite(verify::segmentation_suite())
}

fn capacity() -> Result<String, String> {
    // 16 windows per 4.25 s trial, two trials per class: 32 segments each
    let trials = preprocessed(&synth_spec(4, 2, 4.25), 7);
    let data = split(&trials, &[1, 2], &[]).train;
    for k in 0..4 {
        let n = data.iter().filter(|s| s.label == k).count();
        if n != 32 {
            return Err(format!("class {k} has {n} segments"));
        }
    }
    let config = ModelConfig {
        channels: CHANNELS,
        window: 100,
        embed_dim: 32,
        num_layers: 2,
        num_heads: 4,
        encoder_hidden: 64,
        head_hidden: [256, 64],
        num_classes: 4,
        dropout_p: 0.1,
        positional: Positional::Learned,
        encoder_mlp_layers: 1,
    };
    let w: ModelWeights<f32> = init_weights(&config, 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        batch_size: 32,
        ..TrainConfig::new(1e-3, 200)
    };
    let out = train(w, &data, &data, &cfg).map_err(|e| e.to_string())?;
    match out
        .history
        .iter()
        .find(|r| r.eval_accuracy.is_some_and(|a| a >= 0.99))
    {
        Some(r) => Ok(format!(
            "training accuracy {:.3} at epoch {} on {} segments",
            r.eval_accuracy.unwrap(),
            r.epoch,
            data.len()
        )),
        None => Err(format!(
            "best training accuracy {:.3} in 200 epochs",
            out.history.iter().filter_map(|r| r.eval_accuracy).fold(0.0, f64::max)
        )),
    }
}

fn train_and_score(
    weights: ModelWeights<f32>,
    data: &SplitSegments,
    cfg: &TrainConfig,
) -> Result<f64, TrainError> {
    let out = train(weights, &data.train, &[], cfg)?;
    Ok(evaluate(&out.weights, &data.test, 256)?.accuracy)
}

fn generalization() -> Result<String, String> {
    let classes = 6;
    let trials = preprocessed(&synth_spec(classes, 6, 6.0), 101);
    let data = split(&trials, &[1, 2, 3, 4], &[5, 6]);
    let config = ModelConfig::variant(1, CHANNELS, 100, classes).map_err(|e| e.to_string())?;
    let chance = 1.0 / classes as f64;
    let mut accs = Vec::new();
    for seed in 0..3 {
        let w = init_weights(&config, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            batch_size: 32,
            seed,
            ..TrainConfig::new(1e-3, 10)
        };
        accs.push(train_and_score(w, &data, &cfg).map_err(|e| e.to_string())?);
    }
    let detail = format!(
        "test accuracies {:?} on {} held-out segments, chance {:.3}",
        accs.iter().map(|a| format!("{a:.3}")).collect::<Vec<_>>(),
        data.test.len(),
        chance
    );
    if accs.iter().all(|&a| a >= 2.0 * chance) {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn transfer_mechanism() -> Result<String, String> {
    let a_trials = preprocessed(&synth_spec(6, 6, 6.0), 303);
    let a = split(&a_trials, &[1, 2, 3, 4], &[5, 6]);
    let b_trials = preprocessed(&synth_spec(4, 4, 4.0), 404);
    let b = split(&b_trials, &[1, 2, 3], &[4]);
    let lr = 1e-3;
    let epochs = 6;
    let source_config = ModelConfig::variant(1, CHANNELS, 100, 6).map_err(|e| e.to_string())?;
    let pre = TrainConfig {
        batch_size: 32,
        ..TrainConfig::new(lr, 10)
    };
    let source: ModelWeights<f32> = train(init_weights(&source_config, 0).map_err(|e| e.to_string())?, &a.train, &[], &pre)
        .map_err(|e| e.to_string())?
        .weights;
    let target = ModelConfig {
        num_classes: 4,
        ..source_config.clone()
    };
    let mut rows = vec!["seed,from_scratch,fine_tuned".to_string()];
    let (mut scratch, mut tuned) = (Vec::new(), Vec::new());
    for seed in 1..=5u64 {
        let moved = transfer(&source, &target, TransferMode::HeadOnlyReinit, seed).map_err(|e| e.to_string())?;
        for p in moved.params.iter().filter(|p| !p.name.starts_with(HEAD_PREFIX)) {
            let s = source.get(&p.name).ok_or(format!("{} missing in source", p.name))?;
            let same = p.value.shape() == s.value.shape()
                && p.value.data().iter().zip(s.value.data()).all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                return Err(format!("{} differs after transfer", p.name));
            }
        }
        let cfg = TrainConfig {
            batch_size: 32,
            seed,
            ..TrainConfig::new(lr, epochs)
        };
        let fine_cfg = TrainConfig {
            learning_rate: lr / 3.0,
            ..cfg.clone()
        };
        let s = train_and_score(init_weights(&target, seed).map_err(|e| e.to_string())?, &b, &cfg)
            .map_err(|e| e.to_string())?;
        let t = train_and_score(moved, &b, &fine_cfg).map_err(|e| e.to_string())?;
        rows.push(format!("{seed},{s},{t}"));
        scratch.push(s);
        tuned.push(t);
    }
    let path = out_dir().join("transfer_comparison.csv");
    fs::write(&path, rows.join("\n") + "\n").map_err(|e| e.to_string())?;
    for r in &rows[1..] {
        println!("    transfer seed,scratch,fine-tuned = {r}");
    }
    let (ms, mt) = (median(&scratch), median(&tuned));
    let detail = format!(
        "non-head tensors bit-exact; median fine-tuned {mt:.3} vs from-scratch {ms:.3} over 5 seeds ({})",
        path.display()
    );
    if mt >= ms - 0.02 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn variant_study() -> Result<String, String> {
    let dir = out_dir().join("variant_study");
    let spec = synth_spec(4, 3, 3.0);
    let (manifest, trials) = synth_generate(&spec, 505).map_err(|e| e.to_string())?;
    let manifest_path = dir.join("data/manifest.json");
    write_dataset(&manifest_path, &manifest, &trials).map_err(|e| e.to_string())?;
    let config = serde_json::json!({
        "dataset": {
            "manifest": manifest_path,
            "split": {"train_trial_ids": [1, 2], "test_trial_ids": [3]}
        },
        "preprocess": {"chain": {"custom": [{"filter": {"kind": {"notch": {"f0_hz": 50, "q": 35}}}}]}},
        "train": {"learning_rate": 0.001, "epochs": 2, "batch_size": 32}
    });
    let config_path = dir.join("report.json");
    fs::write(&config_path, config.to_string()).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_emgttl"))
        .args(["report", "--config", config_path.to_str().unwrap(), "--seeds", "3"])
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "report exited {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let csv = String::from_utf8(out.stdout).map_err(|e| e.to_string())?;
    fs::write(dir.join("variants.csv"), &csv).map_err(|e| e.to_string())?;
    let mut lines = csv.lines();
    if lines.next() != Some("variant_id,window_ms,mean_accuracy,std_accuracy,param_count") {
        return Err("unexpected CSV header".into());
    }
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap_or(f64::NAN)).collect())
        .collect();
    let mut cells = Vec::new();
    for (v, &(d, l, hidden, h)) in VARIANTS.iter().enumerate() {
        for window_ms in [500.0, 250.0] {
            let row = rows
                .iter()
                .find(|r| r[0] == (v + 1) as f64 && r[1] == window_ms)
                .ok_or(format!("no row for variant {} at {window_ms} ms", v + 1))?;
            if !(row[2].is_finite() && row[3].is_finite() && row[3] >= 0.0) {
                return Err(format!("non-finite statistics {row:?}"));
            }
            let window = (window_ms * FS / 1000.0) as usize;
            let expect = ModelConfig {
                embed_dim: d,
                num_layers: l,
                encoder_hidden: hidden,
                num_heads: h,
                ..ModelConfig::variant(1, CHANNELS, window, 4).unwrap()
            }
            .param_count();
            if row[4] as usize != expect {
                return Err(format!("variant {} param count {} != {expect}", v + 1, row[4]));
            }
            cells.push(format!("v{}@{window_ms}ms {:.2}±{:.2}", v + 1, row[2], row[3]));
        }
    }
    if rows.len() != 8 {
        return Err(format!("{} rows, expected 8", rows.len()));
    }
    Ok(format!("4 variants × 2 geometries × 3 seeds: {}", cells.join(", ")))
}

fn determinism() -> Result<String, String> {
    let trials = preprocessed(&synth_spec(3, 2, 3.0), 606);
    let data = split(&trials, &[1], &[2]);
    let config = ModelConfig {
        embed_dim: 32,
        num_heads: 4,
        num_layers: 2,
        encoder_hidden: 64,
        ..ModelConfig::variant(1, CHANNELS, 100, 3).unwrap()
    };
    let dir = out_dir().join("determinism");
    fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    let run = |seed: u64, name: &str| -> Result<(PathBuf, Checkpoint), String> {
        let w = init_weights(&config, seed).map_err(|e| e.to_string())?;
        let cfg = TrainConfig {
            batch_size: 8,
            seed,
            ..TrainConfig::new(1e-3, 3)
        };
        let out = train(w, &data.train, &data.test, &cfg).map_err(|e| e.to_string())?;
        let ckpt = Checkpoint {
            weights: out.weights,
            optimizer: Some(out.optimizer),
            provenance: Provenance {
                dataset: "acceptance".into(),
                epochs: 3,
                seed,
                history: out.history,
                source_checkpoint: None,
                best_epoch: None,
            },
        };
        let path = dir.join(name);
        save_checkpoint(&ckpt, &path).map_err(|e| e.to_string())?;
        Ok((path, ckpt))
    };
    let (a, ckpt) = run(9, "a.emgt")?;
    let (b, _) = run(9, "b.emgt")?;
    let (c, other) = run(10, "c.emgt")?;
    let bytes = fs::read(&a).map_err(|e| e.to_string())?;
    if bytes != fs::read(&b).map_err(|e| e.to_string())? {
        return Err("identical seeds gave different checkpoint bytes".into());
    }
    if weights_hash(&other.weights) == weights_hash(&ckpt.weights) || fs::read(&c).ok() == Some(bytes.clone()) {
        return Err("a different seed gave the same weights".into());
    }
    let loaded = load_checkpoint(&a).map_err(|e| e.to_string())?;
    if weights_hash(&loaded.weights) != weights_hash(&ckpt.weights) || loaded != ckpt {
        return Err("round trip changed the checkpoint".into());
    }
    let bad = dir.join("bad.emgt");
    let mut diagnostics = Vec::new();
    let corruptions: [(&str, Box<dyn Fn(&mut Vec<u8>)>); 4] = [
        ("magic", Box::new(|b| b[0] = b'X')),
        ("version", Box::new(|b| b[4..6].copy_from_slice(&(CHECKPOINT_VERSION + 1).to_le_bytes()))),
        ("truncation", Box::new(|b| b.truncate(b.len() - 5))),
        ("payload bit", Box::new(|b| {
            let i = b.len() - 3;
            b[i] ^= 0x10;
        })),
    ];
    for (name, corrupt) in corruptions {
        let mut broken = bytes.clone();
        corrupt(&mut broken);
        fs::write(&bad, &broken).map_err(|e| e.to_string())?;
        match load_checkpoint(&bad) {
            Ok(_) => return Err(format!("{name} corruption was accepted")),
            Err(e) => diagnostics.push(format!("{name}: {e}")),
        }
    }
    Ok(format!(
        "identical seeds byte-identical ({} bytes), round trip hash-equal, rejected [{}]",
        bytes.len(),
        diagnostics.join("; ")
    ))
}

fn main() {
    let criteria = [
        Criterion { name: "gradient oracle", limit: Some(Duration::from_secs(60)), run: gradient_oracle },
        Criterion { name: "mu-law suite", limit: Some(Duration::from_secs(5)), run: mulaw },
        Criterion { name: "dsp suite", limit: Some(Duration::from_secs(60)), run: dsp },
        Criterion { name: "segmentation oracle", limit: None, run: segmentation },
        Criterion { name: "capacity check", limit: Some(Duration::from_secs(300)), run: capacity },
        Criterion { name: "generalization smoke", limit: None, run: generalization },
        Criterion { name: "transfer mechanism", limit: None, run: transfer_mechanism },
        Criterion { name: "variant study", limit: None, run: variant_study },
        Criterion { name: "determinism and persistence", limit: None, run: determinism },
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failures = 0;
    for c in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let result = (c.run)();
        let elapsed = start.elapsed();
        let over = c.limit.is_some_and(|l| elapsed > l);
        let (tag, detail) = match (&result, over) {
            (Ok(d), false) => ("PASS", d.clone()),
            (Ok(d), true) => ("FAIL", format!("{d}; exceeded {:?}", c.limit.unwrap())),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if tag == "FAIL" {
            failures += 1;
        }
        println!("{tag} {} [{:.1} s]: {detail}", c.name, elapsed.as_secs_f64());
    }
    if failures > 0 {
        println!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
