//! Run configuration and the subcommand bodies behind the `emgttl` binary.
//! Every command returns its stdout text; diagnostics go to stderr.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::autodiff::Real;
use crate::dataset::{
    build_split, load_dataset, synth_generate, write_dataset, DatasetError, DatasetManifest,
    Geometry, SegmentationConfig, SplitSegments, SplitSpec, SynthSpec,
};
use crate::dsp::{preprocess_all, PreprocessChain, SignalTrial, DEFAULT_MU};
use crate::model::{init_weights, ModelConfig, ModelError, ModelWeights, Positional, VARIANTS};
use crate::trainer::{
    evaluate_parallel, load_checkpoint, save_checkpoint, thread_cap, train, transfer,
    variant_study, weights_hash, write_history, write_report_csv, Checkpoint, Precision,
    Provenance, StudyTask, StudyVariant, TrainConfig, TrainError, TrainOutcome, TransferMode,
};
use crate::verify::{self, Suite};

/// Exit status 2 for usage and configuration problems, 1 for failures at
/// run time.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(_) => usage(e),
            other => runtime(other),
        }
    }
}

/// A named preset or explicit trial-id lists.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitChoice {
    Preset(String),
    Explicit(SplitSpec),
}

impl SplitChoice {
    pub fn resolve(&self) -> Result<SplitSpec, DatasetError> {
        match self {
            SplitChoice::Preset(name) => SplitSpec::preset(name),
            SplitChoice::Explicit(spec) => Ok(spec.clone()),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalSplit {
    #[default]
    Test,
    Train,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub manifest: PathBuf,
    pub split: SplitChoice,
    #[serde(default = "SegmentationConfig::standard")]
    pub segmentation: SegmentationConfig,
    /// Segments scored after each epoch and by `eval`.
    #[serde(default)]
    pub eval_split: EvalSplit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    #[serde(default = "default_chain")]
    pub chain: PreprocessChain,
    #[serde(default = "default_mu")]
    pub mu: f64,
}

fn default_chain() -> PreprocessChain {
    PreprocessChain::Db1Style
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

impl Default for PreprocessSection {
    fn default() -> Self {
        Self {
            chain: default_chain(),
            mu: default_mu(),
        }
    }
}

/// Architecture fields. Unset fields come from `variant` (default 1);
/// channels, window and class count come from the dataset unless given.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channels: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embed_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_heads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub head_hidden: Option<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout_p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positional: Option<Positional>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoder_mlp_layers: Option<usize>,
}

impl ModelSection {
    fn apply(&self, mut c: ModelConfig) -> ModelConfig {
        c.channels = self.channels.unwrap_or(c.channels);
        c.window = self.window.unwrap_or(c.window);
        c.embed_dim = self.embed_dim.unwrap_or(c.embed_dim);
        c.num_layers = self.num_layers.unwrap_or(c.num_layers);
        c.num_heads = self.num_heads.unwrap_or(c.num_heads);
        c.encoder_hidden = self.encoder_hidden.unwrap_or(c.encoder_hidden);
        c.head_hidden = self.head_hidden.unwrap_or(c.head_hidden);
        c.num_classes = self.num_classes.unwrap_or(c.num_classes);
        c.dropout_p = self.dropout_p.unwrap_or(c.dropout_p);
        c.positional = self.positional.unwrap_or(c.positional);
        c.encoder_mlp_layers = self.encoder_mlp_layers.unwrap_or(c.encoder_mlp_layers);
        c
    }

    /// Full configuration for a dataset geometry.
    pub fn resolve(&self, geometry: Geometry, num_classes: usize) -> Result<ModelConfig, ModelError> {
        let id = self.variant.unwrap_or(1);
        if !(1..=VARIANTS.len()).contains(&id) {
            return Err(ModelError::Config(format!(
                "model.variant {id} is not in 1..={}",
                VARIANTS.len()
            )));
        }
        let base = ModelConfig::variant(id, geometry.channels, geometry.window, num_classes)?;
        let config = self.apply(base);
        config.validate()?;
        Ok(config)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<PathBuf>,
    #[serde(default)]
    pub mode: TransferMode,
    /// Fine-tuning rate; defaults to a third of `train.learning_rate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
}

pub const FINETUNE_LR_FRACTION: f64 = 1.0 / 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub model: ModelSection,
    pub train: TrainConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transfer: Option<TransferSection>,
}

/// Command-line values that take precedence over the file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub manifest: Option<PathBuf>,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
}

impl RunConfig {
    /// Parses JSON, resolving a relative manifest path against the
    /// configuration file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| usage(format!("config {}: {e}", path.display())))?;
        if cfg.dataset.manifest.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.dataset.manifest = dir.join(&cfg.dataset.manifest);
            }
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = &o.manifest {
            self.dataset.manifest = m.clone();
        }
        let t = &mut self.train;
        t.epochs = o.epochs.unwrap_or(t.epochs);
        t.seed = o.seed.unwrap_or(t.seed);
        t.learning_rate = o.learning_rate.unwrap_or(t.learning_rate);
        t.batch_size = o.batch_size.unwrap_or(t.batch_size);
    }
}

fn log(msg: &str) {
    eprintln!("emgttl: {msg}");
}

#[derive(Serialize)]
struct Resolved<'a> {
    run: &'a RunConfig,
    geometry: Geometry,
    model: &'a ModelConfig,
    threads: usize,
}

/// Loaded, preprocessed and split data for one run.
pub struct Prepared {
    pub manifest: DatasetManifest,
    pub trials: Vec<SignalTrial>,
    pub geometry: Geometry,
    pub split: SplitSegments,
}

impl Prepared {
    pub fn eval_set(&self, which: EvalSplit) -> &[crate::dataset::Segment] {
        match which {
            EvalSplit::Test => &self.split.test,
            EvalSplit::Train => &self.split.train,
        }
    }
}

pub fn prepare(cfg: &RunConfig, threads: usize) -> Result<Prepared, CliError> {
    let path = &cfg.dataset.manifest;
    if !path.exists() {
        return Err(usage(format!(
            "dataset.manifest: {} does not exist",
            path.display()
        )));
    }
    let (manifest, raw) = load_dataset(path).map_err(runtime)?;
    let geometry = cfg
        .dataset
        .segmentation
        .geometry(manifest.sample_rate_hz, manifest.channels)
        .map_err(|e| usage(format!("dataset.segmentation: {e}")))?;
    let split = cfg
        .dataset
        .split
        .resolve()
        .map_err(|e| usage(format!("dataset.split: {e}")))?;
    let chain = &cfg.preprocess.chain;
    chain
        .validate(manifest.sample_rate_hz)
        .map_err(|e| usage(format!("preprocess.chain: {e}")))?;
    let trials = preprocess_all(&raw, chain, cfg.preprocess.mu, threads)
        .map_err(|e| runtime(format!("preprocessing: {e}")))?;
    let split = build_split(&trials, &split, geometry).map_err(|e| match e {
        DatasetError::Config(m) => usage(format!("dataset.split: {m}")),
        other => runtime(other),
    })?;
    for trial in &split.short_trials {
        log(&format!("trial {trial} is shorter than one window and was skipped"));
    }
    Ok(Prepared {
        manifest,
        trials,
        geometry,
        split,
    })
}

fn log_resolved(cfg: &RunConfig, geometry: Geometry, model: &ModelConfig, threads: usize) {
    let resolved = Resolved {
        run: cfg,
        geometry,
        model,
        threads,
    };
    let json = serde_json::to_string(&resolved).expect("config serializes");
    log(&format!("resolved config {json}"));
}

fn run_training(
    weights: ModelWeights<f32>,
    prepared: &Prepared,
    eval_split: EvalSplit,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<f32>, CliError> {
    fn go<S: Real>(
        w: ModelWeights<f32>,
        p: &Prepared,
        which: EvalSplit,
        cfg: &TrainConfig,
    ) -> Result<TrainOutcome<f32>, TrainError> {
        let out = train(w.cast::<S>(), &p.split.train, p.eval_set(which), cfg)?;
        Ok(TrainOutcome {
            weights: out.weights.cast(),
            optimizer: out.optimizer.cast(),
            history: out.history,
            best: out.best.map(|(e, a, w)| (e, a, w.cast())),
        })
    }
    let out = match cfg.precision {
        Precision::F32 => go::<f32>(weights, prepared, eval_split, cfg),
        Precision::F64 => go::<f64>(weights, prepared, eval_split, cfg),
    };
    out.map_err(|e| match e {
        TrainError::Config(m) => CliError::Runtime(m),
        other => runtime(other),
    })
}

fn history_path(out: &Path) -> PathBuf {
    out.with_extension("history.ndjson")
}

fn finish(
    outcome: TrainOutcome<f32>,
    prepared: &Prepared,
    train_cfg: &TrainConfig,
    source: Option<String>,
    out: &Path,
) -> Result<String, CliError> {
    let ckpt = Checkpoint {
        weights: outcome.weights,
        optimizer: Some(outcome.optimizer),
        provenance: Provenance {
            dataset: prepared.manifest.name.clone(),
            epochs: train_cfg.epochs,
            seed: train_cfg.seed,
            history: outcome.history.clone(),
            source_checkpoint: source,
            best_epoch: outcome.best.as_ref().map(|b| b.0),
        },
    };
    save_checkpoint(&ckpt, out).map_err(runtime)?;
    write_history(&history_path(out), &outcome.history).map_err(runtime)?;
    log(&format!(
        "wrote {} (weights sha256 {})",
        out.display(),
        weights_hash(&ckpt.weights)
    ));
    let accuracy = outcome
        .history
        .last()
        .and_then(|r| r.eval_accuracy)
        .ok_or_else(|| CliError::Runtime("empty evaluation set".into()))?;
    Ok(format!("accuracy={accuracy}\n"))
}

pub fn cmd_train(config: &Path, out: &Path, overrides: &Overrides) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(overrides);
    cfg.train.validate().map_err(|e| usage(format!("train: {e}")))?;
    let threads = thread_cap();
    let prepared = prepare(&cfg, threads)?;
    let model = cfg
        .model
        .resolve(prepared.geometry, prepared.manifest.classes.len())
        .map_err(|e| usage(format!("model: {e}")))?;
    log_resolved(&cfg, prepared.geometry, &model, threads);
    let weights = init_weights(&model, cfg.train.seed).map_err(usage)?;
    let outcome = run_training(weights, &prepared, cfg.dataset.eval_split, &cfg.train)?;
    finish(outcome, &prepared, &cfg.train, None, out)
}

pub fn cmd_finetune(
    config: &Path,
    from: &Path,
    out: &Path,
    overrides: &Overrides,
) -> Result<String, CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(overrides);
    let section = cfg.transfer.clone().unwrap_or_default();
    let source = load_checkpoint(from).map_err(runtime)?;
    let source_hash = weights_hash(&source.weights);
    let mut train_cfg = cfg.train.clone();
    train_cfg.learning_rate = section
        .learning_rate
        .unwrap_or(cfg.train.learning_rate * FINETUNE_LR_FRACTION);
    if let Some(lr) = overrides.learning_rate {
        train_cfg.learning_rate = lr;
    }
    train_cfg.validate().map_err(|e| usage(format!("train: {e}")))?;
    let threads = thread_cap();
    let prepared = prepare(&cfg, threads)?;
    let mut target = cfg.model.apply(source.weights.config.clone());
    target.channels = prepared.geometry.channels;
    target.window = prepared.geometry.window;
    target.num_classes = cfg
        .model
        .num_classes
        .unwrap_or(prepared.manifest.classes.len());
    cfg.transfer = Some(TransferSection {
        source: Some(from.to_path_buf()),
        learning_rate: Some(train_cfg.learning_rate),
        ..section.clone()
    });
    log_resolved(&cfg, prepared.geometry, &target, threads);
    let weights = transfer(&source.weights, &target, section.mode, train_cfg.seed)
        .map_err(|e| runtime(format!("incompatible source checkpoint: {e}")))?;
    log(&format!("fine-tuning from {} (sha256 {source_hash})", from.display()));
    let outcome = run_training(weights, &prepared, cfg.dataset.eval_split, &train_cfg)?;
    finish(outcome, &prepared, &train_cfg, Some(source_hash), out)
}

pub fn cmd_eval(ckpt: &Path, config: &Path) -> Result<String, CliError> {
    let cfg = RunConfig::load(config)?;
    let threads = thread_cap();
    let ckpt = load_checkpoint(ckpt).map_err(runtime)?;
    let prepared = prepare(&cfg, threads)?;
    let model = &ckpt.weights.config;
    if (model.channels, model.window) != (prepared.geometry.channels, prepared.geometry.window) {
        return Err(CliError::Runtime(format!(
            "checkpoint expects {} channels × {} samples, dataset gives {} × {}",
            model.channels, model.window, prepared.geometry.channels, prepared.geometry.window
        )));
    }
    log_resolved(&cfg, prepared.geometry, model, threads);
    let segments = prepared.eval_set(cfg.dataset.eval_split);
    let metrics = evaluate_parallel(&ckpt.weights, segments, cfg.train.batch_size, threads)
        .map_err(runtime)?;
    Ok(serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n")
}

/// Parses `500:250,250:100` into window/step pairs in milliseconds.
pub fn parse_geometries(text: &str) -> Result<Vec<SegmentationConfig>, CliError> {
    text.split(',')
        .map(|pair| {
            let (w, s) = pair
                .split_once(':')
                .ok_or_else(|| usage(format!("window {pair:?} is not WINDOW_MS:STEP_MS")))?;
            let num = |v: &str| v.trim().parse::<f64>().map_err(|e| usage(format!("{v:?}: {e}")));
            Ok(SegmentationConfig::new(num(w)?, num(s)?))
        })
        .collect()
}

pub struct ReportArgs<'a> {
    pub config: &'a Path,
    pub variants: Option<&'a Path>,
    pub seeds: usize,
    pub geometries: Vec<SegmentationConfig>,
    pub overrides: Overrides,
}

pub fn cmd_report(args: &ReportArgs<'_>) -> Result<String, CliError> {
    if args.seeds < 2 {
        return Err(usage(format!("need ≥ 2 seeds for a spread, got {}", args.seeds)));
    }
    let mut cfg = RunConfig::load(args.config)?;
    cfg.apply(&args.overrides);
    let variants: Vec<StudyVariant> = match args.variants {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| usage(format!("cannot read variants {}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("variants {}: {e}", path.display())))?
        }
        None => (1..=VARIANTS.len())
            .map(StudyVariant::published)
            .collect::<Result<_, _>>()?,
    };
    let threads = thread_cap();
    let prepared = prepare(&cfg, threads)?;
    let dropout_p = cfg.model.dropout_p.unwrap_or(0.1);
    let model = cfg
        .model
        .resolve(prepared.geometry, prepared.manifest.classes.len())
        .map_err(|e| usage(format!("model: {e}")))?;
    log_resolved(&cfg, prepared.geometry, &model, threads);
    let seeds: Vec<u64> = (0..args.seeds as u64).map(|i| cfg.train.seed + i).collect();
    let task = StudyTask {
        trials: &prepared.trials,
        num_classes: prepared.manifest.classes.len(),
        split: cfg.dataset.split.resolve().map_err(usage)?,
        geometries: args.geometries.clone(),
        train: cfg.train.clone(),
        dropout_p,
    };
    let rows = variant_study(&variants, &seeds, &task, threads)?;
    for r in &rows {
        log(&format!(
            "variant {} at {} ms: accuracies {:?}",
            r.variant_id, r.window_ms, r.accuracies
        ));
    }
    let mut csv = Vec::new();
    write_report_csv(&mut csv, &rows)?;
    Ok(String::from_utf8(csv).expect("csv is utf-8"))
}

pub fn cmd_synth(spec: &SynthSpec, seed: u64, out: &Path) -> Result<String, CliError> {
    if spec.channels == 0 || spec.num_classes == 0 || spec.subjects == 0 || spec.trials_per_class == 0
    {
        return Err(usage("--classes, --subjects, --trials and --channels must be positive"));
    }
    let (manifest, trials) = synth_generate(spec, seed).map_err(usage)?;
    let path = out.join("manifest.json");
    write_dataset(&path, &manifest, &trials).map_err(runtime)?;
    log(&format!("wrote {} trials to {}", trials.len(), out.display()));
    Ok(format!("{}\n", path.display()))
}

pub fn cmd_verify(suite: Suite) -> Result<String, CliError> {
    let reports = verify::run(suite);
    let mut text: String = reports.iter().map(|r| r.to_string()).collect();
    let failed: usize = reports
        .iter()
        .map(|r| r.checks.iter().filter(|c| !c.passed).count())
        .sum();
    if failed > 0 {
        eprint!("{text}");
        return Err(CliError::Runtime(format!("{failed} verification checks failed")));
    }
    text.push_str("all checks passed\n");
    Ok(text)
}
