use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{adam_step, evaluate, AdamState, TrainConfig, TrainError};
use crate::autodiff::{Real, Tape, Tensor};
use crate::dataset::{batches, epoch_seed, Segment};
use crate::model::{forward, Mode, ModelConfig, ModelWeights};

/// One line of the metric history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_accuracy: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    pub weights: ModelWeights<S>,
    pub optimizer: AdamState<S>,
    pub history: Vec<EpochRecord>,
    /// Weights at the epoch with the highest eval accuracy (earliest wins).
    pub best: Option<(usize, f64, ModelWeights<S>)>,
}

fn check_geometry(segments: &[Segment], config: &ModelConfig) -> Result<(), TrainError> {
    for s in segments {
        if s.channels != config.channels || s.window != config.window {
            return Err(TrainError::Config(format!(
                "segment {}/{}@{} is {}x{}, model expects {}x{}",
                s.subject_id, s.trial_id, s.start, s.channels, s.window, config.channels, config.window
            )));
        }
        if s.label >= config.num_classes {
            return Err(TrainError::Config(format!(
                "segment label {} but model has {} classes",
                s.label, config.num_classes
            )));
        }
    }
    Ok(())
}

/// Stacks segments into a `[B, C, W]` tensor after checking them against
/// `config`.
pub fn segments_tensor<S: Real>(
    segments: &[Segment],
    config: &ModelConfig,
) -> Result<Tensor<S>, TrainError> {
    check_geometry(segments, config)?;
    let data = segments
        .iter()
        .flat_map(|s| s.data.iter().map(|&v| S::from_f64(v as f64)))
        .collect();
    Ok(Tensor::from_vec(
        &[segments.len(), config.channels, config.window],
        data,
    )?)
}

/// Epoch loop: shuffle, batch, forward, cross-entropy, backward, Adam.
/// Evaluates on `eval` after every epoch when it is non-empty.
pub fn train<S: Real>(
    mut weights: ModelWeights<S>,
    train_set: &[Segment],
    eval_set: &[Segment],
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::Config("training set is empty".into()));
    }
    check_geometry(train_set, &weights.config)?;
    check_geometry(eval_set, &weights.config)?;
    let mut state = AdamState::new(&weights);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, ModelWeights<S>)> = None;
    let dropout_base = epoch_seed(cfg.seed, u64::MAX);
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        for batch in batches(train_set, cfg.batch_size, Some(epoch_seed(cfg.seed, epoch as u64)))? {
            let c = &weights.config;
            let x = Tensor::from_vec(
                &[batch.len(), c.channels, c.window],
                batch.x.iter().map(|&v| S::from_f64(v as f64)).collect(),
            )?;
            let mut tape = Tape::new();
            let mode = Mode::training(epoch_seed(dropout_base, state.step));
            let out = forward(&mut tape, &weights, &x, mode)?;
            let loss = tape.cross_entropy(out.logits, &batch.y)?;
            loss_sum += tape.value(loss).data()[0].as_f64() * batch.len() as f64;
            let mut grads = tape.backward(loss)?;
            for (p, &var) in weights.params.iter_mut().zip(&out.vars.all) {
                p.zero_grad();
                if let Some(g) = grads.take(var) {
                    p.accumulate(&g);
                }
            }
            adam_step(&mut weights, &mut state, cfg)?;
            weights.zero_grad();
        }
        let eval_accuracy = if eval_set.is_empty() {
            None
        } else {
            Some(evaluate(&weights, eval_set, cfg.batch_size)?.accuracy)
        };
        if let Some(acc) = eval_accuracy {
            if best.as_ref().is_none_or(|(_, b, _)| acc > *b) {
                best = Some((epoch, acc, weights.clone()));
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            eval_accuracy,
        });
    }
    Ok(TrainOutcome {
        weights,
        optimizer: state,
        history,
        best,
    })
}

/// Writes one JSON object per line.
pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<(), TrainError> {
    let io = |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for record in history {
        let line = serde_json::to_string(record).expect("history record serializes");
        writeln!(file, "{line}").map_err(io)?;
    }
    file.flush().map_err(io)
}
