use serde::{Deserialize, Serialize};

use super::{segments_tensor, TrainError};
use crate::autodiff::Real;
use crate::dataset::Segment;
use crate::model::ModelWeights;

/// Classification summary. `confusion[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mean_loss: f64,
    pub total: usize,
    pub confusion: Vec<Vec<usize>>,
    /// `None` for classes with no support.
    pub per_class_recall: Vec<Option<f64>>,
}

impl Metrics {
    fn from_parts(confusion: Vec<Vec<usize>>, loss_sum: f64) -> Self {
        let total: usize = confusion.iter().flatten().sum();
        let correct: usize = (0..confusion.len()).map(|k| confusion[k][k]).sum();
        let per_class_recall = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let support: usize = row.iter().sum();
                (support > 0).then(|| row[k] as f64 / support as f64)
            })
            .collect();
        Self {
            accuracy: correct as f64 / total as f64,
            mean_loss: loss_sum / total as f64,
            total,
            confusion,
            per_class_recall,
        }
    }
}

/// Worker cap from `EMGTTL_THREADS`; 1 when unset or unparsable.
pub fn thread_cap() -> usize {
    std::env::var("EMGTTL_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

/// Index of the largest value; ties go to the lowest index.
fn argmax<S: Real>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn accumulate<S: Real>(
    weights: &ModelWeights<S>,
    segments: &[Segment],
    batch_size: usize,
) -> Result<(Vec<Vec<usize>>, f64), TrainError> {
    let config = &weights.config;
    let k = config.num_classes;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss_sum = 0.0;
    for chunk in segments.chunks(batch_size.max(1)) {
        let x = segments_tensor::<S>(chunk, config)?;
        let logits = weights.logits(&x)?;
        for (row, seg) in logits.data().chunks(k).zip(chunk) {
            let max = row.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.as_f64()));
            let lse = row.iter().map(|v| (v.as_f64() - max).exp()).sum::<f64>().ln() + max;
            loss_sum += lse - row[seg.label].as_f64();
            confusion[seg.label][argmax(row)] += 1;
        }
    }
    Ok((confusion, loss_sum))
}

/// Inference-mode metrics. Weights are not modified.
pub fn evaluate<S: Real>(
    weights: &ModelWeights<S>,
    segments: &[Segment],
    batch_size: usize,
) -> Result<Metrics, TrainError> {
    if segments.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    let (confusion, loss) = accumulate(weights, segments, batch_size)?;
    Ok(Metrics::from_parts(confusion, loss))
}

/// Shards segments across up to `threads` workers and merges confusion
/// matrices; counts match [`evaluate`] exactly.
pub fn evaluate_parallel<S: Real>(
    weights: &ModelWeights<S>,
    segments: &[Segment],
    batch_size: usize,
    threads: usize,
) -> Result<Metrics, TrainError> {
    let threads = threads.max(1).min(segments.len().max(1));
    if threads == 1 {
        return evaluate(weights, segments, batch_size);
    }
    if segments.is_empty() {
        return Err(TrainError::EmptyEval);
    }
    let k = weights.config.num_classes;
    let per = segments.len().div_ceil(threads);
    let parts = std::thread::scope(|scope| {
        let handles: Vec<_> = segments
            .chunks(per)
            .map(|part| scope.spawn(move || accumulate(weights, part, batch_size)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("evaluation worker panicked"))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut confusion = vec![vec![0usize; k]; k];
    let mut loss = 0.0;
    for (c, l) in parts {
        for (row, add) in confusion.iter_mut().zip(c) {
            row.iter_mut().zip(add).for_each(|(a, b)| *a += b);
        }
        loss += l;
    }
    Ok(Metrics::from_parts(confusion, loss))
}
