use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{evaluate, train, TrainConfig, TrainError};
use crate::dataset::{build_split, SegmentationConfig, SplitSegments, SplitSpec};
use crate::dsp::SignalTrial;
use crate::model::{init_weights, ModelConfig, ModelWeights, Positional, VARIANTS};

/// Encoder architecture under study; geometry and class count come from
/// the task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyVariant {
    pub variant_id: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub encoder_hidden: usize,
    pub num_heads: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: [usize; 2],
}

fn default_head_hidden() -> [usize; 2] {
    [256, 64]
}

impl StudyVariant {
    /// Published variant `id` in `1..=4`.
    pub fn published(id: usize) -> Result<Self, TrainError> {
        let &(embed_dim, num_layers, encoder_hidden, num_heads) = id
            .checked_sub(1)
            .and_then(|i| VARIANTS.get(i))
            .ok_or_else(|| TrainError::Config(format!("unknown variant {id}; expected 1 to 4")))?;
        Ok(Self {
            variant_id: id,
            embed_dim,
            num_layers,
            encoder_hidden,
            num_heads,
            head_hidden: default_head_hidden(),
        })
    }

    pub fn config(
        &self,
        channels: usize,
        window: usize,
        num_classes: usize,
        dropout_p: f64,
    ) -> Result<ModelConfig, TrainError> {
        let config = ModelConfig {
            channels,
            window,
            embed_dim: self.embed_dim,
            num_layers: self.num_layers,
            num_heads: self.num_heads,
            encoder_hidden: self.encoder_hidden,
            head_hidden: self.head_hidden,
            num_classes,
            dropout_p,
            positional: Positional::Learned,
            encoder_mlp_layers: 1,
        };
        config.validate().map_err(|e| {
            TrainError::Config(format!("variant {}: {e}", self.variant_id))
        })?;
        Ok(config)
    }
}

/// Preprocessed trials plus everything needed to train one run.
#[derive(Clone, Debug)]
pub struct StudyTask<'a> {
    pub trials: &'a [SignalTrial],
    pub num_classes: usize,
    pub split: SplitSpec,
    pub geometries: Vec<SegmentationConfig>,
    /// Template; each run overrides the seed.
    pub train: TrainConfig,
    pub dropout_p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub variant_id: usize,
    pub window_ms: f64,
    pub accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Sample standard deviation (n − 1).
    pub std_accuracy: f64,
    pub param_count: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Trains every (variant, geometry, seed) combination and reports held-out
/// accuracy per (variant, geometry), in input order. Runs are independent,
/// so results do not depend on `threads`.
pub fn variant_study(
    variants: &[StudyVariant],
    seeds: &[u64],
    task: &StudyTask<'_>,
    threads: usize,
) -> Result<Vec<StudyRow>, TrainError> {
    if seeds.len() < 2 {
        return Err(TrainError::Config(format!(
            "need ≥ 2 seeds for a spread, got {}",
            seeds.len()
        )));
    }
    task.train.validate()?;
    let first = task
        .trials
        .first()
        .ok_or_else(|| TrainError::Config("study task has no trials".into()))?;
    let (fs, channels) = (first.sample_rate_hz, first.channels());
    let mut splits: Vec<SplitSegments> = Vec::new();
    let mut configs: Vec<Vec<ModelConfig>> = Vec::new();
    for g in &task.geometries {
        let geometry = g.geometry(fs, channels)?;
        let split = build_split(task.trials, &task.split, geometry)?;
        if split.train.is_empty() || split.test.is_empty() {
            return Err(TrainError::Config(format!(
                "{} ms windows leave an empty train or test set",
                g.window_ms
            )));
        }
        splits.push(split);
        configs.push(
            variants
                .iter()
                .map(|v| v.config(channels, geometry.window, task.num_classes, task.dropout_p))
                .collect::<Result<_, _>>()?,
        );
    }
    let jobs: Vec<(usize, usize, u64)> = (0..variants.len())
        .flat_map(|v| (0..task.geometries.len()).flat_map(move |g| seeds.iter().map(move |&s| (v, g, s))))
        .collect();
    let results: Mutex<Vec<Option<f64>>> = Mutex::new(vec![None; jobs.len()]);
    let failure: Mutex<Option<TrainError>> = Mutex::new(None);
    let next = AtomicUsize::new(0);
    let run = |(v, g, seed): (usize, usize, u64)| -> Result<f64, TrainError> {
        let weights: ModelWeights<f32> = init_weights(&configs[g][v], seed)?;
        let cfg = TrainConfig {
            seed,
            ..task.train.clone()
        };
        let out = train(weights, &splits[g].train, &[], &cfg)?;
        Ok(evaluate(&out.weights, &splits[g].test, cfg.batch_size)?.accuracy)
    };
    std::thread::scope(|scope| {
        for _ in 0..threads.clamp(1, jobs.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= jobs.len() || failure.lock().unwrap().is_some() {
                    break;
                }
                match run(jobs[i]) {
                    Ok(acc) => results.lock().unwrap()[i] = Some(acc),
                    Err(e) => {
                        failure.lock().unwrap().get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let results = results.into_inner().unwrap();
    let mut rows = Vec::new();
    let mut i = 0;
    for (v, variant) in variants.iter().enumerate() {
        for (g, geometry) in task.geometries.iter().enumerate() {
            let accuracies: Vec<f64> = results[i..i + seeds.len()]
                .iter()
                .map(|r| r.expect("every job finished"))
                .collect();
            i += seeds.len();
            let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
            rows.push(StudyRow {
                variant_id: variant.variant_id,
                window_ms: geometry.window_ms,
                accuracies,
                mean_accuracy,
                std_accuracy,
                param_count: configs[g][v].param_count(),
            });
        }
    }
    Ok(rows)
}

#[derive(Serialize)]
struct CsvRow {
    variant_id: usize,
    window_ms: f64,
    mean_accuracy: f64,
    std_accuracy: f64,
    param_count: usize,
}

/// CSV with header `variant_id,window_ms,mean_accuracy,std_accuracy,param_count`.
pub fn write_report_csv<W: std::io::Write>(out: W, rows: &[StudyRow]) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| TrainError::Io {
        path: Path::new("<report>").to_path_buf(),
        source: std::io::Error::other(e),
    };
    for r in rows {
        w.serialize(CsvRow {
            variant_id: r.variant_id,
            window_ms: r.window_ms,
            mean_accuracy: r.mean_accuracy,
            std_accuracy: r.std_accuracy,
            param_count: r.param_count,
        })
        .map_err(err)?;
    }
    if rows.is_empty() {
        w.write_record(["variant_id", "window_ms", "mean_accuracy", "std_accuracy", "param_count"])
            .map_err(err)?;
    }
    w.flush().map_err(|source| TrainError::Io {
        path: Path::new("<report>").to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]).1, 0.0);
    }
}
