use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{segment_trial, DatasetError, Geometry, Segment};
use crate::dsp::SignalTrial;

/// Whole-trial partition by trial id, applied to every subject and class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_trial_ids: BTreeSet<u32>,
    pub test_trial_ids: BTreeSet<u32>,
}

impl SplitSpec {
    pub fn new(train: impl IntoIterator<Item = u32>, test: impl IntoIterator<Item = u32>) -> Self {
        Self {
            train_trial_ids: train.into_iter().collect(),
            test_trial_ids: test.into_iter().collect(),
        }
    }

    /// Named presets: `db1-paper` (ten trials) and `db4-paper` (five trials).
    pub fn preset(name: &str) -> Result<Self, DatasetError> {
        match name {
            "db1-paper" => Ok(Self::new([1, 3, 4, 6, 8, 9, 10], [2, 5, 7])),
            "db4-paper" => Ok(Self::new([1, 2, 3], [4, 5])),
            other => Err(DatasetError::Config(format!(
                "unknown split preset {other:?} (expected db1-paper or db4-paper)"
            ))),
        }
    }

    pub fn validate(&self, available: &BTreeSet<u32>) -> Result<(), DatasetError> {
        let overlap: Vec<_> = self
            .train_trial_ids
            .intersection(&self.test_trial_ids)
            .collect();
        if !overlap.is_empty() {
            return Err(DatasetError::Config(format!(
                "trial ids {overlap:?} appear in both train and test"
            )));
        }
        let missing: Vec<_> = self
            .train_trial_ids
            .union(&self.test_trial_ids)
            .filter(|id| !available.contains(id))
            .collect();
        if !missing.is_empty() {
            return Err(DatasetError::Config(format!(
                "split lists trial ids {missing:?} not present in the dataset (available {available:?})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitSegments {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    /// `subject/trial` of trials shorter than one window.
    pub short_trials: Vec<String>,
}

/// Segments already-preprocessed trials into train and test sets. Trials
/// whose id is in neither set are skipped.
pub fn build_split(
    trials: &[SignalTrial],
    split: &SplitSpec,
    geometry: Geometry,
) -> Result<SplitSegments, DatasetError> {
    let available = trials.iter().map(|t| t.trial_id).collect();
    split.validate(&available)?;
    let mut out = SplitSegments::default();
    for trial in trials {
        let target = if split.train_trial_ids.contains(&trial.trial_id) {
            &mut out.train
        } else if split.test_trial_ids.contains(&trial.trial_id) {
            &mut out.test
        } else {
            continue;
        };
        let seg = segment_trial(trial, geometry)?;
        if seg.too_short {
            out.short_trials
                .push(format!("{}/{}", trial.subject_id, trial.trial_id));
        }
        target.extend(seg.segments);
    }
    Ok(out)
}
