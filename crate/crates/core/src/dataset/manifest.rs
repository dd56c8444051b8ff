use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::dsp::SignalTrial;

/// One recording listed in a manifest. `file` is resolved relative to the
/// manifest's directory unless absolute.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialEntry {
    pub file: PathBuf,
    pub subject_id: String,
    pub trial_id: u32,
    pub class_index: usize,
}

impl TrialEntry {
    fn describe(&self) -> String {
        format!(
            "{}/{} ({})",
            self.subject_id,
            self.trial_id,
            self.file.display()
        )
    }
}

/// Dataset description; the order of `classes` defines label indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub channels: usize,
    pub sample_rate_hz: f64,
    pub classes: Vec<String>,
    pub trials: Vec<TrialEntry>,
}

impl DatasetManifest {
    /// Checks everything that does not require touching trial files.
    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.channels == 0 {
            return Err(DatasetError::Config("manifest declares zero channels".into()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(DatasetError::Config(format!(
                "sample rate {} Hz is not positive",
                self.sample_rate_hz
            )));
        }
        let mut seen = HashSet::new();
        for entry in &self.trials {
            if entry.class_index >= self.classes.len() {
                return Err(DatasetError::Trial {
                    trial: entry.describe(),
                    reason: format!(
                        "unknown class index {} ({} classes declared)",
                        entry.class_index,
                        self.classes.len()
                    ),
                });
            }
            if !seen.insert((&entry.subject_id, entry.class_index, entry.trial_id)) {
                return Err(DatasetError::Trial {
                    trial: entry.describe(),
                    reason: format!(
                        "trial id repeated for class {:?}",
                        self.classes[entry.class_index]
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Reads a headerless little-endian `f32` channel-major file.
pub fn read_trial_file(path: &Path, channels: usize) -> Result<Vec<f64>, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if bytes.is_empty() || bytes.len() % (4 * channels) != 0 {
        return Err(DatasetError::Trial {
            trial: path.display().to_string(),
            reason: format!(
                "{} bytes is not a whole number of {channels}-channel f32 frames",
                bytes.len()
            ),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect())
}

/// Writes samples as little-endian `f32`; values are narrowed.
pub fn write_trial_file(path: &Path, samples: &[f64]) -> Result<(), DatasetError> {
    let bytes: Vec<u8> = samples
        .iter()
        .flat_map(|&v| (v as f32).to_le_bytes())
        .collect();
    fs::write(path, bytes).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// File name used by [`write_dataset`] for a trial.
pub fn trial_file_name(trial: &SignalTrial) -> PathBuf {
    PathBuf::from(format!(
        "{}_c{:02}_t{:03}.f32",
        trial.subject_id, trial.label, trial.trial_id
    ))
}

fn resolve(base: &Path, file: &Path) -> PathBuf {
    if file.is_absolute() {
        file.to_path_buf()
    } else {
        base.join(file)
    }
}

pub fn load_dataset(
    manifest_path: &Path,
) -> Result<(DatasetManifest, Vec<SignalTrial>), DatasetError> {
    let text = fs::read_to_string(manifest_path).map_err(|source| DatasetError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|source| DatasetError::Manifest {
            path: manifest_path.to_path_buf(),
            source,
        })?;
    manifest.validate()?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut trials = Vec::with_capacity(manifest.trials.len());
    for entry in &manifest.trials {
        let path = resolve(base, &entry.file);
        let samples = read_trial_file(&path, manifest.channels).map_err(|e| match e {
            DatasetError::Trial { reason, .. } => DatasetError::Trial {
                trial: entry.describe(),
                reason,
            },
            other => other,
        })?;
        let trial = SignalTrial::new(
            samples,
            manifest.channels,
            manifest.sample_rate_hz,
            entry.subject_id.clone(),
            entry.trial_id,
            entry.class_index,
        )
        .map_err(|e| DatasetError::Trial {
            trial: entry.describe(),
            reason: e.to_string(),
        })?;
        trials.push(trial);
    }
    Ok((manifest, trials))
}

/// Writes every trial next to `manifest_path` and then the manifest itself.
/// The manifest's `trials` list is replaced by entries for `trials`.
pub fn write_dataset(
    manifest_path: &Path,
    manifest: &DatasetManifest,
    trials: &[SignalTrial],
) -> Result<DatasetManifest, DatasetError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(base).map_err(|source| DatasetError::Io {
        path: base.to_path_buf(),
        source,
    })?;
    let mut out = manifest.clone();
    out.trials.clear();
    for trial in trials {
        if trial.channels() != manifest.channels {
            return Err(DatasetError::Trial {
                trial: format!("{}/{}", trial.subject_id, trial.trial_id),
                reason: format!(
                    "{} channels, manifest declares {}",
                    trial.channels(),
                    manifest.channels
                ),
            });
        }
        let file = trial_file_name(trial);
        write_trial_file(&base.join(&file), trial.samples())?;
        out.trials.push(TrialEntry {
            file,
            subject_id: trial.subject_id.clone(),
            trial_id: trial.trial_id,
            class_index: trial.label,
        });
    }
    out.validate()?;
    let text = serde_json::to_string_pretty(&out).expect("manifest serializes");
    fs::write(manifest_path, text).map_err(|source| DatasetError::Io {
        path: manifest_path.to_path_buf(),
        source,
    })?;
    Ok(out)
}
