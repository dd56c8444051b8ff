use serde::{Deserialize, Serialize};

use super::DatasetError;
use crate::dsp::SignalTrial;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentationConfig {
    pub window_ms: f64,
    pub step_ms: f64,
}

/// Window and step in samples, resolved for one sample rate and channel count.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Geometry {
    pub channels: usize,
    pub window: usize,
    pub step: usize,
}

impl SegmentationConfig {
    pub fn new(window_ms: f64, step_ms: f64) -> Self {
        Self { window_ms, step_ms }
    }

    /// 500 ms windows every 250 ms.
    pub fn standard() -> Self {
        Self::new(500.0, 250.0)
    }

    /// 250 ms windows every 100 ms.
    pub fn short() -> Self {
        Self::new(250.0, 100.0)
    }

    /// Converts to samples and enforces the patch constraint `W mod C = 0`.
    pub fn geometry(&self, sample_rate_hz: f64, channels: usize) -> Result<Geometry, DatasetError> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.window_ms) || !positive(self.step_ms) {
            return Err(DatasetError::Config(format!(
                "window {} ms and step {} ms must be positive",
                self.window_ms, self.step_ms
            )));
        }
        if self.step_ms > self.window_ms {
            return Err(DatasetError::Config(format!(
                "step {} ms exceeds window {} ms",
                self.step_ms, self.window_ms
            )));
        }
        if channels == 0 {
            return Err(DatasetError::Config("zero channels".into()));
        }
        let window = (self.window_ms / 1000.0 * sample_rate_hz).round() as usize;
        let step = (self.step_ms / 1000.0 * sample_rate_hz).round() as usize;
        if window == 0 || step == 0 {
            return Err(DatasetError::Config(format!(
                "window {window} / step {step} samples at {sample_rate_hz} Hz; both must be at least 1"
            )));
        }
        if !window.is_multiple_of(channels) {
            let nearest = ((window as f64 / channels as f64).round() as usize).max(1) * channels;
            return Err(DatasetError::Config(format!(
                "W mod C: window of {window} samples is not divisible by {channels} channels; \
                 nearest valid window is {nearest} samples ({} ms)",
                nearest as f64 * 1000.0 / sample_rate_hz
            )));
        }
        Ok(Geometry {
            channels,
            window,
            step,
        })
    }
}

/// A `C × W` window of a preprocessed trial, stored channel-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub data: Vec<f32>,
    pub channels: usize,
    pub window: usize,
    pub label: usize,
    pub subject_id: String,
    pub trial_id: u32,
    pub start: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation {
    pub segments: Vec<Segment>,
    /// Set when the trial was shorter than one window.
    pub too_short: bool,
}

/// `⌊(T − W)/S⌋ + 1`, or zero when `T < W`.
pub fn segment_count(t: usize, window: usize, step: usize) -> usize {
    assert!(window >= 1 && step >= 1);
    if t < window {
        0
    } else {
        (t - window) / step + 1
    }
}

pub fn segment_starts(t: usize, window: usize, step: usize) -> impl Iterator<Item = usize> {
    (0..segment_count(t, window, step)).map(move |i| i * step)
}

pub fn segment_trial(
    trial: &SignalTrial,
    geometry: Geometry,
) -> Result<Segmentation, DatasetError> {
    if trial.channels() != geometry.channels {
        return Err(DatasetError::Trial {
            trial: format!("{}/{}", trial.subject_id, trial.trial_id),
            reason: format!(
                "{} channels, geometry expects {}",
                trial.channels(),
                geometry.channels
            ),
        });
    }
    let t = trial.len();
    let w = geometry.window;
    let segments = segment_starts(t, w, geometry.step)
        .map(|start| {
            let mut data = Vec::with_capacity(geometry.channels * w);
            for ch in trial.channels_iter() {
                data.extend(ch[start..start + w].iter().map(|&v| v as f32));
            }
            Segment {
                data,
                channels: geometry.channels,
                window: w,
                label: trial.label,
                subject_id: trial.subject_id.clone(),
                trial_id: trial.trial_id,
                start,
            }
        })
        .collect();
    Ok(Segmentation {
        segments,
        too_short: t < w,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn window_equal_to_trial_gives_one_segment() {
        assert_eq!(segment_count(100, 100, 7), 1);
        assert_eq!(segment_count(99, 100, 7), 0);
    }

    #[test]
    fn geometry_resolves_sample_counts() {
        let g = SegmentationConfig::standard().geometry(4000.0, 5).unwrap();
        assert_eq!((g.window, g.step), (2000, 1000));
        let g = SegmentationConfig::short().geometry(4000.0, 5).unwrap();
        assert_eq!((g.window, g.step), (1000, 400));
    }

    #[test]
    fn indivisible_window_suggests_nearest() {
        let err = SegmentationConfig::new(10.0, 5.0).geometry(1000.0, 3).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("W mod C") && text.contains("9 samples"), "{text}");
    }

    #[test]
    fn step_longer_than_window_is_rejected() {
        assert!(SegmentationConfig::new(100.0, 200.0).geometry(1000.0, 1).is_err());
    }

    #[test]
    fn segments_copy_channel_rows() {
        let samples: Vec<f64> = (0..20).map(|v| v as f64).collect();
        let trial = SignalTrial::new(samples, 2, 10.0, "s", 3, 1).unwrap();
        let geometry = Geometry {
            channels: 2,
            window: 4,
            step: 3,
        };
        let out = segment_trial(&trial, geometry).unwrap();
        assert_eq!(out.segments.len(), 3);
        let s = &out.segments[1];
        assert_eq!(s.start, 3);
        assert_eq!(s.data, vec![3., 4., 5., 6., 13., 14., 15., 16.]);
        assert_eq!((s.label, s.trial_id), (1, 3));
    }

    #[test]
    fn short_trial_sets_flag() {
        let trial = SignalTrial::new(vec![0.0; 6], 2, 10.0, "s", 1, 0).unwrap();
        let out = segment_trial(
            &trial,
            Geometry {
                channels: 2,
                window: 4,
                step: 1,
            },
        )
        .unwrap();
        assert!(out.segments.is_empty() && out.too_short);
    }
}
