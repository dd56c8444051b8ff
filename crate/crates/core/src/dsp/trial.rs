use serde::{Deserialize, Serialize};

use super::DspError;

/// One multi-channel recording.
///
/// Samples are stored channel-major: channel 0's `T` samples, then
/// channel 1's, and so on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalTrial {
    samples: Vec<f64>,
    channels: usize,
    pub sample_rate_hz: f64,
    pub subject_id: String,
    pub trial_id: u32,
    pub label: usize,
}

impl SignalTrial {
    pub fn new(
        samples: Vec<f64>,
        channels: usize,
        sample_rate_hz: f64,
        subject_id: impl Into<String>,
        trial_id: u32,
        label: usize,
    ) -> Result<Self, DspError> {
        if channels == 0 || samples.is_empty() || !samples.len().is_multiple_of(channels) {
            return Err(DspError::Trial(format!(
                "{} samples do not form {channels} non-empty channels",
                samples.len()
            )));
        }
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(DspError::Trial(format!("sample rate {sample_rate_hz} Hz")));
        }
        let t = samples.len() / channels;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(DspError::NonFinite {
                channel: i / t,
                index: i % t,
            });
        }
        Ok(Self {
            samples,
            channels,
            sample_rate_hz,
            subject_id: subject_id.into(),
            trial_id,
            label,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Number of time samples per channel.
    pub fn len(&self) -> usize {
        self.samples.len() / self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let t = self.len();
        &self.samples[c * t..(c + 1) * t]
    }

    pub fn channels_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.chunks(self.len())
    }

    /// Same metadata, new samples of identical shape.
    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            ..self.clone()
        }
    }

    /// Applies `f` to each channel independently.
    pub(crate) fn map_channels<E>(
        &self,
        mut f: impl FnMut(&[f64]) -> Result<Vec<f64>, E>,
    ) -> Result<Self, E> {
        let mut out = Vec::with_capacity(self.samples.len());
        for ch in self.channels_iter() {
            let y = f(ch)?;
            debug_assert_eq!(y.len(), ch.len());
            out.extend(y);
        }
        Ok(self.with_samples(out))
    }

    pub(crate) fn check_finite(&self) -> Result<(), DspError> {
        let t = self.len();
        match self.samples.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(DspError::NonFinite {
                channel: i / t,
                index: i % t,
            }),
            None => Ok(()),
        }
    }
}

/// Divides each channel by its largest absolute value. All-zero channels
/// pass through unchanged.
pub fn rescale_unit(trial: &SignalTrial) -> SignalTrial {
    let out = trial.map_channels::<std::convert::Infallible>(|ch| {
        let peak = ch.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(if peak > 0.0 {
            ch.iter().map(|v| v / peak).collect()
        } else {
            ch.to_vec()
        })
    });
    match out {
        Ok(t) => t,
        Err(never) => match never {},
    }
}
