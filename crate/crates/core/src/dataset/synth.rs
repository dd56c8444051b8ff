//! Seeded generator of multi-channel sEMG-like recordings.
//!
//! Each class owns two narrowband sources with class-specific centre
//! frequencies, a signed channel mixing pattern and slow amplitude
//! envelopes. The mixing signs set the inter-channel correlation structure,
//! which survives per-channel rescaling.
//! Subjects perturb frequencies and channel gains; every trial adds fresh
//! source noise, broadband background, 50 Hz mains and a DC offset.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::batch::epoch_seed;
use super::manifest::trial_file_name;
use super::{DatasetError, DatasetManifest, TrialEntry};
use crate::dsp::{Biquad, SecondOrderSections, SignalTrial};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub subjects: usize,
    pub trials_per_class: usize,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub channels: usize,
}

const SOURCES: usize = 2;
const SOURCE_Q: f64 = 4.0;
const AMPLITUDE_UV: f64 = 100.0;

struct ClassTemplate {
    freqs: [f64; SOURCES],
    /// `mix[source][channel]`
    mix: Vec<Vec<f64>>,
    env_hz: Vec<f64>,
    env_depth: Vec<f64>,
}

struct SubjectProfile {
    freq_scale: f64,
    gains: Vec<f64>,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    let mixed = parts.iter().fold(seed, |acc, &p| epoch_seed(acc, p));
    ChaCha8Rng::seed_from_u64(mixed)
}

impl SynthSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        if self.num_classes == 0 || self.subjects == 0 || self.trials_per_class == 0 || self.channels == 0
        {
            return Err(DatasetError::Config("synthetic counts must all be positive".into()));
        }
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz >= 60.0) {
            return Err(DatasetError::Config(format!(
                "synthetic sample rate {} Hz is below 60 Hz",
                self.sample_rate_hz
            )));
        }
        let samples = self.duration_s * self.sample_rate_hz;
        if !(samples.is_finite() && samples >= 1.0) {
            return Err(DatasetError::Config(format!(
                "duration {} s gives no samples",
                self.duration_s
            )));
        }
        Ok(())
    }

    /// Samples per channel.
    pub fn samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Source frequencies are drawn from `[20, min(400, 0.4·fs)]` Hz.
    fn band(&self) -> (f64, f64) {
        let hi = 400.0_f64.min(0.4 * self.sample_rate_hz);
        (20.0_f64.min(0.5 * hi), hi)
    }
}

fn class_templates(spec: &SynthSpec, seed: u64) -> Vec<ClassTemplate> {
    let (lo, hi) = spec.band();
    let (llo, lhi) = (lo.ln(), hi.ln());
    let width = (lhi - llo) / spec.num_classes as f64;
    // a shuffled stratum per class keeps primary peaks apart
    let mut strata: Vec<usize> = (0..spec.num_classes).collect();
    let mut rng = stream(seed, &[0xC1A5]);
    rand::seq::SliceRandom::shuffle(strata.as_mut_slice(), &mut rng);
    strata
        .into_iter()
        .map(|stratum| {
            let primary = (llo + width * (stratum as f64 + rng.gen_range(0.25..0.75))).exp();
            let secondary = rng.gen_range(lo..hi);
            let mix = (0..SOURCES)
                .map(|_| {
                    let dominant = rng.gen_range(0..spec.channels);
                    (0..spec.channels)
                        .map(|ch| {
                            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                            let base = rng.gen_range(0.3..0.8);
                            sign * if ch == dominant { 1.0 } else { base }
                        })
                        .collect()
                })
                .collect();
            ClassTemplate {
                freqs: [primary, secondary],
                mix,
                env_hz: (0..spec.channels).map(|_| rng.gen_range(1.0..4.0)).collect(),
                env_depth: (0..spec.channels).map(|_| rng.gen_range(0.2..0.8)).collect(),
            }
        })
        .collect()
}

fn subject_profile(spec: &SynthSpec, seed: u64, subject: usize) -> SubjectProfile {
    let mut rng = stream(seed, &[0x5B7, subject as u64]);
    SubjectProfile {
        freq_scale: (0.03 * normal(&mut rng)).exp(),
        gains: (0..spec.channels)
            .map(|_| (0.15 * normal(&mut rng)).exp())
            .collect(),
    }
}

fn narrowband(rng: &mut ChaCha8Rng, t: usize, fs: f64, f0: f64) -> Vec<f64> {
    let noise: Vec<f64> = (0..t).map(|_| normal(rng)).collect();
    let y = SecondOrderSections(vec![Biquad::bandpass(fs, f0, SOURCE_Q)]).filter(&noise);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / t as f64).sqrt();
    if rms > 0.0 {
        y.into_iter().map(|v| v / rms).collect()
    } else {
        y
    }
}

fn generate_trial(
    spec: &SynthSpec,
    template: &ClassTemplate,
    profile: &SubjectProfile,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let t = spec.samples();
    let fs = spec.sample_rate_hz;
    let (lo, hi) = spec.band();
    let sources: Vec<Vec<f64>> = template
        .freqs
        .iter()
        .map(|&f| {
            let f = (f * profile.freq_scale * (0.01 * normal(rng)).exp()).clamp(lo, hi);
            narrowband(rng, t, fs, f)
        })
        .collect();
    let mains_amp = rng.gen_range(0.05..0.3);
    let mains_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let mains_hz = 50.0_f64.min(0.45 * fs);
    let mut out = Vec::with_capacity(spec.channels * t);
    for ch in 0..spec.channels {
        let gain = profile.gains[ch] * (0.1 * normal(rng)).exp();
        let env_phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let dc = 0.05 * normal(rng);
        let (env_hz, depth) = (template.env_hz[ch], template.env_depth[ch]);
        for i in 0..t {
            let time = i as f64 / fs;
            let envelope = 1.0 + depth * (std::f64::consts::TAU * env_hz * time + env_phase).sin();
            let mut v: f64 = (0..SOURCES).map(|k| template.mix[k][ch] * sources[k][i]).sum();
            v = gain * envelope * v + 0.25 * normal(rng);
            v += mains_amp * (std::f64::consts::TAU * mains_hz * time + mains_phase).sin() + dc;
            // quantized so that files round-trip exactly
            out.push((AMPLITUDE_UV * v) as f32 as f64);
        }
    }
    out
}

/// Deterministic in `seed`. Trial ids run from 1 to `trials_per_class`
/// within each (subject, class).
pub fn synth_generate(
    spec: &SynthSpec,
    seed: u64,
) -> Result<(DatasetManifest, Vec<SignalTrial>), DatasetError> {
    spec.validate()?;
    let templates = class_templates(spec, seed);
    let mut trials = Vec::with_capacity(spec.subjects * spec.num_classes * spec.trials_per_class);
    let mut entries = Vec::with_capacity(trials.capacity());
    for subject in 0..spec.subjects {
        let profile = subject_profile(spec, seed, subject);
        let subject_id = format!("s{:02}", subject + 1);
        for (class, template) in templates.iter().enumerate() {
            for trial in 1..=spec.trials_per_class as u32 {
                let mut rng = stream(seed, &[subject as u64, class as u64, trial as u64]);
                let samples = generate_trial(spec, template, &profile, &mut rng);
                let t = SignalTrial::new(
                    samples,
                    spec.channels,
                    spec.sample_rate_hz,
                    subject_id.clone(),
                    trial,
                    class,
                )?;
                entries.push(TrialEntry {
                    file: trial_file_name(&t),
                    subject_id: subject_id.clone(),
                    trial_id: trial,
                    class_index: class,
                });
                trials.push(t);
            }
        }
    }
    let manifest = DatasetManifest {
        name: format!("synthetic-{seed}"),
        channels: spec.channels,
        sample_rate_hz: spec.sample_rate_hz,
        classes: (0..spec.num_classes).map(|c| format!("class_{c}")).collect(),
        trials: entries,
    };
    Ok((manifest, trials))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            subjects: 1,
            trials_per_class: 2,
            duration_s: 0.5,
            sample_rate_hz: 1000.0,
            channels: 2,
        }
    }

    #[test]
    fn primary_peaks_fall_in_distinct_strata() {
        let s = SynthSpec {
            num_classes: 6,
            ..spec()
        };
        let mut peaks: Vec<f64> = class_templates(&s, 3).iter().map(|t| t.freqs[0]).collect();
        peaks.sort_by(f64::total_cmp);
        let (lo, hi) = s.band();
        assert!(peaks[0] >= lo && peaks[5] <= hi);
        for w in peaks.windows(2) {
            assert!(w[1] / w[0] > 1.05, "{peaks:?}");
        }
    }

    #[test]
    fn rejects_zero_counts() {
        let s = SynthSpec {
            subjects: 0,
            ..spec()
        };
        assert!(synth_generate(&s, 1).is_err());
    }
}
