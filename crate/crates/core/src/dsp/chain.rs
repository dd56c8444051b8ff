use serde::{Deserialize, Serialize};

use super::{
    apply_filter, mu_law_trial, rescale_unit, wavelet_denoise, DenoiseSpec, DspError, FilterSpec,
    SignalTrial,
};

/// Companding constant used when a run does not set one.
pub const DEFAULT_MU: f64 = 255.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Filter(FilterSpec),
    Denoise(DenoiseSpec),
}

/// Conditioning applied before rescaling and μ-law.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PreprocessChain {
    /// 50 Hz notch, 500 Hz low-pass, wavelet denoising.
    Db1Style,
    /// 20 Hz high-pass, then a 50 Hz band-stop.
    Db4Style,
    /// 20 Hz high-pass, then a literal 50 Hz band-pass.
    Db4StyleBandpass,
    Custom(Vec<Stage>),
}

impl PreprocessChain {
    pub fn stages(&self) -> Vec<Stage> {
        match self {
            PreprocessChain::Db1Style => vec![
                Stage::Filter(FilterSpec::notch(50.0)),
                Stage::Filter(FilterSpec::lowpass(500.0)),
                Stage::Denoise(DenoiseSpec::default()),
            ],
            PreprocessChain::Db4Style => vec![
                Stage::Filter(FilterSpec::highpass(20.0)),
                Stage::Filter(FilterSpec::bandstop(50.0)),
            ],
            PreprocessChain::Db4StyleBandpass => vec![
                Stage::Filter(FilterSpec::highpass(20.0)),
                Stage::Filter(FilterSpec::bandpass(50.0)),
            ],
            PreprocessChain::Custom(stages) => stages.clone(),
        }
    }

    /// Designs every filter against `sample_rate_hz` without touching data.
    pub fn validate(&self, sample_rate_hz: f64) -> Result<(), DspError> {
        for stage in self.stages() {
            if let Stage::Filter(spec) = stage {
                spec.design(sample_rate_hz)?;
            }
        }
        Ok(())
    }
}

/// Runs only the chain's filtering and denoising stages, which are linear
/// for filters and scale-equivariant for denoising.
pub fn apply_stages(trial: &SignalTrial, chain: &PreprocessChain) -> Result<SignalTrial, DspError> {
    let mut current = trial.clone();
    for stage in chain.stages() {
        current = match stage {
            Stage::Filter(spec) => apply_filter(&current, &spec)?,
            Stage::Denoise(spec) => wavelet_denoise(&current, &spec)?,
        };
    }
    Ok(current)
}

/// Runs the chain's stages in order, then per-channel rescaling and μ-law.
pub fn preprocess_chain(
    trial: &SignalTrial,
    chain: &PreprocessChain,
    mu: f64,
) -> Result<SignalTrial, DspError> {
    mu_law_trial(&rescale_unit(&apply_stages(trial, chain)?), mu)
}

/// Preprocesses trials on up to `threads` workers. Output order and values
/// do not depend on the worker count.
pub fn preprocess_all(
    trials: &[SignalTrial],
    chain: &PreprocessChain,
    mu: f64,
    threads: usize,
) -> Result<Vec<SignalTrial>, DspError> {
    let threads = threads.max(1).min(trials.len().max(1));
    if threads == 1 {
        return trials.iter().map(|t| preprocess_chain(t, chain, mu)).collect();
    }
    let chunk = trials.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = trials
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|t| preprocess_chain(t, chain, mu))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(trials.len());
        for h in handles {
            out.extend(h.join().expect("preprocessing worker panicked")?);
        }
        Ok(out)
    })
}
