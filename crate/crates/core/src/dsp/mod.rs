//! Deterministic signal conditioning for raw multi-channel sEMG.
//!
//! Every operation is a pure function of its inputs. Filters run in `f64`
//! on channel-major sample storage; the last step of each preprocessing
//! chain is per-channel rescaling into `[-1, 1]` followed by μ-law
//! companding.

mod chain;
mod filter;
mod mulaw;
mod trial;
mod wavelet;

pub use chain::{apply_stages, preprocess_all, preprocess_chain, PreprocessChain, Stage, DEFAULT_MU};
pub use filter::{apply_filter, Biquad, FilterKind, FilterSpec, SecondOrderSections};
pub use mulaw::{mu_law, mu_law_inverse, mu_law_trial};
pub use trial::{rescale_unit, SignalTrial};
pub use wavelet::{
    dwt, idwt, wavedec, waverec, wavelet_denoise, DenoiseSpec, ThresholdRule, Wavelet,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DspError {
    #[error("{what} {freq_hz} Hz must lie strictly between 0 and Nyquist ({nyquist_hz} Hz)")]
    Frequency {
        what: &'static str,
        freq_hz: f64,
        nyquist_hz: f64,
    },
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("signal of {samples} samples is too short for {needed}")]
    TooShort { samples: usize, needed: String },
    #[error("{levels} decomposition levels need at least {} samples, got {samples}", 1usize << levels)]
    LevelsTooDeep { levels: usize, samples: usize },
    #[error("non-finite sample at channel {channel}, index {index}")]
    NonFinite { channel: usize, index: usize },
    #[error("mu-law input {0} outside [-1, 1]")]
    Domain(f64),
    #[error("mu must be positive and finite, got {0}")]
    Mu(f64),
    #[error("invalid trial: {0}")]
    Trial(String),
}
