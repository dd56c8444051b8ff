//! Patch transformer classifier: each window of `W` samples is cut into
//! `N = W/C` square patches of `C × C` values, embedded, prefixed with a
//! class token, passed through `L` pre-norm encoder layers and read out
//! from the class token by a two-hidden-layer head.

mod config;
mod forward;
mod weights;

pub use config::{ModelConfig, Positional, VARIANTS};
pub use forward::{
    embed, encoder_layer, forward, layer_norm, linear, msa, patchify, self_attention_head,
    sinusoidal_table, unpatchify, Forward, LayerVars, Linear, Mode, ModelVars, Norm, LN_EPS,
};
pub use weights::{init_weights, ModelWeights, INIT_STD};

use crate::autodiff::TensorError;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ModelError {
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("bad model input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
