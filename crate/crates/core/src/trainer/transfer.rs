use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::Real;
use crate::model::{init_weights, ModelConfig, ModelWeights};

/// Parameters whose names start with this prefix form the classifier head.
pub const HEAD_PREFIX: &str = "head.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransferMode {
    /// Fresh head; every parameter stays trainable.
    #[default]
    HeadOnlyReinit,
    /// Fresh head; everything else is frozen.
    FreezeEncoder,
}

fn mismatches(source: &ModelConfig, target: &ModelConfig) -> Vec<String> {
    let mut out = Vec::new();
    let mut check = |name: &str, a: usize, b: usize| {
        if a != b {
            out.push(format!("{name} {a} vs {b}"));
        }
    };
    check("channels", source.channels, target.channels);
    check("embed_dim", source.embed_dim, target.embed_dim);
    check("num_layers", source.num_layers, target.num_layers);
    check("num_heads", source.num_heads, target.num_heads);
    check("encoder_hidden", source.encoder_hidden, target.encoder_hidden);
    check("encoder_mlp_layers", source.encoder_mlp_layers, target.encoder_mlp_layers);
    if source.window != target.window {
        out.push(format!(
            "window {} vs {} (E_pos needs {} vs {} positions)",
            source.window,
            target.window,
            source.num_patches() + 1,
            target.num_patches() + 1
        ));
    }
    if source.positional != target.positional {
        out.push(format!(
            "positional {:?} vs {:?}",
            source.positional, target.positional
        ));
    }
    out
}

/// Copies every non-head tensor from `source` and initializes a new head
/// for `target` (which may change `num_classes`, `head_hidden` and
/// `dropout_p`). The encoder geometry must match exactly.
pub fn transfer<S: Real>(
    source: &ModelWeights<S>,
    target: &ModelConfig,
    mode: TransferMode,
    seed: u64,
) -> Result<ModelWeights<S>, TrainError> {
    target.validate()?;
    let diff = mismatches(&source.config, target);
    if !diff.is_empty() {
        return Err(TrainError::Transfer(diff.join("; ")));
    }
    let mut out: ModelWeights<S> = init_weights(target, seed)?;
    for p in out.params.iter_mut() {
        if p.name.starts_with(HEAD_PREFIX) {
            continue;
        }
        let src = source
            .get(&p.name)
            .ok_or_else(|| TrainError::Transfer(format!("source lacks {}", p.name)))?;
        p.value = src.value.clone();
        p.trainable = mode == TransferMode::HeadOnlyReinit;
    }
    Ok(out)
}
