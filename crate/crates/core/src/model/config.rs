use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Positional {
    /// Trainable `(N+1) × d` table.
    #[default]
    Learned,
    /// Fixed sine/cosine table; contributes no parameters.
    Sinusoidal,
}

/// Transformer hyperparameters. `channels` doubles as the patch width, so a
/// segment of `window` samples yields `window / channels` tokens plus the
/// class token.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub channels: usize,
    pub window: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub encoder_hidden: usize,
    #[serde(default = "default_head_hidden")]
    pub head_hidden: [usize; 2],
    pub num_classes: usize,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
    #[serde(default)]
    pub positional: Positional,
    /// Hidden layers in each encoder MLP: 1 (`d→H→d`) or 2 (`d→H→H→d`).
    #[serde(default = "default_mlp_layers")]
    pub encoder_mlp_layers: usize,
}

fn default_head_hidden() -> [usize; 2] {
    [256, 64]
}

fn default_dropout() -> f64 {
    0.1
}

fn default_mlp_layers() -> usize {
    1
}

/// The four published architecture variants as `(d, L, encoder_hidden, h)`.
pub const VARIANTS: [(usize, usize, usize, usize); 4] =
    [(64, 3, 256, 8), (72, 4, 512, 12), (128, 6, 256, 16), (128, 6, 512, 32)];

impl ModelConfig {
    /// Variant `id` in `1..=4` for a given input geometry and class count.
    pub fn variant(
        id: usize,
        channels: usize,
        window: usize,
        num_classes: usize,
    ) -> Result<Self, ModelError> {
        let &(embed_dim, num_layers, encoder_hidden, num_heads) = id
            .checked_sub(1)
            .and_then(|i| VARIANTS.get(i))
            .ok_or_else(|| ModelError::Config(format!("unknown variant {id}; expected 1 to 4")))?;
        let config = Self {
            channels,
            window,
            embed_dim,
            num_layers,
            num_heads,
            encoder_hidden,
            head_hidden: default_head_hidden(),
            num_classes,
            dropout_p: default_dropout(),
            positional: Positional::Learned,
            encoder_mlp_layers: 1,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("channels", self.channels),
            ("window", self.window),
            ("embed_dim", self.embed_dim),
            ("num_layers", self.num_layers),
            ("num_heads", self.num_heads),
            ("encoder_hidden", self.encoder_hidden),
            ("head_hidden[0]", self.head_hidden[0]),
            ("head_hidden[1]", self.head_hidden[1]),
            ("num_classes", self.num_classes),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be positive")));
        }
        if !self.window.is_multiple_of(self.channels) {
            return Err(ModelError::Config(format!(
                "W mod C must be 0: window {} is not divisible by {} channels",
                self.window, self.channels
            )));
        }
        if !self.embed_dim.is_multiple_of(self.num_heads) {
            return Err(ModelError::Config(format!(
                "d mod h must be 0: embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.num_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(ModelError::Config(format!(
                "dropout_p {} outside [0, 1)",
                self.dropout_p
            )));
        }
        if !(1..=2).contains(&self.encoder_mlp_layers) {
            return Err(ModelError::Config(format!(
                "encoder_mlp_layers must be 1 or 2, got {}",
                self.encoder_mlp_layers
            )));
        }
        Ok(())
    }

    /// Number of patches `N = W / C`.
    pub fn num_patches(&self) -> usize {
        self.window / self.channels
    }

    pub fn patch_len(&self) -> usize {
        self.channels * self.channels
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let d = self.embed_dim;
        let hid = self.encoder_hidden;
        let linear = |i: usize, o: usize| i * o + o;
        let pos = match self.positional {
            Positional::Learned => (self.num_patches() + 1) * d,
            Positional::Sinusoidal => 0,
        };
        let mlp = match self.encoder_mlp_layers {
            1 => linear(d, hid) + linear(hid, d),
            _ => linear(d, hid) + linear(hid, hid) + linear(hid, d),
        };
        let layer = 2 * d + 3 * linear(d, d) + linear(d, d) + 2 * d + mlp;
        let [h1, h2] = self.head_hidden;
        let head = linear(d, h1) + linear(h1, h2) + linear(h2, self.num_classes);
        self.patch_len() * d + d + pos + self.num_layers * layer + 2 * d + head
    }
}
