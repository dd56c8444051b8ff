use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{ModelConfig, ModelError, Positional};
use crate::autodiff::{Parameter, Real, Tensor};

pub const INIT_STD: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Init {
    /// Normal truncated at two standard deviations, rescaled so the
    /// realised standard deviation equals [`INIT_STD`].
    TruncNormal,
    Normal,
    Zeros,
    Ones,
}

/// Every learnable tensor in forward-pass order.
pub(crate) fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Init)> {
    let d = config.embed_dim;
    let hid = config.encoder_hidden;
    let mut out = Vec::new();
    let linear = |out: &mut Vec<(String, Vec<usize>, Init)>, name: String, i: usize, o: usize| {
        out.push((format!("{name}.weight"), vec![i, o], Init::TruncNormal));
        out.push((format!("{name}.bias"), vec![o], Init::Zeros));
    };
    let norm = |out: &mut Vec<(String, Vec<usize>, Init)>, name: String| {
        out.push((format!("{name}.gain"), vec![d], Init::Ones));
        out.push((format!("{name}.bias"), vec![d], Init::Zeros));
    };
    out.push(("E".to_string(), vec![config.patch_len(), d], Init::TruncNormal));
    out.push(("x_cls".to_string(), vec![d], Init::Normal));
    if config.positional == Positional::Learned {
        out.push(("E_pos".to_string(), vec![config.num_patches() + 1, d], Init::Normal));
    }
    for l in 0..config.num_layers {
        let p = format!("layers.{l}");
        norm(&mut out, format!("{p}.norm1"));
        for w in ["W_q", "W_k", "W_v", "W_msa"] {
            linear(&mut out, format!("{p}.{w}"), d, d);
        }
        norm(&mut out, format!("{p}.norm2"));
        linear(&mut out, format!("{p}.mlp.0"), d, hid);
        if config.encoder_mlp_layers == 2 {
            linear(&mut out, format!("{p}.mlp.1"), hid, hid);
        }
        linear(&mut out, format!("{p}.mlp.out"), hid, d);
    }
    norm(&mut out, "norm_final".to_string());
    let [h1, h2] = config.head_hidden;
    linear(&mut out, "head.0".to_string(), d, h1);
    linear(&mut out, "head.1".to_string(), h1, h2);
    linear(&mut out, "head.out".to_string(), h2, config.num_classes);
    out
}

/// Learnable state of one model, stored in forward-pass order.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelWeights<S> {
    pub config: ModelConfig,
    pub params: Vec<Parameter<S>>,
}

fn truncated_std_factor() -> f64 {
    // std of a standard normal truncated to [−2, 2]
    let phi2 = (-2.0f64).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mass = libm::erf(2.0 / std::f64::consts::SQRT_2);
    (1.0 - 4.0 * phi2 / mass).sqrt()
}

pub fn init_weights<S: Real>(config: &ModelConfig, seed: u64) -> Result<ModelWeights<S>, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trunc_scale = INIT_STD / truncated_std_factor();
    let params = layout(config)
        .into_iter()
        .map(|(name, shape, init)| {
            let n: usize = shape.iter().product();
            let data: Vec<S> = (0..n)
                .map(|_| {
                    let v = match init {
                        Init::Zeros => 0.0,
                        Init::Ones => 1.0,
                        Init::Normal => INIT_STD * rng.sample::<f64, _>(StandardNormal),
                        Init::TruncNormal => loop {
                            let z: f64 = rng.sample(StandardNormal);
                            if z.abs() <= 2.0 {
                                break trunc_scale * z;
                            }
                        },
                    };
                    S::from_f64(v)
                })
                .collect();
            Parameter::new(name, Tensor::from_vec(&shape, data).expect("layout shapes are valid"))
        })
        .collect();
    Ok(ModelWeights {
        config: config.clone(),
        params,
    })
}

impl<S: Real> ModelWeights<S> {
    /// Wraps existing tensors after checking them against the layout.
    pub fn from_params(config: ModelConfig, params: Vec<Parameter<S>>) -> Result<Self, ModelError> {
        config.validate()?;
        let expected = layout(&config);
        if expected.len() != params.len() {
            return Err(ModelError::Config(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                params.len()
            )));
        }
        for ((name, shape, _), p) in expected.iter().zip(&params) {
            if *name != p.name || shape.as_slice() != p.value.shape() {
                return Err(ModelError::Config(format!(
                    "parameter {} {:?} does not match expected {name} {shape:?}",
                    p.name,
                    p.value.shape()
                )));
            }
        }
        Ok(Self { config, params })
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<S>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter<S>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    /// Total number of scalar entries across all tensors.
    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn trainable_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.trainable)
            .map(|p| p.value.numel())
            .sum()
    }

    pub fn zero_grad(&mut self) {
        self.params.iter_mut().for_each(Parameter::zero_grad);
    }

    pub fn cast<T: Real>(&self) -> ModelWeights<T> {
        ModelWeights {
            config: self.config.clone(),
            params: self.params.iter().map(Parameter::cast).collect(),
        }
    }

    /// Sets `trainable` on every parameter whose name satisfies `pred`.
    pub fn set_trainable(&mut self, trainable: bool, pred: impl Fn(&str) -> bool) {
        for p in self.params.iter_mut().filter(|p| pred(&p.name)) {
            p.trainable = trainable;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique() {
        let c = ModelConfig::variant(4, 5, 100, 8).unwrap();
        let names: std::collections::HashSet<_> = layout(&c).into_iter().map(|l| l.0).collect();
        assert_eq!(names.len(), layout(&c).len());
    }

    #[test]
    fn truncation_factor_value() {
        assert!((truncated_std_factor() - 0.879_626).abs() < 1e-5);
    }
}
