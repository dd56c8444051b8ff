use super::{TrainConfig, TrainError};
use crate::autodiff::{Real, Tensor};
use crate::model::ModelWeights;

pub const ADAM_EPS: f64 = 1e-8;

/// First and second moments per parameter, aligned with
/// [`ModelWeights::params`].
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<S> {
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
    pub step: u64,
}

impl<S: Real> AdamState<S> {
    pub fn new(weights: &ModelWeights<S>) -> Self {
        let zeros = |w: &ModelWeights<S>| {
            w.params
                .iter()
                .map(|p| Tensor::zeros(p.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            m: zeros(weights),
            v: zeros(weights),
            step: 0,
        }
    }

    pub fn cast<T: Real>(&self) -> AdamState<T> {
        AdamState {
            m: self.m.iter().map(Tensor::cast).collect(),
            v: self.v.iter().map(Tensor::cast).collect(),
            step: self.step,
        }
    }
}

/// Bias-corrected Adam with decoupled weight decay, applied to every
/// trainable parameter from its `grad`:
/// `p ← p − lr·(wd·p + m̂/(√v̂ + ε))`.
pub fn adam_step<S: Real>(
    weights: &mut ModelWeights<S>,
    state: &mut AdamState<S>,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    let step = state.step + 1;
    if let Some(p) = weights
        .params
        .iter()
        .find(|p| p.trainable && !p.grad.all_finite())
    {
        return Err(TrainError::NonFinite {
            param: p.name.clone(),
            step,
        });
    }
    if state.m.len() != weights.params.len() {
        return Err(TrainError::Config(format!(
            "optimizer holds {} moments for {} parameters",
            state.m.len(),
            weights.params.len()
        )));
    }
    state.step = step;
    let [b1, b2] = cfg.betas;
    let c1 = 1.0 - b1.powi(step as i32);
    let c2 = 1.0 - b2.powi(step as i32);
    let (b1s, b2s) = (S::from_f64(b1), S::from_f64(b2));
    let (one_b1, one_b2) = (S::from_f64(1.0 - b1), S::from_f64(1.0 - b2));
    let (rc1, rc2) = (S::from_f64(1.0 / c1), S::from_f64(1.0 / c2));
    let lr = S::from_f64(cfg.learning_rate);
    let wd = S::from_f64(cfg.weight_decay);
    let eps = S::from_f64(ADAM_EPS);
    for ((p, m), v) in weights
        .params
        .iter_mut()
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        if !p.trainable {
            continue;
        }
        let g = p.grad.data();
        let values = p.value.data_mut();
        for (((w, &gi), mi), vi) in values
            .iter_mut()
            .zip(g)
            .zip(m.data_mut())
            .zip(v.data_mut())
        {
            *mi = b1s * *mi + one_b1 * gi;
            *vi = b2s * *vi + one_b2 * gi * gi;
            let mhat = *mi * rc1;
            let vhat = *vi * rc2;
            *w -= lr * (wd * *w + mhat / (vhat.sqrt() + eps));
        }
    }
    Ok(())
}
