use super::{Real, Tensor};

/// A named learnable tensor with its accumulated gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<S> {
    pub name: String,
    pub value: Tensor<S>,
    pub grad: Tensor<S>,
    /// Frozen parameters are carried through forward passes as constants.
    pub trainable: bool,
}

impl<S: Real> Parameter<S> {
    pub fn new(name: impl Into<String>, value: Tensor<S>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self {
            name: name.into(),
            value,
            grad,
            trainable: true,
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = S::zero());
    }

    /// `grad += g`; shapes must agree.
    pub fn accumulate(&mut self, g: &Tensor<S>) {
        assert_eq!(self.grad.shape(), g.shape(), "gradient shape for {}", self.name);
        self.grad.add_assign(g);
    }

    pub fn cast<T: Real>(&self) -> Parameter<T> {
        Parameter {
            name: self.name.clone(),
            value: self.value.cast(),
            grad: self.grad.cast(),
            trainable: self.trainable,
        }
    }
}
