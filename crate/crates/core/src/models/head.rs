use crate::error::Result;
use crate::nn::{sigmoid_grad, sigmoid_scalar, Dense, Init, Params, RngState};

/// Dense layer to a single logit followed by the clamped sigmoid.
#[derive(Debug, Clone)]
pub struct Head {
    pub dense: Dense,
}

impl Head {
    pub fn new(input: usize, rng: &mut RngState) -> Self {
        Self {
            dense: Dense::new(input, 1, Init::Xavier, rng),
        }
    }

    pub fn zeroed(input: usize, rng: &mut RngState) -> Self {
        Self {
            dense: Dense::new(input, 1, Init::Zeros, rng),
        }
    }

    /// Returns `(logit, probability)`.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, f64)> {
        let z = self.dense.forward(x)?[0];
        Ok((z, sigmoid_scalar(z)))
    }

    /// `grad_prob` is `∂L/∂p`; returns `∂L/∂x`.
    pub fn backward(&mut self, x: &[f64], logit: f64, grad_prob: f64) -> Result<Vec<f64>> {
        self.dense.backward(x, &[grad_prob * sigmoid_grad(logit)])
    }
}

impl Params for Head {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.dense.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.dense.visit_mut(f)
    }
}
