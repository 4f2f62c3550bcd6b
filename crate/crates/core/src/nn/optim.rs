use super::layers::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Optimizer hyperparameters plus per-tensor moment accumulators.
///
/// Moments are laid out in the [`Params`] visit order and allocated on the
/// first step.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub lr: f64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, lr: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {lr}"
            )));
        }
        Ok(Self {
            kind,
            lr,
            first: Vec::new(),
            second: Vec::new(),
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Apply one update using the gradients currently held by `params`.
    pub fn step<P: Params + ?Sized>(&mut self, params: &mut P) -> Result<()> {
        if self.step == 0 && self.first.is_empty() {
            let mut shapes = Vec::new();
            params.visit(&mut |p| shapes.push(p.len()));
            self.first = shapes.iter().map(|&n| vec![0.0; n]).collect();
            self.second = self.first.clone();
        }
        let mut shapes = Vec::new();
        params.visit(&mut |p| shapes.push(p.len()));
        let matches = shapes.len() == self.first.len()
            && shapes.iter().zip(&self.first).all(|(a, m)| *a == m.len());
        if !matches {
            return Err(Error::Shape(
                "optimizer accumulators do not match parameter shapes".into(),
            ));
        }

        self.step += 1;
        let lr = self.lr;
        match self.kind {
            OptimizerKind::Sgd => params.visit_mut(&mut |p, g| {
                for (pi, gi) in p.iter_mut().zip(g.iter()) {
                    *pi -= lr * gi;
                }
            }),
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.step as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                let mut idx = 0;
                let (first, second) = (&mut self.first, &mut self.second);
                params.visit_mut(&mut |p, g| {
                    let m = &mut first[idx];
                    let v = &mut second[idx];
                    for i in 0..p.len() {
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                    idx += 1;
                });
            }
        }
        Ok(())
    }
}
