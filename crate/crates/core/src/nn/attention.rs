use super::layers::{Dense, Init, Params};
use super::matrix::{axpy, dot};
use super::rng::RngState;
use crate::error::{shape_check, Result};

/// Two-token scaled dot-product attention with a shared mean query.
///
/// Both tokens go through the same query/key/value projections. The query is
/// the mean of the two query projections, so the unit acts as a learned soft
/// gate over the pair `[a; b]`. Keys carry no bias: a shared key offset
/// shifts both scores equally and cancels in the softmax.
#[derive(Debug, Clone)]
pub struct AttentionUnit {
    pub query: Dense,
    pub key: Dense,
    pub value: Dense,
}

#[derive(Debug, Clone)]
pub struct AttentionCache {
    tokens: [Vec<f64>; 2],
    q_mean: Vec<f64>,
    keys: [Vec<f64>; 2],
    values: [Vec<f64>; 2],
    weights: [f64; 2],
}

impl AttentionCache {
    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }
}

impl AttentionUnit {
    pub fn new(d_tok: usize, d_att: usize, rng: &mut RngState) -> Self {
        Self {
            query: Dense::new(d_tok, d_att, Init::Xavier, rng),
            key: Dense::linear(d_tok, d_att, Init::Xavier, rng),
            value: Dense::new(d_tok, d_att, Init::Xavier, rng),
        }
    }

    pub fn token_dim(&self) -> usize {
        self.query.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.value.output_dim()
    }

    pub fn forward(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, AttentionCache)> {
        shape_check("attention token a", self.token_dim(), a.len())?;
        shape_check("attention token b", self.token_dim(), b.len())?;
        let qa = self.query.forward(a)?;
        let qb = self.query.forward(b)?;
        let q_mean: Vec<f64> = qa.iter().zip(&qb).map(|(x, y)| 0.5 * (x + y)).collect();
        let keys = [self.key.forward(a)?, self.key.forward(b)?];
        let values = [self.value.forward(a)?, self.value.forward(b)?];

        let scale = (self.output_dim() as f64).sqrt().recip();
        let s = [
            dot(&q_mean, &keys[0]) * scale,
            dot(&q_mean, &keys[1]) * scale,
        ];
        let m = s[0].max(s[1]);
        let e = [(s[0] - m).exp(), (s[1] - m).exp()];
        let z = e[0] + e[1];
        let weights = [e[0] / z, e[1] / z];

        let mut out = vec![0.0; self.output_dim()];
        axpy(weights[0], &values[0], &mut out);
        axpy(weights[1], &values[1], &mut out);
        Ok((
            out,
            AttentionCache {
                tokens: [a.to_vec(), b.to_vec()],
                q_mean,
                keys,
                values,
                weights,
            },
        ))
    }

    /// Returns `(∂L/∂a, ∂L/∂b)` and accumulates projection gradients.
    pub fn backward(
        &mut self,
        cache: &AttentionCache,
        grad_out: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        shape_check("attention backward grad", self.output_dim(), grad_out.len())?;
        let w = cache.weights;
        let scale = (self.output_dim() as f64).sqrt().recip();

        // softmax backward
        let dw = [
            dot(grad_out, &cache.values[0]),
            dot(grad_out, &cache.values[1]),
        ];
        let avg = w[0] * dw[0] + w[1] * dw[1];
        let ds = [w[0] * (dw[0] - avg), w[1] * (dw[1] - avg)];

        let mut dq_mean = vec![0.0; self.output_dim()];
        axpy(ds[0] * scale, &cache.keys[0], &mut dq_mean);
        axpy(ds[1] * scale, &cache.keys[1], &mut dq_mean);
        let dq_token: Vec<f64> = dq_mean.iter().map(|g| 0.5 * g).collect();

        let mut grads = [Vec::new(), Vec::new()];
        for t in 0..2 {
            let x = &cache.tokens[t];
            let dk: Vec<f64> = cache.q_mean.iter().map(|q| ds[t] * scale * q).collect();
            let dv: Vec<f64> = grad_out.iter().map(|g| w[t] * g).collect();
            let mut gx = self.query.backward(x, &dq_token)?;
            axpy(1.0, &self.key.backward(x, &dk)?, &mut gx);
            axpy(1.0, &self.value.backward(x, &dv)?, &mut gx);
            grads[t] = gx;
        }
        let [ga, gb] = grads;
        Ok((ga, gb))
    }
}

impl Params for AttentionUnit {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.query.visit(f);
        self.key.visit(f);
        self.value.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.query.visit_mut(f);
        self.key.visit_mut(f);
        self.value.visit_mut(f);
    }
}

/// Learned scalar gate `g·a + (1−g)·b`, `g = sigmoid(α)`; ablation for
/// [`AttentionUnit`].
#[derive(Debug, Clone)]
pub struct ScalarGate {
    dim: usize,
    pub alpha: Vec<f64>,
    pub alpha_grad: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GateCache {
    tokens: [Vec<f64>; 2],
    gate: f64,
}

impl ScalarGate {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            alpha: vec![0.0],
            alpha_grad: vec![0.0],
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dim
    }

    fn gate(&self) -> f64 {
        1.0 / (1.0 + (-self.alpha[0]).exp())
    }

    pub fn forward(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, GateCache)> {
        shape_check("gate token a", self.dim, a.len())?;
        shape_check("gate token b", self.dim, b.len())?;
        let g = self.gate();
        let out = a
            .iter()
            .zip(b)
            .map(|(x, y)| g * x + (1.0 - g) * y)
            .collect();
        Ok((
            out,
            GateCache {
                tokens: [a.to_vec(), b.to_vec()],
                gate: g,
            },
        ))
    }

    pub fn backward(
        &mut self,
        cache: &GateCache,
        grad_out: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        shape_check("gate backward grad", self.dim, grad_out.len())?;
        let g = cache.gate;
        let [a, b] = &cache.tokens;
        let diff: f64 = grad_out
            .iter()
            .zip(a.iter().zip(b))
            .map(|(go, (x, y))| go * (x - y))
            .sum();
        self.alpha_grad[0] += g * (1.0 - g) * diff;
        Ok((
            grad_out.iter().map(|go| g * go).collect(),
            grad_out.iter().map(|go| (1.0 - g) * go).collect(),
        ))
    }
}

impl Params for ScalarGate {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(&self.alpha);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(&mut self.alpha, &mut self.alpha_grad);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransferKind {
    Attention,
    Gate,
}

/// The information-transfer unit between a task tower and transferred info.
#[derive(Debug, Clone)]
pub enum Transfer {
    Attention(AttentionUnit),
    Gate(ScalarGate),
}

#[derive(Debug, Clone)]
pub enum TransferCache {
    Attention(AttentionCache),
    Gate(GateCache),
}

impl Transfer {
    pub fn new(kind: TransferKind, d_tok: usize, d_att: usize, rng: &mut RngState) -> Self {
        match kind {
            TransferKind::Attention => Transfer::Attention(AttentionUnit::new(d_tok, d_att, rng)),
            TransferKind::Gate => Transfer::Gate(ScalarGate::new(d_tok)),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Transfer::Attention(u) => u.output_dim(),
            Transfer::Gate(g) => g.output_dim(),
        }
    }

    pub fn forward(&self, a: &[f64], b: &[f64]) -> Result<(Vec<f64>, TransferCache)> {
        match self {
            Transfer::Attention(u) => u
                .forward(a, b)
                .map(|(o, c)| (o, TransferCache::Attention(c))),
            Transfer::Gate(g) => g.forward(a, b).map(|(o, c)| (o, TransferCache::Gate(c))),
        }
    }

    pub fn backward(
        &mut self,
        cache: &TransferCache,
        grad_out: &[f64],
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        match (self, cache) {
            (Transfer::Attention(u), TransferCache::Attention(c)) => u.backward(c, grad_out),
            (Transfer::Gate(g), TransferCache::Gate(c)) => g.backward(c, grad_out),
            _ => Err(crate::Error::State(
                "transfer cache does not match transfer unit".into(),
            )),
        }
    }
}

impl Params for Transfer {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        match self {
            Transfer::Attention(u) => u.visit(f),
            Transfer::Gate(g) => g.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        match self {
            Transfer::Attention(u) => u.visit_mut(f),
            Transfer::Gate(g) => g.visit_mut(f),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Matrix;

    fn fixed_unit(q: Vec<f64>, k: Vec<f64>, v: Vec<f64>, d: usize) -> AttentionUnit {
        let dense =
            |w| Dense::from_parts(Matrix::from_vec(d, d, w).unwrap(), vec![0.0; d]).unwrap();
        AttentionUnit {
            query: dense(q),
            key: dense(k),
            value: dense(v),
        }
    }

    #[test]
    fn equal_tokens_give_half_weights() {
        let mut rng = RngState::new(5);
        let unit = AttentionUnit::new(4, 3, &mut rng);
        let x = [0.3, -1.2, 0.7, 2.0];
        let (out, cache) = unit.forward(&x, &x).unwrap();
        assert_eq!(cache.weights(), [0.5, 0.5]);
        let v = unit.value.forward(&x).unwrap();
        for (o, e) in out.iter().zip(&v) {
            assert!((o - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_keys_give_uniform_weights() {
        let mut rng = RngState::new(6);
        let mut unit = AttentionUnit::new(3, 2, &mut rng);
        unit.key.weight.fill(0.0);
        let (_, cache) = unit.forward(&[1.0, 5.0, -3.0], &[0.0, -2.0, 9.0]).unwrap();
        assert_eq!(cache.weights(), [0.5, 0.5]);
    }

    #[test]
    fn identity_projection_hand_case() {
        // a = (1,0), b = (0,2): q_mean = (0.5, 1); scores = (0.5, 2)/√2
        let id = vec![1.0, 0.0, 0.0, 1.0];
        let unit = fixed_unit(id.clone(), id.clone(), id, 2);
        let (out, cache) = unit.forward(&[1.0, 0.0], &[0.0, 2.0]).unwrap();
        let sa = 0.5 / 2f64.sqrt();
        let sb = 2.0 / 2f64.sqrt();
        let wa = sa.exp() / (sa.exp() + sb.exp());
        let wb = 1.0 - wa;
        let w = cache.weights();
        assert!((w[0] - wa).abs() < 1e-15 && (w[1] - wb).abs() < 1e-15);
        assert!((out[0] - wa).abs() < 1e-15);
        assert!((out[1] - 2.0 * wb).abs() < 1e-15);
    }

    #[test]
    fn weights_sum_to_one() {
        let mut rng = RngState::new(11);
        let unit = AttentionUnit::new(5, 4, &mut rng);
        let mut draw = RngState::new(12);
        use rand::Rng;
        for _ in 0..200 {
            let a: Vec<f64> = (0..5).map(|_| draw.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..5).map(|_| draw.random_range(-10.0..10.0)).collect();
            let (_, c) = unit.forward(&a, &b).unwrap();
            let w = c.weights();
            assert!(w[0] >= 0.0 && w[1] >= 0.0);
            assert!((w[0] + w[1] - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn token_dim_mismatch() {
        let mut rng = RngState::new(1);
        let unit = AttentionUnit::new(3, 2, &mut rng);
        assert!(unit.forward(&[1.0, 2.0, 3.0], &[1.0]).is_err());
        let gate = ScalarGate::new(2);
        assert!(gate.forward(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn check_transfer_grads(mut unit: Transfer, d: usize) {
        use rand::Rng;
        let mut draw = RngState::new(77);
        let a: Vec<f64> = (0..d).map(|_| draw.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| draw.random_range(-1.0..1.0)).collect();
        let c: Vec<f64> = (0..unit.output_dim())
            .map(|_| draw.random_range(-1.0..1.0))
            .collect();
        let loss = |u: &Transfer, a: &[f64], b: &[f64]| -> f64 {
            let (o, _) = u.forward(a, b).unwrap();
            o.iter().zip(&c).map(|(x, y)| x * y).sum()
        };
        let err = crate::nn::grad_check(
            &mut unit,
            |u, with_grad| {
                if with_grad {
                    let (_, cache) = u.forward(&a, &b)?;
                    u.backward(&cache, &c)?;
                }
                Ok(loss(u, &a, &b))
            },
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "param error {err}");

        let (_, cache) = unit.forward(&a, &b).unwrap();
        let (ga, gb) = unit.backward(&cache, &c).unwrap();
        let h = 1e-6;
        for i in 0..d {
            let mut ap = a.clone();
            let mut am = a.clone();
            ap[i] += h;
            am[i] -= h;
            let num = (loss(&unit, &ap, &b) - loss(&unit, &am, &b)) / (2.0 * h);
            assert!(
                (num - ga[i]).abs() < 1e-7,
                "token a[{i}]: {num} vs {}",
                ga[i]
            );
            let mut bp = b.clone();
            let mut bm = b.clone();
            bp[i] += h;
            bm[i] -= h;
            let num = (loss(&unit, &a, &bp) - loss(&unit, &a, &bm)) / (2.0 * h);
            assert!(
                (num - gb[i]).abs() < 1e-7,
                "token b[{i}]: {num} vs {}",
                gb[i]
            );
        }
    }

    #[test]
    fn attention_gradients() {
        let mut rng = RngState::new(3);
        let unit = Transfer::new(TransferKind::Attention, 4, 3, &mut rng);
        check_transfer_grads(unit, 4);
    }

    #[test]
    fn gate_gradients() {
        let mut gate = ScalarGate::new(3);
        gate.alpha[0] = 0.4;
        check_transfer_grads(Transfer::Gate(gate), 3);
    }

    #[test]
    fn gate_starts_at_half() {
        let gate = ScalarGate::new(2);
        let (out, _) = gate.forward(&[2.0, 0.0], &[0.0, 4.0]).unwrap();
        assert_eq!(out, vec![1.0, 2.0]);
    }
}
