use rand::Rng;

use super::matrix::{axpy, Matrix};
use super::rng::RngState;
use crate::error::{shape_check, Error, Result};

/// Clamp applied to every sigmoid output so that cross-entropy stays finite.
pub const PROB_EPS: f64 = 1e-7;

/// Anything holding trainable tensors. Visit order is fixed and defines the
/// flat parameter layout used by optimizers, gradient checks and checkpoints.
pub trait Params {
    fn visit(&self, f: &mut dyn FnMut(&[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |p| n += p.len());
        n
    }

    fn flat_values(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |p| out.extend_from_slice(p));
        out
    }

    fn set_flat_values(&mut self, values: &[f64]) -> Result<()> {
        shape_check("flat parameter vector", self.num_params(), values.len())?;
        let mut offset = 0;
        self.visit_mut(&mut |p, _| {
            p.copy_from_slice(&values[offset..offset + p.len()]);
            offset += p.len();
        });
        Ok(())
    }

    fn flat_grads(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit_mut(&mut |_, g| out.extend_from_slice(g));
        out
    }

    fn zero_grads(&mut self) {
        self.visit_mut(&mut |_, g| g.iter_mut().for_each(|x| *x = 0.0));
    }

    /// Multiply every accumulated gradient by `factor`.
    fn scale_grads(&mut self, factor: f64) {
        self.visit_mut(&mut |_, g| g.iter_mut().for_each(|x| *x *= factor));
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

pub fn sigmoid_scalar(z: f64) -> f64 {
    let s = raw_sigmoid(z);
    s.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn sigmoid(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&z| sigmoid_scalar(z)).collect()
}

/// d sigmoid / dz, zero where the clamp is active.
pub fn sigmoid_grad(z: f64) -> f64 {
    let s = raw_sigmoid(z);
    if s < PROB_EPS || s > 1.0 - PROB_EPS {
        0.0
    } else {
        s * (1.0 - s)
    }
}

fn raw_sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(p / (1 - p))` after applying the same clamp as [`sigmoid`].
pub fn log_odds(p: f64) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    (p / (1.0 - p)).ln()
}

/// Result of [`dropout`]: the output and, in training mode with a nonzero
/// rate, the per-entry multiplier (0 or `1/(1-rate)`) needed for backward.
#[derive(Debug, Clone)]
pub struct Dropped {
    pub output: Vec<f64>,
    pub mask: Option<Vec<f64>>,
}

/// Inverted dropout. `rng = None` means inference mode (identity).
pub fn dropout(x: &[f64], rate: f64, rng: Option<&mut RngState>) -> Result<Dropped> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!(
            "dropout rate must be in [0,1), got {rate}"
        )));
    }
    match rng {
        Some(rng) if rate > 0.0 => {
            let keep = 1.0 / (1.0 - rate);
            let mask: Vec<f64> = x
                .iter()
                .map(|_| {
                    if rng.random::<f64>() < rate {
                        0.0
                    } else {
                        keep
                    }
                })
                .collect();
            let output = x.iter().zip(&mask).map(|(v, m)| v * m).collect();
            Ok(Dropped {
                output,
                mask: Some(mask),
            })
        }
        _ => Ok(Dropped {
            output: x.to_vec(),
            mask: None,
        }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Init {
    /// He uniform, for layers followed by ReLU.
    He,
    /// Glorot uniform.
    Xavier,
    Zeros,
}

/// Affine layer `y = W x + b`, `W` is `out × in`. An empty `bias` means the
/// layer is purely linear.
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub weight_grad: Matrix,
    pub bias_grad: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, init: Init, rng: &mut RngState) -> Self {
        let mut weight = Matrix::zeros(output, input);
        let limit = match init {
            Init::He => (6.0 / input as f64).sqrt(),
            Init::Xavier => (6.0 / (input + output) as f64).sqrt(),
            Init::Zeros => 0.0,
        };
        if limit > 0.0 {
            for w in weight.values_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        Self::from_parts(weight, vec![0.0; output]).expect("consistent shapes")
    }

    /// `W x` with no bias term.
    pub fn linear(input: usize, output: usize, init: Init, rng: &mut RngState) -> Self {
        let mut d = Self::new(input, output, init, rng);
        d.bias.clear();
        d.bias_grad.clear();
        d
    }

    pub fn from_parts(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        if !bias.is_empty() {
            shape_check("dense bias", weight.rows(), bias.len())?;
        }
        Ok(Self {
            weight_grad: Matrix::zeros(weight.rows(), weight.cols()),
            bias_grad: vec![0.0; bias.len()],
            weight,
            bias,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    /// `W x + b`. The caller keeps `x` for [`Dense::backward`].
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weight.matvec(x)?;
        for (yi, bi) in y.iter_mut().zip(&self.bias) {
            *yi += bi;
        }
        Ok(y)
    }

    /// Accumulates `∂L/∂W += g xᵀ`, `∂L/∂b += g` and returns `Wᵀ g`.
    pub fn backward(&mut self, x: &[f64], grad_out: &[f64]) -> Result<Vec<f64>> {
        shape_check("dense backward grad", self.output_dim(), grad_out.len())?;
        self.weight_grad.add_outer(grad_out, x)?;
        if !self.bias_grad.is_empty() {
            axpy(1.0, grad_out, &mut self.bias_grad);
        }
        self.weight.matvec_t(grad_out)
    }
}

impl Params for Dense {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        f(self.weight.values());
        f(&self.bias);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        f(self.weight.values_mut(), self.weight_grad.values_mut());
        f(&mut self.bias, &mut self.bias_grad);
    }
}

/// Dense → ReLU → dropout.
#[derive(Debug, Clone)]
pub struct Block {
    pub dense: Dense,
}

#[derive(Debug, Clone)]
pub struct BlockCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

impl BlockCache {
    /// Smallest `|pre-activation|`; finite differences are only valid with a
    /// step below this.
    pub fn relu_margin(&self) -> f64 {
        self.pre.iter().fold(f64::INFINITY, |m, z| m.min(z.abs()))
    }
}

/// Smallest [`BlockCache::relu_margin`] over a tower.
pub fn tower_margin(caches: &[BlockCache]) -> f64 {
    caches
        .iter()
        .fold(f64::INFINITY, |m, c| m.min(c.relu_margin()))
}

impl Block {
    pub fn new(input: usize, output: usize, rng: &mut RngState) -> Self {
        Self {
            dense: Dense::new(input, output, Init::He, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.dense.output_dim()
    }

    pub fn forward(
        &self,
        x: &[f64],
        rate: f64,
        rng: Option<&mut RngState>,
    ) -> Result<(Vec<f64>, BlockCache)> {
        let pre = self.dense.forward(x)?;
        let dropped = dropout(&relu(&pre), rate, rng)?;
        Ok((
            dropped.output,
            BlockCache {
                input: x.to_vec(),
                pre,
                mask: dropped.mask,
            },
        ))
    }

    pub fn backward(&mut self, cache: &BlockCache, grad_out: &[f64]) -> Result<Vec<f64>> {
        shape_check("block backward grad", cache.pre.len(), grad_out.len())?;
        let g: Vec<f64> = grad_out
            .iter()
            .zip(&cache.pre)
            .enumerate()
            .map(|(i, (&g, &z))| {
                let m = cache.mask.as_ref().map_or(1.0, |m| m[i]);
                if z > 0.0 {
                    g * m
                } else {
                    0.0
                }
            })
            .collect();
        self.dense.backward(&cache.input, &g)
    }
}

impl Params for Block {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.dense.visit(f)
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.dense.visit_mut(f)
    }
}

/// A stack of [`Block`]s: the per-task tower.
#[derive(Debug, Clone)]
pub struct Tower {
    pub blocks: Vec<Block>,
}

pub type TowerCache = Vec<BlockCache>;

impl Tower {
    pub fn new(input: usize, width: usize, depth: usize, rng: &mut RngState) -> Self {
        let blocks = (0..depth)
            .map(|i| Block::new(if i == 0 { input } else { width }, width, rng))
            .collect();
        Self { blocks }
    }

    pub fn output_dim(&self) -> usize {
        self.blocks.last().map_or(0, Block::output_dim)
    }

    pub fn forward(
        &self,
        x: &[f64],
        rate: f64,
        mut rng: Option<&mut RngState>,
    ) -> Result<(Vec<f64>, TowerCache)> {
        let mut h = x.to_vec();
        let mut caches = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (out, cache) = block.forward(&h, rate, rng.as_deref_mut())?;
            caches.push(cache);
            h = out;
        }
        Ok((h, caches))
    }

    pub fn backward(&mut self, caches: &TowerCache, grad_out: &[f64]) -> Result<Vec<f64>> {
        shape_check("tower cache depth", self.blocks.len(), caches.len())?;
        let mut g = grad_out.to_vec();
        for (block, cache) in self.blocks.iter_mut().zip(caches).rev() {
            g = block.backward(cache, &g)?;
        }
        Ok(g)
    }
}

impl Params for Tower {
    fn visit(&self, f: &mut dyn FnMut(&[f64])) {
        self.blocks.iter().for_each(|b| b.visit(f));
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut [f64], &mut [f64])) {
        self.blocks.iter_mut().for_each(|b| b.visit_mut(f));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn dense(w: Vec<f64>, rows: usize, cols: usize, b: Vec<f64>) -> Dense {
        Dense::from_parts(Matrix::from_vec(rows, cols, w).unwrap(), b).unwrap()
    }

    #[test]
    fn dense_identity() {
        let d = Dense::from_parts(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert_eq!(d.forward(&[3.0, -1.0]).unwrap(), vec![3.0, -1.0]);
    }

    #[test]
    fn dense_hand_product() {
        let d = dense(vec![1.0, 2.0, 0.0, 1.0], 2, 2, vec![1.0, 0.0]);
        assert_eq!(d.forward(&[1.0, 1.0]).unwrap(), vec![4.0, 1.0]);
    }

    #[test]
    fn dense_zero_weight() {
        let d = dense(vec![0.0, 0.0, 0.0], 1, 3, vec![5.0]);
        assert_eq!(d.forward(&[7.0, -2.0, 0.3]).unwrap(), vec![5.0]);
    }

    #[test]
    fn dense_shape_error() {
        let d = Dense::from_parts(Matrix::identity(2), vec![0.0, 0.0]).unwrap();
        assert!(matches!(d.forward(&[1.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn activations() {
        assert_eq!(relu(&[-2.0, 3.0]), vec![0.0, 3.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!(close(sigmoid_scalar(3f64.ln()), 0.75, 1e-15));
        assert_eq!(sigmoid_scalar(100.0), 1.0 - PROB_EPS);
        assert_eq!(sigmoid_scalar(-100.0), PROB_EPS);
        assert_eq!(sigmoid_grad(100.0), 0.0);
        assert!(close(sigmoid_grad(0.0), 0.25, 1e-15));
        assert!(close(log_odds(0.75), 3f64.ln(), 1e-12));
        assert!(log_odds(0.0).is_finite() && log_odds(1.0).is_finite());
    }

    #[test]
    fn dropout_identities() {
        let x = vec![1.0, -2.0, 3.5];
        let mut rng = RngState::new(1);
        assert_eq!(dropout(&x, 0.0, Some(&mut rng)).unwrap().output, x);
        assert_eq!(dropout(&x, 0.5, None).unwrap().output, x);
        assert!(dropout(&x, 1.0, None).is_err());
        assert!(dropout(&x, -0.1, None).is_err());
    }

    #[test]
    fn dropout_deterministic_and_unbiased() {
        let x = vec![1.0, 2.0, -3.0, 0.5];
        let a = dropout(&x, 0.5, Some(&mut RngState::new(9))).unwrap();
        let b = dropout(&x, 0.5, Some(&mut RngState::new(9))).unwrap();
        assert_eq!(a.output, b.output);

        let mut rng = RngState::new(42);
        let draws = 100_000;
        let mut sum = vec![0.0; x.len()];
        for _ in 0..draws {
            let d = dropout(&x, 0.5, Some(&mut rng)).unwrap();
            for (s, v) in sum.iter_mut().zip(&d.output) {
                *s += v;
            }
        }
        for (s, v) in sum.iter().zip(&x) {
            let mean = s / draws as f64;
            assert!((mean - v).abs() <= 0.02 * v.abs(), "mean {mean} vs {v}");
        }
    }

    #[test]
    fn params_flat_roundtrip() {
        let mut rng = RngState::new(3);
        let mut t = Tower::new(3, 4, 3, &mut rng);
        assert_eq!(t.num_params(), 3 * 4 + 4 + 2 * (16 + 4));
        let mut v = t.flat_values();
        v[0] = 123.0;
        t.set_flat_values(&v).unwrap();
        assert_eq!(t.blocks[0].dense.weight.get(0, 0), 123.0);
        assert!(t.set_flat_values(&v[1..]).is_err());
    }
}
