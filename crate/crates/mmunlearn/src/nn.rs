//! Minimal dense-layer machinery: forward passes with cached activations and
//! hand-derived backward passes. Everything is `f64` and deterministic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Row-major dense weight matrix plus bias: `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub rows: usize,
    pub cols: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Dense {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Dense { rows, cols, w: vec![0.0; rows * cols], b: vec![0.0; rows] }
    }

    /// Uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
    pub fn init<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (cols as f64).sqrt();
        let w = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..rows).map(|_| rng.gen_range(-bound..bound)).collect();
        Dense { rows, cols, w, b }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        let mut y = self.b.clone();
        for r in 0..self.rows {
            let row = &self.w[r * self.cols..(r + 1) * self.cols];
            let mut acc = 0.0;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            y[r] += acc;
        }
        y
    }

    pub fn n_params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Feedforward net: tanh on every layer except the last, which is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

/// Per-layer cache from a forward pass, consumed by `backward`.
pub struct MlpCache {
    /// Input to each layer.
    inputs: Vec<Vec<f64>>,
    /// Post-activation output of each layer.
    outputs: Vec<Vec<f64>>,
}

/// Parameter gradients mirroring an `Mlp`'s shape.
#[derive(Debug, Clone)]
pub struct MlpGrad {
    pub layers: Vec<Dense>,
}

impl MlpGrad {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        MlpGrad {
            layers: mlp.layers.iter().map(|l| Dense::zeros(l.rows, l.cols)).collect(),
        }
    }

    pub fn scale(&mut self, c: f64) {
        for l in &mut self.layers {
            for v in &mut l.w {
                *v *= c;
            }
            for v in &mut l.b {
                *v *= c;
            }
        }
    }

    pub fn add(&mut self, other: &MlpGrad) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }
}

impl Mlp {
    pub fn new<R: Rng>(dims: &[usize], rng: &mut R) -> Result<Self, Error> {
        if dims.len() < 2 {
            return Err(Error::Config("mlp needs at least input and output dims".into()));
        }
        let layers = dims
            .windows(2)
            .map(|d| Dense::init(d[1], d[0], rng))
            .collect();
        Ok(Mlp { layers })
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].cols
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        self.forward_cached(x).0
    }

    pub fn forward_cached(&self, x: &[f64]) -> (Vec<f64>, MlpCache) {
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut outputs = Vec::with_capacity(n);
        let mut cur = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            inputs.push(cur.clone());
            let mut y = layer.matvec(&cur);
            if i + 1 < n {
                for v in &mut y {
                    *v = v.tanh();
                }
            }
            outputs.push(y.clone());
            cur = y;
        }
        (cur, MlpCache { inputs, outputs })
    }

    /// Backprop `d_out` (gradient w.r.t. the net output) through the cached
    /// forward pass. Accumulates parameter gradients into `grad` and returns
    /// the gradient w.r.t. the net input.
    pub fn backward(&self, cache: &MlpCache, d_out: &[f64], grad: &mut MlpGrad) -> Vec<f64> {
        let n = self.layers.len();
        let mut delta = d_out.to_vec();
        for i in (0..n).rev() {
            let layer = &self.layers[i];
            // tanh derivative for hidden layers; last layer is linear.
            if i + 1 < n {
                for (d, y) in delta.iter_mut().zip(&cache.outputs[i]) {
                    *d *= 1.0 - y * y;
                }
            }
            let input = &cache.inputs[i];
            let g = &mut grad.layers[i];
            for r in 0..layer.rows {
                g.b[r] += delta[r];
                let gw = &mut g.w[r * layer.cols..(r + 1) * layer.cols];
                for (gv, xv) in gw.iter_mut().zip(input) {
                    *gv += delta[r] * xv;
                }
            }
            let mut d_in = vec![0.0; layer.cols];
            for r in 0..layer.rows {
                let row = &layer.w[r * layer.cols..(r + 1) * layer.cols];
                for (di, wv) in d_in.iter_mut().zip(row) {
                    *di += delta[r] * wv;
                }
            }
            delta = d_in;
        }
        delta
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(Dense::n_params).sum()
    }

    /// Apply one SGD step `w -= lr * g`.
    pub fn sgd_step(&mut self, grad: &MlpGrad, lr: f64) {
        for (l, g) in self.layers.iter_mut().zip(&grad.layers) {
            for (w, gv) in l.w.iter_mut().zip(&g.w) {
                *w -= lr * gv;
            }
            for (b, gv) in l.b.iter_mut().zip(&g.b) {
                *b -= lr * gv;
            }
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable binary cross-entropy from the logit.
pub fn bce_from_logit(logit: f64, label: f64) -> f64 {
    // log(1 + e^z) - y*z, rewritten for stability
    let m = logit.max(0.0);
    m + ((-m).exp() + (logit - m).exp()).ln() - label * logit
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    #[test]
    fn matvec_hand_example() {
        let d = Dense { rows: 2, cols: 2, w: vec![1.0, 0.0, 0.0, 2.0], b: vec![0.0, 0.0] };
        assert_eq!(d.matvec(&[3.0, 4.0]), vec![3.0, 8.0]);
    }

    #[test]
    fn backward_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut mlp = Mlp::new(&[3, 4, 2], &mut rng).unwrap();
        let x = vec![0.3, -0.7, 0.5];
        // loss = sum of outputs
        let loss = |m: &Mlp| m.forward(&x).iter().sum::<f64>();
        let (_, cache) = mlp.forward_cached(&x);
        let mut grad = MlpGrad::zeros_like(&mlp);
        mlp.backward(&cache, &[1.0, 1.0], &mut grad);

        let eps = 1e-6;
        for li in 0..mlp.layers.len() {
            for wi in 0..mlp.layers[li].w.len() {
                let orig = mlp.layers[li].w[wi];
                mlp.layers[li].w[wi] = orig + eps;
                let lp = loss(&mlp);
                mlp.layers[li].w[wi] = orig - eps;
                let lm = loss(&mlp);
                mlp.layers[li].w[wi] = orig;
                let fd = (lp - lm) / (2.0 * eps);
                assert!((fd - grad.layers[li].w[wi]).abs() < 1e-7, "layer {li} w {wi}");
            }
        }
    }

    #[test]
    fn stable_bce_matches_naive() {
        for &(z, y) in &[(0.5, 1.0), (-3.0, 0.0), (2.0, 0.0), (-0.1, 1.0)] {
            let p: f64 = sigmoid(z);
            let naive = -(y * p.ln() + (1.0 - y) * (1.0 - p).ln());
            assert!((bce_from_logit(z, y) - naive).abs() < 1e-12);
        }
    }
}
