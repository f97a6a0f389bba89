//! Small fully connected networks with hand-written backpropagation.
//!
//! Hidden layers use the configured activation; the output layer is linear.
//! Weights are stored row-major (`outputs × inputs`) per layer.

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

pub const LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum NnError {
    #[error("input has dimension {got}, network expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("network needs at least an input and an output layer")]
    Shape,
    #[error("parameter block {0} has the wrong length")]
    Corrupt(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Leaky rectifier with slope 0.01 for negative inputs.
    #[default]
    LeakyRelu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    z
                } else {
                    LEAKY_SLOPE * z
                }
            }
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative in terms of the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if z > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    /// One row-major `sizes[i+1] × sizes[i]` block per layer.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Activations recorded by a forward pass, consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.post.last().expect("trace has an output")
    }
}

impl Mlp {
    /// Randomly initialized network (uniform He/Glorot bounds, zero biases).
    pub fn new(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self, NnError> {
        let mut m = Self::zeros(layer_sizes, activation)?;
        m.seed = seed;
        let mut r = rng::seeded(seed);
        for (l, w) in m.weights.iter_mut().enumerate() {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let bound = match activation {
                Activation::LeakyRelu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh => (6.0 / (fan_in + fan_out) as f64).sqrt(),
            };
            for v in w.iter_mut() {
                *v = r.random_range(-bound..bound);
            }
        }
        Ok(m)
    }

    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(NnError::Shape);
        }
        let weights = layer_sizes
            .windows(2)
            .map(|w| vec![0.0; w[0] * w[1]])
            .collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Ok(Mlp {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            weights,
            biases,
            seed: 0,
        })
    }

    /// A zero network with the same shape, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.layer_sizes, self.activation).expect("valid shape");
        z.seed = self.seed;
        z
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty")
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.layer_sizes.len() < 2 || self.weights.len() + 1 != self.layer_sizes.len() {
            return Err(NnError::Shape);
        }
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            if self.weights[l].len() != w[0] * w[1] || self.biases[l].len() != w[1] {
                return Err(NnError::Corrupt(l));
            }
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().chain(&self.biases).map(Vec::len).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> + '_ {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> + '_ {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    /// Mutable access to the flat parameter at position `i` (order of [`Mlp::params`]).
    pub fn param_mut(&mut self, mut i: usize) -> &mut f64 {
        for l in 0..self.weights.len() {
            if i < self.weights[l].len() {
                return &mut self.weights[l][i];
            }
            i -= self.weights[l].len();
            if i < self.biases[l].len() {
                return &mut self.biases[l][i];
            }
            i -= self.biases[l].len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|v| v.is_finite())
    }

    pub fn sq_norm(&self) -> f64 {
        self.params().map(|v| v * v).sum()
    }

    /// `self += scale * other`, element-wise over parameters.
    pub fn add_scaled(&mut self, other: &Mlp, scale: f64) {
        for (p, g) in self.params_mut().zip(other.params()) {
            *p += scale * g;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for p in self.params_mut() {
            *p *= k;
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut a = x.to_vec();
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let mut z = self.affine(l, &a);
            if l < last {
                for v in z.iter_mut() {
                    *v = self.activation.apply(*v);
                }
            }
            a = z;
        }
        Ok(a)
    }

    pub fn forward_trace(&self, x: &[f64]) -> Result<Trace, NnError> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.num_layers());
        let mut post = Vec::with_capacity(self.num_layers() + 1);
        post.push(x.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..self.num_layers() {
            let z = self.affine(l, post.last().expect("non-empty"));
            let a = if l < last {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            } else {
                z.clone()
            };
            pre.push(z);
            post.push(a);
        }
        Ok(Trace { pre, post })
    }

    fn affine(&self, l: usize, a: &[f64]) -> Vec<f64> {
        let n_in = self.layer_sizes[l];
        let w = &self.weights[l];
        self.biases[l]
            .iter()
            .enumerate()
            .map(|(o, &b)| {
                let row = &w[o * n_in..(o + 1) * n_in];
                b + row.iter().zip(a).map(|(wi, ai)| wi * ai).sum::<f64>()
            })
            .collect()
    }

    /// Accumulates `∂(grad_out · output)/∂θ` into `grads`.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64], grads: &mut Mlp) {
        let mut delta = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            if l < self.num_layers() - 1 {
                for (d, (&z, &a)) in delta.iter_mut().zip(trace.pre[l].iter().zip(&trace.post[l + 1])) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let n_in = self.layer_sizes[l];
            let input = &trace.post[l];
            let gw = &mut grads.weights[l];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                grads.biases[l][o] += d;
                for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * x;
                }
            }
            if l > 0 {
                let w = &self.weights[l];
                let mut prev = vec![0.0; n_in];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    for (p, &wi) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                        *p += d * wi;
                    }
                }
                delta = prev;
            }
        }
    }
}

/// Adam optimizer over a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n_params: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(&mut self, model: &mut Mlp, grads: &Mlp) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in model
            .params_mut()
            .zip(grads.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn numeric_grad(m: &Mlp, x: &[f64], w: &[f64], i: usize) -> f64 {
        let h = 1e-6;
        let f = |m: &Mlp| -> f64 {
            m.forward(x).unwrap().iter().zip(w).map(|(a, b)| a * b).sum()
        };
        let mut p = m.clone();
        *p.param_mut(i) += h;
        let up = f(&p);
        *p.param_mut(i) -= 2.0 * h;
        let down = f(&p);
        (up - down) / (2.0 * h)
    }

    #[test]
    fn zero_network_outputs_zero() {
        let m = Mlp::zeros(&[16, 64, 64, 1], Activation::LeakyRelu).unwrap();
        assert_eq!(m.forward(&[1.0; 16]).unwrap(), vec![0.0]);
        assert_eq!(m.num_params(), 16 * 64 + 64 + 64 * 64 + 64 + 64 + 1);
    }

    #[test]
    fn dimension_mismatch() {
        let m = Mlp::new(&[4, 3, 2], Activation::Tanh, 1).unwrap();
        assert_eq!(
            m.forward(&[0.0; 5]).unwrap_err(),
            NnError::Dimension { expected: 4, got: 5 }
        );
        assert!(Mlp::zeros(&[3], Activation::Tanh).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        for act in [Activation::LeakyRelu, Activation::Tanh] {
            let m = Mlp::new(&[5, 7, 6, 3], act, 11).unwrap();
            let x = [0.3, -0.7, 1.1, 0.05, -0.4];
            let w = [0.5, -1.2, 0.8];
            let trace = m.forward_trace(&x).unwrap();
            assert_eq!(trace.output(), m.forward(&x).unwrap().as_slice());
            let mut g = m.zeros_like();
            m.backward(&trace, &w, &mut g);
            let analytic: Vec<f64> = g.params().copied().collect();
            for i in 0..m.num_params() {
                let n = numeric_grad(&m, &x, &w, i);
                let a = analytic[i];
                assert!(
                    (a - n).abs() <= 1e-6 * (1.0 + a.abs().max(n.abs())),
                    "{act:?} param {i}: {a} vs {n}"
                );
            }
        }
    }

    #[test]
    fn param_indexing_matches_iteration() {
        let mut m = Mlp::new(&[3, 4, 2], Activation::LeakyRelu, 2).unwrap();
        let flat: Vec<f64> = m.params().copied().collect();
        for (i, v) in flat.iter().enumerate() {
            assert_eq!(*m.param_mut(i), *v);
        }
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut m = Mlp::new(&[2, 1], Activation::LeakyRelu, 0).unwrap();
        let mut opt = Adam::new(0.05, m.num_params());
        for _ in 0..500 {
            let mut g = m.zeros_like();
            for (gi, p) in g.params_mut().zip(m.params()) {
                *gi = 2.0 * (p - 1.0);
            }
            opt.step(&mut m, &g);
        }
        assert!(m.params().all(|p| (p - 1.0).abs() < 1e-2));
    }

    #[test]
    fn json_roundtrip() {
        let m = Mlp::new(&[4, 3, 1], Activation::Tanh, 5).unwrap();
        let back: Mlp = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
        back.validate().unwrap();
    }
}
