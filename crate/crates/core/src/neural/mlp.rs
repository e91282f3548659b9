use alloc::vec::Vec;

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::linalg::gemm;
use crate::loss::sigmoid;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            // x > 0 keeps -0.0 and NaN handling explicit
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation output `y`.
    /// ReLU uses subgradient 0 at 0.
    #[inline]
    fn derivative(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerShape {
    pub inputs: usize,
    pub outputs: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layer {
    shape: LayerShape,
    weights: usize,
    bias: usize,
}

/// Dense feed-forward network with all parameters in one flat vector.
///
/// Layer `l` stores its `outputs x inputs` weight matrix row-major, followed
/// by the bias. Every mutation bumps a generation counter so tapes recorded
/// against older parameters are rejected.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Layer>,
    params: Vec<f64>,
    generation: u64,
}

/// Same architecture and bit-identical parameters; the generation counter
/// is process-local bookkeeping and not compared.
impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers
            && self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Activations recorded by [`Mlp::forward`]; `acts[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct Tape {
    generation: u64,
    n_params: usize,
    batch: usize,
    acts: Vec<Vec<f64>>,
}

impl Tape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn input(&self) -> &[f64] {
        &self.acts[0]
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Output of layer `l` (batch-major).
    pub fn layer_output(&self, l: usize) -> &[f64] {
        &self.acts[l + 1]
    }
}

/// Which gradients [`Mlp::backward_with`] computes and where it starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BackwardOptions {
    pub params: bool,
    pub input: bool,
    /// Treat the incoming gradient as w.r.t. the last layer's
    /// pre-activation instead of its output.
    pub from_preactivation: bool,
}

impl Default for BackwardOptions {
    fn default() -> Self {
        Self {
            params: true,
            input: true,
            from_preactivation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Summed over the batch; empty when not requested.
    pub params: Vec<f64>,
    /// Per-sample input gradients, batch-major; empty when not requested.
    pub input: Vec<f64>,
}

impl Mlp {
    /// Zero-initialized network; `layers` lists `(width, activation)`.
    pub fn new(input: usize, layers: &[(usize, Activation)]) -> Result<Self> {
        if input == 0 || layers.is_empty() {
            return Err(config_err!("network needs a non-empty input and at least one layer"));
        }
        let mut out = Vec::with_capacity(layers.len());
        let mut n_in = input;
        let mut offset = 0;
        for (i, &(width, activation)) in layers.iter().enumerate() {
            if width == 0 {
                return Err(config_err!("layer {i} has zero width"));
            }
            let weights = offset;
            let bias = weights + width * n_in;
            offset = bias + width;
            out.push(Layer {
                shape: LayerShape {
                    inputs: n_in,
                    outputs: width,
                    activation,
                },
                weights,
                bias,
            });
            n_in = width;
        }
        Ok(Self {
            layers: out,
            params: alloc::vec![0.0; offset],
            generation: 0,
        })
    }

    pub fn from_params(input: usize, layers: &[(usize, Activation)], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::new(input, layers)?;
        if params.len() != net.params.len() {
            return Err(config_err!("network expects {} parameters, got {}", net.params.len(), params.len()));
        }
        net.params = params;
        Ok(net)
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`, zero biases.
    pub fn init_uniform<R: RngCore + ?Sized>(&mut self, r: &mut R) {
        for layer in &self.layers {
            let s = layer.shape;
            let bound = crate::linalg::sqrt(6.0 / (s.inputs + s.outputs) as f64);
            for w in &mut self.params[layer.weights..layer.bias] {
                *w = rng::uniform(r, -bound, bound);
            }
            for b in &mut self.params[layer.bias..layer.bias + s.outputs] {
                *b = 0.0;
            }
        }
        self.generation += 1;
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].shape.inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers[self.layers.len() - 1].shape.outputs
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn layer_shapes(&self) -> Vec<LayerShape> {
        self.layers.iter().map(|l| l.shape).collect()
    }

    /// `(width, activation)` list accepted by [`Mlp::new`].
    pub fn layer_spec(&self) -> Vec<(usize, Activation)> {
        self.layers.iter().map(|l| (l.shape.outputs, l.shape.activation)).collect()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter access; invalidates outstanding tapes.
    pub fn params_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.params
    }

    pub fn weights(&self, l: usize) -> &[f64] {
        let layer = &self.layers[l];
        &self.params[layer.weights..layer.bias]
    }

    pub fn bias(&self, l: usize) -> &[f64] {
        let layer = &self.layers[l];
        &self.params[layer.bias..layer.bias + layer.shape.outputs]
    }

    /// Offset of layer `l`'s weights and bias in the flat parameter vector.
    pub fn param_offsets(&self, l: usize) -> (usize, usize) {
        (self.layers[l].weights, self.layers[l].bias)
    }

    /// Runs a batch (`batch` rows of `input_len()` values, row-major).
    pub fn forward(&self, input: &[f64], batch: usize) -> Result<Tape> {
        if batch == 0 || input.len() != batch * self.input_len() {
            return Err(config_err!(
                "network input has {} values, expected {} x {}",
                input.len(),
                batch,
                self.input_len()
            ));
        }
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(input.to_vec());
        for layer in &self.layers {
            let s = layer.shape;
            let x = acts.last().map(|v: &Vec<f64>| v.as_slice()).unwrap_or(&[]);
            let mut y = alloc::vec![0.0; batch * s.outputs];
            let w = &self.params[layer.weights..layer.bias];
            let b = &self.params[layer.bias..layer.bias + s.outputs];
            gemm(batch, s.inputs, s.outputs, (x, s.inputs as isize, 1), (w, 1, s.inputs as isize), &mut y, false);
            for row in y.chunks_exact_mut(s.outputs) {
                for (v, bo) in row.iter_mut().zip(b) {
                    *v = s.activation.apply(*v + bo);
                }
            }
            acts.push(y);
        }
        Ok(Tape {
            generation: self.generation,
            n_params: self.params.len(),
            batch,
            acts,
        })
    }

    pub fn backward(&self, tape: &Tape, grad_output: &[f64]) -> Result<Gradients> {
        self.backward_with(tape, grad_output, BackwardOptions::default())
    }

    pub fn backward_with(&self, tape: &Tape, grad_output: &[f64], opts: BackwardOptions) -> Result<Gradients> {
        if tape.generation != self.generation || tape.n_params != self.params.len() {
            return Err(Error::Usage(alloc::format!(
                "tape recorded at generation {}, network is at {}",
                tape.generation, self.generation
            )));
        }
        let batch = tape.batch;
        if grad_output.len() != batch * self.output_len() {
            return Err(config_err!(
                "output gradient has {} values, expected {}",
                grad_output.len(),
                batch * self.output_len()
            ));
        }
        let mut pgrad = if opts.params {
            alloc::vec![0.0; self.params.len()]
        } else {
            Vec::new()
        };
        let mut delta = grad_output.to_vec();
        let last = self.layers.len() - 1;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let s = layer.shape;
            let y = &tape.acts[l + 1];
            if !(l == last && opts.from_preactivation) {
                for (d, &yi) in delta.iter_mut().zip(y) {
                    *d *= s.activation.derivative(yi);
                }
            }
            let x = &tape.acts[l];
            if opts.params {
                let (gw, gb) = pgrad[layer.weights..layer.bias + s.outputs].split_at_mut(layer.bias - layer.weights);
                let outs = s.outputs as isize;
                gemm(s.outputs, batch, s.inputs, (&delta, 1, outs), (x, s.inputs as isize, 1), gw, false);
                gb.fill(0.0);
                for row in delta.chunks_exact(s.outputs) {
                    for (g, d) in gb.iter_mut().zip(row) {
                        *g += d;
                    }
                }
            }
            if l == 0 && !opts.input {
                return Ok(Gradients {
                    params: pgrad,
                    input: Vec::new(),
                });
            }
            let w = &self.params[layer.weights..layer.bias];
            let mut dx = alloc::vec![0.0; batch * s.inputs];
            gemm(batch, s.outputs, s.inputs, (&delta, s.outputs as isize, 1), (w, s.inputs as isize, 1), &mut dx, false);
            delta = dx;
        }
        Ok(Gradients {
            params: pgrad,
            input: delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_net(seed: u64, input: usize, layers: &[(usize, Activation)]) -> Mlp {
        let mut n = Mlp::new(input, layers).unwrap();
        n.init_uniform(&mut rng::stream(seed, 0));
        // non-zero biases so every path is exercised
        let mut r = rng::stream(seed, 1);
        for l in 0..layers.len() {
            let (_, b) = n.param_offsets(l);
            for i in 0..layers[l].0 {
                n.params_mut()[b + i] = rng::uniform(&mut r, -0.3, 0.3);
            }
        }
        n
    }

    fn random_vec(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rng::stream(seed, 2);
        (0..n).map(|_| rng::uniform(&mut r, -1.0, 1.0)).collect()
    }

    /// Naive chain evaluation written independently of the forward kernel.
    fn oracle_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for (l, s) in net.layer_shapes().iter().enumerate() {
            let (w, b) = (net.weights(l), net.bias(l));
            let mut next = Vec::new();
            for o in 0..s.outputs {
                let mut z = b[o];
                for i in 0..s.inputs {
                    z += w[o * s.inputs + i] * cur[i];
                }
                next.push(match s.activation {
                    Activation::Identity => z,
                    Activation::Relu => z.max(0.0),
                    Activation::Sigmoid => 1.0 / (1.0 + libm::exp(-z)),
                });
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn zero_weights_output_bias() {
        let mut n = Mlp::new(5, &[(3, Activation::Identity)]).unwrap();
        let (_, b) = n.param_offsets(0);
        n.params_mut()[b..b + 3].copy_from_slice(&[0.5, -1.0, 2.0]);
        let t = n.forward(&[1.0, 2.0, 3.0, 4.0, 5.0], 1).unwrap();
        assert_eq!(t.output(), &[0.5, -1.0, 2.0]);
    }

    #[test]
    fn identity_like_layer_copies_input_slice() {
        let mut n = Mlp::new(6, &[(3, Activation::Identity)]).unwrap();
        for o in 0..3 {
            n.params_mut()[o * 6 + o + 2] = 1.0;
        }
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(n.forward(&x, 1).unwrap().output(), &x[2..5]);
    }

    #[test]
    fn forward_matches_naive_chain() {
        let layers = [(7, Activation::Relu), (5, Activation::Relu), (3, Activation::Sigmoid)];
        let n = random_net(3, 11, &layers);
        let x = random_vec(4, 11 * 4);
        let t = n.forward(&x, 4).unwrap();
        for b in 0..4 {
            let expect = oracle_forward(&n, &x[b * 11..(b + 1) * 11]);
            for (a, e) in t.output()[b * 3..(b + 1) * 3].iter().zip(&expect) {
                assert!((a - e).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_least_squares_closed_form() {
        // loss = ||Wx + b - y||^2 : dL/dx = 2 W^T (Wx + b - y), dL/dW = 2 r x^T
        let n = random_net(5, 4, &[(3, Activation::Identity)]);
        let x = random_vec(6, 4);
        let y = [0.3, -0.2, 0.9];
        let t = n.forward(&x, 1).unwrap();
        let r: Vec<f64> = t.output().iter().zip(&y).map(|(p, q)| p - q).collect();
        let g: Vec<f64> = r.iter().map(|v| 2.0 * v).collect();
        let grads = n.backward(&t, &g).unwrap();
        let w = n.weights(0);
        for i in 0..4 {
            let expect: f64 = (0..3).map(|o| 2.0 * w[o * 4 + i] * r[o]).sum();
            assert!((grads.input[i] - expect).abs() < 1e-14);
        }
        for o in 0..3 {
            for i in 0..4 {
                assert!((grads.params[o * 4 + i] - 2.0 * r[o] * x[i]).abs() < 1e-14);
            }
            assert!((grads.params[12 + o] - 2.0 * r[o]).abs() < 1e-14);
        }
    }

    #[test]
    fn relu_at_zero_has_zero_subgradient() {
        // pre-activation exactly 0: gradient must not pass
        let mut n = Mlp::new(1, &[(1, Activation::Relu), (1, Activation::Identity)]).unwrap();
        n.params_mut().copy_from_slice(&[1.0, 0.0, 1.0, 0.0]);
        let t = n.forward(&[0.0], 1).unwrap();
        let g = n.backward(&t, &[1.0]).unwrap();
        assert_eq!(g.input, [0.0]);
        assert_eq!(g.params[0], 0.0);
        assert_eq!(g.params[1], 0.0);
    }

    #[test]
    fn every_parameter_gradient_matches_finite_differences() {
        let layers = [(6, Activation::Relu), (4, Activation::Sigmoid), (2, Activation::Identity)];
        let n = random_net(7, 5, &layers);
        let x = random_vec(8, 15);
        let target = random_vec(9, 6);
        let loss = |net: &Mlp| {
            let t = net.forward(&x, 3).unwrap();
            t.output().iter().zip(&target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
        };
        let t = n.forward(&x, 3).unwrap();
        let g: Vec<f64> = t.output().iter().zip(&target).map(|(a, b)| 2.0 * (a - b)).collect();
        let grads = n.backward(&t, &g).unwrap();
        let h = 1e-6;
        for i in 0..n.n_params() {
            let mut p = n.clone();
            p.params_mut()[i] += h;
            let mut q = n.clone();
            q.params_mut()[i] -= h;
            let num = (loss(&p) - loss(&q)) / (2.0 * h);
            let a = grads.params[i];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-6) < 1e-4, "param {i}: {a} vs {num}");
        }
    }

    #[test]
    fn preactivation_start_skips_last_activation() {
        let n = random_net(10, 3, &[(4, Activation::Relu), (1, Activation::Sigmoid)]);
        let x = random_vec(11, 3);
        let t = n.forward(&x, 1).unwrap();
        let s = t.output()[0];
        let a = n.backward(&t, &[1.0]).unwrap();
        let opts = BackwardOptions {
            from_preactivation: true,
            ..Default::default()
        };
        let b = n.backward_with(&t, &[s * (1.0 - s)], opts).unwrap();
        for (u, v) in a.params.iter().zip(&b.params) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn stale_tape_is_rejected() {
        let mut n = random_net(12, 3, &[(2, Activation::Identity)]);
        let t = n.forward(&[1.0, 2.0, 3.0], 1).unwrap();
        n.params_mut()[0] += 1.0;
        assert!(matches!(n.backward(&t, &[1.0, 1.0]), Err(Error::Usage(_))));
    }

    #[test]
    fn shape_errors() {
        let n = random_net(13, 3, &[(2, Activation::Identity)]);
        assert!(matches!(n.forward(&[1.0, 2.0], 1), Err(Error::Config(_))));
        let t = n.forward(&[1.0, 2.0, 3.0], 1).unwrap();
        assert!(matches!(n.backward(&t, &[1.0]), Err(Error::Config(_))));
        assert!(Mlp::new(3, &[]).is_err());
    }

    #[test]
    fn skip_flags_produce_same_values() {
        let n = random_net(14, 6, &[(5, Activation::Relu), (2, Activation::Identity)]);
        let x = random_vec(15, 12);
        let t = n.forward(&x, 2).unwrap();
        let g = [0.3, -0.1, 0.7, 0.2];
        let full = n.backward(&t, &g).unwrap();
        let only_p = n
            .backward_with(&t, &g, BackwardOptions { input: false, ..Default::default() })
            .unwrap();
        let only_x = n
            .backward_with(&t, &g, BackwardOptions { params: false, ..Default::default() })
            .unwrap();
        assert_eq!(full.params, only_p.params);
        assert_eq!(full.input, only_x.input);
        assert!(only_p.input.is_empty() && only_x.params.is_empty());
    }

    proptest! {
        #[test]
        fn blank_input_forward_is_finite(seed in 0u64..200) {
            // all -1 landmark channel with a zero image channel
            let mut n = Mlp::new(64, &[(16, Activation::Relu), (8, Activation::Identity)]).unwrap();
            n.init_uniform(&mut rng::stream(seed, 0));
            let mut x = alloc::vec![0.0; 64];
            for v in &mut x[32..] { *v = -1.0; }
            prop_assert!(n.forward(&x, 1).unwrap().output().iter().all(|v| v.is_finite()));
        }

        #[test]
        fn batch_rows_are_independent(seed in 0u64..100) {
            let n = random_net(seed, 4, &[(3, Activation::Relu), (2, Activation::Identity)]);
            let x = random_vec(seed + 1, 12);
            let t = n.forward(&x, 3).unwrap();
            for b in 0..3 {
                let single = n.forward(&x[b * 4..(b + 1) * 4], 1).unwrap();
                prop_assert_eq!(single.output(), &t.output()[b * 2..(b + 1) * 2]);
            }
        }
    }
}
