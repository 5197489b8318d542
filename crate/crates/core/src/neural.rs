//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Hidden layers use a leaky rectifier; the output layer is either a
//! sigmoid (actor) or the identity (critic). Parameters are `f64` so the
//! gradients can be checked against central finite differences.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_VERSION: AtomicU64 = AtomicU64::new(1);

fn fresh_version() -> u64 {
    NEXT_VERSION.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Sigmoid,
    Identity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    /// Row-major `out_dim x in_dim`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self { in_dim, out_dim, weights: vec![0.0; in_dim * out_dim], biases: vec![0.0; out_dim] }
    }

    fn affine(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.weights.chunks_exact(self.in_dim).zip(&self.biases).map(|(row, b)| {
            row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b
        }));
    }
}

/// Multi-layer perceptron.
#[derive(Debug, Clone)]
pub struct Mlp {
    layers: Vec<Dense>,
    leaky_slope: f64,
    head: Head,
    version: u64,
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.layers == other.layers && self.leaky_slope == other.leaky_slope && self.head == other.head
    }
}

/// Activations recorded by one forward pass, consumed by one backward pass.
#[derive(Debug)]
pub struct GradientTape {
    version: u64,
    /// Input of every layer.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of every layer.
    pre: Vec<Vec<f64>>,
    output: Vec<f64>,
}

impl GradientTape {
    pub fn output(&self) -> &[f64] {
        &self.output
    }
}

/// Parameter gradients laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self { layers: net.layers.iter().map(|l| Dense::zeros(l.in_dim, l.out_dim)).collect() }
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.biases.iter_mut().zip(&b.biases).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`.
    pub fn clip_norm(&mut self, max_norm: f64) {
        let n = self.norm();
        if n > max_norm && n > 0.0 {
            self.scale(max_norm / n);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(f64::is_finite)
    }

    /// Flattened in the same order as [`Mlp::param`].
    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(&l.biases).copied())
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Mlp {
    /// Uniform initialization in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], head: Head, leaky_slope: f64, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let layers = sizes
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut d = Dense::zeros(w[0], w[1]);
                d.weights.iter_mut().chain(d.biases.iter_mut()).for_each(|p| *p = rng.random_range(-bound..=bound));
                d
            })
            .collect();
        Self { layers, leaky_slope, head, version: fresh_version() }
    }

    pub fn zeros(sizes: &[usize], head: Head, leaky_slope: f64) -> Self {
        let layers = sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect();
        Self { layers, leaky_slope, head, version: fresh_version() }
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim).chain(self.layers.iter().map(|l| l.out_dim)).collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        self.version = fresh_version();
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    fn locate(&self, mut i: usize) -> (usize, bool, usize) {
        for (li, l) in self.layers.iter().enumerate() {
            if i < l.weights.len() {
                return (li, true, i);
            }
            i -= l.weights.len();
            if i < l.biases.len() {
                return (li, false, i);
            }
            i -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat parameter access: each layer's weights then biases, in order.
    pub fn param(&self, i: usize) -> f64 {
        let (l, w, k) = self.locate(i);
        if w {
            self.layers[l].weights[k]
        } else {
            self.layers[l].biases[k]
        }
    }

    pub fn set_param(&mut self, i: usize, value: f64) {
        let (l, w, k) = self.locate(i);
        self.version = fresh_version();
        if w {
            self.layers[l].weights[k] = value;
        } else {
            self.layers[l].biases[k] = value;
        }
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), actual: input.len() });
        }
        Ok(())
    }

    fn activate(&self, layer: usize, z: f64) -> f64 {
        if layer + 1 == self.layers.len() {
            match self.head {
                Head::Sigmoid => sigmoid(z),
                Head::Identity => z,
            }
        } else if z >= 0.0 {
            z
        } else {
            self.leaky_slope * z
        }
    }

    fn activate_grad(&self, layer: usize, z: f64) -> f64 {
        if layer + 1 == self.layers.len() {
            match self.head {
                Head::Sigmoid => {
                    let s = sigmoid(z);
                    s * (1.0 - s)
                }
                Head::Identity => 1.0,
            }
        } else if z >= 0.0 {
            1.0
        } else {
            self.leaky_slope
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut x = input.to_vec();
        let mut z = Vec::new();
        for (li, layer) in self.layers.iter().enumerate() {
            layer.affine(&x, &mut z);
            x.clear();
            x.extend(z.iter().map(|&v| self.activate(li, v)));
        }
        Ok(x)
    }

    pub fn forward_with_tape(&self, input: &[f64]) -> Result<GradientTape> {
        self.check_input(input)?;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = input.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::with_capacity(layer.out_dim);
            layer.affine(&x, &mut z);
            let a: Vec<f64> = z.iter().map(|&v| self.activate(li, v)).collect();
            inputs.push(std::mem::replace(&mut x, a));
            pre.push(z);
        }
        Ok(GradientTape { version: self.version, inputs, pre, output: x })
    }

    /// Accumulates into `grads` the gradient of `sum_k d_output[k] * out[k]`.
    pub fn backward_into(&self, tape: GradientTape, d_output: &[f64], grads: &mut Gradients) -> Result<()> {
        if tape.version != self.version {
            return Err(Error::StaleTape);
        }
        if d_output.len() != self.output_dim() {
            return Err(Error::DimensionMismatch { expected: self.output_dim(), actual: d_output.len() });
        }
        let mut delta: Vec<f64> = d_output.to_vec();
        for li in (0..self.layers.len()).rev() {
            let layer = &self.layers[li];
            let g = &mut grads.layers[li];
            for (d, &z) in delta.iter_mut().zip(&tape.pre[li]) {
                *d *= self.activate_grad(li, z);
            }
            let x = &tape.inputs[li];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                g.biases[o] += d;
                let row = &mut g.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                row.iter_mut().zip(x).for_each(|(gw, xi)| *gw += d * xi);
            }
            if li > 0 {
                let mut prev = vec![0.0; layer.in_dim];
                for (o, &d) in delta.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    prev.iter_mut().zip(row).for_each(|(p, w)| *p += d * w);
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub fn backward(&self, tape: GradientTape, d_output: &[f64]) -> Result<Gradients> {
        let mut g = Gradients::zeros_like(self);
        self.backward_into(tape, d_output, &mut g)?;
        Ok(g)
    }

    /// Plain gradient step: `p += sign * lr * g`.
    pub fn sgd_step(&mut self, grads: &Gradients, lr: f64, direction: Direction) {
        let s = direction.sign() * lr;
        for (l, g) in self.layers_mut().iter_mut().zip(&grads.layers) {
            l.weights.iter_mut().zip(&g.weights).for_each(|(p, g)| *p += s * g);
            l.biases.iter_mut().zip(&g.biases).for_each(|(p, g)| *p += s * g);
        }
    }

    pub fn to_checkpoint(&self) -> MlpCheckpoint {
        MlpCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            sizes: self.sizes(),
            leaky_slope: self.leaky_slope,
            head: self.head,
            weights: self.layers.iter().map(|l| l.weights.clone()).collect(),
            biases: self.layers.iter().map(|l| l.biases.clone()).collect(),
        }
    }

    pub fn from_checkpoint(c: &MlpCheckpoint) -> Result<Self> {
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format {} v{}", c.format, c.version)));
        }
        let n = c.sizes.len().saturating_sub(1);
        if n == 0 || c.weights.len() != n || c.biases.len() != n {
            return Err(Error::Checkpoint("layer count does not match sizes".into()));
        }
        let mut net = Mlp::zeros(&c.sizes, c.head, c.leaky_slope);
        for (l, (w, b)) in net.layers.iter_mut().zip(c.weights.iter().zip(&c.biases)) {
            if w.len() != l.weights.len() || b.len() != l.biases.len() {
                return Err(Error::Checkpoint("parameter array has wrong length".into()));
            }
            l.weights.clone_from(w);
            l.biases.clone_from(b);
        }
        Ok(net)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ascent,
    Descent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Ascent => 1.0,
            Direction::Descent => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

/// First-order optimizer bound to one network.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    moments: Option<(Gradients, Gradients)>,
    steps: i32,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Self { kind, lr, moments: None, steps: 0 }
    }

    pub fn step(&mut self, net: &mut Mlp, grads: &Gradients, direction: Direction) {
        match self.kind {
            OptimizerKind::Sgd => net.sgd_step(grads, self.lr, direction),
            OptimizerKind::Adam => {
                const B1: f64 = 0.9;
                const B2: f64 = 0.999;
                const EPS: f64 = 1e-8;
                let (m, v) = self
                    .moments
                    .get_or_insert_with(|| (Gradients::zeros_like(net), Gradients::zeros_like(net)));
                self.steps += 1;
                let c1 = 1.0 - B1.powi(self.steps);
                let c2 = 1.0 - B2.powi(self.steps);
                let s = direction.sign() * self.lr;
                for (((l, g), ml), vl) in
                    net.layers_mut().iter_mut().zip(&grads.layers).zip(&mut m.layers).zip(&mut v.layers)
                {
                    let params = l.weights.iter_mut().chain(l.biases.iter_mut());
                    let gs = g.weights.iter().chain(&g.biases);
                    let ms = ml.weights.iter_mut().chain(ml.biases.iter_mut());
                    let vs = vl.weights.iter_mut().chain(vl.biases.iter_mut());
                    for (((p, &g), m), v) in params.zip(gs).zip(ms).zip(vs) {
                        *m = B1 * *m + (1.0 - B1) * g;
                        *v = B2 * *v + (1.0 - B2) * g * g;
                        *p += s * (*m / c1) / ((*v / c2).sqrt() + EPS);
                    }
                }
            }
        }
    }
}

pub const CHECKPOINT_FORMAT: &str = "edge-offload-mlp";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialized network: layer sizes plus row-major parameter arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpCheckpoint {
    pub format: String,
    pub version: u32,
    pub sizes: Vec<usize>,
    pub leaky_slope: f64,
    pub head: Head,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}
