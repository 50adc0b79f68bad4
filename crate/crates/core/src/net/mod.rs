//! Dense multilayer perceptrons with explicit backpropagation and Adam.
//!
//! Networks use ReLU on hidden layers and a linear output layer. Weights are
//! stored row-major as `outputs x inputs`. Mini-batches are row-major
//! [`Matrix`] values; gradients are summed over the rows of a batch, so a
//! loss defined as a batch mean must scale its output gradient by `1/rows`.

mod checkpoint;
pub mod kernels;
pub mod loss;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use checkpoint::{read_net, write_net, NET_MAGIC};
pub use loss::{huber_loss, mse_loss, softmax, softmax_nll_loss};

use kernels::{gemm, transpose};

#[derive(Debug, Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("cache does not belong to the current parameters")]
    StaleCache,
    #[error("gradient shapes do not match the network")]
    ShapeMismatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl NetSpec {
    pub fn relu(layer_sizes: &[usize]) -> Self {
        NetSpec {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation: Activation::Relu,
            output_activation: Activation::Linear,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(NetError::InvalidSpec("need at least an input and an output layer".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(NetError::InvalidSpec("layer sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }
}

/// Row-major dense matrix used for mini-batches.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(NetError::DimensionMismatch { expected: cols, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    /// `outputs x inputs`, row-major.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn forward_into(&self, input: &Matrix, out: &mut Matrix) {
        let rows = input.rows;
        let xt = transpose(rows, self.inputs, &input.data);
        let mut yt = vec![0.0; self.outputs * rows];
        gemm(self.outputs, self.inputs, rows, &self.weights, &xt, &mut yt);
        for r in 0..rows {
            for o in 0..self.outputs {
                out.data[r * self.outputs + o] = yt[o * rows + r] + self.biases[o];
            }
        }
    }
}

/// Per-layer gradients, same shapes as the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Gradients {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|g| *g *= factor);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment buffers, laid out like the layers they track.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub first: Vec<Dense>,
    pub second: Vec<Dense>,
}

impl AdamState {
    fn zeros(layers: &[Dense]) -> Self {
        let z = || layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect();
        AdamState {
            step: 0,
            first: z(),
            second: z(),
        }
    }
}

/// Activations kept from a forward pass for the matching backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    revision: u64,
    /// `activations[0]` is the input; `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn output(&self) -> &Matrix {
        self.activations.last().unwrap()
    }

    pub fn rows(&self) -> usize {
        self.activations[0].rows
    }
}

/// A dense network together with its Adam optimizer state.
#[derive(Debug, Clone)]
pub struct Mlp {
    spec: NetSpec,
    pub layers: Vec<Dense>,
    pub adam: AdamState,
    /// Bumped on every parameter update; forward caches record it.
    revision: u64,
}

impl Mlp {
    /// Uniform weights in `±sqrt(6 / fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(spec: &NetSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::with_capacity(spec.layer_sizes.len() - 1);
        for pair in spec.layer_sizes.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let bound = (6.0 / inputs as f64).sqrt();
            let mut layer = Dense::zeros(inputs, outputs);
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
            layers.push(layer);
        }
        Ok(Self::from_layers(spec.clone(), layers))
    }

    pub fn from_layers(spec: NetSpec, layers: Vec<Dense>) -> Self {
        let adam = AdamState::zeros(&layers);
        Mlp {
            spec,
            layers,
            adam,
            revision: 0,
        }
    }

    pub(crate) fn from_parts(spec: NetSpec, layers: Vec<Dense>, adam: AdamState) -> Self {
        Mlp {
            spec,
            layers,
            adam,
            revision: 0,
        }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.biases);
        }
        v
    }

    /// Mutable access to parameter `index` in [`Mlp::params_flat`] order.
    pub fn param_mut(&mut self, mut index: usize) -> &mut f64 {
        self.revision += 1;
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.biases.len() {
                return &mut l.biases[index];
            }
            index -= l.biases.len();
        }
        panic!("parameter index out of range");
    }

    /// Copies weights (not optimizer state) from another network of the same shape.
    pub fn copy_weights_from(&mut self, other: &Mlp) {
        debug_assert_eq!(self.spec, other.spec);
        for (dst, src) in self.layers.iter_mut().zip(&other.layers) {
            dst.weights.copy_from_slice(&src.weights);
            dst.biases.copy_from_slice(&src.biases);
        }
        self.revision += 1;
    }

    /// Single-sample forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        let cache = self.forward_batch(&Matrix {
            rows: 1,
            cols: input.len(),
            data: input.to_vec(),
        })?;
        Ok((cache.output().data.clone(), cache))
    }

    /// Output only, no cache retained.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.0)
    }

    pub fn forward_batch(&self, input: &Matrix) -> Result<ForwardCache> {
        if input.cols != self.input_dim() {
            return Err(NetError::DimensionMismatch {
                expected: self.input_dim(),
                got: input.cols,
            });
        }
        let last = self.layers.len() - 1;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input.clone());
        for (l, layer) in self.layers.iter().enumerate() {
            let mut out = Matrix::zeros(input.rows, layer.outputs);
            layer.forward_into(&activations[l], &mut out);
            let act = if l == last {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            if act == Activation::Relu {
                out.data.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            activations.push(out);
        }
        Ok(ForwardCache {
            revision: self.revision,
            activations,
        })
    }

    /// Parameter gradients for `output_grad` (dL/d output, one row per sample).
    pub fn backward(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<Gradients> {
        Ok(self.backprop(cache, output_grad, false)?.0)
    }

    /// Like [`Mlp::backward`] but also returns dL/d input.
    pub fn backward_with_input_grad(&self, cache: &ForwardCache, output_grad: &Matrix) -> Result<(Gradients, Matrix)> {
        let (grads, input_grad) = self.backprop(cache, output_grad, true)?;
        Ok((grads, input_grad.unwrap()))
    }

    fn backprop(&self, cache: &ForwardCache, output_grad: &Matrix, want_input: bool) -> Result<(Gradients, Option<Matrix>)> {
        if cache.revision != self.revision || cache.activations.len() != self.layers.len() + 1 {
            return Err(NetError::StaleCache);
        }
        if output_grad.cols != self.output_dim() || output_grad.rows != cache.rows() {
            return Err(NetError::DimensionMismatch {
                expected: self.output_dim() * cache.rows(),
                got: output_grad.cols * output_grad.rows,
            });
        }
        let rows = output_grad.rows;
        let last = self.layers.len() - 1;
        let mut grads = Gradients::zeros_like(self);
        let mut delta = output_grad.clone();
        if self.spec.output_activation == Activation::Relu {
            relu_mask(&mut delta, &cache.activations[last + 1]);
        }
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let input = &cache.activations[l];
            let g = &mut grads.layers[l];
            let delta_t = transpose(rows, layer.outputs, &delta.data);
            gemm(layer.outputs, rows, layer.inputs, &delta_t, &input.data, &mut g.weights);
            for (o, db) in g.biases.iter_mut().enumerate() {
                *db = delta_t[o * rows..(o + 1) * rows].iter().sum();
            }
            if l == 0 && !want_input {
                break;
            }
            let mut prev = Matrix::zeros(rows, layer.inputs);
            gemm(rows, layer.outputs, layer.inputs, &delta.data, &layer.weights, &mut prev.data);
            if l > 0 && self.spec.hidden_activation == Activation::Relu {
                relu_mask(&mut prev, &cache.activations[l]);
            }
            delta = prev;
        }
        let input_grad = if want_input { Some(delta) } else { None };
        Ok((grads, input_grad))
    }

    /// Adam update with bias correction.
    pub fn adam_step(&mut self, grads: &Gradients, lr: f64, cfg: &AdamConfig) -> Result<()> {
        if grads.layers.len() != self.layers.len()
            || grads
                .layers
                .iter()
                .zip(&self.layers)
                .any(|(g, l)| g.weights.len() != l.weights.len() || g.biases.len() != l.biases.len())
        {
            return Err(NetError::ShapeMismatch);
        }
        self.adam.step += 1;
        self.revision += 1;
        let t = self.adam.step as f64;
        let c1 = 1.0 - cfg.beta1.powf(t);
        let c2 = 1.0 - cfg.beta2.powf(t);
        for (l, layer) in self.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            let (m, v) = (&mut self.adam.first[l], &mut self.adam.second[l]);
            adam_update(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights, lr, cfg, c1, c2);
            adam_update(&mut layer.biases, &g.biases, &mut m.biases, &mut v.biases, lr, cfg, c1, c2);
        }
        Ok(())
    }
}

impl PartialEq for Mlp {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec && self.layers == other.layers && self.adam == other.adam
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_update(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, cfg: &AdamConfig, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

fn relu_mask(delta: &mut Matrix, activation: &Matrix) {
    for (d, a) in delta.data.iter_mut().zip(&activation.data) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    // Independent re-evaluation: plain nested loops, no kernels.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut a = x.to_vec();
        for (l, layer) in net.layers.iter().enumerate() {
            let z = (0..layer.outputs).map(|o| {
                let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                let s = layer.biases[o] + row.iter().zip(&a).map(|(w, x)| w * x).sum::<f64>();
                if l + 1 < net.layers.len() { s.max(0.0) } else { s }
            });
            a = z.collect();
        }
        a
    }

    fn random_input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seeded(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Mlp::init(&NetSpec::relu(&[3]), &mut seeded(0)).is_err());
        assert!(Mlp::init(&NetSpec::relu(&[3, 0, 1]), &mut seeded(0)).is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases_and_bounded_weights() {
        let spec = NetSpec::relu(&[79, 256, 64, 4]);
        let a = Mlp::init(&spec, &mut seeded(5)).unwrap();
        let b = Mlp::init(&spec, &mut seeded(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(Mlp::init(&NetSpec::relu(&[2, 1]), &mut seeded(9)).unwrap(), Mlp::init(&NetSpec::relu(&[2, 1]), &mut seeded(9)).unwrap());
        for l in &a.layers {
            assert!(l.biases.iter().all(|&b| b == 0.0));
            let bound = (6.0 / l.inputs as f64).sqrt();
            assert!(l.weights.iter().all(|w| w.abs() < bound));
        }
        assert_eq!(a.adam.step, 0);
        assert!(a.adam.first.iter().all(|d| d.weights.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn zero_net_gives_zero_output() {
        let net = Mlp::from_layers(NetSpec::relu(&[3, 5, 2]), vec![Dense::zeros(3, 5), Dense::zeros(5, 2)]);
        assert_eq!(net.predict(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_linear_layer() {
        let mut layer = Dense::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let net = Mlp::from_layers(NetSpec::relu(&[3, 3]), vec![layer]);
        assert_eq!(net.predict(&[0.5, -1.5, 2.0]).unwrap(), vec![0.5, -1.5, 2.0]);
    }

    #[test]
    fn forward_matches_naive_and_batch_matches_single() {
        let net = Mlp::init(&NetSpec::relu(&[6, 33, 17, 3]), &mut seeded(2)).unwrap();
        let rows: Vec<Vec<f64>> = (0..7).map(|s| random_input(6, s)).collect();
        let batch = net.forward_batch(&Matrix::from_rows(&rows).unwrap()).unwrap();
        for (r, x) in rows.iter().enumerate() {
            let single = net.predict(x).unwrap();
            assert_eq!(batch.output().row(r), single.as_slice());
            for (a, b) in single.iter().zip(naive_forward(&net, x)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let net = Mlp::init(&NetSpec::relu(&[4, 2]), &mut seeded(0)).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(NetError::DimensionMismatch { .. })));
        let (_, cache) = net.forward(&[0.0; 4]).unwrap();
        assert!(net.backward(&cache, &Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = Mlp::init(&NetSpec::relu(&[2, 4, 1]), &mut seeded(0)).unwrap();
        let (_, cache) = net.forward(&[1.0, 1.0]).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(1, 1)).unwrap();
        net.adam_step(&g, 1e-3, &AdamConfig::default()).unwrap();
        assert!(matches!(net.backward(&cache, &Matrix::zeros(1, 1)), Err(NetError::StaleCache)));
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let net = Mlp::init(&NetSpec::relu(&[3, 8, 2]), &mut seeded(1)).unwrap();
        let (_, cache) = net.forward(&[0.3, -0.2, 0.9]).unwrap();
        let g = net.backward(&cache, &Matrix::zeros(1, 2)).unwrap();
        assert!(g.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn scalar_chain_rule_base_case() {
        let layer = Dense {
            inputs: 1,
            outputs: 1,
            weights: vec![0.7],
            biases: vec![0.0],
        };
        let net = Mlp::from_layers(NetSpec::relu(&[1, 1]), vec![layer]);
        let (_, cache) = net.forward(&[2.5]).unwrap();
        let g = net.backward(&cache, &Matrix { rows: 1, cols: 1, data: vec![1.0] }).unwrap();
        assert_eq!(g.layers[0].weights, vec![2.5]);
        assert_eq!(g.layers[0].biases, vec![1.0]);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut net = Mlp::init(&NetSpec::relu(&[5, 9, 7, 3]), &mut seeded(11)).unwrap();
        let x = random_input(5, 3);
        let target = [0.2, -0.4, 1.0];
        let loss = |net: &Mlp| mse_loss(&net.predict(&x).unwrap(), &target).unwrap().0;
        let (out, cache) = net.forward(&x).unwrap();
        let (_, grad_out) = mse_loss(&out, &target).unwrap();
        let (g, gin) = net
            .backward_with_input_grad(&cache, &Matrix { rows: 1, cols: 3, data: grad_out })
            .unwrap();
        let analytic = g.flat();
        let h = 1e-5;
        for (i, &an) in analytic.iter().enumerate() {
            let orig = *net.param_mut(i);
            *net.param_mut(i) = orig + h;
            let up = loss(&net);
            *net.param_mut(i) = orig - h;
            let down = loss(&net);
            *net.param_mut(i) = orig;
            let numeric = (up - down) / (2.0 * h);
            let denom = an.abs().max(numeric.abs()).max(1e-8);
            assert!((an - numeric).abs() / denom < 1e-4 || (an - numeric).abs() < 1e-9, "param {i}: {an} vs {numeric}");
        }
        for j in 0..5 {
            let mut xp = x.clone();
            xp[j] += h;
            let up = mse_loss(&net.predict(&xp).unwrap(), &target).unwrap().0;
            xp[j] -= 2.0 * h;
            let down = mse_loss(&net.predict(&xp).unwrap(), &target).unwrap().0;
            let numeric = (up - down) / (2.0 * h);
            assert!((gin.data[j] - numeric).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_zero_gradient_is_noop_except_counter() {
        let mut net = Mlp::init(&NetSpec::relu(&[3, 4, 2]), &mut seeded(0)).unwrap();
        let before = net.params_flat();
        net.adam_step(&Gradients::zeros_like(&net), 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(net.params_flat(), before);
        assert_eq!(net.adam.step, 1);
        assert!(net.adam.first.iter().chain(&net.adam.second).all(|d| d.weights.iter().chain(&d.biases).all(|&v| v == 0.0)));
    }

    #[test]
    fn adam_first_step_moves_by_lr_against_gradient_sign() {
        let mut net = Mlp::init(&NetSpec::relu(&[2, 2]), &mut seeded(0)).unwrap();
        let before = net.params_flat();
        let mut g = Gradients::zeros_like(&net);
        g.layers[0].weights = vec![0.5, -3.0, 2e-3, -7.0];
        g.layers[0].biases = vec![1.0, -1.0];
        net.adam_step(&g, 0.01, &AdamConfig::default()).unwrap();
        let gf = g.flat();
        for ((a, b), gi) in net.params_flat().iter().zip(&before).zip(&gf) {
            let expected = -0.01 * gi.signum();
            assert!((a - b - expected).abs() < 1e-7, "{} vs {expected}", a - b);
        }
    }

    #[test]
    fn adam_shape_mismatch_rejected() {
        let mut net = Mlp::init(&NetSpec::relu(&[3, 2]), &mut seeded(0)).unwrap();
        let other = Mlp::init(&NetSpec::relu(&[4, 2]), &mut seeded(0)).unwrap();
        assert!(matches!(net.adam_step(&Gradients::zeros_like(&other), 0.1, &AdamConfig::default()), Err(NetError::ShapeMismatch)));
    }

    #[test]
    fn adam_minimizes_quadratic() {
        // Textbook recurrence run independently of the network code.
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        for t in 1..=100 {
            let g = 2.0 * (w - 3.0);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            w -= 0.1 * mh / (vh.sqrt() + 1e-8);
        }
        let mut net = Mlp::from_layers(
            NetSpec::relu(&[1, 1]),
            vec![Dense { inputs: 1, outputs: 1, weights: vec![0.0], biases: vec![0.0] }],
        );
        for _ in 0..100 {
            let mut g = Gradients::zeros_like(&net);
            g.layers[0].weights[0] = 2.0 * (net.layers[0].weights[0] - 3.0);
            net.adam_step(&g, 0.1, &AdamConfig::default()).unwrap();
        }
        let got = net.layers[0].weights[0];
        assert!((got - w).abs() < 1e-12);
        assert!((got - 3.0).abs() < 0.1, "w = {got}");
    }

    #[test]
    fn adam_update_is_per_parameter() {
        // Permuting parameter order permutes the updates and nothing else.
        let cfg = AdamConfig::default();
        let g = [0.3, -1.2, 4.0, 0.0, 2e-4];
        let perm = [3, 0, 4, 1, 2];
        let run = |grads: &[f64]| {
            let mut p = vec![1.0; 5];
            let mut m = vec![0.0; 5];
            let mut v = vec![0.0; 5];
            for t in 1..=3 {
                let c1 = 1.0 - cfg.beta1.powf(t as f64);
                let c2 = 1.0 - cfg.beta2.powf(t as f64);
                adam_update(&mut p, grads, &mut m, &mut v, 0.01, &cfg, c1, c2);
            }
            p
        };
        let base = run(&g);
        let permuted: Vec<f64> = perm.iter().map(|&i| g[i]).collect();
        let moved = run(&permuted);
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(moved[k], base[i]);
        }
    }
}
