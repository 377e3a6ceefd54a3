//! Minimal dense network engine for the discriminator and the classical
//! generator: forward pass, reverse-mode gradients, BCE loss, and Adam.
//!
//! Parameters live in one flat vector per model with a fixed layout — for
//! each layer, the weight matrix in row-major order (output-major) followed
//! by the bias vector — so optimizer state lines up deterministically.

use std::io::{self, Read, Write};

use rand::Rng;
use thiserror::Error;

/// Negative slope of the leaky rectifier.
pub const LEAKY_RELU_SLOPE: f64 = 0.01;
/// Sigmoid outputs are clamped to [CLAMP_EPS, 1 - CLAMP_EPS] before BCE.
pub const CLAMP_EPS: f64 = 1e-7;
/// Output-layer bias initialization for the classical generator; a positive
/// offset keeps the initial ReLU outputs strictly positive and near-uniform
/// after renormalization.
pub const GENERATOR_OUTPUT_BIAS_INIT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("checkpoint is malformed: {0}")]
    BadCheckpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Activation {
    LeakyRelu,
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_RELU_SLOPE * x
                }
            }
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative with respect to the pre-activation.
    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_RELU_SLOPE
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => {
                let s = Activation::Sigmoid.apply(x);
                s * (1.0 - s)
            }
            Activation::Identity => 1.0,
        }
    }

    fn tag(self) -> u8 {
        match self {
            Activation::LeakyRelu => 0,
            Activation::Relu => 1,
            Activation::Sigmoid => 2,
            Activation::Identity => 3,
        }
    }

    fn from_tag(tag: u8) -> Result<Self, NnError> {
        match tag {
            0 => Ok(Activation::LeakyRelu),
            1 => Ok(Activation::Relu),
            2 => Ok(Activation::Sigmoid),
            3 => Ok(Activation::Identity),
            other => Err(NnError::BadCheckpoint(format!(
                "unknown activation tag {other}"
            ))),
        }
    }
}

/// Fully connected network with one activation for all hidden layers and one
/// for the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layer_sizes: Vec<usize>,
    hidden_activation: Activation,
    output_activation: Activation,
    params: Vec<f64>,
}

/// Pre- and post-activations retained by a forward pass for backprop.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre_activations: Vec<Vec<f64>>,
    post_activations: Vec<Vec<f64>>,
}

/// Gradients mirroring the model's flat parameter layout, plus the gradient
/// with respect to the input vector (for chaining into an upstream model).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientTape {
    pub param_grads: Vec<f64>,
    pub input_grad: Vec<f64>,
}

impl MlpModel {
    /// Build a network with weights drawn uniformly from
    /// [-sqrt(1/fan_in), sqrt(1/fan_in)] and zero biases. Weights are drawn
    /// layer by layer in row-major order, so the RNG consumption is fixed.
    pub fn new<R: Rng + ?Sized>(
        layer_sizes: &[usize],
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        assert!(
            layer_sizes.len() >= 2 && layer_sizes.iter().all(|&s| s > 0),
            "need at least input and output layers of nonzero size"
        );
        let mut params = Vec::with_capacity(Self::count_params(layer_sizes));
        for pair in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (1.0 / fan_in as f64).sqrt();
            for _ in 0..fan_in * fan_out {
                params.push(rng.random_range(-limit..=limit));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            hidden_activation,
            output_activation,
            params,
        }
    }

    fn count_params(layer_sizes: &[usize]) -> usize {
        layer_sizes
            .windows(2)
            .map(|pair| pair[0] * pair[1] + pair[1])
            .sum()
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Offset of layer `k`'s weight block in the flat parameter vector.
    fn layer_offset(&self, layer: usize) -> usize {
        self.layer_sizes
            .windows(2)
            .take(layer)
            .map(|pair| pair[0] * pair[1] + pair[1])
            .sum()
    }

    fn activation_for_layer(&self, layer: usize) -> Activation {
        if layer + 2 == self.layer_sizes.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    /// Affine map plus activation per layer; the cache retains everything
    /// `backward` needs.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, ForwardCache), NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::LengthMismatch {
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut cache = ForwardCache {
            input: input.to_vec(),
            pre_activations: Vec::with_capacity(n_layers),
            post_activations: Vec::with_capacity(n_layers),
        };
        let mut current = input.to_vec();
        let mut offset = 0;
        for layer in 0..n_layers {
            let (fan_in, fan_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let weights = &self.params[offset..offset + fan_in * fan_out];
            let biases =
                &self.params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;

            let activation = self.activation_for_layer(layer);
            let mut pre = vec![0.0; fan_out];
            for (row, p) in pre.iter_mut().enumerate() {
                let w = &weights[row * fan_in..(row + 1) * fan_in];
                *p = biases[row] + w.iter().zip(current.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            let post: Vec<f64> = pre.iter().map(|&x| activation.apply(x)).collect();
            cache.pre_activations.push(pre);
            current = post.clone();
            cache.post_activations.push(post);
        }
        Ok((current, cache))
    }

    /// Exact reverse-mode gradients for all weights, biases, and the input.
    ///
    /// `upstream` is the gradient of the loss with respect to the model
    /// output (post-activation).
    pub fn backward(
        &self,
        cache: &ForwardCache,
        upstream: &[f64],
    ) -> Result<GradientTape, NnError> {
        if upstream.len() != self.output_dim() {
            return Err(NnError::LengthMismatch {
                expected: self.output_dim(),
                got: upstream.len(),
            });
        }
        let n_layers = self.layer_sizes.len() - 1;
        let mut param_grads = vec![0.0; self.params.len()];
        // delta = dL/d(pre-activation) of the current layer.
        let mut delta: Vec<f64> = upstream
            .iter()
            .zip(cache.pre_activations[n_layers - 1].iter())
            .map(|(&u, &pre)| u * self.activation_for_layer(n_layers - 1).derivative(pre))
            .collect();

        for layer in (0..n_layers).rev() {
            let (fan_in, fan_out) = (self.layer_sizes[layer], self.layer_sizes[layer + 1]);
            let offset = self.layer_offset(layer);
            let below: &[f64] = if layer == 0 {
                &cache.input
            } else {
                &cache.post_activations[layer - 1]
            };
            for (row, &d) in delta.iter().enumerate() {
                let w_row = offset + row * fan_in;
                for (col, &x) in below.iter().enumerate() {
                    param_grads[w_row + col] = d * x;
                }
                param_grads[offset + fan_in * fan_out + row] = d;
            }
            // Pull delta through the weight matrix to the layer below.
            let mut lower = vec![0.0; fan_in];
            for (row, &d) in delta.iter().enumerate() {
                let w_row = &self.params[offset + row * fan_in..offset + (row + 1) * fan_in];
                for (col, l) in lower.iter_mut().enumerate() {
                    *l += d * w_row[col];
                }
            }
            if layer > 0 {
                let act = self.activation_for_layer(layer - 1);
                delta = lower
                    .iter()
                    .zip(cache.pre_activations[layer - 1].iter())
                    .map(|(&l, &pre)| l * act.derivative(pre))
                    .collect();
            } else {
                return Ok(GradientTape {
                    param_grads,
                    input_grad: lower,
                });
            }
        }
        unreachable!("loop returns at layer 0");
    }

    /// Serialize as a layer-size header followed by the flat parameter
    /// vector, all little-endian: u32 layer count, u32 sizes, two u8
    /// activation tags (hidden, output), then param_count f64 values.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> io::Result<()> {
        w.write_all(&(self.layer_sizes.len() as u32).to_le_bytes())?;
        for &size in &self.layer_sizes {
            w.write_all(&(size as u32).to_le_bytes())?;
        }
        w.write_all(&[self.hidden_activation.tag(), self.output_activation.tag()])?;
        for &p in &self.params {
            w.write_all(&p.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self, NnError> {
        let read_err = |e: io::Error| NnError::BadCheckpoint(e.to_string());
        let mut u32_buf = [0u8; 4];
        r.read_exact(&mut u32_buf).map_err(read_err)?;
        let n_sizes = u32::from_le_bytes(u32_buf) as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(NnError::BadCheckpoint(format!(
                "implausible layer count {n_sizes}"
            )));
        }
        let mut layer_sizes = Vec::with_capacity(n_sizes);
        for _ in 0..n_sizes {
            r.read_exact(&mut u32_buf).map_err(read_err)?;
            layer_sizes.push(u32::from_le_bytes(u32_buf) as usize);
        }
        if layer_sizes.iter().any(|&s| s == 0) {
            return Err(NnError::BadCheckpoint("zero-size layer".into()));
        }
        let mut tags = [0u8; 2];
        r.read_exact(&mut tags).map_err(read_err)?;
        let expected = Self::count_params(&layer_sizes);
        let mut params = Vec::with_capacity(expected);
        let mut f64_buf = [0u8; 8];
        for _ in 0..expected {
            r.read_exact(&mut f64_buf).map_err(read_err)?;
            params.push(f64::from_le_bytes(f64_buf));
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing).map_err(read_err)? != 0 {
            return Err(NnError::BadCheckpoint("trailing bytes".into()));
        }
        Ok(Self {
            layer_sizes,
            hidden_activation: Activation::from_tag(tags[0])?,
            output_activation: Activation::from_tag(tags[1])?,
            params,
        })
    }
}

/// The shared discriminator: 6 -> 16 -> 1, leaky-ReLU hidden, sigmoid output,
/// 129 trainable parameters.
pub fn build_discriminator<R: Rng + ?Sized>(rng: &mut R) -> MlpModel {
    let model = MlpModel::new(&[6, 16, 1], Activation::LeakyRelu, Activation::Sigmoid, rng);
    debug_assert_eq!(model.param_count(), 129);
    model
}

/// The classical generator: 6 -> 10 -> 6, leaky-ReLU hidden, ReLU output so
/// edge weights are nonnegative, 136 trainable parameters. The output biases
/// start at a positive constant so the initial samples are near-uniform.
pub fn build_classical_generator<R: Rng + ?Sized>(rng: &mut R) -> MlpModel {
    let mut model = MlpModel::new(&[6, 10, 6], Activation::LeakyRelu, Activation::Relu, rng);
    let n = model.param_count();
    for bias in &mut model.params_mut()[n - 6..] {
        *bias = GENERATOR_OUTPUT_BIAS_INIT;
    }
    debug_assert_eq!(n, 136);
    model
}

/// Binary cross-entropy of a predicted probability against a 0/1 label.
///
/// The probability is clamped to [1e-7, 1-1e-7] first. Returns the loss and
/// its derivative with respect to the (clamped) probability.
pub fn bce_loss(d: f64, y: f64) -> (f64, f64) {
    let d = d.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS);
    let loss = -(y * d.ln() + (1.0 - y) * (1.0 - d).ln());
    let grad = (d - y) / (d * (1.0 - d));
    (loss, grad)
}

/// Adam optimizer state over one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with the standard moment decay rates (0.9, 0.999) and
    /// epsilon 1e-8.
    pub fn new(param_count: usize, lr: f64) -> Self {
        Self {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update, in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NnError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(NnError::LengthMismatch {
                expected: self.m.len(),
                got: if params.len() != self.m.len() {
                    params.len()
                } else {
                    grads.len()
                },
            });
        }
        self.t += 1;
        let bias1 = 1.0 - self.beta1.powi(self.t as i32);
        let bias2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}
