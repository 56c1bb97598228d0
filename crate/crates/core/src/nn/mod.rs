//! Sequential dense networks with hand-written reverse-mode gradients.
//!
//! Everything here runs in `f64`. Checkpoints narrow to `f32` on disk (see
//! [`checkpoint`]); trainers call [`MlpParams::quantize_f32`] on their final
//! parameters so the in-memory model and its checkpoint agree bit for bit.

mod adam;
pub mod checkpoint;
pub(crate) mod loss;

pub use adam::{AdamConfig, AdamState};
pub use loss::{loss_and_grads, Batch, LossKind};

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng as _;
use sha2::{Digest, Sha256};

use crate::rng::Rng;

/// Log-variance outputs are clamped into this interval everywhere in the crate.
pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum NnError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in network input")]
    NonFiniteInput,
    #[error("non-finite value produced by layer {layer}")]
    NonFinite { layer: usize },
    #[error("non-finite parameter in layer {layer}")]
    NonFiniteParameter { layer: usize },
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("unknown loss tag `{0}`")]
    UnknownLoss(String),
    #[error("loss `{0}` is not defined for a bare MLP")]
    UnsupportedLoss(&'static str),
    #[error("empty batch")]
    EmptyBatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
}

impl Activation {
    /// Byte code used in checkpoint headers.
    pub fn code(self) -> u8 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
            Activation::Tanh => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            2 => Some(Activation::Tanh),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's own output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
        }
    }
}

/// Parameters of a sequential MLP. `weights[l]` is `out x in`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layer_dims: Vec<usize>,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
    activations: Vec<Activation>,
}

/// Gradient (or optimizer moment) storage congruent with an [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

fn check_arch(layer_dims: &[usize], activations: &[Activation]) -> Result<(), NnError> {
    if layer_dims.len() < 2 {
        return Err(NnError::InvalidArchitecture(
            "need at least an input and an output dimension".into(),
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(NnError::InvalidArchitecture("zero-width layer".into()));
    }
    if activations.len() != layer_dims.len() - 1 {
        return Err(NnError::InvalidArchitecture(format!(
            "{} layers but {} activations",
            layer_dims.len() - 1,
            activations.len()
        )));
    }
    Ok(())
}

impl MlpParams {
    /// All-zero network.
    pub fn zeros(layer_dims: &[usize], activations: &[Activation]) -> Result<Self, NnError> {
        check_arch(layer_dims, activations)?;
        let weights = layer_dims
            .windows(2)
            .map(|w| Array2::zeros((w[1], w[0])))
            .collect();
        let biases = layer_dims[1..].iter().map(|&d| Array1::zeros(d)).collect();
        Ok(Self {
            layer_dims: layer_dims.to_vec(),
            weights,
            biases,
            activations: activations.to_vec(),
        })
    }

    /// He-uniform for relu layers, Xavier-uniform otherwise, zero biases.
    pub fn init(
        layer_dims: &[usize],
        activations: &[Activation],
        rng: &mut Rng,
    ) -> Result<Self, NnError> {
        let mut params = Self::zeros(layer_dims, activations)?;
        for (l, w) in params.weights.iter_mut().enumerate() {
            let (fan_out, fan_in) = w.dim();
            let limit = match activations[l] {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Tanh | Activation::Identity => {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                }
            };
            w.mapv_inplace(|_| rng.random_range(-limit..limit));
        }
        Ok(params)
    }

    /// Builds a network from explicit arrays, validating shapes and finiteness.
    pub fn from_parts(
        weights: Vec<Array2<f64>>,
        biases: Vec<Array1<f64>>,
        activations: Vec<Activation>,
    ) -> Result<Self, NnError> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(NnError::InvalidArchitecture(format!(
                "{} weight matrices, {} bias vectors",
                weights.len(),
                biases.len()
            )));
        }
        let mut layer_dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            let expected_in = *layer_dims.last().unwrap();
            if w.ncols() != expected_in {
                return Err(NnError::DimensionMismatch {
                    what: "weight input width",
                    expected: expected_in,
                    got: w.ncols(),
                });
            }
            if b.len() != w.nrows() {
                return Err(NnError::DimensionMismatch {
                    what: "bias length",
                    expected: w.nrows(),
                    got: b.len(),
                });
            }
            if w.iter().chain(b.iter()).any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteParameter { layer: l });
            }
            layer_dims.push(w.nrows());
        }
        check_arch(&layer_dims, &activations)?;
        Ok(Self {
            layer_dims,
            weights,
            biases,
            activations,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn weights(&self) -> &[Array2<f64>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Array1<f64>] {
        &self.biases
    }

    pub fn num_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters in checkpoint order: per layer, weights (row-major) then biases.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    /// Inverse of [`to_flat`](Self::to_flat).
    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), NnError> {
        if flat.len() != self.num_params() {
            return Err(NnError::DimensionMismatch {
                what: "flat parameter vector",
                expected: self.num_params(),
                got: flat.len(),
            });
        }
        let mut it = flat.iter().copied();
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(|v| *v = it.next().unwrap());
            b.iter_mut().for_each(|v| *v = it.next().unwrap());
        }
        Ok(())
    }

    /// Rounds every parameter to the nearest `f32`, the checkpoint storage precision.
    pub fn quantize_f32(&mut self) {
        let q = |v: &mut f64| *v = *v as f32 as f64;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            w.iter_mut().for_each(q);
            b.iter_mut().for_each(q);
        }
    }

    /// SHA-256 over the checkpoint encoding; used for freeze checks.
    pub fn checksum(&self) -> String {
        hex::encode(Sha256::digest(checkpoint::encode(self)))
    }

    pub fn zero_grads(&self) -> MlpGrads {
        MlpGrads {
            weights: self.weights.iter().map(|w| Array2::zeros(w.dim())).collect(),
            biases: self.biases.iter().map(|b| Array1::zeros(b.len())).collect(),
        }
    }

    /// Single-example forward pass.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>, NnError> {
        if input.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: input.len(),
            });
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        let mut x = Array1::from(input.to_vec());
        for (l, ((w, b), act)) in self
            .weights
            .iter()
            .zip(&self.biases)
            .zip(&self.activations)
            .enumerate()
        {
            let mut z = w.dot(&x);
            z += b;
            z.mapv_inplace(|v| act.apply(v));
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: l });
            }
            x = z;
        }
        Ok(x.to_vec())
    }

    /// Batched forward pass (one example per row), keeping every layer's output
    /// for a subsequent [`backward`](Self::backward).
    pub fn forward_cached(&self, inputs: ArrayView2<'_, f64>) -> Result<ForwardCache, NnError> {
        if inputs.ncols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                what: "batch input width",
                expected: self.input_dim(),
                got: inputs.ncols(),
            });
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(NnError::NonFiniteInput);
        }
        let mut outputs = Vec::with_capacity(self.num_layers() + 1);
        outputs.push(inputs.to_owned());
        for (l, ((w, b), act)) in self
            .weights
            .iter()
            .zip(&self.biases)
            .zip(&self.activations)
            .enumerate()
        {
            let mut z = outputs[l].dot(&w.t());
            z += b;
            z.mapv_inplace(|v| act.apply(v));
            if z.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: l });
            }
            outputs.push(z);
        }
        Ok(ForwardCache { outputs })
    }

    /// Batched forward pass without a cache.
    pub fn forward_batch(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>, NnError> {
        let mut cache = self.forward_cached(inputs)?;
        Ok(cache.outputs.pop().unwrap())
    }

    /// Reverse pass. `d_output` is dLoss/dOutput for every row of the cached batch.
    /// Returns parameter gradients and dLoss/dInput.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_output: Array2<f64>,
    ) -> Result<(MlpGrads, Array2<f64>), NnError> {
        let out = cache.output();
        if d_output.dim() != out.dim() {
            return Err(NnError::DimensionMismatch {
                what: "output gradient",
                expected: out.len(),
                got: d_output.len(),
            });
        }
        let n = self.num_layers();
        let mut grads = self.zero_grads();
        let mut delta = d_output;
        for l in (0..n).rev() {
            let act = self.activations[l];
            let y = &cache.outputs[l + 1];
            if act != Activation::Identity {
                ndarray::Zip::from(&mut delta)
                    .and(y)
                    .for_each(|d, &y| *d *= act.derivative_from_output(y));
            }
            grads.weights[l] = delta.t().dot(&cache.outputs[l]);
            grads.biases[l] = delta.sum_axis(Axis(0));
            delta = delta.dot(&self.weights[l]);
            if delta.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: l });
            }
        }
        Ok((grads, delta))
    }
}

/// Per-layer outputs of a batched forward pass; `outputs[0]` is the input batch.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    outputs: Vec<Array2<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        self.outputs.last().unwrap()
    }
}

impl MlpGrads {
    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.weights.iter_mut().for_each(|w| *w *= k);
        self.biases.iter_mut().for_each(|b| *b *= k);
    }

    /// Flattened in the same order as [`MlpParams::to_flat`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend(w.iter().copied());
            out.extend(b.iter().copied());
        }
        out
    }

    pub fn is_congruent(&self, params: &MlpParams) -> bool {
        self.weights.len() == params.weights.len()
            && self.biases.len() == params.biases.len()
            && self
                .weights
                .iter()
                .zip(&params.weights)
                .all(|(g, w)| g.dim() == w.dim())
            && self
                .biases
                .iter()
                .zip(&params.biases)
                .all(|(g, b)| g.len() == b.len())
    }
}

impl MlpParams {
    pub(crate) fn parts_mut(&mut self) -> (&mut [Array2<f64>], &mut [Array1<f64>]) {
        (&mut self.weights, &mut self.biases)
    }
}
