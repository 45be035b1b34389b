//! Feed-forward regressors with inverted dropout.
//!
//! Layers are dense; hidden layers use the configured activation (rectifier
//! by default) followed by dropout, the output layer is linear. Dropout is
//! inverted: survivors are scaled by `1 / (1 − rate)` at train time and when
//! sampling for MC-Dropout, so a deterministic pass needs no rescaling.

mod adam;
mod solid;
mod train;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use solid::is_solid;
pub use train::{
    mse_gradient, train, train_autoencoder, Dataset, EpochLoss, Gradient, Provenance,
    TrainingConfig, TrainingOutcome,
};

use crate::{Error, Result};

/// Rates above this were not able to complete a lap and are rejected.
pub const MAX_DROPOUT_RATE: f64 = 0.40;

/// Default controller architecture: 9 features, two hidden layers, one
/// steering output.
pub const CONTROLLER_DIMS: [usize; 4] = [9, 32, 16, 1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    #[inline]
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// Dense layer; `weights` is row-major with one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    #[inline]
    fn affine(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, b) in self.weights.chunks_exact(self.inputs).zip(&self.bias) {
            let mut acc = *b;
            for (w, x) in row.iter().zip(input) {
                acc += w * x;
            }
            out.push(acc);
        }
    }
}

/// A trainable feed-forward regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regressor {
    layer_dims: Vec<usize>,
    layers: Vec<Layer>,
    hidden_activation: Activation,
    dropout_rate: f64,
    seed: u64,
}

pub fn check_dropout_rate(rate: f64) -> Result<()> {
    if rate > MAX_DROPOUT_RATE {
        return Err(Error::DisregardedRate(rate));
    }
    if !(rate >= 0.0) {
        return Err(Error::Config(alloc::format!(
            "dropout rate {rate} must be in [0, 0.40]"
        )));
    }
    Ok(())
}

// Explicitly assembled models may use any rate in [0, 1); the 0.40 cap
// applies to models built for the study.
fn check_rate_range(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(alloc::format!(
            "dropout rate {rate} must be in [0, 1)"
        )));
    }
    Ok(())
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::Shape(alloc::format!(
            "need at least input and output dims, got {layer_dims:?}"
        )));
    }
    if layer_dims.contains(&0) {
        return Err(Error::Shape(alloc::format!(
            "zero-width layer in {layer_dims:?}"
        )));
    }
    Ok(())
}

/// Builds a regressor with scaled-uniform weights `U(±√(6/(fan_in+fan_out)))`
/// and zero biases, drawn from a stream seeded by `seed`.
pub fn init_regressor(layer_dims: &[usize], dropout_rate: f64, seed: u64) -> Result<Regressor> {
    check_dims(layer_dims)?;
    check_dropout_rate(dropout_rate)?;
    let mut rng = crate::rng_from_seed(seed);
    let layers = layer_dims
        .windows(2)
        .map(|io| {
            let (fan_in, fan_out) = (io[0], io[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut layer = Layer::zeros(fan_in, fan_out);
            for w in &mut layer.weights {
                *w = rng.random_range(-limit..limit);
            }
            layer
        })
        .collect();
    Ok(Regressor {
        layer_dims: layer_dims.to_vec(),
        layers,
        hidden_activation: Activation::Relu,
        dropout_rate,
        seed,
    })
}

impl Regressor {
    /// Assembles a regressor from explicit parameters, checking shapes.
    pub fn from_parts(
        layer_dims: Vec<usize>,
        layers: Vec<Layer>,
        hidden_activation: Activation,
        dropout_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        check_dims(&layer_dims)?;
        check_rate_range(dropout_rate)?;
        if layers.len() != layer_dims.len() - 1 {
            return Err(Error::Shape(alloc::format!(
                "{} layers for dims {layer_dims:?}",
                layers.len()
            )));
        }
        for (i, (layer, io)) in layers.iter().zip(layer_dims.windows(2)).enumerate() {
            if layer.inputs != io[0]
                || layer.outputs != io[1]
                || layer.weights.len() != io[0] * io[1]
                || layer.bias.len() != io[1]
            {
                return Err(Error::Shape(alloc::format!(
                    "layer {i} does not match dims {}x{}",
                    io[1],
                    io[0]
                )));
            }
        }
        Ok(Self {
            layer_dims,
            layers,
            hidden_activation,
            dropout_rate,
            seed,
        })
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self
            .layer_dims
            .last()
            .expect("dims checked at construction")
    }

    /// Number of weights and biases.
    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    /// Short identifier: dims, rate and seed.
    pub fn id(&self) -> String {
        let dims: Vec<String> = self
            .layer_dims
            .iter()
            .map(|d| alloc::format!("{d}"))
            .collect();
        alloc::format!(
            "mlp[{}]-p{}-s{}",
            dims.join("x"),
            self.dropout_rate,
            self.seed
        )
    }

    pub(crate) fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(alloc::format!(
                "input has {} features, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Full output vector. With `dropout = Some((rate, rng))` every hidden unit
    /// is dropped with probability `rate` and survivors are scaled by
    /// `1 / (1 − rate)`.
    pub fn forward_vec(
        &self,
        input: &[f64],
        dropout: Option<(f64, &mut dyn RngCore)>,
    ) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let (rate, mut rng) = match dropout {
            Some((rate, rng)) if rate > 0.0 => (rate, Some(rng)),
            _ => (0.0, None),
        };
        let keep_scale = 1.0 / (1.0 - rate);
        let last = self.layers.len() - 1;
        let mut current = input.to_vec();
        let mut next = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            layer.affine(&current, &mut next);
            if i < last {
                for z in next.iter_mut() {
                    *z = self.hidden_activation.apply(*z);
                }
                if let Some(rng) = rng.as_deref_mut() {
                    for h in next.iter_mut() {
                        if rng.random::<f64>() < rate {
                            *h = 0.0;
                        } else {
                            *h *= keep_scale;
                        }
                    }
                }
            }
            core::mem::swap(&mut current, &mut next);
        }
        Ok(current)
    }

    /// Scalar prediction. `dropout_active` samples a fresh dropout mask at the
    /// model's own rate.
    pub fn forward(
        &self,
        input: &[f64],
        dropout_active: bool,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        let dropout = if dropout_active {
            Some((self.dropout_rate, rng))
        } else {
            None
        };
        self.scalar(self.forward_vec(input, dropout)?)
    }

    /// Deterministic scalar prediction (dropout disabled).
    pub fn predict(&self, input: &[f64]) -> Result<f64> {
        self.scalar(self.forward_vec(input, None)?)
    }

    /// One stochastic pass at an explicit rate, used by MC-Dropout overrides.
    pub fn predict_with_dropout(
        &self,
        input: &[f64],
        rate: f64,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        check_rate_range(rate)?;
        self.scalar(self.forward_vec(input, Some((rate, rng)))?)
    }

    fn scalar(&self, out: Vec<f64>) -> Result<f64> {
        match out.as_slice() {
            [y] => Ok(*y),
            _ => Err(Error::Shape(alloc::format!(
                "scalar prediction requested from a {}-output model",
                out.len()
            ))),
        }
    }
}
