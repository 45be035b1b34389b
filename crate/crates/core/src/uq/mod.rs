//! Predictive-uncertainty estimators.
//!
//! - MC-Dropout: `S` stochastic passes with fresh dropout masks.
//! - Deep ensemble: one deterministic pass per member.
//! - Autoencoder: reconstruction MSE of the observation.
//!
//! For the first two the monitoring score is the population variance σ² of
//! the predictions; the mean μ is the point prediction.

use alloc::string::String;
use alloc::vec::Vec;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::nnet::{check_dropout_rate, Regressor};
use crate::{Error, Result};

/// Sample counts explored for MC-Dropout.
pub const MCD_SAMPLE_GRID: [usize; 9] = [2, 3, 4, 5, 10, 20, 32, 64, 128];
/// Dropout rates explored for MC-Dropout.
pub const MCD_RATE_GRID: [f64; 7] = [0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35];
/// Autoencoder architecture with a two-unit bottleneck.
pub const AUTOENCODER_DIMS: [usize; 5] = [9, 4, 2, 4, 9];

/// Mean and population variance of a set of predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub mean: f64,
    pub variance: f64,
    pub member_predictions: Vec<f64>,
}

impl UncertaintyEstimate {
    /// Reduces in the given order: left-to-right sum for the mean, then the
    /// summed squared deviations divided by `n`.
    pub fn from_predictions(member_predictions: Vec<f64>) -> Result<Self> {
        if member_predictions.is_empty() {
            return Err(Error::InsufficientData(
                "no predictions to aggregate".into(),
            ));
        }
        let n = member_predictions.len() as f64;
        // Shifted by the first prediction so identical predictions give exactly zero.
        let shift = member_predictions[0];
        let offset = member_predictions.iter().map(|p| p - shift).sum::<f64>() / n;
        let mean = shift + offset;
        let variance = member_predictions
            .iter()
            .map(|p| (p - shift - offset) * (p - shift - offset))
            .sum::<f64>()
            / n;
        Ok(Self {
            mean,
            variance,
            member_predictions,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McdConfig {
    pub n_samples: usize,
    /// Overrides the model's own dropout rate when set.
    pub dropout_rate: Option<f64>,
}

impl McdConfig {
    pub fn new(n_samples: usize) -> Self {
        Self {
            n_samples,
            dropout_rate: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::Config("MC-Dropout needs at least one sample".into()));
        }
        if let Some(rate) = self.dropout_rate {
            check_dropout_rate(rate)?;
        }
        Ok(())
    }
}

/// MC-Dropout estimate from `S` passes with independent masks.
pub fn mcd_estimate(
    model: &Regressor,
    input: &[f64],
    cfg: &McdConfig,
    rng: &mut dyn RngCore,
) -> Result<UncertaintyEstimate> {
    cfg.validate()?;
    model.check_input(input)?;
    let rate = cfg.dropout_rate.unwrap_or(model.dropout_rate());
    let predictions = (0..cfg.n_samples)
        .map(|_| model.predict_with_dropout(input, rate, rng))
        .collect::<Result<Vec<_>>>()?;
    UncertaintyEstimate::from_predictions(predictions)
}

/// Members with identical shapes and pairwise distinct seeds, stored sorted
/// by seed so that every reduction runs in one canonical order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    members: Vec<Regressor>,
}

impl Ensemble {
    pub fn new(mut members: Vec<Regressor>) -> Result<Self> {
        if members.len() < 2 {
            return Err(Error::Config(alloc::format!(
                "an ensemble needs at least 2 members, got {}",
                members.len()
            )));
        }
        let dims = members[0].layer_dims().to_vec();
        if members.iter().any(|m| m.layer_dims() != dims.as_slice()) {
            return Err(Error::Shape(
                "ensemble members must share layer dims".into(),
            ));
        }
        members.sort_by_key(Regressor::seed);
        if members.windows(2).any(|w| w[0].seed() == w[1].seed()) {
            return Err(Error::Config(
                "ensemble member seeds must be distinct".into(),
            ));
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[Regressor] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn parameter_count(&self) -> usize {
        self.members.iter().map(Regressor::parameter_count).sum()
    }
}

/// Deep-ensemble estimate: μ is the mixture mean, σ² the across-member
/// variance.
pub fn de_estimate(ensemble: &Ensemble, input: &[f64]) -> Result<UncertaintyEstimate> {
    let predictions = ensemble
        .members
        .iter()
        .map(|m| m.predict(input))
        .collect::<Result<Vec<_>>>()?;
    UncertaintyEstimate::from_predictions(predictions)
}

/// Mean squared difference between an input and its reconstruction.
pub fn reconstruction_mse(input: &[f64], reconstruction: &[f64]) -> Result<f64> {
    if input.len() != reconstruction.len() || input.is_empty() {
        return Err(Error::Shape(alloc::format!(
            "input has {} values, reconstruction {}",
            input.len(),
            reconstruction.len()
        )));
    }
    let sq: f64 = input
        .iter()
        .zip(reconstruction)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sq / input.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderScorer {
    autoencoder: Regressor,
}

impl AutoencoderScorer {
    pub fn new(autoencoder: Regressor) -> Result<Self> {
        if autoencoder.input_dim() != autoencoder.output_dim() {
            return Err(Error::Shape(alloc::format!(
                "autoencoder maps {} to {} dims",
                autoencoder.input_dim(),
                autoencoder.output_dim()
            )));
        }
        Ok(Self { autoencoder })
    }

    pub fn autoencoder(&self) -> &Regressor {
        &self.autoencoder
    }
}

/// Reconstruction-loss score of `input`.
pub fn ae_score(scorer: &AutoencoderScorer, input: &[f64]) -> Result<f64> {
    let reconstruction = scorer.autoencoder.forward_vec(input, None)?;
    reconstruction_mse(input, &reconstruction)
}

/// A per-frame uncertainty score source.
pub trait Scorer {
    fn score(&self, observation: &[f64], rng: &mut dyn RngCore) -> Result<f64>;
    fn id(&self) -> String;
    /// Network evaluations per frame.
    fn forward_passes(&self) -> usize;
    /// Weights and biases held in memory.
    fn parameter_count(&self) -> usize;
}

/// A dropout model paired with its sampling configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McDropout {
    pub model: Regressor,
    pub cfg: McdConfig,
}

impl McDropout {
    pub fn new(model: Regressor, cfg: McdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { model, cfg })
    }

    pub fn rate(&self) -> f64 {
        self.cfg.dropout_rate.unwrap_or(self.model.dropout_rate())
    }
}

impl Scorer for McDropout {
    fn score(&self, observation: &[f64], rng: &mut dyn RngCore) -> Result<f64> {
        Ok(mcd_estimate(&self.model, observation, &self.cfg, rng)?.variance)
    }

    fn id(&self) -> String {
        alloc::format!("mcd-p{}-s{}", self.rate(), self.cfg.n_samples)
    }

    fn forward_passes(&self) -> usize {
        self.cfg.n_samples
    }

    fn parameter_count(&self) -> usize {
        self.model.parameter_count()
    }
}

impl Scorer for Ensemble {
    fn score(&self, observation: &[f64], _rng: &mut dyn RngCore) -> Result<f64> {
        Ok(de_estimate(self, observation)?.variance)
    }

    fn id(&self) -> String {
        alloc::format!("de-{}", self.len())
    }

    fn forward_passes(&self) -> usize {
        self.len()
    }

    fn parameter_count(&self) -> usize {
        Ensemble::parameter_count(self)
    }
}

impl Scorer for AutoencoderScorer {
    fn score(&self, observation: &[f64], _rng: &mut dyn RngCore) -> Result<f64> {
        ae_score(self, observation)
    }

    fn id(&self) -> String {
        "autoencoder".into()
    }

    fn forward_passes(&self) -> usize {
        1
    }

    fn parameter_count(&self) -> usize {
        self.autoencoder.parameter_count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{init_regressor, Activation, Layer};
    use alloc::vec;

    fn single_unit(rate: f64) -> Regressor {
        let hidden = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![1.0],
            bias: vec![0.0],
        };
        let out = Layer {
            inputs: 1,
            outputs: 1,
            weights: vec![2.0],
            bias: vec![0.0],
        };
        Regressor::from_parts(
            vec![1, 1, 1],
            vec![hidden, out],
            Activation::Identity,
            rate,
            0,
        )
        .unwrap()
    }

    fn constant_model(value: f64, seed: u64) -> Regressor {
        let mut layers = vec![Layer::zeros(2, 3), Layer::zeros(3, 1)];
        layers[1].bias[0] = value;
        Regressor::from_parts(vec![2, 3, 1], layers, Activation::Relu, 0.0, seed).unwrap()
    }

    #[test]
    fn zero_rate_has_no_variance() {
        let m = init_regressor(&[9, 16, 1], 0.0, 1).unwrap();
        let x = [0.1; 9];
        let mut rng = crate::rng_from_seed(1);
        let e = mcd_estimate(&m, &x, &McdConfig::new(32), &mut rng).unwrap();
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.mean, m.predict(&x).unwrap());
    }

    #[test]
    fn single_sample_has_no_variance() {
        let m = init_regressor(&[9, 16, 1], 0.3, 1).unwrap();
        let mut rng = crate::rng_from_seed(1);
        let e = mcd_estimate(&m, &[0.2; 9], &McdConfig::new(1), &mut rng).unwrap();
        assert_eq!(e.variance, 0.0);
        assert_eq!(e.member_predictions.len(), 1);
    }

    #[test]
    fn zero_samples_rejected() {
        let m = init_regressor(&[9, 16, 1], 0.3, 1).unwrap();
        let mut rng = crate::rng_from_seed(1);
        assert!(matches!(
            mcd_estimate(&m, &[0.2; 9], &McdConfig::new(0), &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn single_unit_converges_to_bernoulli_moments() {
        // Passes are 0 or 4 with probability 1/2: mean 2, variance 4.
        let m = single_unit(0.5);
        let mut rng = crate::rng_from_seed(9);
        let e = mcd_estimate(&m, &[1.0], &McdConfig::new(100_000), &mut rng).unwrap();
        assert!((e.mean - 2.0).abs() < 0.05, "{}", e.mean);
        assert!((e.variance - 4.0).abs() < 0.05, "{}", e.variance);
    }

    #[test]
    fn rate_override() {
        // Kept with probability 0.75 and scaled by 4/3: passes are 0 or 8/3,
        // variance (8/3)² · 0.75 · 0.25 = 4/3.
        let m = single_unit(0.0);
        let mut rng = crate::rng_from_seed(9);
        let cfg = McdConfig {
            n_samples: 50_000,
            dropout_rate: Some(0.25),
        };
        let e = mcd_estimate(&m, &[1.0], &cfg, &mut rng).unwrap();
        assert!((e.variance - 4.0 / 3.0).abs() < 0.05, "{}", e.variance);
        let too_high = McdConfig {
            n_samples: 5,
            dropout_rate: Some(0.5),
        };
        assert_eq!(too_high.validate(), Err(Error::DisregardedRate(0.5)));
    }

    #[test]
    fn two_point_and_three_point_variance() {
        let e = UncertaintyEstimate::from_predictions(vec![1.0, 3.0]).unwrap();
        assert_eq!((e.mean, e.variance), (2.0, 1.0));
        let e = UncertaintyEstimate::from_predictions(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!((e.variance - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_of_constants() {
        let ens = Ensemble::new(vec![constant_model(3.0, 2), constant_model(1.0, 1)]).unwrap();
        let e = de_estimate(&ens, &[0.5, 0.5]).unwrap();
        assert_eq!((e.mean, e.variance), (2.0, 1.0));
        // Sorted by seed: seed 1 first.
        assert_eq!(e.member_predictions, vec![1.0, 3.0]);
    }

    #[test]
    fn identical_members_zero_variance() {
        let base = init_regressor(&[9, 8, 1], 0.0, 4).unwrap();
        let members: Vec<Regressor> = (0..5)
            .map(|s| {
                Regressor::from_parts(
                    base.layer_dims().to_vec(),
                    base.layers().to_vec(),
                    Activation::Relu,
                    0.0,
                    s,
                )
                .unwrap()
            })
            .collect();
        let ens = Ensemble::new(members).unwrap();
        assert_eq!(de_estimate(&ens, &[0.3; 9]).unwrap().variance, 0.0);
    }

    #[test]
    fn ensemble_validation() {
        let a = init_regressor(&[9, 8, 1], 0.0, 1).unwrap();
        let b = init_regressor(&[9, 4, 1], 0.0, 2).unwrap();
        assert!(matches!(
            Ensemble::new(vec![a.clone()]),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            Ensemble::new(vec![a.clone(), b]),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            Ensemble::new(vec![a.clone(), a]),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn reconstruction_examples() {
        assert_eq!(reconstruction_mse(&[1.0, 0.0], &[0.0, 0.0]).unwrap(), 0.5);
        assert_eq!(reconstruction_mse(&[0.3, -0.1], &[0.3, -0.1]).unwrap(), 0.0);
        assert!(reconstruction_mse(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn autoencoder_shape_checks() {
        let bad = init_regressor(&[9, 4, 1], 0.0, 1).unwrap();
        assert!(AutoencoderScorer::new(bad).is_err());
        let ae =
            AutoencoderScorer::new(init_regressor(&AUTOENCODER_DIMS, 0.0, 1).unwrap()).unwrap();
        assert!(ae_score(&ae, &[0.0; 9]).unwrap() >= 0.0);
        assert!(matches!(ae_score(&ae, &[0.0; 3]), Err(Error::Shape(_))));
    }
}
