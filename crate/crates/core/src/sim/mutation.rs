use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MAX_STEERING;
use crate::nnet::{init_regressor, train, Dataset, Provenance, Regressor, TrainingConfig};
use crate::{Error, Result};

/// Largest weight-fuzz standard deviation accepted.
pub const MAX_FUZZ: f64 = 2.0;
/// Largest label-noise standard deviation accepted, radians.
pub const MAX_LABEL_NOISE: f64 = 1.0;
/// Largest epoch budget accepted for under-training.
pub const MAX_UNDER_TRAINING_EPOCHS: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum MutationKind {
    /// Adds N(0, magnitude²) to every weight.
    WeightGaussianFuzz,
    /// Adds N(0, magnitude²) radians to `fraction` of the labels, then retrains.
    LabelNoiseRetrain { fraction: f64 },
    /// Retrains for `magnitude` epochs only.
    UnderTraining,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MutationOp {
    pub kind: MutationKind,
    pub magnitude: f64,
    pub seed: u64,
}

impl MutationOp {
    pub fn validate(&self) -> Result<()> {
        let m = self.magnitude;
        let ok = match self.kind {
            MutationKind::WeightGaussianFuzz => (0.0..=MAX_FUZZ).contains(&m),
            MutationKind::LabelNoiseRetrain { fraction } => {
                m > 0.0 && m <= MAX_LABEL_NOISE && fraction > 0.0 && fraction <= 1.0
            }
            MutationKind::UnderTraining => {
                (1.0..=MAX_UNDER_TRAINING_EPOCHS).contains(&m) && m.fract() == 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!(
                "magnitude {m} out of bounds for {:?}",
                self.kind
            )))
        }
    }
}

/// Weight fuzzing. Biases are left untouched; magnitude 0 is the identity.
pub fn fuzz_weights(model: &Regressor, magnitude: f64, seed: u64) -> Result<Regressor> {
    MutationOp {
        kind: MutationKind::WeightGaussianFuzz,
        magnitude,
        seed,
    }
    .validate()?;
    let mut out = model.clone();
    if magnitude == 0.0 {
        return Ok(out);
    }
    let mut rng = crate::rng_from_seed(seed);
    for layer in out.layers_mut() {
        for w in &mut layer.weights {
            let z: f64 = StandardNormal.sample(&mut rng);
            *w += magnitude * z;
        }
    }
    Ok(out)
}

/// Applies `op` to `model`. Retraining mutations start from a fresh
/// initialization with the model's own seed and train on `data` with `cfg`
/// (the epoch budget replaced for under-training).
pub fn mutate(
    model: &Regressor,
    op: &MutationOp,
    data: &Dataset,
    cfg: &TrainingConfig,
) -> Result<Regressor> {
    op.validate()?;
    match op.kind {
        MutationKind::WeightGaussianFuzz => fuzz_weights(model, op.magnitude, op.seed),
        MutationKind::LabelNoiseRetrain { fraction } => {
            let mut rng = crate::rng_from_seed(op.seed);
            let targets: Vec<f64> = data
                .targets()
                .iter()
                .map(|&t| {
                    if rng.random::<f64>() < fraction {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        (t + op.magnitude * z).clamp(-MAX_STEERING, MAX_STEERING)
                    } else {
                        t
                    }
                })
                .collect();
            let noisy = Dataset::new(data.inputs().to_vec(), targets, Provenance::MutatedLabels)?;
            let fresh = init_regressor(model.layer_dims(), model.dropout_rate(), model.seed())?;
            Ok(train(&fresh, &noisy, cfg)?.model)
        }
        MutationKind::UnderTraining => {
            let fresh = init_regressor(model.layer_dims(), model.dropout_rate(), model.seed())?;
            let short = TrainingConfig {
                epochs: op.magnitude as usize,
                ..cfg.clone()
            };
            Ok(train(&fresh, data, &short)?.model)
        }
    }
}
