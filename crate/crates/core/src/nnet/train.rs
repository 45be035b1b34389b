use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;

use rand::seq::SliceRandom;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Adam, Regressor};
use crate::sim::MAX_STEERING;
use crate::{Error, Result};

/// Hyperparameters of mini-batch Adam training on MSE with early stopping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub min_delta: f64,
    pub validation_fraction: f64,
    pub augmentation_fraction: f64,
    /// Standard deviation of the Gaussian jitter added to augmented inputs.
    pub jitter_std: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 128,
            learning_rate: 1e-4,
            patience: 10,
            min_delta: 5e-4,
            validation_fraction: 0.2,
            augmentation_fraction: 0.6,
            jitter_std: 0.01,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.patience == 0 {
            return Err(Error::Config(
                "epochs, batch size and patience must be positive".into(),
            ));
        }
        // Zero is allowed so that a plateau can be forced.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(alloc::format!(
                "learning rate {}",
                self.learning_rate
            )));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::Config("min_delta must be non-negative".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation fraction must be in (0,1)".into()));
        }
        if !(0.0..=1.0).contains(&self.augmentation_fraction) {
            return Err(Error::Config(
                "augmentation fraction must be in [0,1]".into(),
            ));
        }
        if !(self.jitter_std >= 0.0) {
            return Err(Error::Config("jitter must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Nominal,
    MutatedLabels,
}

/// Behavioral-cloning samples: observations and steering labels in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, targets: Vec<f64>, provenance: Provenance) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Shape(alloc::format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        if let Some(dim) = inputs.first().map(Vec::len) {
            if inputs.iter().any(|x| x.len() != dim) {
                return Err(Error::Shape("inputs have inconsistent dimensions".into()));
            }
        }
        if let Some(t) = targets.iter().find(|t| !(t.abs() <= MAX_STEERING)) {
            return Err(Error::Input(alloc::format!(
                "target {t} outside steering bounds"
            )));
        }
        Ok(Self {
            inputs,
            targets,
            provenance,
        })
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub validation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Regressor,
    pub history: Vec<EpochLoss>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingOutcome {
    pub fn best_validation_loss(&self) -> f64 {
        self.history[self.best_epoch - 1].validation
    }
}

/// Per-layer `(weights, bias)` gradients, shaped like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Gradient {
    fn zeros_like(model: &Regressor) -> Self {
        Self {
            layers: model
                .layers()
                .iter()
                .map(|l| (vec![0.0; l.weights.len()], vec![0.0; l.bias.len()]))
                .collect(),
        }
    }

    fn reset(&mut self) {
        for (w, b) in &mut self.layers {
            w.iter_mut().for_each(|g| *g = 0.0);
            b.iter_mut().for_each(|g| *g = 0.0);
        }
    }
}

// Activations and masks of one forward pass, reused across samples.
struct Tape {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    mask: Vec<Vec<f64>>,
    delta: Vec<f64>,
    upstream: Vec<f64>,
}

impl Tape {
    fn new(model: &Regressor) -> Self {
        let dims = model.layer_dims();
        Self {
            pre: dims[1..].iter().map(|&d| vec![0.0; d]).collect(),
            post: dims.iter().map(|&d| vec![0.0; d]).collect(),
            mask: dims[1..].iter().map(|&d| vec![1.0; d]).collect(),
            delta: Vec::new(),
            upstream: Vec::new(),
        }
    }
}

/// Forward with a recorded tape, then backprop `d(loss)/d(out) = scale · (out − target)`.
/// Returns the squared error summed over outputs.
fn accumulate(
    model: &Regressor,
    input: &[f64],
    target: &[f64],
    scale: f64,
    dropout: Option<(f64, &mut dyn RngCore)>,
    tape: &mut Tape,
    grad: &mut Gradient,
) -> f64 {
    let act = model.hidden_activation();
    let layers = model.layers();
    let last = layers.len() - 1;
    let (rate, mut rng) = match dropout {
        Some((r, rng)) if r > 0.0 => (r, Some(rng)),
        _ => (0.0, None),
    };
    let keep_scale = 1.0 / (1.0 - rate);

    tape.post[0].clear();
    tape.post[0].extend_from_slice(input);
    for (i, layer) in layers.iter().enumerate() {
        let (head, tail) = tape.post.split_at_mut(i + 1);
        let a_in = &head[i];
        let z = &mut tape.pre[i];
        layer.affine(a_in, z);
        let a_out = &mut tail[0];
        a_out.clear();
        let mask = &mut tape.mask[i];
        for (j, &zj) in z.iter().enumerate() {
            if i < last {
                let h = act.apply(zj);
                let m = match rng.as_deref_mut() {
                    Some(rng) => {
                        if rng.random::<f64>() < rate {
                            0.0
                        } else {
                            keep_scale
                        }
                    }
                    None => 1.0,
                };
                mask[j] = m;
                a_out.push(h * m);
            } else {
                a_out.push(zj);
            }
        }
    }

    let out = &tape.post[last + 1];
    let mut sq = 0.0;
    tape.delta.clear();
    for (y, t) in out.iter().zip(target) {
        let e = y - t;
        sq += e * e;
        tape.delta.push(scale * e);
    }

    for i in (0..=last).rev() {
        let layer = &layers[i];
        let a_in = &tape.post[i];
        let (gw, gb) = &mut grad.layers[i];
        for (o, &d) in tape.delta.iter().enumerate() {
            gb[o] += d;
            let row = &mut gw[o * layer.inputs..(o + 1) * layer.inputs];
            for (g, &a) in row.iter_mut().zip(a_in) {
                *g += d * a;
            }
        }
        if i == 0 {
            break;
        }
        tape.upstream.clear();
        tape.upstream.resize(layer.inputs, 0.0);
        for (o, &d) in tape.delta.iter().enumerate() {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            for (u, &w) in tape.upstream.iter_mut().zip(row) {
                *u += w * d;
            }
        }
        let z_prev = &tape.pre[i - 1];
        let m_prev = &tape.mask[i - 1];
        tape.delta.clear();
        for j in 0..layer.inputs {
            tape.delta
                .push(tape.upstream[j] * m_prev[j] * act.derivative(z_prev[j]));
        }
    }
    sq
}

/// Mean squared error (averaged over samples and outputs) and its exact
/// gradient, with dropout disabled.
pub fn mse_gradient(
    model: &Regressor,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
) -> Result<(f64, Gradient)> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(Error::Shape(
            "inputs and targets must be non-empty and equal length".into(),
        ));
    }
    let n_out = model.output_dim();
    for (x, t) in inputs.iter().zip(targets) {
        model.check_input(x)?;
        if t.len() != n_out {
            return Err(Error::Shape(alloc::format!(
                "target has {} values, model outputs {n_out}",
                t.len()
            )));
        }
    }
    let denom = (inputs.len() * n_out) as f64;
    let mut tape = Tape::new(model);
    let mut grad = Gradient::zeros_like(model);
    let mut total = 0.0;
    for (x, t) in inputs.iter().zip(targets) {
        total += accumulate(model, x, t, 2.0 / denom, None, &mut tape, &mut grad);
    }
    Ok((total / denom, grad))
}

fn evaluate_mse(
    model: &Regressor,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    idx: &[usize],
) -> f64 {
    let mut total = 0.0;
    for &i in idx {
        let out = model
            .forward_vec(&inputs[i], None)
            .expect("shapes validated before training");
        total += out
            .iter()
            .zip(&targets[i])
            .map(|(y, t)| (y - t) * (y - t))
            .sum::<f64>();
    }
    total / (idx.len() * model.output_dim()) as f64
}

/// Trains the steering regressor. Augmented samples are mirrored (features
/// and target negated) and jittered.
pub fn train(model: &Regressor, data: &Dataset, cfg: &TrainingConfig) -> Result<TrainingOutcome> {
    if model.output_dim() != 1 {
        return Err(Error::Shape(
            "steering regressor must have one output".into(),
        ));
    }
    let targets: Vec<Vec<f64>> = data.targets().iter().map(|&t| vec![t]).collect();
    fit(model, data.inputs(), &targets, cfg)
}

/// Trains an autoencoder to reconstruct `observations`.
pub fn train_autoencoder(
    model: &Regressor,
    observations: &[Vec<f64>],
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    if model.output_dim() != model.input_dim() {
        return Err(Error::Shape(
            "autoencoder output must match its input".into(),
        ));
    }
    fit(model, observations, observations, cfg)
}

fn fit(
    model: &Regressor,
    inputs: &[Vec<f64>],
    targets: &[Vec<f64>],
    cfg: &TrainingConfig,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::InsufficientData("empty dataset".into()));
    }
    for (x, t) in inputs.iter().zip(targets) {
        model.check_input(x)?;
        if t.len() != model.output_dim() {
            return Err(Error::Shape("target dimension mismatch".into()));
        }
    }
    let mut rng = crate::rng_from_seed(cfg.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((inputs.len() as f64) * cfg.validation_fraction).round() as usize;
    if n_val == 0 || n_val >= inputs.len() {
        return Err(Error::InsufficientData(alloc::format!(
            "validation split of {n_val} from {} samples",
            inputs.len()
        )));
    }
    let (val_idx, train_idx) = order.split_at(n_val);
    let val_idx = val_idx.to_vec();
    let mut train_idx = train_idx.to_vec();

    let mut current = model.clone();
    let mut adam = Adam::new(&current, cfg.learning_rate);
    let mut tape = Tape::new(&current);
    let mut grad = Gradient::zeros_like(&current);
    let n_out = current.output_dim();
    let rate = current.dropout_rate();

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = current.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut patience_ref = f64::INFINITY;
    let mut waited = 0;
    let mut stopped_early = false;
    let mut x_aug = Vec::new();
    let mut t_aug = Vec::new();

    for epoch in 1..=cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut train_sq = 0.0;
        for batch in train_idx.chunks(cfg.batch_size) {
            grad.reset();
            let scale = 2.0 / (batch.len() * n_out) as f64;
            for &i in batch {
                let (x, t) = if rng.random::<f64>() < cfg.augmentation_fraction {
                    x_aug.clear();
                    for &v in &inputs[i] {
                        let jitter: f64 = StandardNormal.sample(&mut rng);
                        x_aug.push(-v + cfg.jitter_std * jitter);
                    }
                    t_aug.clear();
                    t_aug.extend(targets[i].iter().map(|t| -t));
                    (&x_aug[..], &t_aug[..])
                } else {
                    (&inputs[i][..], &targets[i][..])
                };
                let dropout: Option<(f64, &mut dyn RngCore)> = Some((rate, &mut rng));
                train_sq += accumulate(&current, x, t, scale, dropout, &mut tape, &mut grad);
            }
            adam.update(&mut current, &grad);
        }
        let train_loss = train_sq / (train_idx.len() * n_out) as f64;
        let val_loss = evaluate_mse(&current, inputs, targets, &val_idx);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            validation: val_loss,
        });
        if val_loss < best_loss {
            best_loss = val_loss;
            best_epoch = epoch;
            best = current.clone();
        }
        if val_loss < patience_ref - cfg.min_delta {
            patience_ref = val_loss;
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }
    log::debug!(
        "trained {} for {} epochs, best validation MSE {best_loss:.3e} at epoch {best_epoch}",
        model.id(),
        history.len()
    );
    Ok(TrainingOutcome {
        model: best,
        history,
        best_epoch,
        stopped_early,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::init_regressor;

    fn random_inputs(n: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = crate::rng_from_seed(seed);
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..5u64 {
            let model = init_regressor(&[2, 3, 1], 0.0, seed).unwrap();
            let x = random_inputs(1, 2, 100 + seed);
            let t = vec![vec![0.25]];
            let (_, grad) = mse_gradient(&model, &x, &t).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for li in 0..model.layers().len() {
                for (which, len) in [
                    (0, model.layers()[li].weights.len()),
                    (1, model.layers()[li].bias.len()),
                ] {
                    for k in 0..len {
                        let bump = |delta: f64| {
                            let mut m = model.clone();
                            let layer = &mut m.layers_mut()[li];
                            if which == 0 {
                                layer.weights[k] += delta;
                            } else {
                                layer.bias[k] += delta;
                            }
                            mse_gradient(&m, &x, &t).unwrap().0
                        };
                        let fd = (bump(h) - bump(-h)) / (2.0 * h);
                        let an = if which == 0 {
                            grad.layers[li].0[k]
                        } else {
                            grad.layers[li].1[k]
                        };
                        let rel = (an - fd).abs() / an.abs().max(fd.abs()).max(1e-8);
                        worst = worst.max(rel);
                    }
                }
            }
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn learns_constant_target() {
        let inputs = random_inputs(600, 3, 1);
        let data = Dataset::new(inputs.clone(), vec![0.3; 600], Provenance::Nominal).unwrap();
        let cfg = TrainingConfig {
            epochs: 200,
            batch_size: 32,
            learning_rate: 1e-2,
            augmentation_fraction: 0.0,
            patience: 200,
            seed: 3,
            ..TrainingConfig::default()
        };
        let model = init_regressor(&[3, 8, 1], 0.0, 1).unwrap();
        let out = train(&model, &data, &cfg).unwrap();
        for x in inputs.iter().take(50) {
            let y = out.model.predict(x).unwrap();
            assert!((y - 0.3).abs() < 0.01, "{y}");
        }
    }

    #[test]
    fn zero_learning_rate_stops_after_patience() {
        let inputs = random_inputs(200, 3, 2);
        let targets = inputs.iter().map(|x| 0.1 * x[0]).collect();
        let data = Dataset::new(inputs, targets, Provenance::Nominal).unwrap();
        let cfg = TrainingConfig {
            learning_rate: 0.0,
            ..TrainingConfig::default()
        };
        let model = init_regressor(&[3, 4, 1], 0.1, 1).unwrap();
        let out = train(&model, &data, &cfg).unwrap();
        assert_eq!(out.history.len(), cfg.patience + 1);
        assert!(out.stopped_early);
        assert_eq!(out.model, model);
    }

    #[test]
    fn training_is_deterministic_and_keeps_best() {
        let inputs = random_inputs(400, 4, 9);
        let targets = inputs.iter().map(|x| 0.2 * x[0] - 0.1 * x[2]).collect();
        let data = Dataset::new(inputs, targets, Provenance::Nominal).unwrap();
        let cfg = TrainingConfig {
            epochs: 30,
            learning_rate: 3e-3,
            batch_size: 16,
            seed: 5,
            ..TrainingConfig::default()
        };
        let model = init_regressor(&[4, 8, 1], 0.1, 4).unwrap();
        let a = train(&model, &data, &cfg).unwrap();
        let b = train(&model, &data, &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
        let min = a
            .history
            .iter()
            .map(|e| e.validation)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(a.best_validation_loss(), min);
    }

    #[test]
    fn diverging_training_reports_epoch() {
        let inputs = random_inputs(100, 2, 4);
        let targets = vec![0.0; 100];
        let data = Dataset::new(inputs, targets, Provenance::Nominal).unwrap();
        let mut model = init_regressor(&[2, 3, 1], 0.0, 1).unwrap();
        model.layers_mut()[1].bias[0] = f64::NAN;
        let err = train(&model, &data, &TrainingConfig::default()).unwrap_err();
        assert_eq!(err, Error::TrainingDiverged { epoch: 1 });
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(vec![vec![0.0]], vec![], Provenance::Nominal).is_err());
        assert!(Dataset::new(vec![vec![0.0]], vec![0.9], Provenance::Nominal).is_err());
        let empty = Dataset::new(vec![], vec![], Provenance::Nominal).unwrap();
        let model = init_regressor(&[1, 2, 1], 0.0, 0).unwrap();
        assert!(matches!(
            train(&model, &empty, &TrainingConfig::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn autoencoder_memorizes_single_input() {
        let x = vec![0.4, -0.2, 0.1, 0.3];
        let obs = vec![x.clone(); 256];
        let cfg = TrainingConfig {
            epochs: 300,
            batch_size: 32,
            learning_rate: 1e-2,
            augmentation_fraction: 0.0,
            patience: 300,
            ..TrainingConfig::default()
        };
        let ae = init_regressor(&[4, 3, 2, 3, 4], 0.0, 2).unwrap();
        let out = train_autoencoder(&ae, &obs, &cfg).unwrap();
        let rec = out.model.forward_vec(&x, None).unwrap();
        let mse: f64 = rec
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / 4.0;
        assert!(mse < 1e-3, "{mse}");
    }
}
