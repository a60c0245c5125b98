//! Network training: half-sum-of-squares loss with exact backpropagation,
//! bias-corrected Adam, inverted dropout, and early stopping on a held-out
//! validation split. Training is single-threaded and fully determined by
//! the seed in [`TrainingConfig`].

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{FeatureStats, NetworkModel};

/// Hyperparameters of one `fit` call.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Dropout probability on hidden activations (inverted scaling); 0
    /// disables dropout.
    pub dropout: f64,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Fraction of the dataset held out for validation.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 5000,
            dropout: 0.1,
            patience: 100,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig("dropout probability must lie in [0, 1)".into()));
        }
        if self.patience == 0 {
            return Err(Error::InvalidConfig("patience must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidConfig("validation fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Parameter-shaped gradient container.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

impl Gradients {
    pub fn zeros_like(model: &NetworkModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| DMatrix::zeros(w.nrows(), w.ncols())).collect(),
            biases: model.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }
}

/// Half-sum-of-squares loss over a batch of raw `(input, target)` pairs in
/// standardized output space, with its exact parameter gradient (no
/// dropout). Inputs and targets are standardized with the model's stats.
pub fn loss_and_gradient(
    model: &NetworkModel,
    batch: &[(DVector<f64>, DVector<f64>)],
) -> (f64, Gradients) {
    assert!(!batch.is_empty(), "loss of an empty batch");
    let m0 = model.input_width();
    let k = model.output_width();
    let inputs = DMatrix::from_fn(m0, batch.len(), |i, b| {
        (batch[b].0[i] - model.input_stats.mean[i]) / model.input_stats.std[i]
    });
    let targets = DMatrix::from_fn(k, batch.len(), |i, b| {
        (batch[b].1[i] - model.output_stats.mean[i]) / model.output_stats.std[i]
    });
    batch_loss_and_gradient(model, &inputs, &targets, None)
}

/// Core batched loss/gradient on standardized samples-as-columns matrices.
/// `masks`, when present, holds one inverted-dropout mask per hidden layer.
fn batch_loss_and_gradient(
    model: &NetworkModel,
    std_inputs: &DMatrix<f64>,
    std_targets: &DMatrix<f64>,
    masks: Option<&[DMatrix<f64>]>,
) -> (f64, Gradients) {
    let pass = model.forward_batch(std_inputs, masks);
    let n_layers = model.n_layers();
    let output = pass.activations.last().unwrap();
    let mut delta = output - std_targets;
    let loss = 0.5 * delta.norm_squared();

    let mut grads = Gradients {
        weights: Vec::with_capacity(n_layers),
        biases: Vec::with_capacity(n_layers),
    };
    for l in (0..n_layers).rev() {
        grads.weights.push(&delta * pass.activations[l].transpose());
        grads.biases.push(DVector::from_fn(delta.nrows(), |i, _| delta.row(i).sum()));
        if l > 0 {
            let mut back = model.weights[l].tr_mul(&delta);
            // Chain through the hidden activation (and its dropout mask).
            let z = &pass.pre_activations[l - 1];
            for j in 0..back.ncols() {
                for i in 0..back.nrows() {
                    back[(i, j)] *= model.activation.derivative(z[(i, j)]);
                }
            }
            if let Some(masks) = masks {
                back.component_mul_assign(&masks[l - 1]);
            }
            delta = back;
        }
    }
    grads.weights.reverse();
    grads.biases.reverse();
    (loss, grads)
}

/// Clean (no dropout) half-sum-of-squares loss in standardized space.
fn batch_loss(model: &NetworkModel, std_inputs: &DMatrix<f64>, std_targets: &DMatrix<f64>) -> f64 {
    let pass = model.forward_batch(std_inputs, None);
    0.5 * (pass.activations.last().unwrap() - std_targets).norm_squared()
}

/// Bias-corrected Adam optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Gradients,
    v: Gradients,
}

impl AdamState {
    /// Zero moments with the conventional `(beta1, beta2, epsilon)` of
    /// `(0.9, 0.999, 1e-8)`.
    pub fn new(model: &NetworkModel, alpha: f64) -> Self {
        AdamState {
            step: 0,
            alpha,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
        }
    }

    /// One update: `m <- b1 m + (1-b1) g`, `v <- b2 v + (1-b2) g^2`, then
    /// `theta <- theta - alpha * mhat / (sqrt(vhat) + eps)` with the
    /// standard bias corrections.
    pub fn apply(&mut self, model: &mut NetworkModel, grads: &Gradients) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for l in 0..model.weights.len() {
            update_slice(
                model.weights[l].as_mut_slice(),
                grads.weights[l].as_slice(),
                self.m.weights[l].as_mut_slice(),
                self.v.weights[l].as_mut_slice(),
                self.alpha,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
            update_slice(
                model.biases[l].as_mut_slice(),
                grads.biases[l].as_slice(),
                self.m.biases[l].as_mut_slice(),
                self.v.biases[l].as_mut_slice(),
                self.alpha,
                self.beta1,
                self.beta2,
                self.epsilon,
                bc1,
                bc2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn update_slice(
    theta: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    alpha: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..theta.len() {
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        theta[i] -= alpha * m_hat / (v_hat.sqrt() + epsilon);
    }
}

/// One row of the per-epoch training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of the minibatch losses of the epoch (dropout active).
    pub train_loss: f64,
    /// Clean validation loss after the epoch.
    pub val_loss: f64,
}

/// Per-epoch losses plus summary information about the finished fit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    /// Dataset rows held out for validation.
    pub validation_indices: Vec<usize>,
    /// Epoch whose parameters were returned (0 when no epoch ran).
    pub best_epoch: usize,
    /// Half-sum-of-squares of the returned model over the whole dataset in
    /// raw (de-standardized) output space.
    pub final_raw_loss: f64,
}

impl TrainingLog {
    /// Writes the per-epoch log as `epoch,train_loss,val_loss` CSV rows.
    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "epoch,train_loss,val_loss")?;
        for r in &self.records {
            writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss)?;
        }
        Ok(())
    }
}

/// Trains a network on rows-as-samples `inputs` against `targets`.
///
/// The dataset is split into training and validation rows with the seeded
/// generator; standardization statistics come from the training split only.
/// Minibatch Adam runs with inverted dropout on hidden activations; early
/// stopping restores the parameters of the best validation epoch. With
/// `max_epochs == 0` the all-zero (output-mean) model is returned.
pub fn fit(
    inputs: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    widths: &[usize],
    cfg: &TrainingConfig,
) -> Result<(NetworkModel, TrainingLog)> {
    cfg.validate()?;
    let n = inputs.nrows();
    if targets.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} input rows vs {} target rows",
            n,
            targets.nrows()
        )));
    }
    if n < 10 {
        return Err(Error::InvalidConfig(format!("need at least 10 samples, got {n}")));
    }
    if widths.first() != Some(&inputs.ncols()) || widths.last() != Some(&targets.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "width chain {:?} does not match {} input / {} target features",
            widths,
            inputs.ncols(),
            targets.ncols()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
    let validation_indices: Vec<usize> = order[..n_val].to_vec();
    let train_indices: Vec<usize> = order[n_val..].to_vec();

    // Samples-as-columns matrices; statistics from the training split only.
    let gather = |rows: &[usize], data: &DMatrix<f64>| {
        DMatrix::from_fn(data.ncols(), rows.len(), |i, b| data[(rows[b], i)])
    };
    let train_in_raw = gather(&train_indices, inputs);
    let train_out_raw = gather(&train_indices, targets);
    let input_stats = FeatureStats::from_columns(&train_in_raw);
    let output_stats = FeatureStats::from_columns(&train_out_raw);

    let mut model = if cfg.max_epochs == 0 {
        NetworkModel::zeros(widths)?
    } else {
        NetworkModel::init(widths, cfg.seed)?
    };
    model.input_stats = input_stats;
    model.output_stats = output_stats;

    let train_in = model.input_stats.standardize_columns(&train_in_raw);
    let train_out = model.output_stats.standardize_columns(&train_out_raw);
    let val_in = model.input_stats.standardize_columns(&gather(&validation_indices, inputs));
    let val_out = model.output_stats.standardize_columns(&gather(&validation_indices, targets));

    let mut adam = AdamState::new(&model, cfg.learning_rate);
    let mut records = Vec::new();
    type Params = (Vec<DMatrix<f64>>, Vec<DVector<f64>>);
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Option<Params> = None;
    let mut stale_epochs = 0usize;
    let n_train = train_indices.len();
    let mut positions: Vec<usize> = (0..n_train).collect();
    let hidden_widths = &widths[1..widths.len() - 1];

    for epoch in 1..=cfg.max_epochs {
        positions.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for chunk in positions.chunks(cfg.batch_size) {
            let batch_in =
                DMatrix::from_fn(train_in.nrows(), chunk.len(), |i, b| train_in[(i, chunk[b])]);
            let batch_out =
                DMatrix::from_fn(train_out.nrows(), chunk.len(), |i, b| train_out[(i, chunk[b])]);
            let masks = if cfg.dropout > 0.0 {
                Some(sample_masks(hidden_widths, chunk.len(), cfg.dropout, &mut rng))
            } else {
                None
            };
            let (loss, grads) =
                batch_loss_and_gradient(&model, &batch_in, &batch_out, masks.as_deref());
            train_loss += loss;
            adam.apply(&mut model, &grads);
        }
        let val_loss = batch_loss(&model, &val_in, &val_out);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch });
        }
        records.push(EpochRecord { epoch, train_loss, val_loss });
        if val_loss < best_val {
            best_val = val_loss;
            best_epoch = epoch;
            best_params = Some((model.weights.clone(), model.biases.clone()));
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.patience {
                break;
            }
        }
    }
    if let Some((weights, biases)) = best_params {
        model.weights = weights;
        model.biases = biases;
    }

    // Raw-space loss of the returned model over the whole dataset.
    let mut final_raw_loss = 0.0;
    for row in 0..n {
        let x = DVector::from_fn(inputs.ncols(), |i, _| inputs[(row, i)]);
        let t = DVector::from_fn(targets.ncols(), |i, _| targets[(row, i)]);
        final_raw_loss += 0.5 * (model.forward(&x) - t).norm_squared();
    }

    Ok((model, TrainingLog { records, validation_indices, best_epoch, final_raw_loss }))
}

/// One inverted-dropout mask per hidden layer: entries are `1/(1-p)` with
/// probability `1-p` and `0` otherwise, sampled in a fixed order.
fn sample_masks(
    hidden_widths: &[usize],
    batch: usize,
    p: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<DMatrix<f64>> {
    let keep_scale = 1.0 / (1.0 - p);
    hidden_widths
        .iter()
        .map(|&w| {
            let mut mask = DMatrix::zeros(w, batch);
            for j in 0..batch {
                for i in 0..w {
                    if rng.random::<f64>() >= p {
                        mask[(i, j)] = keep_scale;
                    }
                }
            }
            mask
        })
        .collect()
}
