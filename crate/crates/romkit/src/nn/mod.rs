//! From-scratch fully-connected regression network.
//!
//! The model maps a raw feature vector through input standardization, a
//! chain of affine layers with ReLU on the hidden ones and identity on the
//! output, and output de-standardization. Training (minibatch Adam with
//! dropout and early stopping) lives in [`train`]; everything is plain
//! dense linear algebra with an explicitly seeded generator so runs are
//! reproducible bit for bit.

mod train;

pub use train::{
    fit, loss_and_gradient, AdamState, EpochRecord, Gradients, TrainingConfig, TrainingLog,
};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Hidden-layer widths used by the benchmark networks.
pub const DEFAULT_HIDDEN_WIDTHS: [usize; 7] = [80, 120, 240, 480, 240, 120, 80];

/// Standard deviations below this floor are clamped so constant features do
/// not produce divisions by zero.
pub const STDDEV_FLOOR: f64 = 1e-12;

/// Hidden-layer activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    ReLU,
    /// Pass-through; turns the network into a purely affine map (used to
    /// validate the linear-algebra core).
    Identity,
}

impl Activation {
    fn apply_in_place(&self, z: &mut DMatrix<f64>) {
        if let Activation::ReLU = self {
            z.apply(|v| *v = v.max(0.0));
        }
    }

    /// Derivative evaluated at the pre-activation (ReLU picks 0 at the kink).
    fn derivative(&self, z: f64) -> f64 {
        match self {
            Activation::ReLU => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// Per-feature standardization statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: DVector<f64>,
    pub std: DVector<f64>,
}

impl FeatureStats {
    /// Identity transform of the given width.
    pub fn unit(n: usize) -> Self {
        FeatureStats { mean: DVector::zeros(n), std: DVector::from_element(n, 1.0) }
    }

    /// Population statistics of the columns of `samples` (features are
    /// rows), with the standard deviation floored at [`STDDEV_FLOOR`].
    pub fn from_columns(samples: &DMatrix<f64>) -> Self {
        let n = samples.nrows();
        let count = samples.ncols().max(1) as f64;
        let mut mean = DVector::zeros(n);
        for col in samples.column_iter() {
            mean += col;
        }
        mean /= count;
        let mut var: DVector<f64> = DVector::zeros(n);
        for col in samples.column_iter() {
            for i in 0..n {
                let d = col[i] - mean[i];
                var[i] += d * d;
            }
        }
        let std = DVector::from_fn(n, |i, _| (var[i] / count).sqrt().max(STDDEV_FLOOR));
        FeatureStats { mean, std }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.len() == 0
    }

    pub fn standardize(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| (x[i] - self.mean[i]) / self.std[i])
    }

    pub fn destandardize(&self, z: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.len(), |i, _| z[i] * self.std[i] + self.mean[i])
    }

    /// Standardizes every column of a samples-as-columns matrix.
    pub fn standardize_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.mean[i]) / self.std[i])
    }
}

/// Fully-connected network with standardization at both ends.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    /// Width chain `m_0 ... m_{M+1}` (input, hidden layers, output).
    pub widths: Vec<usize>,
    /// `weights[l]` has shape `widths[l+1] x widths[l]`.
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
    pub activation: Activation,
    pub input_stats: FeatureStats,
    pub output_stats: FeatureStats,
}

impl NetworkModel {
    /// He-style initialization: zero-mean normal weights scaled by
    /// `sqrt(2 / fan_in)`, zero biases, identity standardization stats.
    /// Deterministic for a given seed.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(widths.len() - 1);
        let mut biases = Vec::with_capacity(widths.len() - 1);
        for l in 0..widths.len() - 1 {
            let (rows, cols) = (widths[l + 1], widths[l]);
            let scale = (2.0 / cols as f64).sqrt();
            let mut w = DMatrix::zeros(rows, cols);
            for j in 0..cols {
                for i in 0..rows {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    w[(i, j)] = scale * g;
                }
            }
            weights.push(w);
            biases.push(DVector::zeros(rows));
        }
        Ok(NetworkModel {
            widths: widths.to_vec(),
            weights,
            biases,
            activation: Activation::ReLU,
            input_stats: FeatureStats::unit(widths[0]),
            output_stats: FeatureStats::unit(*widths.last().unwrap()),
        })
    }

    /// All-zero parameters: the forward pass returns the output-feature
    /// means for every input (the best constant predictor).
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        let weights = (0..widths.len() - 1)
            .map(|l| DMatrix::zeros(widths[l + 1], widths[l]))
            .collect();
        let biases = (0..widths.len() - 1).map(|l| DVector::zeros(widths[l + 1])).collect();
        Ok(NetworkModel {
            widths: widths.to_vec(),
            weights,
            biases,
            activation: Activation::ReLU,
            input_stats: FeatureStats::unit(widths[0]),
            output_stats: FeatureStats::unit(*widths.last().unwrap()),
        })
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Number of affine layers.
    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    /// Total trainable parameter count: `sum_i m_i (m_{i-1} + 1)`.
    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// De-standardized network output for a raw input vector.
    pub fn forward(&self, raw_input: &DVector<f64>) -> DVector<f64> {
        assert_eq!(raw_input.len(), self.input_width(), "input width mismatch");
        let mut a = self.input_stats.standardize(raw_input);
        for l in 0..self.n_layers() {
            let mut z = &self.weights[l] * a + &self.biases[l];
            if l + 1 < self.n_layers() {
                if let Activation::ReLU = self.activation {
                    z.apply(|v| *v = v.max(0.0));
                }
            }
            a = z;
        }
        self.output_stats.destandardize(&a)
    }

    /// Forward pass on standardized samples-as-columns input, recording the
    /// pre-activations of every layer. Optional dropout masks (one per
    /// hidden layer, same shape as that layer's activation) are applied to
    /// the hidden activations.
    pub(crate) fn forward_batch(
        &self,
        std_inputs: &DMatrix<f64>,
        masks: Option<&[DMatrix<f64>]>,
    ) -> BatchPass {
        let mut activations = vec![std_inputs.clone()];
        let mut pre_activations = Vec::with_capacity(self.n_layers());
        for l in 0..self.n_layers() {
            let mut z = &self.weights[l] * activations.last().unwrap();
            for mut col in z.column_iter_mut() {
                col += &self.biases[l];
            }
            pre_activations.push(z.clone());
            if l + 1 < self.n_layers() {
                self.activation.apply_in_place(&mut z);
                if let Some(masks) = masks {
                    z.component_mul_assign(&masks[l]);
                }
            }
            activations.push(z);
        }
        BatchPass { activations, pre_activations }
    }

    /// Exact Jacobian of the de-standardized output with respect to the raw
    /// input, both standardization scalings included.
    pub fn jacobian_wrt_input(&self, raw_input: &DVector<f64>) -> DMatrix<f64> {
        assert_eq!(raw_input.len(), self.input_width(), "input width mismatch");
        let mut a = self.input_stats.standardize(raw_input);
        // Running product J = W_l D_{l-1} ... W_1 S_in, built layer by layer.
        let mut jac = self.weights[0].clone();
        for j in 0..jac.ncols() {
            let s = self.input_stats.std[j];
            for i in 0..jac.nrows() {
                jac[(i, j)] /= s;
            }
        }
        for l in 0..self.n_layers() {
            let z = &self.weights[l] * &a + &self.biases[l];
            if l + 1 < self.n_layers() {
                // Mask rows where the activation is flat, then push through
                // the next weight matrix.
                let mut masked = jac;
                for i in 0..masked.nrows() {
                    let d = self.activation.derivative(z[i]);
                    if d != 1.0 {
                        for j in 0..masked.ncols() {
                            masked[(i, j)] *= d;
                        }
                    }
                }
                jac = &self.weights[l + 1] * masked;
                let mut next = z;
                self.activation.apply_in_place_vec(&mut next);
                a = next;
            }
        }
        for i in 0..jac.nrows() {
            let s = self.output_stats.std[i];
            for j in 0..jac.ncols() {
                jac[(i, j)] *= s;
            }
        }
        jac
    }

    /// Smallest hidden pre-activation magnitude at this input; inputs with a
    /// small value sit near a ReLU kink where one-sided derivatives differ
    /// (finite-difference checks should avoid them).
    pub fn distance_to_kink(&self, raw_input: &DVector<f64>) -> f64 {
        let mut a = self.input_stats.standardize(raw_input);
        let mut min_abs = f64::INFINITY;
        for l in 0..self.n_layers() {
            let mut z = &self.weights[l] * &a + &self.biases[l];
            if l + 1 < self.n_layers() {
                for v in z.iter() {
                    min_abs = min_abs.min(v.abs());
                }
                self.activation.apply_in_place_vec(&mut z);
            }
            a = z;
        }
        min_abs
    }
}

impl Activation {
    fn apply_in_place_vec(&self, z: &mut DVector<f64>) {
        if let Activation::ReLU = self {
            z.apply(|v| *v = v.max(0.0));
        }
    }
}

/// Intermediate state of a batched forward pass.
pub(crate) struct BatchPass {
    /// `activations[0]` is the standardized input; `activations[l]` for
    /// `l >= 1` the (masked) activation of layer `l`.
    pub activations: Vec<DMatrix<f64>>,
    pub pre_activations: Vec<DMatrix<f64>>,
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidConfig(
            "a network needs at least input and output widths".into(),
        ));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidConfig("layer widths must be positive".into()));
    }
    Ok(())
}

/// Width chain for a reduced-velocity surrogate: input `(tau, t, mu)` of
/// width `k_u + 1 + n_mu`, the given hidden widths, output `k_u`.
pub fn surrogate_widths(k_u: usize, n_mu: usize, hidden: &[usize]) -> Vec<usize> {
    let mut widths = Vec::with_capacity(hidden.len() + 2);
    widths.push(k_u + 1 + n_mu);
    widths.extend_from_slice(hidden);
    widths.push(k_u);
    widths
}
