//! Non-intrusive reduced-order model driven by a network surrogate.
//!
//! The surrogate regresses the reduced velocity `f_r(tau, t, mu)` from
//! projected training snapshots. The resulting [`RomNnSystem`] holds only
//! the trained network, the reduced basis, and the projected offline data
//! (mass, initial condition, parameter box) — structurally it cannot call
//! back into the full-order model, which is the point of the tier: after
//! training, integration cost is independent of the full dimension.

use nalgebra::{DMatrix, DVector};

use crate::dynsys::OdeSystem;
use crate::error::{Error, Result};
use crate::galerkin::{project_mass, RomSystem};
use crate::linalg::{Mass, SysMatrix};
use crate::nn::{fit, surrogate_widths, NetworkModel, TrainingConfig, TrainingLog};
use crate::pod::{ReducedBasis, SnapshotSet};

/// Supervised regression set mapping `(tau, t, mu)` rows to reduced
/// velocity rows, one row per snapshot column (same ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct RomNnTrainingSet {
    /// `(tau, t, mu)` rows of width `k_u + 1 + n_mu`.
    pub inputs: DMatrix<f64>,
    /// Reduced velocity rows of width `k_u`.
    pub targets: DMatrix<f64>,
    pub k_u: usize,
    pub n_mu: usize,
}

impl RomNnTrainingSet {
    pub fn n_rows(&self) -> usize {
        self.inputs.nrows()
    }
}

fn check_snapshots(snaps: &SnapshotSet, basis: &ReducedBasis) -> Result<usize> {
    if snaps.states.nrows() != basis.n() {
        return Err(Error::DimensionMismatch(format!(
            "snapshots have {} rows but the basis has {}",
            snaps.states.nrows(),
            basis.n()
        )));
    }
    if snaps.n_columns() == 0 {
        return Err(Error::InvalidConfig("empty snapshot set".into()));
    }
    Ok(snaps.params[0].len())
}

/// Builds the training set from a snapshot set: inputs are the projected
/// states with their time node and parameter, targets the projected stored
/// velocity columns. No new full-model evaluations are made.
pub fn build_training_data(
    snaps: &SnapshotSet,
    basis: &ReducedBasis,
) -> Result<RomNnTrainingSet> {
    let n_mu = check_snapshots(snaps, basis)?;
    let k_u = basis.k();
    let n_rows = snaps.n_columns();
    let mut inputs = DMatrix::zeros(n_rows, k_u + 1 + n_mu);
    let mut targets = DMatrix::zeros(n_rows, k_u);
    for r in 0..n_rows {
        let tau = basis.project(&snaps.states.column(r).clone_owned());
        let f_r = basis.basis.tr_mul(&snaps.velocities.column(r));
        for i in 0..k_u {
            inputs[(r, i)] = tau[i];
            targets[(r, i)] = f_r[i];
        }
        inputs[(r, k_u)] = snaps.column_time(r);
        for (i, &m) in snaps.column_param(r).iter().enumerate() {
            inputs[(r, k_u + 1 + i)] = m;
        }
    }
    Ok(RomNnTrainingSet { inputs, targets, k_u, n_mu })
}

/// Variant of [`build_training_data`] whose targets re-evaluate the reduced
/// velocity at the reconstructed projected state,
/// `Phi^T f(offset + Phi tau, t, mu)`. This differs from the stored-velocity
/// path by the basis-truncation error and costs one full-model velocity
/// evaluation per row.
pub fn build_training_data_reevaluated<S: OdeSystem + ?Sized>(
    snaps: &SnapshotSet,
    rom: &RomSystem<S>,
) -> Result<RomNnTrainingSet> {
    let basis = rom.basis();
    let n_mu = check_snapshots(snaps, basis)?;
    let k_u = basis.k();
    let n_rows = snaps.n_columns();
    let mut inputs = DMatrix::zeros(n_rows, k_u + 1 + n_mu);
    let mut targets = DMatrix::zeros(n_rows, k_u);
    for r in 0..n_rows {
        let tau = basis.project(&snaps.states.column(r).clone_owned());
        let t = snaps.column_time(r);
        let mu = snaps.column_param(r);
        let f_r = rom.velocity(&tau, t, mu);
        for i in 0..k_u {
            inputs[(r, i)] = tau[i];
            targets[(r, i)] = f_r[i];
        }
        inputs[(r, k_u)] = t;
        for (i, &m) in mu.iter().enumerate() {
            inputs[(r, k_u + 1 + i)] = m;
        }
    }
    Ok(RomNnTrainingSet { inputs, targets, k_u, n_mu })
}

/// Reduced system whose velocity is a trained network surrogate.
///
/// Holds no reference to the full-order model: the constructor reads the
/// mass matrix, initial state, and parameter box once, then the system is
/// self-contained.
#[derive(Debug, Clone)]
pub struct RomNnSystem {
    model: NetworkModel,
    basis: ReducedBasis,
    mass: Mass,
    initial: DVector<f64>,
    param_box: Vec<(f64, f64)>,
}

impl RomNnSystem {
    pub fn new<S: OdeSystem + ?Sized>(
        model: NetworkModel,
        basis: ReducedBasis,
        full_model: &S,
    ) -> Result<Self> {
        if basis.n() != full_model.dim() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows but the full system dimension is {}",
                basis.n(),
                full_model.dim()
            )));
        }
        let expect_in = basis.k() + 1 + full_model.param_dim();
        if model.input_width() != expect_in || model.output_width() != basis.k() {
            return Err(Error::DimensionMismatch(format!(
                "network is {} -> {} but the reduced system needs {} -> {}",
                model.input_width(),
                model.output_width(),
                expect_in,
                basis.k()
            )));
        }
        let mass = project_mass(full_model.mass(), &basis)?;
        let initial = basis.project(&full_model.initial_state());
        let param_box = full_model.param_box().to_vec();
        Ok(RomNnSystem { model, basis, mass, initial, param_box })
    }

    pub fn model(&self) -> &NetworkModel {
        &self.model
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.basis
    }

    /// Full-space state represented by reduced coordinates `tau`.
    pub fn lift(&self, tau: &DVector<f64>) -> DVector<f64> {
        self.basis.reconstruct(tau)
    }

    fn surrogate_input(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        let k = self.basis.k();
        let mut x = DVector::zeros(self.model.input_width());
        x.rows_mut(0, k).copy_from(tau);
        x[k] = t;
        for (i, &m) in mu.iter().enumerate() {
            x[k + 1 + i] = m;
        }
        x
    }
}

impl OdeSystem for RomNnSystem {
    fn dim(&self) -> usize {
        self.basis.k()
    }

    fn param_dim(&self) -> usize {
        self.param_box.len()
    }

    fn mass(&self) -> &Mass {
        &self.mass
    }

    fn initial_state(&self) -> DVector<f64> {
        self.initial.clone()
    }

    fn param_box(&self) -> &[(f64, f64)] {
        &self.param_box
    }

    /// Network forward pass on the concatenated `(tau, t, mu)`.
    fn velocity(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        self.model.forward(&self.surrogate_input(tau, t, mu))
    }

    /// Leading `k_u x k_u` block of the network's input Jacobian: the
    /// derivative with respect to `tau` only, as needed by the implicit
    /// stage solves.
    fn jacobian(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix {
        let full = self.model.jacobian_wrt_input(&self.surrogate_input(tau, t, mu));
        let k = self.basis.k();
        SysMatrix::Dense(full.columns(0, k).into_owned())
    }
}

/// Trains a surrogate on the given set and wraps it as an integrable
/// reduced system. `full_model` is consulted only for its offline data
/// (mass, initial state, parameter box).
pub fn train_romnn<S: OdeSystem + ?Sized>(
    training: &RomNnTrainingSet,
    hidden_widths: &[usize],
    cfg: &TrainingConfig,
    basis: ReducedBasis,
    full_model: &S,
) -> Result<(RomNnSystem, TrainingLog)> {
    if training.k_u != basis.k() {
        return Err(Error::DimensionMismatch(format!(
            "training set is for k_u = {} but the basis has k = {}",
            training.k_u,
            basis.k()
        )));
    }
    let widths = surrogate_widths(training.k_u, training.n_mu, hidden_widths);
    let (model, log) = fit(&training.inputs, &training.targets, &widths, cfg)?;
    let system = RomNnSystem::new(model, basis, full_model)?;
    Ok((system, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::BurgersSystem;
    use crate::dynsys::{integrate, Counted, GenericSystem, TimeGrid, TrajectoryStatus};
    use crate::fd::{jacobian_fd, rel_max_diff};
    use crate::nn::Activation;
    use crate::pod::{collect_snapshots, compute_pod_basis};
    use std::sync::Arc;

    /// Parametrized diagonal decay `du/dt = -mu_0 diag(0.6, 1.1, 1.7) u`.
    fn decay_system() -> impl OdeSystem {
        let rates = [0.6, 1.1, 1.7];
        let u0 = DVector::from_vec(vec![1.2, -0.8, 0.5]);
        GenericSystem::new(
            u0,
            Mass::Identity(3),
            vec![(0.5, 1.5)],
            move |u: &DVector<f64>, _t, mu: &[f64]| {
                DVector::from_fn(3, |i, _| -mu[0] * rates[i] * u[i])
            },
            move |_u: &DVector<f64>, _t, mu: &[f64]| {
                SysMatrix::Dense(DMatrix::from_diagonal(&DVector::from_fn(3, |i, _| {
                    -mu[0] * rates[i]
                })))
            },
        )
        .unwrap()
    }

    fn decay_training(
        k_u: usize,
    ) -> (Arc<dyn OdeSystem>, TimeGrid, Vec<Vec<f64>>, ReducedBasis, RomNnTrainingSet) {
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let params = vec![vec![0.7], vec![1.3]];
        let snaps = collect_snapshots(sys.as_ref(), &grid, &params).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), k_u).unwrap();
        let training = build_training_data(&snaps, &basis).unwrap();
        (sys, grid, params, basis, training)
    }

    #[test]
    fn training_rows_mirror_snapshot_columns() {
        let (_, grid, params, basis, training) = decay_training(2);
        assert_eq!(training.n_rows(), params.len() * grid.n_steps());
        assert_eq!(training.inputs.ncols(), 2 + 1 + 1);
        assert_eq!(training.targets.ncols(), 2);
        // Column layout: (tau, t, mu) with snapshot ordering grouped by
        // parameter, times t_1..t_Nt.
        let n_t = grid.n_steps();
        for (j, mu) in params.iter().enumerate() {
            for i in 0..n_t {
                let r = j * n_t + i;
                assert_eq!(training.inputs[(r, 2)], grid.nodes()[i + 1]);
                assert_eq!(training.inputs[(r, 3)], mu[0]);
            }
        }
        // Provenance: rebuilding from the same snapshots is bitwise equal.
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let snaps = collect_snapshots(sys.as_ref(), &grid, &params).unwrap();
        let again = build_training_data(&snaps, &basis).unwrap();
        assert_eq!(training, again);
    }

    #[test]
    fn training_targets_are_projected_stored_velocities() {
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let grid = TimeGrid::uniform(2.0, 10).unwrap();
        let params = vec![vec![0.8], vec![1.2]];
        let snaps = collect_snapshots(sys.as_ref(), &grid, &params).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 2).unwrap();
        let training = build_training_data(&snaps, &basis).unwrap();
        for r in 0..training.n_rows() {
            let expected = basis.basis.tr_mul(&snaps.velocities.column(r));
            for i in 0..2 {
                assert_eq!(training.targets[(r, i)], expected[i]);
            }
        }
    }

    #[test]
    fn burgers_corner_grid_yields_published_row_count() {
        // 2 x 2 x 2 corner training grid with 100 time steps: 800 rows.
        let sys = Arc::new(BurgersSystem::new(60).unwrap());
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let mut params = Vec::new();
        for &nu in &[0.01, 0.1] {
            for &b in &[2.0, 3.0] {
                for &c in &[0.0, 1.0] {
                    params.push(vec![nu, b, c]);
                }
            }
        }
        let snaps = collect_snapshots(sys.as_ref(), &grid, &params).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 8).unwrap();
        let training = build_training_data(&snaps, &basis).unwrap();
        assert_eq!(training.n_rows(), 800);
        assert_eq!(training.inputs.ncols(), 8 + 1 + 3);
        assert_eq!(training.targets.ncols(), 8);
    }

    #[test]
    fn reevaluated_targets_split_by_truncation_error() {
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let grid = TimeGrid::uniform(2.0, 12).unwrap();
        let params = vec![vec![0.7], vec![1.3]];
        let snaps = collect_snapshots(sys.as_ref(), &grid, &params).unwrap();
        // Full-rank basis: reconstruction is exact, so both target paths
        // coincide to round-off.
        let full = compute_pod_basis(&snaps.states, &sys.initial_state(), 3).unwrap();
        let stored = build_training_data(&snaps, &full).unwrap();
        let rom = RomSystem::new(Arc::clone(&sys), full).unwrap();
        let reeval = build_training_data_reevaluated(&snaps, &rom).unwrap();
        assert_eq!(stored.inputs, reeval.inputs);
        assert!((&stored.targets - &reeval.targets).amax() < 1e-10);
        // Truncated basis: the two definitions differ by the truncation
        // error, which is nonzero here.
        let trunc = compute_pod_basis(&snaps.states, &sys.initial_state(), 1).unwrap();
        let stored = build_training_data(&snaps, &trunc).unwrap();
        let rom = RomSystem::new(sys, trunc).unwrap();
        let reeval = build_training_data_reevaluated(&snaps, &rom).unwrap();
        assert!((&stored.targets - &reeval.targets).amax() > 1e-8);
    }

    #[test]
    fn linear_reduced_dynamics_are_learned_to_rom_accuracy() {
        let (sys, grid, params, basis, training) = decay_training(3);
        let cfg = TrainingConfig {
            learning_rate: 1e-2,
            batch_size: 64,
            max_epochs: 4000,
            dropout: 0.0,
            patience: 4000,
            validation_fraction: 0.1,
            seed: 3,
        };
        let (surrogate, _log) =
            train_romnn(&training, &[48], &cfg, basis.clone(), sys.as_ref()).unwrap();
        let rom = RomSystem::new(Arc::clone(&sys), basis).unwrap();
        for mu in &params {
            let reference = integrate(&rom, &grid, mu).unwrap();
            let approx = integrate(&surrogate, &grid, mu).unwrap();
            assert_eq!(approx.status, TrajectoryStatus::Converged);
            let mut num = 0.0;
            let mut den = 0.0;
            for c in 1..reference.states.ncols() {
                num += (approx.states.column(c) - reference.states.column(c)).norm_squared();
                den += reference.states.column(c).norm_squared();
            }
            let eps = (num / den).sqrt();
            assert!(eps <= 1e-2, "surrogate error {eps} at mu = {mu:?}");
        }
    }

    #[test]
    fn zero_epoch_surrogate_is_constant_and_integrable() {
        let (sys, grid, params, basis, training) = decay_training(2);
        let cfg = TrainingConfig { max_epochs: 0, ..TrainingConfig::default() };
        let (surrogate, log) =
            train_romnn(&training, &[16], &cfg, basis, sys.as_ref()).unwrap();
        assert!(log.records.is_empty());
        // All-zero network: the velocity is the constant target mean.
        let mean = surrogate.model().output_stats.mean.clone();
        let v1 = surrogate.velocity(&DVector::zeros(2), 0.3, &params[0]);
        let v2 = surrogate.velocity(&DVector::from_vec(vec![5.0, -2.0]), 1.7, &params[1]);
        assert_eq!(v1, mean);
        assert_eq!(v2, mean);
        let traj = integrate(&surrogate, &grid, &params[0]).unwrap();
        assert_eq!(traj.status, TrajectoryStatus::Converged);
        assert!(traj.states.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn integration_never_calls_the_full_model() {
        let counted = Arc::new(Counted::new(decay_system()));
        let counters = counted.counters();
        let grid = TimeGrid::uniform(2.0, 40).unwrap();
        let params = vec![vec![0.7], vec![1.3]];
        let snaps = collect_snapshots(counted.as_ref(), &grid, &params).unwrap();
        let basis = compute_pod_basis(&snaps.states, &counted.initial_state(), 3).unwrap();
        let training = build_training_data(&snaps, &basis).unwrap();
        let cfg = TrainingConfig {
            max_epochs: 50,
            dropout: 0.0,
            ..TrainingConfig::default()
        };
        let (surrogate, _) =
            train_romnn(&training, &[24], &cfg, basis, counted.as_ref()).unwrap();
        // Offline phases above did evaluate the full model; from here on the
        // surrogate must never touch it.
        counters.reset();
        for mu in &params {
            let traj = integrate(&surrogate, &grid, mu).unwrap();
            assert_eq!(traj.status, TrajectoryStatus::Converged);
        }
        let extra = integrate(&surrogate, &grid, &[1.0]).unwrap();
        assert!(extra.states.iter().all(|v| v.is_finite()));
        assert_eq!(counters.counts(), (0, 0));
    }

    #[test]
    fn fixed_seed_reproduces_the_surrogate_bitwise() {
        let (sys, grid, params, basis, training) = decay_training(2);
        let cfg = TrainingConfig {
            max_epochs: 40,
            dropout: 0.1,
            ..TrainingConfig::default()
        };
        let (s1, log1) =
            train_romnn(&training, &[16], &cfg, basis.clone(), sys.as_ref()).unwrap();
        let (s2, log2) = train_romnn(&training, &[16], &cfg, basis, sys.as_ref()).unwrap();
        assert_eq!(s1.model(), s2.model());
        assert_eq!(log1, log2);
        let t1 = integrate(&s1, &grid, &params[0]).unwrap();
        let t2 = integrate(&s2, &grid, &params[0]).unwrap();
        assert_eq!(t1.states, t2.states);
    }

    #[test]
    fn surrogate_jacobian_matches_finite_differences() {
        let (sys, _grid, params, basis, training) = decay_training(3);
        let cfg = TrainingConfig {
            max_epochs: 200,
            dropout: 0.0,
            ..TrainingConfig::default()
        };
        let (surrogate, _) =
            train_romnn(&training, &[20, 14], &cfg, basis, sys.as_ref()).unwrap();
        let mu = &params[0];
        let t = 0.45;
        let mut checked = 0;
        for trial in 0..40 {
            let s = 0.05 * trial as f64;
            let tau = DVector::from_vec(vec![0.3 - s, -0.2 + 0.5 * s, 0.1 * s]);
            let input = surrogate.surrogate_input(&tau, t, mu);
            if surrogate.model().distance_to_kink(&input) < 1e-3 {
                continue;
            }
            let SysMatrix::Dense(analytic) = surrogate.jacobian(&tau, t, mu) else {
                panic!("expected a dense reduced Jacobian");
            };
            let numeric = jacobian_fd(|v| surrogate.velocity(v, t, mu), &tau);
            let err = rel_max_diff(&numeric, &analytic);
            assert!(err <= 1e-6, "Jacobian mismatch {err}");
            checked += 1;
        }
        assert!(checked >= 5, "too few kink-avoiding points ({checked})");
    }

    #[test]
    fn linear_activation_surrogate_has_constant_weight_product_jacobian() {
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let grid = TimeGrid::uniform(2.0, 10).unwrap();
        let snaps = collect_snapshots(sys.as_ref(), &grid, &[vec![1.0]]).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 2).unwrap();
        let mut model = NetworkModel::init(&[4, 5, 2], 9).unwrap();
        model.activation = Activation::Identity;
        let surrogate = RomNnSystem::new(model.clone(), basis, sys.as_ref()).unwrap();
        // An affine network has one global Jacobian: the weight product's
        // tau-block, identical at every evaluation point.
        let product = &model.weights[1] * &model.weights[0];
        let expected = product.columns(0, 2).into_owned();
        for tau in [DVector::zeros(2), DVector::from_vec(vec![1.5, -0.7])] {
            let SysMatrix::Dense(jac) = surrogate.jacobian(&tau, 0.2, &[1.0]) else {
                panic!("expected a dense reduced Jacobian");
            };
            assert!((&jac - &expected).amax() < 1e-12);
        }
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let sys: Arc<dyn OdeSystem> = Arc::new(decay_system());
        let grid = TimeGrid::uniform(2.0, 10).unwrap();
        let snaps = collect_snapshots(sys.as_ref(), &grid, &[vec![1.0]]).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 2).unwrap();
        // Wrong input width (no time feature).
        let bad = NetworkModel::zeros(&[3, 6, 2]).unwrap();
        assert!(RomNnSystem::new(bad, basis.clone(), sys.as_ref()).is_err());
        // Wrong output width.
        let bad = NetworkModel::zeros(&[4, 6, 3]).unwrap();
        assert!(RomNnSystem::new(bad, basis.clone(), sys.as_ref()).is_err());
        // Training set built for a different basis size.
        let training = build_training_data(&snaps, &basis).unwrap();
        let other = compute_pod_basis(&snaps.states, &sys.initial_state(), 1).unwrap();
        let cfg = TrainingConfig::default();
        assert!(train_romnn(&training, &[8], &cfg, other, sys.as_ref()).is_err());
    }
}
