//! Discrete empirical interpolation (DEIM) hyperreduction.
//!
//! Approximates the reduced velocity by interpolating the full velocity on a
//! small set of greedily selected entries through a velocity-snapshot
//! subspace `Pi`:
//!
//! ```text
//!     f_d(tau, t, mu) = A P^T f(offset + Phi tau, t, mu),
//!     A = Phi^T Pi (P^T Pi)^{-1},
//! ```
//!
//! with `P` the selected columns of the identity. This implementation
//! evaluates the full velocity and then samples it — numerically identical
//! to sampled evaluation, trading away the cost savings for simplicity — so
//! accuracy and stability behave exactly like a sampled implementation.
//!
//! Divergence of a DEIM-reduced trajectory is an expected outcome at small
//! subspace sizes; callers record it per parameter rather than treating it
//! as an error.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::dynsys::OdeSystem;
use crate::error::{Error, Result};
use crate::galerkin::project_mass;
use crate::linalg::{Mass, SysMatrix};
use crate::pod::{fix_sign, leading_left_singular_vectors, ReducedBasis};

/// Interpolation-point residuals at or below this infinity-norm are treated
/// as exactly dependent directions and abort point selection.
pub const DEGENERATE_RESIDUAL: f64 = 1e-12;

/// Leading `k_f` left singular vectors of the (untranslated) velocity
/// snapshot matrix, with the same deterministic sign convention as the state
/// basis. Fails with [`Error::RankDeficient`] past the numerical rank.
pub fn compute_deim_basis(velocity_snapshots: &DMatrix<f64>, k_f: usize) -> Result<DMatrix<f64>> {
    if k_f == 0 {
        return Err(Error::InvalidConfig("velocity subspace size must be at least 1".into()));
    }
    let (mut basis, _) = leading_left_singular_vectors(velocity_snapshots, k_f)?;
    for mut col in basis.column_iter_mut() {
        fix_sign(&mut col);
    }
    Ok(basis)
}

/// Greedy interpolation-point selection.
///
/// The first index maximizes `|pi_1|`; thereafter, index `m+1` maximizes the
/// magnitude of the interpolation residual `pi_{m+1} - Pi_m c` where
/// `(P_m^T Pi_m) c = P_m^T pi_{m+1}`. Returns one distinct index per column.
pub fn select_interpolation_points(pi: &DMatrix<f64>) -> Result<Vec<usize>> {
    let (n, k) = (pi.nrows(), pi.ncols());
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot pick {k} interpolation points from {n} rows"
        )));
    }
    let first = pi.column(0).iamax();
    if pi.column(0)[first].abs() <= DEGENERATE_RESIDUAL {
        return Err(Error::PointSelection("first direction is numerically zero".into()));
    }
    let mut indices = vec![first];
    for m in 1..k {
        // Interpolate the next direction on the points so far.
        let mut system = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (row, &p) in indices.iter().enumerate() {
            for col in 0..m {
                system[(row, col)] = pi[(p, col)];
            }
            rhs[row] = pi[(p, m)];
        }
        let coeffs = system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::PointSelection(format!("singular point system at size {m}")))?;
        let mut residual = pi.column(m).clone_owned();
        for col in 0..m {
            residual.axpy(-coeffs[col], &pi.column(col), 1.0);
        }
        let next = residual.iamax();
        if residual[next].abs() <= DEGENERATE_RESIDUAL {
            return Err(Error::PointSelection(format!(
                "direction {m} is dependent on the selected points (residual {:.3e})",
                residual[next].abs()
            )));
        }
        if indices.contains(&next) {
            return Err(Error::PointSelection(format!("repeated interpolation index {next}")));
        }
        indices.push(next);
    }
    Ok(indices)
}

/// Velocity subspace, sample indices, and the precomputed projector
/// `A = Phi^T Pi (P^T Pi)^{-1}` mapping sampled velocities to reduced ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimOperator {
    pub velocity_basis: DMatrix<f64>,
    pub sample_indices: Vec<usize>,
    pub projector: DMatrix<f64>,
    /// 2-norm condition number of the interpolation matrix `P^T Pi`,
    /// reported as a health indicator of the selected points.
    pub condition_number: f64,
}

impl DeimOperator {
    /// Builds the operator from a state basis and velocity snapshots.
    pub fn build(
        basis: &ReducedBasis,
        velocity_snapshots: &DMatrix<f64>,
        k_f: usize,
    ) -> Result<Self> {
        if velocity_snapshots.nrows() != basis.n() {
            return Err(Error::DimensionMismatch(format!(
                "velocity snapshots have {} rows but the state basis has {}",
                velocity_snapshots.nrows(),
                basis.n()
            )));
        }
        let pi = compute_deim_basis(velocity_snapshots, k_f)?;
        let sample_indices = select_interpolation_points(&pi)?;
        Self::assemble(&basis.basis, pi, sample_indices)
    }

    /// Assembles the projector for an already-selected point set.
    pub fn assemble(
        state_basis: &DMatrix<f64>,
        velocity_basis: DMatrix<f64>,
        sample_indices: Vec<usize>,
    ) -> Result<Self> {
        let k_f = velocity_basis.ncols();
        assert_eq!(sample_indices.len(), k_f, "one sample index per direction");
        let mut sampled = DMatrix::zeros(k_f, k_f);
        for (row, &p) in sample_indices.iter().enumerate() {
            for col in 0..k_f {
                sampled[(row, col)] = velocity_basis[(p, col)];
            }
        }
        let svd = sampled.clone().svd(false, false);
        let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
        if smin.is_nan() || smin <= 0.0 {
            return Err(Error::SingularMatrix("interpolation matrix P^T Pi is singular".into()));
        }
        let condition_number = smax / smin;
        // A = (Phi^T Pi) (P^T Pi)^{-1}, formed by solving the transposed
        // system for A^T.
        let phi_pi = state_basis.tr_mul(&velocity_basis);
        let a_t = sampled
            .transpose()
            .lu()
            .solve(&phi_pi.transpose())
            .ok_or_else(|| Error::SingularMatrix("interpolation matrix P^T Pi is singular".into()))?;
        Ok(DeimOperator {
            velocity_basis,
            sample_indices,
            projector: a_t.transpose(),
            condition_number,
        })
    }

    pub fn k_f(&self) -> usize {
        self.velocity_basis.ncols()
    }

    /// Reduced velocity from a full velocity vector: `A (P^T f)`.
    pub fn reduce_velocity(&self, full_velocity: &DVector<f64>) -> DVector<f64> {
        let sampled = DVector::from_fn(self.k_f(), |i, _| full_velocity[self.sample_indices[i]]);
        &self.projector * sampled
    }

    /// Reduced Jacobian from a full Jacobian: `A (P^T J) Phi`.
    pub fn reduce_jacobian(&self, jac: &SysMatrix, state_basis: &DMatrix<f64>) -> DMatrix<f64> {
        let sampled = jac.gather_rows_mul(&self.sample_indices, state_basis);
        &self.projector * sampled
    }
}

/// DEIM-hyperreduced reduced-order model; integrable like any other system.
pub struct DeimRomSystem<S: OdeSystem + ?Sized> {
    hdm: Arc<S>,
    basis: ReducedBasis,
    operator: DeimOperator,
    mass: Mass,
    initial: DVector<f64>,
}

impl<S: OdeSystem + ?Sized> DeimRomSystem<S> {
    pub fn new(hdm: Arc<S>, basis: ReducedBasis, operator: DeimOperator) -> Result<Self> {
        if basis.n() != hdm.dim() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows but the full system dimension is {}",
                basis.n(),
                hdm.dim()
            )));
        }
        if operator.velocity_basis.nrows() != hdm.dim() {
            return Err(Error::DimensionMismatch(format!(
                "velocity basis has {} rows but the full system dimension is {}",
                operator.velocity_basis.nrows(),
                hdm.dim()
            )));
        }
        let mass = project_mass(hdm.mass(), &basis)?;
        let initial = basis.project(&hdm.initial_state());
        Ok(DeimRomSystem { hdm, basis, operator, mass, initial })
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.basis
    }

    pub fn operator(&self) -> &DeimOperator {
        &self.operator
    }
}

impl<S: OdeSystem + ?Sized> OdeSystem for DeimRomSystem<S> {
    fn dim(&self) -> usize {
        self.basis.k()
    }

    fn param_dim(&self) -> usize {
        self.hdm.param_dim()
    }

    fn mass(&self) -> &Mass {
        &self.mass
    }

    fn initial_state(&self) -> DVector<f64> {
        self.initial.clone()
    }

    fn param_box(&self) -> &[(f64, f64)] {
        self.hdm.param_box()
    }

    fn velocity(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        let u = self.basis.reconstruct(tau);
        self.operator.reduce_velocity(&self.hdm.velocity(&u, t, mu))
    }

    fn jacobian(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix {
        let u = self.basis.reconstruct(tau);
        let jac = self.hdm.jacobian(&u, t, mu);
        SysMatrix::Dense(self.operator.reduce_jacobian(&jac, &self.basis.basis))
    }
}
