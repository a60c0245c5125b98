//! Exact Galerkin reduced-order model (ROM).
//!
//! Projects the full system `M du/dt = f(u, t, mu)` onto the affine subspace
//! `u ~ offset + Phi tau` with the test space equal to the trial space:
//!
//! ```text
//!     (Phi^T M Phi) dtau/dt = Phi^T f(offset + Phi tau, t, mu)
//! ```
//!
//! The reduced model implements [`OdeSystem`] itself, so the same implicit
//! time integrator drives full and reduced simulations. The reduced velocity
//! is computed by full reconstruction, full velocity evaluation, and
//! projection — exact but still costing one full-model evaluation per call;
//! the hyperreduction and regression tiers exist to remove that cost.

use std::sync::Arc;

use nalgebra::DVector;

use crate::dynsys::OdeSystem;
use crate::error::{Error, Result};
use crate::linalg::{Mass, SysMatrix};
use crate::pod::ReducedBasis;

/// Galerkin projection of a full-order system onto a reduced basis.
pub struct RomSystem<S: OdeSystem + ?Sized> {
    hdm: Arc<S>,
    basis: ReducedBasis,
    mass: Mass,
    initial: DVector<f64>,
}

impl<S: OdeSystem + ?Sized> RomSystem<S> {
    /// Builds the reduced system: projects the mass matrix (verifying it
    /// stays symmetric positive definite) and the initial condition. With the
    /// convention `offset = u_0` the reduced initial condition is zero.
    pub fn new(hdm: Arc<S>, basis: ReducedBasis) -> Result<Self> {
        if basis.n() != hdm.dim() {
            return Err(Error::DimensionMismatch(format!(
                "basis has {} rows but the full system dimension is {}",
                basis.n(),
                hdm.dim()
            )));
        }
        let mass = project_mass(hdm.mass(), &basis)?;
        let initial = basis.project(&hdm.initial_state());
        Ok(RomSystem { hdm, basis, mass, initial })
    }

    pub fn basis(&self) -> &ReducedBasis {
        &self.basis
    }

    pub fn hdm(&self) -> &Arc<S> {
        &self.hdm
    }

    /// Full-space state represented by reduced coordinates `tau`.
    pub fn lift(&self, tau: &DVector<f64>) -> DVector<f64> {
        self.basis.reconstruct(tau)
    }
}

/// Projects a mass matrix onto the basis: `Phi^T M Phi`, kept as the exact
/// identity when `M` is the identity (orthonormality), symmetrized, and
/// verified positive definite.
pub(crate) fn project_mass(mass: &Mass, basis: &ReducedBasis) -> Result<Mass> {
    Ok(match mass {
        Mass::Identity(_) => Mass::Identity(basis.k()),
        m => {
            let mut reduced = basis.basis.tr_mul(&m.mul_dense(&basis.basis));
            // Symmetrize away multiplication round-off so the reduced
            // operator is exactly symmetric.
            let t = reduced.transpose();
            reduced = (reduced + t) * 0.5;
            if reduced.clone().cholesky().is_none() {
                return Err(Error::SingularMatrix(
                    "projected mass matrix is not positive definite".into(),
                ));
            }
            Mass::Dense(reduced)
        }
    })
}

impl<S: OdeSystem + ?Sized> OdeSystem for RomSystem<S> {
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

    /// `Phi^T f(offset + Phi tau, t, mu)`.
    fn velocity(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        let u = self.basis.reconstruct(tau);
        self.basis.basis.tr_mul(&self.hdm.velocity(&u, t, mu))
    }

    /// Chain rule: `Phi^T (df/du)(offset + Phi tau) Phi`.
    fn jacobian(&self, tau: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix {
        let u = self.basis.reconstruct(tau);
        let jphi = self.hdm.jacobian(&u, t, mu).mul_dense(&self.basis.basis);
        SysMatrix::Dense(self.basis.basis.tr_mul(&jphi))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::BurgersSystem;
    use crate::dynsys::{integrate, GenericSystem, TimeGrid, TrajectoryStatus};
    use crate::fd::{jacobian_fd, rel_max_diff};
    use crate::pod::{collect_snapshots, compute_pod_basis};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthonormal_basis(
        n: usize,
        k: usize,
        offset: DVector<f64>,
        seed: u64,
    ) -> ReducedBasis {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let snaps = DMatrix::from_fn(n, 3 * k, |_, _| rng.random_range(-1.0..1.0));
        compute_pod_basis(&snaps, &offset, k).unwrap()
    }

    fn linear_system(
        a: DMatrix<f64>,
        c: DVector<f64>,
        u0: DVector<f64>,
    ) -> impl OdeSystem {
        let n = u0.len();
        let a2 = a.clone();
        GenericSystem::new(
            u0,
            Mass::Identity(n),
            vec![(0.0, 1.0)],
            move |u: &DVector<f64>, _t, _mu: &[f64]| &a * u + &c,
            move |_u: &DVector<f64>, _t, _mu: &[f64]| SysMatrix::Dense(a2.clone()),
        )
        .unwrap()
    }

    #[test]
    fn identity_mass_projects_to_identity() {
        let n = 12;
        let u0 = DVector::zeros(n);
        let sys = linear_system(DMatrix::identity(n, n) * -1.0, DVector::zeros(n), u0.clone());
        let basis = random_orthonormal_basis(n, 4, u0, 1);
        let rom = RomSystem::new(Arc::new(sys), basis).unwrap();
        assert!(matches!(rom.mass(), Mass::Identity(4)));
        // offset = u_0, so the reduced initial condition is exactly zero.
        assert_eq!(rom.initial_state(), DVector::zeros(4));
    }

    #[test]
    fn linear_system_matches_explicit_reduced_operators() {
        let n = 12;
        let k = 4;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let c = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let u0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let sys = linear_system(a.clone(), c.clone(), u0.clone());
        let basis = random_orthonormal_basis(n, k, u0.clone(), 3);
        let phi = basis.basis.clone();
        let rom = RomSystem::new(Arc::new(sys), basis).unwrap();

        // Explicit reduced operators as the oracle.
        let reduced_a = phi.tr_mul(&a) * &phi;
        let reduced_c = phi.tr_mul(&(&a * &u0 + &c));
        let tau = DVector::from_fn(k, |i, _| 0.3 * i as f64 - 0.5);
        let expected = &reduced_a * &tau + &reduced_c;
        assert!((rom.velocity(&tau, 0.0, &[0.5]) - expected).amax() < 1e-12);

        // The reduced Jacobian of a linear system is constant.
        let j1 = rom.jacobian(&tau, 0.0, &[0.5]).to_dense();
        let j2 = rom.jacobian(&DVector::zeros(k), 0.7, &[0.5]).to_dense();
        assert_eq!(j1, j2);
        assert!((&j1 - &reduced_a).amax() < 1e-12);
    }

    #[test]
    fn symmetric_jacobian_stays_symmetric_under_projection() {
        let n = 10;
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let sym = (&raw + raw.transpose()) * 0.5;
        let u0 = DVector::zeros(n);
        let sys = linear_system(sym, DVector::zeros(n), u0.clone());
        let basis = random_orthonormal_basis(n, 3, u0, 5);
        let rom = RomSystem::new(Arc::new(sys), basis).unwrap();
        let j = rom.jacobian(&DVector::zeros(3), 0.0, &[0.0]).to_dense();
        assert!((&j - j.transpose()).amax() < 1e-12);
    }

    #[test]
    fn projected_mass_matrix_is_spd_and_consistent() {
        let sys = Arc::new(BurgersSystem::new(40).unwrap());
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let snaps = collect_snapshots(sys.as_ref(), &grid, &[vec![0.05, 2.5, 0.5]]).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 4).unwrap();
        let phi = basis.basis.clone();
        let rom = RomSystem::new(sys.clone(), basis).unwrap();
        match rom.mass() {
            Mass::Dense(mr) => {
                assert_eq!(mr.transpose(), *mr);
                let oracle = phi.tr_mul(&sys.mass().mul_dense(&phi));
                assert!((mr - oracle).amax() < 1e-12);
                assert!(mr.clone().cholesky().is_some());
            }
            other => panic!("expected dense reduced mass, got {other:?}"),
        }
    }

    #[test]
    fn velocity_at_zero_tau_is_projected_full_velocity() {
        let sys = Arc::new(BurgersSystem::new(30).unwrap());
        let grid = TimeGrid::uniform(1.0, 15).unwrap();
        let mu = vec![0.08, 2.2, 0.7];
        let snaps = collect_snapshots(sys.as_ref(), &grid, std::slice::from_ref(&mu)).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 3).unwrap();
        let phi = basis.basis.clone();
        let offset = basis.offset.clone();
        let rom = RomSystem::new(sys.clone(), basis).unwrap();
        let expected = phi.tr_mul(&sys.velocity(&offset, 0.3, &mu));
        assert_eq!(rom.velocity(&DVector::zeros(3), 0.3, &mu), expected);
    }

    #[test]
    fn reduced_jacobian_matches_finite_differences() {
        let sys = Arc::new(BurgersSystem::new(21).unwrap());
        let grid = TimeGrid::uniform(1.0, 15).unwrap();
        let mu = vec![0.05, 2.5, 0.5];
        let snaps = collect_snapshots(sys.as_ref(), &grid, std::slice::from_ref(&mu)).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), 4).unwrap();
        let rom = RomSystem::new(sys, basis).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..3 {
            let tau = DVector::from_fn(4, |_, _| rng.random_range(-0.5..0.5));
            let analytic = rom.jacobian(&tau, 0.4, &mu).to_dense();
            let numeric = jacobian_fd(|x| rom.velocity(x, 0.4, &mu), &tau);
            let err = rel_max_diff(&numeric, &analytic);
            assert!(err <= 1e-6, "reduced Jacobian mismatch {err}");
        }
    }

    /// With a basis spanning the full state space, the reduced trajectory is
    /// the full trajectory expressed in different coordinates.
    #[test]
    fn full_rank_basis_reproduces_full_trajectory() {
        let sys = Arc::new(BurgersSystem::new(12).unwrap());
        let n = sys.dim();
        let grid = TimeGrid::uniform(1.0, 20).unwrap();
        let mu = vec![0.05, 2.5, 0.5];
        let reference = integrate(sys.as_ref(), &grid, &mu).unwrap();
        let snaps = collect_snapshots(sys.as_ref(), &grid, std::slice::from_ref(&mu)).unwrap();
        let basis = compute_pod_basis(&snaps.states, &sys.initial_state(), n).unwrap();
        let rom = RomSystem::new(sys.clone(), basis).unwrap();
        assert_eq!(rom.dim(), n);
        let reduced = integrate(&rom, &grid, &mu).unwrap();
        assert_eq!(reduced.status, TrajectoryStatus::Converged);
        let lifted = rom.basis().reconstruct_trajectory(&reduced);
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 1..reference.states.ncols() {
            num += (lifted.states.column(c) - reference.states.column(c)).norm_squared();
            den += reference.states.column(c).norm_squared();
        }
        let eps = (num / den).sqrt();
        assert!(eps <= 1e-6, "full-rank reproduction error {eps}");
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let sys = Arc::new(BurgersSystem::new(30).unwrap());
        let basis = random_orthonormal_basis(10, 2, DVector::zeros(10), 6);
        assert!(matches!(
            RomSystem::new(sys, basis),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
