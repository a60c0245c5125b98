//! Snapshot collection and proper orthogonal decomposition (POD).
//!
//! Training trajectories are stacked into a global snapshot matrix
//! `X = [X_1 ... X_Ns]` whose columns hold the states at the time nodes
//! `t_1..t_Nt` (the initial node is excluded: every reduction here uses the
//! initial state as the affine offset, so the `t_0` column would be zero
//! after translation). The reduced basis holds the dominant left singular
//! vectors of the translated snapshot matrix `X - offset * 1^T`.

use nalgebra::{DMatrix, DVector};

use crate::dynsys::{integrate, OdeSystem, TimeGrid, Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};

/// Relative singular-value threshold below which directions are treated as
/// numerically rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-13;

/// States and velocities sampled from training trajectories.
///
/// Columns are grouped by parameter: column `j * n_times + i` holds the
/// state (respectively velocity) at time node `times[i]` for `params[j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub states: DMatrix<f64>,
    pub velocities: DMatrix<f64>,
    pub times: Vec<f64>,
    pub params: Vec<Vec<f64>>,
}

impl SnapshotSet {
    /// Snapshots stored per parameter (time nodes excluding `t_0`).
    pub fn n_times(&self) -> usize {
        self.times.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_columns(&self) -> usize {
        self.states.ncols()
    }

    /// Parameter vector that produced column `col`.
    pub fn column_param(&self, col: usize) -> &[f64] {
        &self.params[col / self.n_times()]
    }

    /// Time node of column `col`.
    pub fn column_time(&self, col: usize) -> f64 {
        self.times[col % self.n_times()]
    }
}

/// Integrates the system at every training parameter and assembles the
/// snapshot set. The full model is treated as ground truth, so a diverged
/// trajectory aborts collection with [`Error::HdmDiverged`].
pub fn collect_snapshots<S: OdeSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    params: &[Vec<f64>],
) -> Result<SnapshotSet> {
    let mut trajectories = Vec::with_capacity(params.len());
    for mu in params {
        trajectories.push(integrate(system, grid, mu)?);
    }
    snapshots_from_trajectories(system, grid, &trajectories)
}

/// Assembles a snapshot set from already-computed trajectories (for example
/// loaded from disk), recomputing the velocity columns at the stored states.
pub fn snapshots_from_trajectories<S: OdeSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    trajectories: &[Trajectory],
) -> Result<SnapshotSet> {
    let n_u = system.dim();
    let times: Vec<f64> = grid.nodes()[1..].to_vec();
    let n_t = times.len();
    let mut states = DMatrix::zeros(n_u, trajectories.len() * n_t);
    let mut velocities = DMatrix::zeros(n_u, trajectories.len() * n_t);
    let mut params = Vec::with_capacity(trajectories.len());
    for (j, traj) in trajectories.iter().enumerate() {
        if let TrajectoryStatus::Diverged { step } = traj.status {
            return Err(Error::HdmDiverged { param: traj.mu.clone(), step });
        }
        if traj.states.nrows() != n_u || traj.states.ncols() != n_t + 1 {
            return Err(Error::DimensionMismatch(format!(
                "trajectory {} is {} x {}, expected {} x {}",
                j,
                traj.states.nrows(),
                traj.states.ncols(),
                n_u,
                n_t + 1
            )));
        }
        for (i, &t) in times.iter().enumerate() {
            let col = j * n_t + i;
            let state = traj.states.column(i + 1);
            states.column_mut(col).copy_from(&state);
            let v = system.velocity(&state.clone_owned(), t, &traj.mu);
            velocities.column_mut(col).copy_from(&v);
        }
        params.push(traj.mu.clone());
    }
    Ok(SnapshotSet { states, velocities, times, params })
}

/// Column-orthonormal reduced basis with its affine offset and the full
/// singular spectrum of the translated snapshot matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub offset: DVector<f64>,
    pub basis: DMatrix<f64>,
    pub singular_values: DVector<f64>,
}

impl ReducedBasis {
    /// Reduced dimension `k_u`.
    pub fn k(&self) -> usize {
        self.basis.ncols()
    }

    /// Full dimension `N_u`.
    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// Reduced coordinates of a full state: `Phi^T (u - offset)`.
    pub fn project(&self, u: &DVector<f64>) -> DVector<f64> {
        assert_eq!(u.len(), self.n(), "project: state length mismatch");
        self.basis.tr_mul(&(u - &self.offset))
    }

    /// Full state of reduced coordinates: `offset + Phi y`.
    pub fn reconstruct(&self, y: &DVector<f64>) -> DVector<f64> {
        assert_eq!(y.len(), self.k(), "reconstruct: reduced length mismatch");
        &self.offset + &self.basis * y
    }

    /// Maps a reduced trajectory back to the full space column by column;
    /// the divergence status and any NaN padding carry over.
    pub fn reconstruct_trajectory(&self, reduced: &Trajectory) -> Trajectory {
        let mut states = DMatrix::zeros(self.n(), reduced.states.ncols());
        for (c, y) in reduced.states.column_iter().enumerate() {
            states.column_mut(c).copy_from(&self.reconstruct(&y.clone_owned()));
        }
        Trajectory { states, mu: reduced.mu.clone(), status: reduced.status }
    }

    /// Basis of the leading `k` directions (prefix of the same SVD), sharing
    /// the full singular spectrum. Panics if `k` exceeds the stored width.
    pub fn truncate(&self, k: usize) -> ReducedBasis {
        assert!(1 <= k && k <= self.k(), "truncate: k = {k} outside 1..={}", self.k());
        ReducedBasis {
            offset: self.offset.clone(),
            basis: self.basis.columns(0, k).clone_owned(),
            singular_values: self.singular_values.clone(),
        }
    }
}

/// Computes the leading `k_u` left singular vectors of
/// `states - offset * 1^T`, ordered by descending singular value.
///
/// Uses the method of snapshots (eigendecomposition of the small Gram
/// matrix) when there are fewer columns than rows and a thin SVD otherwise.
/// Requesting more directions than the numerical rank (trailing singular
/// values below `RANK_TOLERANCE` relative to the largest) fails with
/// [`Error::RankDeficient`].
pub fn compute_pod_basis(
    states: &DMatrix<f64>,
    offset: &DVector<f64>,
    k_u: usize,
) -> Result<ReducedBasis> {
    if k_u == 0 {
        return Err(Error::InvalidConfig("reduced dimension must be at least 1".into()));
    }
    if offset.len() != states.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "offset length {} vs snapshot rows {}",
            offset.len(),
            states.nrows()
        )));
    }
    let mut translated = states.clone();
    for mut col in translated.column_iter_mut() {
        col -= offset;
    }
    let (mut basis, singular_values) = leading_left_singular_vectors(&translated, k_u)?;
    for mut col in basis.column_iter_mut() {
        fix_sign(&mut col);
    }
    Ok(ReducedBasis { offset: offset.clone(), basis, singular_values })
}

/// Shared SVD core: returns the first `k` left singular vectors and the full
/// singular spectrum of `x`.
pub(crate) fn leading_left_singular_vectors(
    x: &DMatrix<f64>,
    k: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let (n, m) = (x.nrows(), x.ncols());
    let spectrum_len = n.min(m);
    let (mut vectors, sigma) = if m < n {
        // Method of snapshots: eigendecomposition of the m x m Gram matrix.
        let gram = x.tr_mul(x);
        let eig = gram.symmetric_eigen();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        // Eigenvalues below the eigensolver's round-off floor are numerically
        // zero; without this floor, squaring would report spurious singular
        // values near sqrt(machine epsilon) for exactly dependent columns.
        let floor = eig.eigenvalues[order[0]].max(0.0) * f64::EPSILON * m as f64;
        let sigma = DVector::from_fn(m, |i, _| {
            let lambda = eig.eigenvalues[order[i]];
            if lambda > floor {
                lambda.sqrt()
            } else {
                0.0
            }
        });
        let rank = numerical_rank(&sigma);
        if k > rank {
            return Err(Error::RankDeficient { requested: k, rank });
        }
        let mut vectors = DMatrix::zeros(n, k);
        for i in 0..k {
            let dir = x * eig.eigenvectors.column(order[i]) / sigma[i];
            vectors.column_mut(i).copy_from(&dir);
        }
        // The Gram route loses orthogonality near the rank tolerance;
        // re-orthonormalize (twice-iterated modified Gram-Schmidt).
        modified_gram_schmidt(&mut vectors);
        modified_gram_schmidt(&mut vectors);
        (vectors, sigma)
    } else {
        let mut svd = x.clone().svd(true, false);
        svd.sort_by_singular_values();
        let sigma = DVector::from_fn(spectrum_len, |i, _| svd.singular_values[i]);
        let rank = numerical_rank(&sigma);
        if k > rank {
            return Err(Error::RankDeficient { requested: k, rank });
        }
        let u = svd.u.as_ref().expect("left singular vectors requested");
        (u.columns(0, k).clone_owned(), sigma)
    };
    debug_assert_eq!(vectors.ncols(), k);
    for col in vectors.column_iter_mut() {
        debug_assert!(col.iter().all(|v| v.is_finite()));
        let _ = col;
    }
    Ok((vectors, sigma))
}

fn numerical_rank(sigma: &DVector<f64>) -> usize {
    let largest = sigma.get(0).copied().unwrap_or(0.0);
    if largest <= 0.0 {
        return 0;
    }
    sigma.iter().take_while(|&&s| s / largest >= RANK_TOLERANCE).count()
}

fn modified_gram_schmidt(mat: &mut DMatrix<f64>) {
    let k = mat.ncols();
    for j in 0..k {
        for i in 0..j {
            let proj = mat.column(i).dot(&mat.column(j));
            let prev = mat.column(i).clone_owned();
            let mut col = mat.column_mut(j);
            col.axpy(-proj, &prev, 1.0);
        }
        let norm = mat.column(j).norm();
        if norm > 0.0 {
            mat.column_mut(j).scale_mut(1.0 / norm);
        }
    }
}

/// Makes the largest-magnitude entry of the column positive (first such
/// entry on ties) so repeated builds produce identical bases.
pub(crate) fn fix_sign(col: &mut nalgebra::DVectorViewMut<f64>) {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, &v) in col.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if col[best] < 0.0 {
        col.scale_mut(-1.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::burgers::BurgersSystem;
    use crate::dynsys::GenericSystem;
    use crate::linalg::{Mass, SysMatrix};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constant_system(dim: usize, u0: DVector<f64>) -> impl OdeSystem {
        GenericSystem::new(
            u0,
            Mass::Identity(dim),
            vec![(0.0, 1.0)],
            move |_u: &DVector<f64>, _t, _mu: &[f64]| DVector::zeros(dim),
            move |_u: &DVector<f64>, _t, _mu: &[f64]| {
                SysMatrix::Dense(DMatrix::zeros(dim, dim))
            },
        )
        .unwrap()
    }

    #[test]
    fn burgers_default_snapshot_shape() {
        let sys = BurgersSystem::new(crate::burgers::DEFAULT_N_ELEMENTS).unwrap();
        let grid = TimeGrid::uniform(1.0, 100).unwrap();
        let snaps = collect_snapshots(&sys, &grid, &[vec![0.05, 2.5, 0.5]]).unwrap();
        assert_eq!(snaps.states.shape(), (199, 100));
        assert_eq!(snaps.velocities.shape(), (199, 100));
        assert_eq!(snaps.times.len(), 100);
        assert_relative_eq!(snaps.times[0], 0.01, max_relative = 1e-14);
        // Velocity columns are the system velocity recomputed at the states.
        for col in [0usize, 37, 99] {
            let u = snaps.states.column(col).clone_owned();
            let v = sys.velocity(&u, snaps.column_time(col), snaps.column_param(col));
            assert_eq!(snaps.velocities.column(col), v.column(0));
        }
    }

    #[test]
    fn constant_dynamics_snapshots_equal_initial_state() {
        let u0 = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let sys = constant_system(3, u0.clone());
        let grid = TimeGrid::uniform(1.0, 5).unwrap();
        let snaps = collect_snapshots(&sys, &grid, &[vec![0.3], vec![0.7]]).unwrap();
        assert_eq!(snaps.n_columns(), 10);
        for col in snaps.states.column_iter() {
            assert_eq!(col, u0.column(0));
        }
        // Translated snapshots are identically zero: no basis exists.
        let err = compute_pod_basis(&snaps.states, &u0, 1).unwrap_err();
        assert!(matches!(err, Error::RankDeficient { requested: 1, rank: 0 }));
    }

    #[test]
    fn diverging_reference_aborts_collection() {
        let sys = GenericSystem::new(
            DVector::from_element(1, 1.0),
            Mass::Identity(1),
            vec![(0.0, 100.0)],
            |u: &DVector<f64>, _t, mu: &[f64]| u * mu[0],
            |_u: &DVector<f64>, _t, mu: &[f64]| {
                SysMatrix::Dense(DMatrix::from_element(1, 1, mu[0]))
            },
        )
        .unwrap();
        let grid = TimeGrid::uniform(1.0, 10).unwrap();
        let err = collect_snapshots(&sys, &grid, &[vec![30.0]]).unwrap_err();
        match err {
            Error::HdmDiverged { param, .. } => assert_eq!(param, vec![30.0]),
            other => panic!("expected divergence error, got {other}"),
        }
    }

    #[test]
    fn rank_one_snapshots_recover_direction() {
        let n = 12;
        let offset = DVector::from_fn(n, |i, _| i as f64 * 0.1);
        let v = DVector::from_fn(n, |i, _| (i as f64 * 0.7).sin() - 0.4);
        let mut states = DMatrix::zeros(n, 6);
        for (j, mut col) in states.column_iter_mut().enumerate() {
            col.copy_from(&(&offset + &v * (j as f64 + 1.0)));
        }
        let rb = compute_pod_basis(&states, &offset, 1).unwrap();
        let unit = &v / v.norm();
        // Sign convention: largest-magnitude entry positive.
        let expected = if unit[unit.iamax()] < 0.0 { -unit } else { unit };
        assert!((rb.basis.column(0) - expected.column(0)).amax() < 1e-12);
        assert!(rb.singular_values[1] / rb.singular_values[0] < RANK_TOLERANCE);
        assert!(matches!(
            compute_pod_basis(&states, &offset, 2),
            Err(Error::RankDeficient { requested: 2, rank: 1 })
        ));
    }

    /// Frobenius reconstruction error must match the tail of the singular
    /// spectrum (best-rank-k approximation property), checked against a full
    /// SVD computed independently. Covers both the Gram (tall) and thin-SVD
    /// (wide) routes.
    #[test]
    fn reconstruction_error_matches_spectrum_tail() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for (n, m) in [(50usize, 30usize), (30, 50)] {
            let offset = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let states =
                DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)) * 2.0;
            let mut translated = states.clone();
            for mut c in translated.column_iter_mut() {
                c -= &offset;
            }
            let oracle = translated.clone().svd(false, false);
            let mut sigma: Vec<f64> = oracle.singular_values.iter().copied().collect();
            sigma.sort_by(|a, b| b.total_cmp(a));
            for k in [1usize, 5, 17, 29] {
                let rb = compute_pod_basis(&states, &offset, k).unwrap();
                let projected = &rb.basis * rb.basis.tr_mul(&translated);
                let err = (&translated - projected).norm();
                let tail: f64 = sigma[k..].iter().map(|s| s * s).sum::<f64>().sqrt();
                assert_relative_eq!(err, tail, max_relative = 1e-9, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn projection_round_trip_and_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 25;
        let offset = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let states = DMatrix::from_fn(n, 10, |_, _| rng.random_range(-1.0..1.0));
        let rb = compute_pod_basis(&states, &offset, 4).unwrap();

        assert!(rb.project(&offset).amax() == 0.0);
        assert_eq!(rb.reconstruct(&DVector::zeros(4)), offset);

        let e1 = DVector::from_fn(4, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let u = rb.reconstruct(&e1);
        assert!((rb.project(&u) - &e1).amax() < 1e-12);

        let y = DVector::from_fn(4, |i, _| i as f64 - 1.5);
        assert!((rb.project(&rb.reconstruct(&y)) - &y).amax() < 1e-12);

        // Orthogonal projection is non-expansive about the offset.
        for col in states.column_iter() {
            let x = col.clone_owned();
            let err = (&x - rb.reconstruct(&rb.project(&x))).norm();
            assert!(err <= (&x - &offset).norm() + 1e-12);
        }
    }

    /// On a tiny instance the POD subspace must fit each snapshot at least
    /// as well as the span of any other k snapshot columns.
    #[test]
    fn pod_subspace_beats_column_subsets() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let (n, m, k) = (6usize, 4usize, 2usize);
        let offset = DVector::zeros(n);
        let states = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        let rb = compute_pod_basis(&states, &offset, k).unwrap();
        for j in 0..m {
            let x = states.column(j).clone_owned();
            let d_pod = (&x - rb.reconstruct(&rb.project(&x))).norm();
            let others: Vec<usize> = (0..m).filter(|&c| c != j).collect();
            for a in 0..others.len() {
                for b in a + 1..others.len() {
                    let span = DMatrix::from_columns(&[
                        states.column(others[a]),
                        states.column(others[b]),
                    ]);
                    let coeffs = span
                        .clone()
                        .svd(true, true)
                        .solve(&x, 1e-12)
                        .expect("least squares");
                    let d_subset = (&x - span * coeffs).norm();
                    assert!(
                        d_pod <= d_subset + 1e-10,
                        "POD distance {d_pod} worse than subset distance {d_subset}"
                    );
                }
            }
        }
    }

    #[test]
    fn truncate_takes_leading_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let states = DMatrix::from_fn(20, 9, |_, _| rng.random_range(-1.0..1.0));
        let offset = DVector::zeros(20);
        let rb = compute_pod_basis(&states, &offset, 6).unwrap();
        let cut = rb.truncate(2);
        assert_eq!(cut.basis, rb.basis.columns(0, 2).clone_owned());
        assert_eq!(cut.singular_values, rb.singular_values);
        assert_eq!(cut.reconstruct(&cut.project(&offset)), offset);
    }

    proptest! {
        #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

        /// Orthonormality, round trip, and monotone reconstruction energy
        /// over random snapshot matrices of either aspect ratio.
        #[test]
        fn pod_invariants_hold(seed in 0u64..1000, n in 4usize..28, m in 3usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let offset = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
            let states = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
            let mut translated = states.clone();
            for mut c in translated.column_iter_mut() { c -= &offset; }
            let k_max = n.min(m).min(5);
            let mut last_err = f64::INFINITY;
            for k in 1..=k_max {
                let rb = match compute_pod_basis(&states, &offset, k) {
                    Ok(rb) => rb,
                    Err(Error::RankDeficient { .. }) => break,
                    Err(e) => panic!("unexpected error {e}"),
                };
                let gram = rb.basis.tr_mul(&rb.basis);
                let eye = DMatrix::<f64>::identity(k, k);
                prop_assert!((gram - eye).norm() <= 1e-10);

                let y = DVector::from_fn(k, |i, _| (i as f64).cos());
                prop_assert!((rb.project(&rb.reconstruct(&y)) - &y).amax() <= 1e-12);

                let err = (&translated - &rb.basis * rb.basis.tr_mul(&translated)).norm();
                prop_assert!(err <= last_err + 1e-10);
                last_err = err;
            }
        }
    }
}
