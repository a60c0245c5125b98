//! Relative trajectory error and its order statistics.

use romkit::dynsys::{Trajectory, TrajectoryStatus};
use romkit::{Error, Result};

/// Relative error of an approximate trajectory against a reference:
///
/// ```text
///     eps = sqrt( sum_i ||v_i - u_i||^2 / sum_i ||u_i||^2 )
/// ```
///
/// summed over the time nodes `t_1..t_Nt` (the shared initial state at
/// `t_0` is excluded, matching the snapshot convention). A diverged
/// approximation yields `+inf` as an explicit instability sentinel; a
/// diverged reference is a hard error because the full model is the ground
/// truth.
pub fn relative_error(approx: &Trajectory, reference: &Trajectory) -> Result<f64> {
    if let TrajectoryStatus::Diverged { step } = reference.status {
        return Err(Error::HdmDiverged { param: reference.mu.clone(), step });
    }
    if approx.states.shape() != reference.states.shape() {
        return Err(Error::DimensionMismatch(format!(
            "approximation is {:?} but the reference is {:?}",
            approx.states.shape(),
            reference.states.shape()
        )));
    }
    if approx.is_diverged() {
        return Ok(f64::INFINITY);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for c in 1..reference.states.ncols() {
        num += (approx.states.column(c) - reference.states.column(c)).norm_squared();
        den += reference.states.column(c).norm_squared();
    }
    if den == 0.0 {
        return Ok(if num == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok((num / den).sqrt())
}

/// Order statistics over a set of per-parameter errors.
///
/// Non-finite entries (the divergence sentinel) are excluded from the
/// statistics but counted; with no finite entries the statistics are
/// unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorStats {
    pub n_total: usize,
    pub n_diverged: usize,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Median with the lower-middle convention for even counts.
    pub median: Option<f64>,
}

pub fn error_statistics(errors: &[f64]) -> ErrorStats {
    let mut finite: Vec<f64> = errors.iter().copied().filter(|e| e.is_finite()).collect();
    finite.sort_by(f64::total_cmp);
    let n_total = errors.len();
    let n_diverged = n_total - finite.len();
    if finite.is_empty() {
        return ErrorStats { n_total, n_diverged, min: None, max: None, median: None };
    }
    ErrorStats {
        n_total,
        n_diverged,
        min: Some(finite[0]),
        max: Some(finite[finite.len() - 1]),
        median: Some(finite[(finite.len() - 1) / 2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn traj(states: DMatrix<f64>, status: TrajectoryStatus) -> Trajectory {
        Trajectory { states, mu: vec![0.5], status }
    }

    fn reference() -> Trajectory {
        let states = DMatrix::from_fn(3, 5, |i, j| 1.0 + i as f64 + 0.5 * j as f64);
        traj(states, TrajectoryStatus::Converged)
    }

    #[test]
    fn identical_trajectories_have_zero_error() {
        let r = reference();
        assert_eq!(relative_error(&r, &r).unwrap(), 0.0);
    }

    #[test]
    fn doubled_trajectory_has_unit_error() {
        let r = reference();
        let a = traj(&r.states * 2.0, TrajectoryStatus::Converged);
        assert!((relative_error(&a, &r).unwrap() - 1.0).abs() < 1e-14);
        // ||0 - u|| = ||u|| as well.
        let zero = traj(DMatrix::zeros(3, 5), TrajectoryStatus::Converged);
        assert!((relative_error(&zero, &r).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn initial_node_is_excluded() {
        let r = reference();
        let mut a = r.clone();
        // A difference confined to t_0 must not register.
        a.states[(0, 0)] += 100.0;
        assert_eq!(relative_error(&a, &r).unwrap(), 0.0);
        // The same difference at t_1 must.
        let mut b = r.clone();
        b.states[(0, 1)] += 100.0;
        assert!(relative_error(&b, &r).unwrap() > 0.0);
    }

    #[test]
    fn diverged_approximation_is_an_infinite_sentinel() {
        let r = reference();
        let mut states = r.states.clone();
        states.column_mut(3).fill(f64::NAN);
        let a = traj(states, TrajectoryStatus::Diverged { step: 3 });
        assert_eq!(relative_error(&a, &r).unwrap(), f64::INFINITY);
    }

    #[test]
    fn diverged_reference_is_a_hard_error() {
        let r = traj(reference().states, TrajectoryStatus::Diverged { step: 2 });
        let a = reference();
        assert!(matches!(
            relative_error(&a, &r),
            Err(Error::HdmDiverged { step: 2, .. })
        ));
    }

    #[test]
    fn mismatched_shapes_are_rejected() {
        let r = reference();
        let a = traj(DMatrix::zeros(3, 4), TrajectoryStatus::Converged);
        assert!(matches!(relative_error(&a, &r), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn statistics_follow_the_order_conventions() {
        let s = error_statistics(&[1.0, 2.0, 3.0]);
        assert_eq!((s.min, s.max, s.median), (Some(1.0), Some(3.0), Some(2.0)));
        assert_eq!((s.n_total, s.n_diverged), (3, 0));

        // Even count: lower-middle median.
        let s = error_statistics(&[4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.median, Some(2.0));

        // Single element: all three coincide.
        let s = error_statistics(&[0.7]);
        assert_eq!((s.min, s.max, s.median), (Some(0.7), Some(0.7), Some(0.7)));
    }

    #[test]
    fn diverged_entries_are_counted_but_excluded() {
        let s = error_statistics(&[0.5, f64::INFINITY, 0.1, f64::INFINITY]);
        assert_eq!(s.n_diverged, 2);
        assert_eq!((s.min, s.max, s.median), (Some(0.1), Some(0.5), Some(0.1)));

        let s = error_statistics(&[f64::INFINITY, f64::INFINITY]);
        assert_eq!(s.n_diverged, 2);
        assert_eq!((s.min, s.max, s.median), (None, None, None));

        let s = error_statistics(&[]);
        assert_eq!((s.n_total, s.n_diverged), (0, 0));
        assert_eq!(s.median, None);
    }
}
