//! Damped Newton iteration for nonlinear systems `r(x) = 0`.

use nalgebra::DVector;

use crate::linalg::SysMatrix;

/// Iteration controls for [`newton_solve`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOpts {
    /// Convergence threshold: `||r(x)|| <= tol * max(1, ||r(x0)||)`.
    pub tol: f64,
    /// Maximum Newton iterations before giving up.
    pub max_iter: usize,
    /// Maximum step halvings per iteration when the residual fails to decrease.
    pub max_halvings: usize,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts { tol: 1e-10, max_iter: 25, max_halvings: 10 }
    }
}

/// Converged Newton result.
#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

/// Non-convergence signal carrying the final residual norm.
#[derive(Debug, Clone)]
pub struct NewtonFailure {
    pub last_residual_norm: f64,
    pub iterations: usize,
    /// Set when an iterate or residual stopped being finite.
    pub non_finite: bool,
}

impl std::fmt::Display for NewtonFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "newton did not converge after {} iterations (last residual {:.3e}{})",
            self.iterations,
            self.last_residual_norm,
            if self.non_finite { ", non-finite" } else { "" }
        )
    }
}

/// Solves `r(x) = 0` by damped Newton iteration with direct linear solves.
///
/// `jacobian` must return the Jacobian of `r` at the given iterate. Each step
/// solves `J d = -r` and applies `x + s*d`, halving `s` up to
/// `opts.max_halvings` times while the residual norm fails to decrease; if no
/// halving helps, the smallest tried step is taken anyway so the iteration can
/// cross non-smooth regions. Convergence is declared when
/// `||r(x)|| <= tol * max(1, ||r(x0)||)`.
pub fn newton_solve(
    residual: impl Fn(&DVector<f64>) -> DVector<f64>,
    jacobian: impl Fn(&DVector<f64>) -> SysMatrix,
    guess: &DVector<f64>,
    opts: &NewtonOpts,
) -> Result<NewtonSolution, NewtonFailure> {
    let mut x = guess.clone();
    let mut r = residual(&x);
    let mut rnorm = r.norm();
    let target = opts.tol * rnorm.max(1.0);
    if !rnorm.is_finite() {
        return Err(NewtonFailure { last_residual_norm: rnorm, iterations: 0, non_finite: true });
    }
    if rnorm <= target {
        return Ok(NewtonSolution { x, residual_norm: rnorm, iterations: 0 });
    }
    for it in 1..=opts.max_iter {
        let step = match jacobian(&x).factorize().and_then(|f| f.solve(&(-&r))) {
            Ok(d) => d,
            Err(_) => {
                return Err(NewtonFailure {
                    last_residual_norm: rnorm,
                    iterations: it,
                    non_finite: false,
                })
            }
        };
        let mut scale = 1.0;
        let mut best: Option<(DVector<f64>, DVector<f64>, f64)> = None;
        for _ in 0..=opts.max_halvings {
            let cand = &x + &step * scale;
            let rc = residual(&cand);
            let rcn = rc.norm();
            if rcn.is_finite() && rcn < rnorm {
                best = Some((cand, rc, rcn));
                break;
            }
            if best.is_none() && rcn.is_finite() {
                // Remember the last finite iterate in case no step decreases.
                best = Some((cand, rc, rcn));
            } else if let Some((_, _, bn)) = &best {
                if rcn.is_finite() && rcn < *bn {
                    best = Some((cand, rc, rcn));
                }
            }
            scale *= 0.5;
        }
        match best {
            Some((cand, rc, rcn)) => {
                x = cand;
                r = rc;
                rnorm = rcn;
            }
            None => {
                return Err(NewtonFailure {
                    last_residual_norm: rnorm,
                    iterations: it,
                    non_finite: true,
                })
            }
        }
        if !x.iter().all(|v| v.is_finite()) {
            return Err(NewtonFailure { last_residual_norm: rnorm, iterations: it, non_finite: true });
        }
        if rnorm <= target {
            return Ok(NewtonSolution { x, residual_norm: rnorm, iterations: it });
        }
    }
    Err(NewtonFailure { last_residual_norm: rnorm, iterations: opts.max_iter, non_finite: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn scalar(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    #[test]
    fn quadratic_root_from_nearby_guess() {
        // x^2 - 4 = 0 from x0 = 3 -> 2, quadratic convergence.
        let sol = newton_solve(
            |x| scalar(x[0] * x[0] - 4.0),
            |x| SysMatrix::Dense(DMatrix::from_element(1, 1, 2.0 * x[0])),
            &scalar(3.0),
            &NewtonOpts { tol: 1e-13, ..NewtonOpts::default() },
        )
        .unwrap();
        assert!((sol.x[0] - 2.0).abs() <= 1e-12);
        assert!(sol.iterations <= 8, "expected fast convergence, got {}", sol.iterations);
    }

    #[test]
    fn rootless_quadratic_reports_failure_with_residual() {
        // x^2 + 1 = 0 has no real root; expect a non-convergence signal
        // carrying the final residual (here the solver bottoms out at x = 0
        // where the Jacobian is singular).
        let err = newton_solve(
            |x| scalar(x[0] * x[0] + 1.0),
            |x| SysMatrix::Dense(DMatrix::from_element(1, 1, 2.0 * x[0])),
            &scalar(1.0),
            &NewtonOpts::default(),
        )
        .unwrap_err();
        assert!(err.last_residual_norm >= 1.0); // x^2 + 1 >= 1 always
        assert!(err.iterations <= NewtonOpts::default().max_iter);
    }

    #[test]
    fn converged_guess_returns_immediately() {
        let sol = newton_solve(
            |x| scalar(x[0] * x[0] - 4.0),
            |x| SysMatrix::Dense(DMatrix::from_element(1, 1, 2.0 * x[0])),
            &scalar(2.0),
            &NewtonOpts::default(),
        )
        .unwrap();
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn line_search_rescues_overshooting_steps() {
        // atan has tiny far-field slope; undamped Newton from x0=4 overshoots
        // and diverges, damping converges.
        let sol = newton_solve(
            |x| scalar(x[0].atan()),
            |x| SysMatrix::Dense(DMatrix::from_element(1, 1, 1.0 / (1.0 + x[0] * x[0]))),
            &scalar(4.0),
            &NewtonOpts { tol: 1e-12, max_iter: 50, max_halvings: 10 },
        )
        .unwrap();
        assert!(sol.x[0].abs() < 1e-10);
    }

    #[test]
    fn two_dimensional_system() {
        // x^2 + y^2 = 2, x - y = 0 -> (1, 1) from (2, 0.5).
        let res = |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] * x[0] + x[1] * x[1] - 2.0, x[0] - x[1]])
        };
        let jac = |x: &DVector<f64>| {
            SysMatrix::Dense(DMatrix::from_row_slice(2, 2, &[2.0 * x[0], 2.0 * x[1], 1.0, -1.0]))
        };
        let sol = newton_solve(res, jac, &DVector::from_vec(vec![2.0, 0.5]), &NewtonOpts::default())
            .unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-10 && (sol.x[1] - 1.0).abs() < 1e-10);
    }
}
