//! Parametrized dynamical systems `M du/dt = f(u, t, mu)` and their
//! implicit time integration.
//!
//! The integrator is the two-stage, second-order, L-stable diagonally
//! implicit Runge-Kutta scheme (Alexander 1977) with
//! `gamma = 1 - sqrt(2)/2`:
//!
//! ```text
//!     gamma    | gamma      0
//!     1        | 1-gamma    gamma
//!     ---------+-----------------
//!              | 1-gamma    gamma
//! ```
//!
//! Stage velocities solve `M k_i = f(u_n + dt * sum_j a_ij k_j, t_n + c_i dt)`
//! by damped Newton ([`crate::newton`]), warm-started from the previously
//! accepted stage velocity.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{newton_matrix, Mass, SysMatrix};
use crate::newton::{newton_solve, NewtonFailure, NewtonOpts};

/// Diagonal Butcher coefficient of the DIRK2 scheme.
pub const DIRK2_GAMMA: f64 = 1.0 - std::f64::consts::FRAC_1_SQRT_2;

/// Stability function `R(z)` of the DIRK2 scheme applied to `u' = lambda u`
/// with `z = lambda * dt`.
pub fn dirk2_stability(z: f64) -> f64 {
    let g = DIRK2_GAMMA;
    (1.0 + (1.0 - 2.0 * g) * z) / ((1.0 - g * z) * (1.0 - g * z))
}

/// State-space description of a parametrized dynamical system.
///
/// Implementations must be cheap to share across threads; all evaluation
/// methods take `&self`.
pub trait OdeSystem: Send + Sync {
    /// State dimension.
    fn dim(&self) -> usize;
    /// Number of parameters.
    fn param_dim(&self) -> usize;
    /// Constant mass matrix (invertibility is checked at construction).
    fn mass(&self) -> &Mass;
    /// Initial state `u0`.
    fn initial_state(&self) -> DVector<f64>;
    /// Admissible parameter box, one `(low, high)` pair per parameter.
    fn param_box(&self) -> &[(f64, f64)];
    /// Velocity `f(u, t, mu)`.
    fn velocity(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64>;
    /// Jacobian `df/du (u, t, mu)`.
    fn jacobian(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix;
}

/// Dynamical system defined by user-supplied closures; mainly for tests and
/// small custom models.
pub struct GenericSystem<V, J>
where
    V: Fn(&DVector<f64>, f64, &[f64]) -> DVector<f64> + Send + Sync,
    J: Fn(&DVector<f64>, f64, &[f64]) -> SysMatrix + Send + Sync,
{
    mass: Mass,
    initial: DVector<f64>,
    param_box: Vec<(f64, f64)>,
    velocity: V,
    jacobian: J,
}

impl<V, J> GenericSystem<V, J>
where
    V: Fn(&DVector<f64>, f64, &[f64]) -> DVector<f64> + Send + Sync,
    J: Fn(&DVector<f64>, f64, &[f64]) -> SysMatrix + Send + Sync,
{
    pub fn new(
        initial: DVector<f64>,
        mass: Mass,
        param_box: Vec<(f64, f64)>,
        velocity: V,
        jacobian: J,
    ) -> Result<Self> {
        if mass.dim() != initial.len() {
            return Err(Error::DimensionMismatch(format!(
                "mass is {}x{0} but initial state has length {}",
                mass.dim(),
                initial.len()
            )));
        }
        mass.verify_invertible()?;
        Ok(GenericSystem { mass, initial, param_box, velocity, jacobian })
    }
}

impl<V, J> OdeSystem for GenericSystem<V, J>
where
    V: Fn(&DVector<f64>, f64, &[f64]) -> DVector<f64> + Send + Sync,
    J: Fn(&DVector<f64>, f64, &[f64]) -> SysMatrix + Send + Sync,
{
    fn dim(&self) -> usize {
        self.initial.len()
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
    fn velocity(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        (self.velocity)(state, t, mu)
    }
    fn jacobian(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix {
        (self.jacobian)(state, t, mu)
    }
}

/// Running totals of velocity and Jacobian evaluations.
#[derive(Debug, Default)]
pub struct EvalCounters {
    velocity: AtomicU64,
    jacobian: AtomicU64,
}

impl EvalCounters {
    /// `(velocity evaluations, jacobian evaluations)` so far.
    pub fn counts(&self) -> (u64, u64) {
        (self.velocity.load(Ordering::Relaxed), self.jacobian.load(Ordering::Relaxed))
    }

    pub fn reset(&self) {
        self.velocity.store(0, Ordering::Relaxed);
        self.jacobian.store(0, Ordering::Relaxed);
    }
}

/// Wrapper that counts every velocity/Jacobian evaluation of the inner
/// system. Used to demonstrate that non-intrusive surrogates never call the
/// full-order model.
pub struct Counted<S> {
    inner: S,
    counters: Arc<EvalCounters>,
}

impl<S: OdeSystem> Counted<S> {
    pub fn new(inner: S) -> Self {
        Counted { inner, counters: Arc::new(EvalCounters::default()) }
    }

    /// Shared handle to the counters; stays valid after the system is moved
    /// behind a trait object.
    pub fn counters(&self) -> Arc<EvalCounters> {
        Arc::clone(&self.counters)
    }

    pub fn inner(&self) -> &S {
        &self.inner
    }
}

impl<S: OdeSystem> OdeSystem for Counted<S> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn param_dim(&self) -> usize {
        self.inner.param_dim()
    }
    fn mass(&self) -> &Mass {
        self.inner.mass()
    }
    fn initial_state(&self) -> DVector<f64> {
        self.inner.initial_state()
    }
    fn param_box(&self) -> &[(f64, f64)] {
        self.inner.param_box()
    }
    fn velocity(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> DVector<f64> {
        self.counters.velocity.fetch_add(1, Ordering::Relaxed);
        self.inner.velocity(state, t, mu)
    }
    fn jacobian(&self, state: &DVector<f64>, t: f64, mu: &[f64]) -> SysMatrix {
        self.counters.jacobian.fetch_add(1, Ordering::Relaxed);
        self.inner.jacobian(state, t, mu)
    }
}

/// Strictly increasing time nodes `t_0 < t_1 < ... < t_N`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    nodes: Vec<f64>,
}

impl TimeGrid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidConfig("time grid needs at least two nodes".into()));
        }
        if !nodes.windows(2).all(|w| w[1] > w[0] && w[0].is_finite() && w[1].is_finite()) {
            return Err(Error::InvalidConfig("time grid must be strictly increasing".into()));
        }
        Ok(TimeGrid { nodes })
    }

    /// Uniform grid on `[0, t_end]` with `n_steps` steps.
    pub fn uniform(t_end: f64, n_steps: usize) -> Result<Self> {
        if t_end.is_nan() || t_end <= 0.0 || n_steps == 0 {
            return Err(Error::InvalidConfig(format!(
                "uniform grid requires t_end > 0 and n_steps > 0 (got {t_end}, {n_steps})"
            )));
        }
        let nodes = (0..=n_steps).map(|i| t_end * i as f64 / n_steps as f64).collect();
        Ok(TimeGrid { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of steps (`nodes - 1`).
    pub fn n_steps(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Outcome of a trajectory computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryStatus {
    Converged,
    /// Integration stopped at this step index (1-based, the step that failed).
    Diverged { step: usize },
}

/// Time-discrete solution; column `i` holds the state at node `t_i`.
///
/// For a diverged run, columns up to the failure step hold the last finite
/// states; later columns are NaN-filled.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: nalgebra::DMatrix<f64>,
    pub mu: Vec<f64>,
    pub status: TrajectoryStatus,
}

impl Trajectory {
    pub fn is_diverged(&self) -> bool {
        matches!(self.status, TrajectoryStatus::Diverged { .. })
    }

    pub fn state_at(&self, node: usize) -> DVector<f64> {
        DVector::from_column_slice(self.states.column(node).as_slice())
    }
}

/// Failure of a single DIRK2 step, carrying the failing stage and the Newton
/// residual at abort.
#[derive(Debug, Clone)]
pub struct StepFailure {
    pub stage: usize,
    pub newton: NewtonFailure,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.newton)
    }
}

fn solve_stage<S: OdeSystem + ?Sized>(
    system: &S,
    base: &DVector<f64>,
    t_stage: f64,
    dt: f64,
    mu: &[f64],
    guess: &DVector<f64>,
    opts: &NewtonOpts,
) -> std::result::Result<DVector<f64>, NewtonFailure> {
    let gamma = DIRK2_GAMMA;
    let mass = system.mass();
    let residual = |k: &DVector<f64>| {
        let z = base + k * (dt * gamma);
        mass.matvec(k) - system.velocity(&z, t_stage, mu)
    };
    let jacobian = |k: &DVector<f64>| {
        let z = base + k * (dt * gamma);
        newton_matrix(mass, &system.jacobian(&z, t_stage, mu), dt * gamma)
    };
    newton_solve(residual, jacobian, guess, opts).map(|s| s.x)
}

/// New state plus the two stage velocities of a successful step.
pub type StepOutput = (DVector<f64>, DVector<f64>, DVector<f64>);

/// One DIRK2 step from `(state, t)` to `t + dt`, returning the new state and
/// the two stage velocities (used to warm-start the next step).
pub fn dirk2_step_with_guess<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    dt: f64,
    state: &DVector<f64>,
    mu: &[f64],
    guesses: (&DVector<f64>, &DVector<f64>),
    opts: &NewtonOpts,
) -> std::result::Result<StepOutput, StepFailure> {
    let gamma = DIRK2_GAMMA;
    let k1 = solve_stage(system, state, t + gamma * dt, dt, mu, guesses.0, opts)
        .map_err(|newton| StepFailure { stage: 1, newton })?;
    let base2 = state + &k1 * (dt * (1.0 - gamma));
    let k2 = solve_stage(system, &base2, t + dt, dt, mu, guesses.1, opts)
        .map_err(|newton| StepFailure { stage: 2, newton })?;
    let next = state + &k1 * (dt * (1.0 - gamma)) + &k2 * (dt * gamma);
    Ok((next, k1, k2))
}

/// One DIRK2 step with zero stage-velocity guesses.
pub fn dirk2_step<S: OdeSystem + ?Sized>(
    system: &S,
    t: f64,
    dt: f64,
    state: &DVector<f64>,
    mu: &[f64],
    opts: &NewtonOpts,
) -> std::result::Result<DVector<f64>, StepFailure> {
    let zero = DVector::zeros(system.dim());
    dirk2_step_with_guess(system, t, dt, state, mu, (&zero, &zero), opts).map(|(u, _, _)| u)
}

fn check_mu<S: OdeSystem + ?Sized>(system: &S, mu: &[f64]) -> Result<()> {
    if mu.len() != system.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "system expects {} parameters, got {}",
            system.param_dim(),
            mu.len()
        )));
    }
    for (i, (&m, &(lo, hi))) in mu.iter().zip(system.param_box()).enumerate() {
        if m < lo || m > hi {
            log::warn!("parameter {i} = {m} outside admissible range [{lo}, {hi}]");
        }
    }
    Ok(())
}

/// Integrates the system over `grid` with the given Newton controls.
///
/// A run is marked diverged (and truncated) when a stage solve fails, a state
/// entry stops being finite, or `||u||` exceeds `1e6 * ||u0 + 1||`.
pub fn integrate_with<S: OdeSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    mu: &[f64],
    opts: &NewtonOpts,
) -> Result<Trajectory> {
    check_mu(system, mu)?;
    let n = system.dim();
    let nodes = grid.nodes();
    let mut states = nalgebra::DMatrix::from_element(n, nodes.len(), f64::NAN);
    let u0 = system.initial_state();
    if u0.len() != n {
        return Err(Error::DimensionMismatch("initial state length != system dim".into()));
    }
    let blowup_limit = 1e6 * u0.add_scalar(1.0).norm();
    states.set_column(0, &u0);
    let mut u = u0;
    let mut k1_guess = DVector::zeros(n);
    let mut k2_guess = DVector::zeros(n);
    let mut status = TrajectoryStatus::Converged;
    for step in 1..nodes.len() {
        let t = nodes[step - 1];
        let dt = nodes[step] - t;
        match dirk2_step_with_guess(system, t, dt, &u, mu, (&k2_guess, &k1_guess), opts) {
            Ok((next, k1, k2)) => {
                let finite = next.iter().all(|v| v.is_finite());
                if !finite || next.norm() > blowup_limit {
                    status = TrajectoryStatus::Diverged { step };
                    break;
                }
                states.set_column(step, &next);
                u = next;
                k1_guess = k1;
                k2_guess = k2;
            }
            Err(fail) => {
                log::debug!("step {step} at t={t}: {fail}");
                status = TrajectoryStatus::Diverged { step };
                break;
            }
        }
    }
    Ok(Trajectory { states, mu: mu.to_vec(), status })
}

/// Integrates with default Newton controls (`tol = 1e-10`, 25 iterations).
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    grid: &TimeGrid,
    mu: &[f64],
) -> Result<Trajectory> {
    integrate_with(system, grid, mu, &NewtonOpts::default())
}
