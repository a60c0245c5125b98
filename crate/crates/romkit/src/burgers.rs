//! 1D viscous Burgers equation on (0, 1) with homogeneous Dirichlet ends,
//! discretized with linear finite elements on a uniform mesh.
//!
//! ```text
//!     u_t + u u_x = mu1 * u_xx + mu2 * exp(mu3 * x),   u(0) = u(1) = 0,
//! ```
//!
//! parameters `mu = (viscosity, source amplitude, source growth rate)`.
//! The semi-discrete system over the interior nodal values is
//!
//! ```text
//!     M du/dt = -C(u) - mu1 * S u + b(mu2, mu3)
//! ```
//!
//! with consistent tridiagonal mass `M`, stiffness `S` (from the viscous
//! term), the non-conservative convection vector `C(u)_i = ∫ u_h u_h' φ_i`
//! (piecewise-linear `u_h`, evaluated in closed form — the integrand is
//! quadratic per element), and the source load `b_i = ∫ g φ_i` by two-point
//! Gauss quadrature per element. The initial state is `u ≡ 0`.

use nalgebra::DVector;

use crate::dynsys::OdeSystem;
use crate::error::{Error, Result};
use crate::linalg::{BandMat, Mass, SysMatrix};

/// Admissible parameter box: viscosity, source amplitude, source growth rate.
pub const PARAM_BOX: [(f64, f64); 3] = [(0.01, 0.1), (2.0, 3.0), (0.0, 1.0)];

/// Default number of elements (199 interior unknowns).
pub const DEFAULT_N_ELEMENTS: usize = 200;
/// Default final time of the benchmark transient.
pub const DEFAULT_T_END: f64 = 1.0;
/// Default number of uniform time steps.
pub const DEFAULT_N_STEPS: usize = 100;

/// Source term `g(x, mu) = mu2 * exp(mu3 * x)`.
pub fn source_value(x: f64, mu2: f64, mu3: f64) -> f64 {
    mu2 * (mu3 * x).exp()
}

/// Finite-element Burgers system over the interior nodal values.
pub struct BurgersSystem {
    n_elements: usize,
    h: f64,
    mass: Mass,
    /// Stiffness `S` with `S_ii = 2/h`, `S_{i,i±1} = -1/h` (viscous term
    /// enters the velocity as `-mu1 * S u`).
    stiffness: BandMat,
    initial: DVector<f64>,
    param_box: Vec<(f64, f64)>,
}

impl BurgersSystem {
    pub fn new(n_elements: usize) -> Result<Self> {
        if n_elements < 2 {
            return Err(Error::InvalidConfig(format!(
                "burgers mesh needs at least 2 elements, got {n_elements}"
            )));
        }
        let n = n_elements - 1; // interior nodes
        let h = 1.0 / n_elements as f64;
        let mut mass = BandMat::zeros(n, 1, 1);
        let mut stiffness = BandMat::zeros(n, 1, 1);
        for i in 0..n {
            mass.set(i, i, 2.0 * h / 3.0);
            stiffness.set(i, i, 2.0 / h);
            if i + 1 < n {
                mass.set(i, i + 1, h / 6.0);
                mass.set(i + 1, i, h / 6.0);
                stiffness.set(i, i + 1, -1.0 / h);
                stiffness.set(i + 1, i, -1.0 / h);
            }
        }
        let mass = Mass::Band(mass);
        mass.verify_invertible()?;
        Ok(BurgersSystem {
            n_elements,
            h,
            mass,
            stiffness,
            initial: DVector::zeros(n),
            param_box: PARAM_BOX.to_vec(),
        })
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    /// Mesh spacing.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Coordinate of interior node `i` (`i = 0` is the node at `x = h`).
    pub fn node_x(&self, i: usize) -> f64 {
        (i + 1) as f64 * self.h
    }

    /// Load vector `b_i = ∫ g(x, mu) φ_i dx` by two-point Gauss quadrature
    /// per element.
    pub fn source_load(&self, mu2: f64, mu3: f64) -> DVector<f64> {
        let n = self.dim();
        let h = self.h;
        let mut b = DVector::zeros(n);
        // Gauss points on the reference element [0, 1]: 1/2 ± 1/(2√3).
        let offs = 0.5 / 3.0f64.sqrt();
        let pts = [0.5 - offs, 0.5 + offs];
        for el in 0..self.n_elements {
            let x_left = el as f64 * h;
            for &xi in &pts {
                let x = x_left + xi * h;
                let w = 0.5 * h; // both Gauss weights are 1 on [0, 1]
                let g = source_value(x, mu2, mu3);
                // Left node of element el is interior node el-1; right is el.
                if el > 0 {
                    b[el - 1] += w * g * (1.0 - xi);
                }
                if el < self.n_elements - 1 {
                    b[el] += w * g * xi;
                }
            }
        }
        b
    }

    /// Convection vector `C(u)_i = ∫ u_h u_h' φ_i` in closed form, with
    /// zero Dirichlet values at both ends.
    fn convection(&self, u: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= n {
                0.0
            } else {
                u[i as usize]
            }
        };
        DVector::from_fn(n, |i, _| {
            let (um, ui, up) = (at(i as isize - 1), u[i], at(i as isize + 1));
            (ui - um) * (um + 2.0 * ui) / 6.0 + (up - ui) * (2.0 * ui + up) / 6.0
        })
    }

    /// Embeds interior values into the full nodal field (Dirichlet zeros at
    /// both boundary nodes).
    pub fn full_field(&self, interior: &DVector<f64>) -> DVector<f64> {
        let mut full = DVector::zeros(self.n_elements + 1);
        full.rows_mut(1, interior.len()).copy_from(interior);
        full
    }

    /// The stiffness matrix `S` (for tests and reduced-operator checks).
    pub fn stiffness(&self) -> &BandMat {
        &self.stiffness
    }
}

impl OdeSystem for BurgersSystem {
    fn dim(&self) -> usize {
        self.n_elements - 1
    }
    fn param_dim(&self) -> usize {
        3
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

    fn velocity(&self, state: &DVector<f64>, _t: f64, mu: &[f64]) -> DVector<f64> {
        assert_eq!(state.len(), self.dim(), "state length mismatch");
        let visc = self.stiffness.matvec(state) * (-mu[0]);
        -self.convection(state) + visc + self.source_load(mu[1], mu[2])
    }

    fn jacobian(&self, state: &DVector<f64>, _t: f64, mu: &[f64]) -> SysMatrix {
        let n = self.dim();
        let at = |i: isize| -> f64 {
            if i < 0 || i as usize >= n {
                0.0
            } else {
                state[i as usize]
            }
        };
        let mut jac = BandMat::zeros(n, 1, 1);
        for i in 0..n {
            let (um, ui, up) = (at(i as isize - 1), state[i], at(i as isize + 1));
            // d(-C)/du minus mu1 * S.
            if i > 0 {
                jac.set(i, i - 1, (2.0 * um + ui) / 6.0 - mu[0] * self.stiffness.get(i, i - 1));
            }
            jac.set(i, i, -(up - um) / 6.0 - mu[0] * self.stiffness.get(i, i));
            if i + 1 < n {
                jac.set(i, i + 1, -(ui + 2.0 * up) / 6.0 - mu[0] * self.stiffness.get(i, i + 1));
            }
        }
        SysMatrix::Band(jac)
    }
}
