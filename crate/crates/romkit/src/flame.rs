//! 2D premixed-flame model: advection-diffusion-reaction equations for
//! fuel/oxidizer/product mass fractions and temperature on a rectangle,
//! finite differences on a uniform node grid (cm-g-s-K units).
//!
//! ```text
//!     dU/dt = kappa * lap(U) - beta . grad(U) + N(U; mu),   U = (Y_F, Y_O, Y_P, TH)
//! ```
//!
//! One-step reaction `nu_F F + nu_O O -> nu_P P` with Arrhenius rate; the
//! parameters are `mu = (A, E)` (pre-exponential factor and activation
//! energy). Boundary conditions: Dirichlet on the left edge (a hot reactant
//! inlet on a segment, cold walls elsewhere), homogeneous Neumann on the
//! bottom/right/top edges.
//!
//! The unknown vector holds the four fields at the `(nx-2) x (ny-2)` interior
//! nodes; boundary nodes are eliminated — by substitution of the Dirichlet
//! data on the left, and by first-order mirror ghosts (boundary value equals
//! the adjacent interior value) on the Neumann edges. With the default
//! 40 x 20 node grid this gives exactly 4 * 38 * 18 = 2736 unknowns. The mass
//! matrix is the identity. Diffusion uses central differences; convection is
//! first-order upwind by default (central optional).

use nalgebra::{DMatrix, DVector};

use crate::dynsys::OdeSystem;
use crate::error::{Error, Result};
use crate::linalg::{BandMat, Mass, SysMatrix};

/// Universal gas constant in J/(mol K).
pub const GAS_CONSTANT: f64 = 8.314472;

/// Admissible parameter box: pre-exponential factor `A`, activation energy `E`.
pub const PARAM_BOX: [(f64, f64); 2] = [(2.3375e12, 6.2e12), (5625.5, 9000.0)];

/// Default final time of the benchmark transient (seconds).
pub const DEFAULT_T_END: f64 = 0.06;
/// Default number of uniform time steps.
pub const DEFAULT_N_STEPS: usize = 50;

/// Geometry, transport and kinetics constants of the flame model.
#[derive(Debug, Clone, PartialEq)]
pub struct FlameConfig {
    /// Grid nodes in x (including both boundary columns).
    pub nx: usize,
    /// Grid nodes in y (including both boundary rows).
    pub ny: usize,
    /// Domain size in cm.
    pub lx: f64,
    pub ly: f64,
    /// Diffusivity (cm^2/s), shared by all fields.
    pub kappa: f64,
    /// Convection velocity (cm/s).
    pub beta: (f64, f64),
    /// Density (g/cm^3).
    pub rho: f64,
    /// Molecular weights of fuel, oxidizer, product (g/mol).
    pub mol_weight: [f64; 3],
    /// Stoichiometric coefficients (nu_F, nu_O, nu_P).
    pub stoich: [u32; 3],
    /// Heat release per unit product rate (K).
    pub q: f64,
    /// Inlet segment on the left edge, y in [inlet_y.0, inlet_y.1] (cm).
    pub inlet_y: (f64, f64),
    /// Dirichlet values on the inlet segment: (Y_F, Y_O, Y_P, temperature).
    pub inlet_value: [f64; 4],
    /// Dirichlet values on the remaining left-edge wall.
    pub wall_value: [f64; 4],
    /// Uniform initial state.
    pub initial_value: [f64; 4],
    /// First-order upwind convection if true, central differences otherwise.
    pub upwind: bool,
}

impl Default for FlameConfig {
    fn default() -> Self {
        FlameConfig {
            nx: 40,
            ny: 20,
            lx: 1.8,
            ly: 0.9,
            kappa: 2.0,
            beta: (50.0, 0.0),
            rho: 1.39e-3,
            mol_weight: [2.016, 31.9, 18.0],
            stoich: [2, 1, 2],
            q: 9800.0,
            inlet_y: (0.3, 0.6),
            inlet_value: [0.0282, 0.2259, 0.0, 950.0],
            wall_value: [0.0, 0.0, 0.0, 300.0],
            initial_value: [0.0, 0.0, 0.0, 300.0],
            upwind: true,
        }
    }
}

/// Finite-difference flame system over the interior-node field values.
pub struct FlameSystem {
    cfg: FlameConfig,
    n_in_x: usize,
    n_in_y: usize,
    hx: f64,
    hy: f64,
    /// Constant linear part (diffusion + convection with boundary folds).
    lin: BandMat,
    /// Constant load from the Dirichlet column.
    load: DVector<f64>,
    mass: Mass,
    initial: DVector<f64>,
    param_box: Vec<(f64, f64)>,
}

impl FlameSystem {
    pub fn new(cfg: FlameConfig) -> Result<Self> {
        if cfg.nx < 4 || cfg.ny < 4 {
            return Err(Error::InvalidConfig(format!(
                "flame grid needs nx, ny >= 4 nodes, got {} x {}",
                cfg.nx, cfg.ny
            )));
        }
        if !(cfg.lx > 0.0 && cfg.ly > 0.0 && cfg.kappa >= 0.0 && cfg.rho > 0.0) {
            return Err(Error::InvalidConfig("flame geometry/transport must be positive".into()));
        }
        let n_in_x = cfg.nx - 2;
        let n_in_y = cfg.ny - 2;
        let n = 4 * n_in_x * n_in_y;
        let hx = cfg.lx / (cfg.nx - 1) as f64;
        let hy = cfg.ly / (cfg.ny - 1) as f64;
        let bw = 4 * n_in_y;
        let mut lin = BandMat::zeros(n, bw, bw);
        let mut load = DVector::zeros(n);

        let (bx, by) = cfg.beta;
        // Per-axis stencil coefficients (applied to every field):
        // diffusion plus the chosen convection discretization.
        let (cw, ce, cdx) = axis_coeffs(cfg.kappa, bx, hx, cfg.upwind);
        let (cs, cn, cdy) = axis_coeffs(cfg.kappa, by, hy, cfg.upwind);

        for ii in 0..n_in_x {
            let i = ii + 1; // grid i-index
            for jj in 0..n_in_y {
                let j = jj + 1;
                for c in 0..4 {
                    let row = idx_of(n_in_y, ii, jj, c);
                    lin.add(row, row, cdx + cdy);
                    // West neighbor: Dirichlet column when i == 1.
                    if i == 1 {
                        load[row] += cw * dirichlet_value(&cfg, hy, j)[c];
                    } else {
                        lin.add(row, idx_of(n_in_y, ii - 1, jj, c), cw);
                    }
                    // East neighbor: Neumann mirror when i == nx-2.
                    if i == cfg.nx - 2 {
                        lin.add(row, row, ce);
                    } else {
                        lin.add(row, idx_of(n_in_y, ii + 1, jj, c), ce);
                    }
                    // South neighbor: Neumann mirror when j == 1.
                    if j == 1 {
                        lin.add(row, row, cs);
                    } else {
                        lin.add(row, idx_of(n_in_y, ii, jj - 1, c), cs);
                    }
                    // North neighbor: Neumann mirror when j == ny-2.
                    if j == cfg.ny - 2 {
                        lin.add(row, row, cn);
                    } else {
                        lin.add(row, idx_of(n_in_y, ii, jj + 1, c), cn);
                    }
                }
            }
        }

        let initial = DVector::from_fn(n, |k, _| cfg.initial_value[k % 4]);
        Ok(FlameSystem {
            cfg,
            n_in_x,
            n_in_y,
            hx,
            hy,
            lin,
            load,
            mass: Mass::Identity(n),
            initial,
            param_box: PARAM_BOX.to_vec(),
        })
    }

    pub fn config(&self) -> &FlameConfig {
        &self.cfg
    }

    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    /// Number of unknowns, `4 * (nx-2) * (ny-2)`.
    pub fn n_unknowns(&self) -> usize {
        4 * self.n_in_x * self.n_in_y
    }

    /// Dirichlet data at left-edge node row `j` (0-based grid index).
    pub fn dirichlet_value(&self, j: usize) -> [f64; 4] {
        dirichlet_value(&self.cfg, self.hy, j)
    }

    /// Constant linear operator (diffusion + convection, boundary folds
    /// applied). The velocity is `L u + b + N(u; mu)` with `b` the
    /// [`Self::boundary_load`].
    pub fn linear_operator(&self) -> &BandMat {
        &self.lin
    }

    /// Constant load vector carrying the Dirichlet boundary data.
    pub fn boundary_load(&self) -> &DVector<f64> {
        &self.load
    }

    /// Reaction source `N(U; A, E)` at one node state `(Y_F, Y_O, Y_P, TH)`.
    ///
    /// Fuel and oxidizer rates are negative (consumption), product rate
    /// positive, and the temperature rate is `q` times the product rate. The
    /// temperature inside the Arrhenius exponential is floored at 1 K.
    pub fn reaction(&self, u: [f64; 4], mu: &[f64]) -> [f64; 4] {
        let c = &self.cfg;
        let (a, e) = (mu[0], mu[1]);
        let [wf, wo, wp] = c.mol_weight;
        let [nf, no, np] = c.stoich;
        let cf = c.rho * u[0] / wf;
        let co = c.rho * u[1] / wo;
        let theta = u[3].max(1.0);
        let rate = cf.powi(nf as i32) * co.powi(no as i32) * a * (-e / (GAS_CONSTANT * theta)).exp();
        let n_p = np as f64 * (wp / c.rho) * rate;
        [
            -(nf as f64) * (wf / c.rho) * rate,
            -(no as f64) * (wo / c.rho) * rate,
            n_p,
            c.q * n_p,
        ]
    }

    /// Analytic 4x4 Jacobian of [`Self::reaction`] with respect to the node
    /// state.
    pub fn reaction_jacobian(&self, u: [f64; 4], mu: &[f64]) -> [[f64; 4]; 4] {
        let c = &self.cfg;
        let (a, e) = (mu[0], mu[1]);
        let [wf, wo, wp] = c.mol_weight;
        let [nf, no, np] = c.stoich;
        let cf = c.rho * u[0] / wf;
        let co = c.rho * u[1] / wo;
        let theta = u[3].max(1.0);
        let ex = (-e / (GAS_CONSTANT * theta)).exp();
        let rate = cf.powi(nf as i32) * co.powi(no as i32) * a * ex;
        let dr_dyf =
            nf as f64 * cf.powi(nf as i32 - 1) * (c.rho / wf) * co.powi(no as i32) * a * ex;
        let dr_dyo =
            cf.powi(nf as i32) * no as f64 * co.powi(no as i32 - 1) * (c.rho / wo) * a * ex;
        let dr_dth = if u[3] > 1.0 { rate * e / (GAS_CONSTANT * theta * theta) } else { 0.0 };
        let coef = [
            -(nf as f64) * (wf / c.rho),
            -(no as f64) * (wo / c.rho),
            np as f64 * (wp / c.rho),
            c.q * np as f64 * (wp / c.rho),
        ];
        let mut jac = [[0.0; 4]; 4];
        for (r, &k) in coef.iter().enumerate() {
            jac[r][0] = k * dr_dyf;
            jac[r][1] = k * dr_dyo;
            jac[r][3] = k * dr_dth;
        }
        jac
    }

    /// Full-grid view of one field (ny rows by nx columns) with boundary
    /// nodes reconstructed from the Dirichlet data and Neumann mirrors.
    /// Intended for field dumps and plotting.
    pub fn full_grid(&self, state: &DVector<f64>, field: usize) -> DMatrix<f64> {
        assert!(field < 4);
        let (nx, ny) = (self.cfg.nx, self.cfg.ny);
        let mut g = DMatrix::zeros(ny, nx);
        for ii in 0..self.n_in_x {
            for jj in 0..self.n_in_y {
                g[(jj + 1, ii + 1)] = state[idx_of(self.n_in_y, ii, jj, field)];
            }
        }
        for j in 1..ny - 1 {
            g[(j, 0)] = self.dirichlet_value(j)[field];
            g[(j, nx - 1)] = g[(j, nx - 2)];
        }
        for i in 1..nx - 1 {
            g[(0, i)] = g[(1, i)];
            g[(ny - 1, i)] = g[(ny - 2, i)];
        }
        g[(0, 0)] = self.dirichlet_value(0)[field];
        g[(ny - 1, 0)] = self.dirichlet_value(ny - 1)[field];
        g[(0, nx - 1)] = g[(1, nx - 2)];
        g[(ny - 1, nx - 1)] = g[(ny - 2, nx - 2)];
        g
    }
}

/// Stencil coefficients for one axis: `(upstream, downstream, diagonal)`
/// contributions of diffusion plus convection with velocity `b` and spacing
/// `h`. "Upstream" is the negative-direction neighbor (west or south).
fn axis_coeffs(kappa: f64, b: f64, h: f64, upwind: bool) -> (f64, f64, f64) {
    let diff = kappa / (h * h);
    let mut up = diff;
    let mut down = diff;
    let mut diag = -2.0 * diff;
    if upwind {
        if b >= 0.0 {
            // -b (u_i - u_{i-1}) / h
            up += b / h;
            diag -= b / h;
        } else {
            // -b (u_{i+1} - u_i) / h
            down -= b / h;
            diag += b / h;
        }
    } else {
        // -b (u_{i+1} - u_{i-1}) / (2h)
        up += b / (2.0 * h);
        down -= b / (2.0 * h);
    }
    (up, down, diag)
}

#[inline]
fn idx_of(n_in_y: usize, ii: usize, jj: usize, c: usize) -> usize {
    4 * (ii * n_in_y + jj) + c
}

fn dirichlet_value(cfg: &FlameConfig, hy: f64, j: usize) -> [f64; 4] {
    let y = j as f64 * hy;
    let tol = 1e-9 * cfg.ly;
    if y >= cfg.inlet_y.0 - tol && y <= cfg.inlet_y.1 + tol {
        cfg.inlet_value
    } else {
        cfg.wall_value
    }
}

impl OdeSystem for FlameSystem {
    fn dim(&self) -> usize {
        self.n_unknowns()
    }
    fn param_dim(&self) -> usize {
        2
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
        let mut v = self.lin.matvec(state) + &self.load;
        for node in 0..self.n_in_x * self.n_in_y {
            let k = 4 * node;
            let u4 = [state[k], state[k + 1], state[k + 2], state[k + 3]];
            let r = self.reaction(u4, mu);
            for c in 0..4 {
                v[k + c] += r[c];
            }
        }
        v
    }

    fn jacobian(&self, state: &DVector<f64>, _t: f64, mu: &[f64]) -> SysMatrix {
        let mut jac = self.lin.clone();
        for node in 0..self.n_in_x * self.n_in_y {
            let k = 4 * node;
            let u4 = [state[k], state[k + 1], state[k + 2], state[k + 3]];
            let block = self.reaction_jacobian(u4, mu);
            for (r, row) in block.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    if v != 0.0 {
                        jac.add(k + r, k + c, v);
                    }
                }
            }
        }
        SysMatrix::Band(jac)
    }
}
