//! Projection-based model reduction for parametrized nonlinear dynamical systems.
//!
//! The crate builds and evaluates reduced-order models (ROMs) of semi-discrete
//! systems of the form
//!
//! ```text
//!     M du/dt = f(u, t, mu),    u(0) = u0,
//! ```
//!
//! where `u` is the high-dimensional state, `M` a constant mass matrix and
//! `mu` a parameter vector. Three reduction tiers are provided:
//!
//! * [`galerkin`] — exact Galerkin projection onto a POD basis ([`pod`]),
//! * [`deim`] — discrete empirical interpolation of the nonlinear velocity,
//! * [`romnn`] — a non-intrusive surrogate that regresses the reduced velocity
//!   with a fully connected network ([`nn`]) and never calls back into the
//!   full-order model.
//!
//! Two full-order testbeds are included: a 1D viscous Burgers finite-element
//! model ([`burgers`]) and a 2D premixed-flame finite-difference model
//! ([`flame`]). All systems, full or reduced, implement the same
//! [`dynsys::OdeSystem`] interface and are integrated with the L-stable
//! two-stage DIRK scheme in [`dynsys`].

pub mod burgers;
pub mod deim;
pub mod dynsys;
pub mod error;
pub mod fd;
pub mod flame;
pub mod galerkin;
pub mod io;
pub mod linalg;
pub mod newton;
pub mod nn;
pub mod pod;
pub mod romnn;

pub use error::{Error, Result};
