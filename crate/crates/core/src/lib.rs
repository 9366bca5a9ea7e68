//! Generalised vector systems on the k-dimensional torus.
//!
//! A system is a pair of maps on the universal cover `E_k = R^k`: the
//! time-one map `psi` and a unit-interval interpolant `phi_unit` with
//! `phi_unit(0, x) = x` and `phi_unit(1, x) = psi(x)`. Both commute with
//! integer translations, so everything lives on the torus `R^k / Z^k`.
//!
//! The crate is split by capability:
//!
//! - [`vecspace`]: vectors with the max-norm, the componentwise semi-order
//!   and extremal elements of finite sets.
//! - [`system`]: system definitions, structural validation and the built-in
//!   translation and sine-coupled systems.
//! - [`iteration`]: orbits, rotation-vector sequences, rotation-set
//!   estimation and periodic-point detection.
//! - [`flow`]: continuous-time reconstruction from `(psi, phi_unit)`, the
//!   bounded remainder and mean motion.
//! - [`jacobian`]: finite-difference and chained Jacobians, singular-point
//!   scans and injectivity diagnostics.

pub mod error;
pub mod flow;
pub mod iteration;
pub mod jacobian;
pub mod system;
pub mod vecspace;

pub use error::{Error, Result};
pub use jacobian::JacobianMatrix;
pub use system::SystemDefinition;
pub use vecspace::{IntegerVector, OrderRelation, Vector};
