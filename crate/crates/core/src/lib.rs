//! Regularised few-body dynamics in quaternionic coordinates.
//!
//! The crate implements the simultaneous regularisation of binary
//! collisions for two and three bodies via the quaternionic squaring map,
//! and the reduction of the regularised dynamics to its quadratic
//! invariants:
//!
//! * [`quat`] - quaternion arithmetic, the KS map `q = Q * star(Q)`, its
//!   inverse lift, the bilinear constraint, the symmetry group action and
//!   its momenta;
//! * [`kepler`] - the n = 2 system: invariants `X1..X4`, their u(1,1)
//!   Lie-Poisson structure, and the 2x2 Lax pair;
//! * [`algebra`] - for m difference vectors, the 4m^2 quadratic invariants,
//!   the induced bracket on 2m x 2m matrices, the isomorphism to u(m, m),
//!   structure constants and Casimirs;
//! * [`dynamics`] - the regularised 3-body Hamiltonian, its canonical flow,
//!   and the equivalent reduced flows in Lax and structure-tensor form;
//! * [`verify`] - seeded property suites certifying the algebraic claims
//!   numerically.

pub mod algebra;
pub mod dynamics;
pub mod error;
pub mod kepler;
pub mod quat;
pub mod verify;

pub use error::{Error, Result};
