//! Penalized trivariate splines on tetrahedral partitions.
//!
//! The crate fits a smooth field to noisy scattered observations inside a
//! tetrahedralized 3D domain. A fit is a piecewise polynomial in Bernstein-Bezier
//! form, one block of coefficients per tetrahedron, tied together by linear
//! smoothness constraints across interior faces and regularized by an
//! integrated squared second-derivative penalty.
//!
//! Module map:
//! - [`mesh`]: tetrahedral partitions, validation, point location, quality.
//! - [`bernstein`]: basis layout, evaluation, derivative and mass matrices.
//! - [`field`]: spline fields (global coefficient vectors) and polynomial oracles.
//! - [`smoothness`]: the constraint matrix `H` with `H * gamma = 0`.
//! - [`penalty`]: per-tetrahedron roughness penalty blocks.
//! - [`solver`]: constrained penalized least squares, GCV and block CV.
//! - [`adaptive`]: total-variation weighted refits.
//! - [`sim`]: seeded simulation harness.

pub mod adaptive;
pub mod bernstein;
mod error;
pub mod field;
pub mod io;
pub mod mesh;
pub mod penalty;
pub mod quadrature;
pub mod sim;
pub mod smoothness;
pub mod solver;

pub use error::{Error, Result};
pub use mesh::{Point3, TetMesh};
