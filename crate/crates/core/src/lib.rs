//! Penalty finite element method for the 2D incompressible Navier-Stokes
//! equations on the unit square.
//!
//! The incompressibility constraint is relaxed to `nu div u + eps p = 0`,
//! discretized with Taylor-Hood (P2-P1, P3-P2) or Crouzeix-Raviart (CR-P0)
//! pairs and marched in time with backward Euler. Convection uses the
//! energy-neutral skew-symmetric form.

pub mod analysis;
pub mod assembly;
pub mod error;
pub mod fespace;
pub mod harness;
pub mod mesh;
pub mod solver;
pub mod sparse;
pub mod stepper;

pub use assembly::{DirichletBc, OperatorSet};
pub use error::{Error, Result};
pub use fespace::{ElementFamily, ElementPair, FeSpace};
pub use mesh::Mesh;
pub use sparse::SparseMatrix;
