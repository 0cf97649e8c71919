//! Numerical laboratory for the Poisson problem in randomly perforated
//! domains at the critical hole scaling `ε^{d/(d-2)}`.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] hole shapes and their placement,
//! * [`numerics`] grids, the masked Laplacian and conjugate gradients,
//! * [`capacity`] analytic and grid capacities,
//! * [`mpp`] marked point processes, thinning and the good/bad split,
//! * [`homogenize`] perforated and homogenized solves, correctors, studies,
//! * [`config`] the study configuration file.
//!
//! The geometric and numerical kernels are generic over [`Real`]; the
//! aliases below fix the scalar to `f64`, which is what the stochastic and
//! study layers use.

pub mod capacity;
pub mod config;
pub mod error;
pub mod geometry;
pub mod homogenize;
pub mod mpp;
pub mod numerics;
pub mod real;

pub use error::{Error, Result};
pub use real::{Real, Vec3};

/// Spatial dimension of every grid solve.
pub const DIM: usize = 3;

pub type Shape = geometry::HoleShape<f64>;
pub type Box3 = numerics::Aabb<f64>;
pub type Grid3 = numerics::Grid<f64>;
pub type Mask = numerics::NodeMask<f64>;
pub type Field = numerics::ScalarField<f64>;
