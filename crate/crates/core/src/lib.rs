//! Numerical laboratory for the fractional Neumann problem
//! `(−Δ)^s u = f` in `Ω`, `N_s u = 0` in `ℝ^N ∖ Ω`, and its regional variant.
//!
//! The crate assembles Galerkin systems for the bilinear form with the
//! transformed kernel `K_Ω`, solves the stationary and heat problems, and
//! provides pointwise checks of kernel estimates, barrier inequalities,
//! exterior extensions and boundary regularity.

pub mod assembly;
pub mod barriers1d;
pub mod cli;
pub mod error;
pub mod exterior;
pub mod field;
pub mod geometry;
pub mod kernels;
pub mod quadrature;
pub mod regularity;
pub mod solver;

pub use error::{Error, Result};
pub use field::{ScalarField, NodalField};
pub use geometry::{build_graded_mesh, DomainSpec, Mesh, Point, Shape};
pub use kernels::{KernelEvaluator, KernelSpec, KernelValue, Variant};
