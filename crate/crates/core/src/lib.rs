//! Variational solvers for the quasilinear nonlocal Dirichlet problem
//!
//! ```text
//! -divˢ( γ(|∇ˢu|²/2) ∇ˢu ) = f(u) + h   in Ω,      u = 0 in ℝᵈ \ Ω,
//! ```
//!
//! where `∇ˢ` is the Riesz fractional gradient of order `s ∈ (0, 1)` and
//! `divˢ` its dual divergence. The crate discretizes the operators on uniform
//! grids, evaluates the energy
//! `𝒥(u) = ∫Γ(|∇ˢu|²/2) - ∫F(u) - ∫hu` and its derivative, and searches for
//! non-negative critical points by cone-constrained descent and by a
//! discrete mountain-pass method.

pub mod cli;
pub mod coeffs;
pub mod energy;
pub mod error;
pub mod experiments;
pub mod fracops;
pub mod grid;
pub mod quadrature;
pub mod solvers;
pub mod spectral;

pub use error::{Error, Result};
