//! Fully implicit Runge-Kutta time integration for block-structured
//! semidiscrete systems `M du/dt = f(t, u)`.
//!
//! The stage equations are solved by Newton's method on the transformed
//! variables `W = (A ⊗ I) K`, so that every Newton linearization has the
//! form `A⁻¹ ⊗ M − Δt blkdiag(J₁, …, J_s)`. The linear systems are solved by
//! GMRES with block ILU(0)-family preconditioners.

pub mod dense;
pub mod exec;
pub mod krylov;
pub mod mesh_blocks;
pub mod precond;
pub mod problems;
pub mod stage_system;
pub mod stepper;
pub mod error;
pub mod quadrature;
pub mod tableaux;

pub use error::{Error, Result};
