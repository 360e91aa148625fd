//! Semidiscrete test problems `M du/dt = f(t, u)` with block-sparse Jacobians.

use std::sync::Arc;

use crate::mesh_blocks::{BlockDiagonalMatrix, BlockSparseMatrix, ElementGraph};

mod dg;
mod linear;
mod prothero;

pub use dg::{make_advection_diffusion_dg, make_viscous_burgers_mms, Dg1d, Dg1dConfig, InitialData, MmsSolution};
pub use linear::{make_linear_block_ode, LinearBlockOde, LinearOdeSpec};
pub use prothero::{make_prothero_robinson, ProtheroRobinson};

pub trait SemidiscreteProblem: Send + Sync {
    fn name(&self) -> String;

    fn graph(&self) -> &Arc<ElementGraph>;

    fn block_size(&self) -> usize;

    fn dim(&self) -> usize {
        self.graph().num_elements() * self.block_size()
    }

    fn mass(&self) -> &Arc<BlockDiagonalMatrix>;

    fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64>;

    /// `∂f/∂u` on the graph pattern.
    fn jacobian(&self, t: f64, u: &[f64]) -> BlockSparseMatrix;

    fn initial_state(&self) -> Vec<f64>;

    /// Reference solution at the degrees of freedom, when one is known.
    fn exact(&self, _t: f64) -> Option<Vec<f64>> {
        None
    }
}
