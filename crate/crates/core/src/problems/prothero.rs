use std::sync::Arc;

use crate::mesh_blocks::{BlockDiagonalMatrix, BlockSparseMatrix, ElementGraph};

use super::SemidiscreteProblem;

/// `u' = λ (u − cos t) − sin t`, exact solution `cos t` from `u₀ = 1`.
#[derive(Clone, Debug)]
pub struct ProtheroRobinson {
    lambda: f64,
    u0: f64,
    graph: Arc<ElementGraph>,
    mass: Arc<BlockDiagonalMatrix>,
}

pub fn make_prothero_robinson(lambda: f64, u0: Option<f64>) -> ProtheroRobinson {
    ProtheroRobinson {
        lambda,
        u0: u0.unwrap_or(1.0),
        graph: Arc::new(ElementGraph::from_adjacency(vec![vec![]]).expect("single element")),
        mass: Arc::new(BlockDiagonalMatrix::identity(1, 1)),
    }
}

impl ProtheroRobinson {
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
}

impl SemidiscreteProblem for ProtheroRobinson {
    fn name(&self) -> String {
        format!("prothero-robinson(lambda={:e})", self.lambda)
    }

    fn graph(&self) -> &Arc<ElementGraph> {
        &self.graph
    }

    fn block_size(&self) -> usize {
        1
    }

    fn mass(&self) -> &Arc<BlockDiagonalMatrix> {
        &self.mass
    }

    fn rhs(&self, t: f64, u: &[f64]) -> Vec<f64> {
        vec![self.lambda * (u[0] - t.cos()) - t.sin()]
    }

    fn jacobian(&self, _t: f64, _u: &[f64]) -> BlockSparseMatrix {
        BlockSparseMatrix::from_fn(self.graph.clone(), 1, |_, _| vec![self.lambda])
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![self.u0]
    }

    fn exact(&self, t: f64) -> Option<Vec<f64>> {
        Some(vec![t.cos() + (self.lambda * t).exp() * (self.u0 - 1.0)])
    }
}
