use std::sync::Arc;

use irk_core::problems::{
    make_advection_diffusion_dg, make_linear_block_ode, make_prothero_robinson, make_viscous_burgers_mms,
    Dg1dConfig, LinearOdeSpec, MmsSolution, SemidiscreteProblem,
};
use serde::{Deserialize, Serialize};

/// A buildable test problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Linear(LinearOdeSpec),
    Advection(Dg1dConfig),
    Burgers { dg: Dg1dConfig, solution: MmsSolution },
    Prothero { lambda: f64, u0: Option<f64> },
}

impl ProblemSpec {
    pub fn build(&self) -> irk_core::Result<Arc<dyn SemidiscreteProblem>> {
        Ok(match self {
            ProblemSpec::Linear(spec) => Arc::new(make_linear_block_ode(spec.clone())?),
            ProblemSpec::Advection(cfg) => Arc::new(make_advection_diffusion_dg(cfg.clone())?),
            ProblemSpec::Burgers { dg, solution } => Arc::new(make_viscous_burgers_mms(dg.clone(), *solution)?),
            ProblemSpec::Prothero { lambda, u0 } => Arc::new(make_prothero_robinson(*lambda, *u0)),
        })
    }

    /// Whether `exact` gives the solution of the semidiscrete system itself,
    /// so that it can serve as the reference for temporal errors. For the DG
    /// problems it is the PDE solution, which carries spatial error.
    pub fn exact_is_semidiscrete(&self) -> bool {
        matches!(self, ProblemSpec::Linear(_) | ProblemSpec::Prothero { .. })
    }

    /// Viscous Burgers on a periodic mesh, the problem used by the
    /// preconditioner and partition studies.
    pub fn burgers_reference(elements: usize) -> Self {
        ProblemSpec::Burgers {
            dg: Dg1dConfig {
                poly_degree: 2,
                elements,
                diffusion: 0.01,
                ..Default::default()
            },
            solution: MmsSolution::default(),
        }
    }
}
