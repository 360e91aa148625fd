//! Measured block-operation counts against the leading-term cost and memory
//! model. Counts are in m x m blocks: a block multiply or block solve costs
//! m² flops, a block factorization m³, a stored block m² words.

use std::sync::Arc;

use irk_core::exec::Execution;
use irk_core::mesh_blocks::OpCounter;
use irk_core::precond::{build_stage_preconditioner, ilu0_factorize, CoupledUpdate, PrecondKind};
use irk_core::problems::SemidiscreteProblem;
use irk_core::stage_system::{StageOperator, UntransformedOperator};
use irk_core::tableaux::{derive, ButcherTableau};
use serde::Serialize;

use crate::HarnessError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostRow {
    /// `per-iteration`, `per-solve` or `memory`.
    pub category: String,
    pub quantity: String,
    pub scheme: String,
    pub formula: String,
    pub predicted: u64,
    pub measured: u64,
    pub matches: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub problem: String,
    pub elements: usize,
    pub block_size: usize,
    /// Neighbors per element.
    pub neighbors: usize,
    pub uniform_degree: bool,
    pub dt: f64,
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn all_match(&self) -> bool {
        self.rows.iter().all(|r| r.matches)
    }
}

struct Rows<'a> {
    scheme: &'a str,
    rows: Vec<CostRow>,
}

impl Rows<'_> {
    fn push(&mut self, category: &str, quantity: &str, formula: &str, predicted: usize, measured: u64) {
        self.rows.push(CostRow {
            category: category.into(),
            quantity: quantity.into(),
            scheme: self.scheme.into(),
            formula: formula.into(),
            predicted: predicted as u64,
            measured,
            matches: predicted as u64 == measured,
        });
    }
}

fn counted<T>(f: impl FnOnce(&mut OpCounter) -> irk_core::Result<T>) -> irk_core::Result<(T, OpCounter)> {
    let mut c = OpCounter::default();
    let out = f(&mut c)?;
    Ok((out, c))
}

/// Applies every operator and preconditioner once to a ones vector and
/// compares the counters with the predicted block counts. Fully implicit
/// schemes cover both matvec formulations and the coupled, uncoupled,
/// unshifted and block-Jacobi preconditioners; diagonally implicit schemes
/// cover the stage matvec and plain ILU(0). Exact agreement is expected when
/// every element has the same number of neighbors.
pub fn cost_report(problem: &dyn SemidiscreteProblem, schemes: &[ButcherTableau], dt: f64) -> Result<CostReport, HarnessError> {
    let graph = problem.graph();
    let t = graph.num_elements();
    let r = graph.max_degree();
    let u0 = problem.initial_state();
    let jac = problem.jacobian(0.0, &u0);
    let mass = Arc::clone(problem.mass());
    let mut rows = Vec::new();
    for tab in schemes {
        let mut out = Rows {
            scheme: &tab.name,
            rows: Vec::new(),
        };
        if tab.is_diagonally_implicit() {
            let aii = tab.a.iter().enumerate().map(|(i, row)| row[i]).find(|a| *a != 0.0).unwrap_or(0.0);
            let op = jac.scaled_plus_mass(-dt * aii, &mass, 1.0)?;
            let x = vec![1.0; op.dim()];
            let (_, mv) = counted(|c| op.matvec(&x, c))?;
            out.push("per-iteration", "DIRK matvec block multiplies", "(r+1)T", (r + 1) * t, mv.block_multiplies);
            let (pc, fc) = counted(|c| ilu0_factorize(&op, c))?;
            let (_, ac) = counted(|c| pc.apply(&x, c))?;
            out.push(
                "per-iteration",
                "DIRK ILU apply multiplies+solves",
                "(r+1)T",
                (r + 1) * t,
                ac.block_multiplies + ac.block_solves,
            );
            out.push("per-solve", "DIRK ILU block factorizations", "T", t, fc.block_factorizations);
            out.push("memory", "DIRK Jacobian blocks", "(r+1)T", (r + 1) * t, op.num_stored_blocks() as u64);
            out.push("memory", "DIRK ILU blocks", "(r+1)T", (r + 1) * t, pc.stored_blocks() as u64);
        } else {
            let s = tab.stages();
            let derived = derive(tab)?;
            let jacs = vec![jac.clone(); s];
            let op = StageOperator::new(derived, dt, Arc::clone(&mass), &jacs)?;
            let x = vec![1.0; op.dim()];
            let (_, mv) = counted(|c| op.apply(&x, c))?;
            out.push(
                "per-iteration",
                "transformed matvec block multiplies",
                "s(r+s)T",
                s * (r + s) * t,
                mv.block_multiplies,
            );
            out.push(
                "per-iteration",
                "transformed matvec Jacobian-pattern multiplies",
                "s(r+1)T",
                s * (r + 1) * t,
                mv.block_multiplies - mv.coupling_multiplies,
            );
            out.push(
                "per-iteration",
                "transformed matvec mass coupling multiplies",
                "(s^2-s)T",
                (s * s - s) * t,
                mv.coupling_multiplies,
            );
            let un = UntransformedOperator::new(tab, dt, Arc::clone(&mass), jacs)?;
            let (_, uc) = counted(|c| un.apply(&x, c))?;
            out.push(
                "per-iteration",
                "untransformed matvec block multiplies",
                "s^2(r+1)T",
                s * s * (r + 1) * t,
                uc.block_multiplies,
            );
            out.push("memory", "IRK Jacobian blocks", "s(r+1)T", s * (r + 1) * t, op.stored_jacobian_blocks() as u64);

            let one_part = graph.partition(1)?;
            let cases: [(PrecondKind, usize, &str, usize, &str); 4] = [
                (PrecondKind::Coupled, s * (r + s) * t, "s(r+s)T", s * (s + r) * t, "s(s+r)T"),
                (PrecondKind::Uncoupled, s * (r + 1) * t, "s(r+1)T", s * (r + 1) * t, "s(r+1)T"),
                (PrecondKind::UncoupledUnshifted, s * (r + 1) * t, "s(r+1)T", s * (r + 1) * t, "s(r+1)T"),
                // every neighbor coupling is cut, so r drops to 0
                (PrecondKind::BlockJacobi, s * s * t, "s(0+s)T", s * s * t, "s(s+0)T"),
            ];
            for (kind, apply, apply_formula, memory, memory_formula) in cases {
                let (pc, fc) = counted(|c| {
                    build_stage_preconditioner(kind, &op, &one_part, CoupledUpdate::Standard, &Execution::Serial, c)
                })?;
                let (_, ac) = counted(|c| pc.apply(&x, c))?;
                out.push(
                    "per-iteration",
                    &format!("{kind} apply multiplies+solves"),
                    apply_formula,
                    apply,
                    ac.block_multiplies + ac.block_solves,
                );
                out.push("per-solve", &format!("{kind} block factorizations"), "sT", s * t, fc.block_factorizations);
                out.push("memory", &format!("{kind} blocks"), memory_formula, memory, pc.stored_blocks() as u64);
            }
        }
        rows.extend(out.rows);
    }
    Ok(CostReport {
        problem: problem.name(),
        elements: t,
        block_size: problem.block_size(),
        neighbors: r,
        uniform_degree: graph.is_uniform_degree(),
        dt,
        rows,
    })
}
