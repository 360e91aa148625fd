//! One-step maps (transformed IRK, untransformed IRK, DIRK) and the
//! fixed-step integration loop.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::krylov::{equivalent_multiplications, gmres, GmresConfig, GmresStats};
use crate::mesh_blocks::{check_len, BlockSparseMatrix, ElementGraph, OpCounter};
use crate::precond::{
    build_stage_preconditioner, ilu0_factorize_with, restrict_to_partitions, BlockIlu0, CoupledUpdate, IluAlgorithm,
    PartitionRestriction, PrecondKind,
};
use crate::problems::SemidiscreteProblem;
use crate::stage_system::{StageOperator, UntransformedOperator};
use crate::tableaux::{derive, ButcherTableau, SchemeKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonConfig {
    /// Stop when the infinity norm of the nonlinear residual is at most this.
    pub abs_tol_inf: f64,
    pub max_iters: usize,
    /// Evaluate Jacobians and the preconditioner only at the first iterate of each solve.
    pub frozen_jacobian: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            abs_tol_inf: 1e-8,
            max_iters: 50,
            frozen_jacobian: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Formulation {
    /// Newton on `W = (A ⊗ I) K`.
    #[default]
    Transformed,
    /// Newton on the stage increments `K` directly.
    Untransformed,
}

#[derive(Clone, Debug)]
pub struct SolverConfig {
    pub newton: NewtonConfig,
    pub gmres: GmresConfig,
    pub precond: PrecondKind,
    /// Mesh partitions for the partition-restricted factorizations.
    pub partitions: usize,
    pub coupled_update: CoupledUpdate,
    pub formulation: Formulation,
    /// Stage-level tasks for operator applications and uncoupled preconditioners.
    pub execution: Execution,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            newton: NewtonConfig::default(),
            gmres: GmresConfig::default(),
            precond: PrecondKind::Coupled,
            partitions: 1,
            coupled_update: CoupledUpdate::Standard,
            formulation: Formulation::Transformed,
            execution: Execution::Serial,
        }
    }
}

impl SolverConfig {
    /// Default solver settings with the preconditioner matching the scheme type.
    pub fn for_scheme(tab: &ButcherTableau) -> Self {
        SolverConfig {
            precond: if tab.is_diagonally_implicit() {
                PrecondKind::DirkIlu
            } else {
                PrecondKind::Coupled
            },
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepResult {
    pub u_next: Vec<f64>,
    /// Newton iterations summed over the nonlinear solves of the step.
    pub newton_iterations: usize,
    /// One coupled system for IRK, one per implicit stage for DIRK.
    pub nonlinear_solves: usize,
    /// Residual norms of every Newton iteration, initial norm first per solve.
    pub residual_history: Vec<f64>,
    pub gmres_stats: Vec<GmresStats>,
    /// Mean GMRES iterations per linear solve times the stage multiplier.
    pub equivalent_mults_avg: f64,
    pub counter: OpCounter,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, x| a.max(x.abs()))
}

fn check_step_input(problem: &dyn SemidiscreteProblem, u0: &[f64], dt: f64) -> Result<()> {
    check_len(problem.dim(), u0.len())?;
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::InvalidConfig(format!("time step must be positive, got {dt}")));
    }
    Ok(())
}

fn require_fully_implicit(tab: &ButcherTableau, what: &str) -> Result<()> {
    if tab.kind != SchemeKind::FullyImplicit {
        return Err(Error::IncompatibleScheme {
            scheme: tab.name.clone(),
            what: what.into(),
        });
    }
    Ok(())
}

fn solve_linear(
    stats_out: &mut Vec<GmresStats>,
    rhs: &[f64],
    cfg: &GmresConfig,
    apply_op: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    apply_pc: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<Vec<f64>> {
    let (x, stats) = gmres(apply_op, apply_pc, rhs, cfg)?;
    if !stats.converged {
        return Err(Error::LinearSolveFailed {
            iterations: stats.iterations,
            relative_residual: stats.relative_residual(),
        });
    }
    stats_out.push(stats);
    Ok(x)
}

fn newton_failure(iterations: usize, history: &[f64]) -> Error {
    Error::NewtonDivergence {
        iterations,
        history: history.to_vec(),
    }
}

/// Stage values `u₀ + Δt v_i` and their right-hand sides, one task per stage.
fn stage_rhs(
    problem: &dyn SemidiscreteProblem,
    times: &[f64],
    u0: &[f64],
    dt: f64,
    v: &[f64],
    exec: &Execution,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = u0.len();
    exec.map_stages(times.len(), |i| {
        let ui: Vec<f64> = u0.iter().zip(&v[i * n..(i + 1) * n]).map(|(a, b)| a + dt * b).collect();
        let fi = problem.rhs(times[i], &ui);
        (ui, fi)
    })
    .into_iter()
    .unzip()
}

fn stage_jacobians(
    problem: &dyn SemidiscreteProblem,
    times: &[f64],
    states: &[Vec<f64>],
    exec: &Execution,
) -> Vec<BlockSparseMatrix> {
    exec.map_stages(times.len(), |i| problem.jacobian(times[i], &states[i]))
}

fn partitioned_graph(problem: &dyn SemidiscreteProblem, partitions: usize) -> Result<ElementGraph> {
    problem.graph().partition(partitions)
}

/// One step of the transformed Newton iteration
/// `(A⁻¹ ⊗ M) W = F(t₀ + cΔt, U₀ + Δt W)`, `u₁ = u₀ + Δt (bᵀA⁻¹ ⊗ I) W`.
pub fn irk_step_transformed(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    u0: &[f64],
    t0: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    require_fully_implicit(tab, "the transformed IRK step")?;
    if cfg.precond == PrecondKind::DirkIlu {
        return Err(Error::IncompatibleScheme {
            scheme: tab.name.clone(),
            what: "the dirk-ilu preconditioner".into(),
        });
    }
    check_step_input(problem, u0, dt)?;
    let derived = derive(tab)?;
    let s = tab.stages();
    let n = u0.len();
    let mass = problem.mass();
    let exec = &cfg.execution;
    let graph = partitioned_graph(problem, cfg.partitions)?;
    let times: Vec<f64> = tab.c.iter().map(|c| t0 + c * dt).collect();

    let mut w = vec![0.0; s * n];
    let mut result = StepResult {
        nonlinear_solves: 1,
        ..Default::default()
    };
    let mut frozen = None;
    let mut scratch = OpCounter::default();
    for iter in 0..=cfg.newton.max_iters {
        let (states, f) = stage_rhs(problem, &times, u0, dt, &w, exec);
        let mw: Vec<Vec<f64>> = (0..s)
            .map(|j| mass.matvec(&w[j * n..(j + 1) * n], &mut scratch))
            .collect::<Result<_>>()?;
        let mut g = vec![0.0; s * n];
        for i in 0..s {
            let gi = &mut g[i * n..(i + 1) * n];
            for (j, mwj) in mw.iter().enumerate() {
                let a = derived.a_inv[i][j];
                for (x, y) in gi.iter_mut().zip(mwj) {
                    *x += a * y;
                }
            }
            for (x, y) in gi.iter_mut().zip(&f[i]) {
                *x -= y;
            }
        }
        let norm = inf_norm(&g);
        result.residual_history.push(norm);
        if !norm.is_finite() {
            return Err(newton_failure(iter, &result.residual_history));
        }
        if iter > 0 && norm <= cfg.newton.abs_tol_inf {
            result.newton_iterations = iter;
            break;
        }
        if iter == cfg.newton.max_iters {
            return Err(newton_failure(iter, &result.residual_history));
        }
        if frozen.is_none() || !cfg.newton.frozen_jacobian {
            let jacs = stage_jacobians(problem, &times, &states, exec);
            let op = StageOperator::new(derived.clone(), dt, mass.clone(), &jacs)?;
            let pc = build_stage_preconditioner(cfg.precond, &op, &graph, cfg.coupled_update, exec, &mut result.counter)?;
            frozen = Some((op, pc));
        }
        let (op, pc) = frozen.as_ref().expect("operator built above");
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut op_counter = OpCounter::default();
        let mut pc_counter = OpCounter::default();
        let delta = solve_linear(
            &mut result.gmres_stats,
            &rhs,
            &cfg.gmres,
            |v| op.apply_with(v, &mut op_counter, exec),
            |v| pc.apply(v, &mut pc_counter),
        )?;
        result.counter += op_counter;
        result.counter += pc_counter;
        for (x, d) in w.iter_mut().zip(&delta) {
            *x += d;
        }
    }

    let mut u1 = u0.to_vec();
    if derived.update_is_last_stage(1e-12) {
        for (u, x) in u1.iter_mut().zip(&w[(s - 1) * n..]) {
            *u += dt * x;
        }
    } else {
        for (j, coef) in derived.bt_a_inv.iter().enumerate() {
            for (u, x) in u1.iter_mut().zip(&w[j * n..(j + 1) * n]) {
                *u += dt * coef * x;
            }
        }
    }
    result.u_next = u1;
    result.equivalent_mults_avg = equivalent_multiplications(&result.gmres_stats, s);
    Ok(result)
}

/// Per-stage ILU(0) factors of `M − Δt a_ii J_i`, applied blockwise.
fn untransformed_preconditioner(
    op: &UntransformedOperator,
    restriction: &PartitionRestriction,
    counter: &mut OpCounter,
) -> Result<Vec<BlockIlu0>> {
    (0..op.stages())
        .map(|i| ilu0_factorize_with(op.diagonal_block(i), restriction, IluAlgorithm::Auto, counter))
        .collect()
}

/// The same step solved for the stage increments `K`;
/// `u₁ = u₀ + Δt Σ b_i k_i`. Used as a reference for the transformed form.
pub fn irk_step_untransformed(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    u0: &[f64],
    t0: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    require_fully_implicit(tab, "the untransformed IRK step")?;
    check_step_input(problem, u0, dt)?;
    let s = tab.stages();
    let n = u0.len();
    let mass = problem.mass();
    let exec = &cfg.execution;
    let restriction = restrict_to_partitions(&partitioned_graph(problem, cfg.partitions)?);
    let times: Vec<f64> = tab.c.iter().map(|c| t0 + c * dt).collect();

    let mut k = vec![0.0; s * n];
    let mut result = StepResult {
        nonlinear_solves: 1,
        ..Default::default()
    };
    let mut frozen = None;
    let mut scratch = OpCounter::default();
    for iter in 0..=cfg.newton.max_iters {
        // stage increments in W form give the stage values
        let mut v = vec![0.0; s * n];
        for i in 0..s {
            for j in 0..s {
                let a = tab.a[i][j];
                for (x, y) in v[i * n..(i + 1) * n].iter_mut().zip(&k[j * n..(j + 1) * n]) {
                    *x += a * y;
                }
            }
        }
        let (states, f) = stage_rhs(problem, &times, u0, dt, &v, exec);
        let mut g = vec![0.0; s * n];
        for i in 0..s {
            let mk = mass.matvec(&k[i * n..(i + 1) * n], &mut scratch)?;
            for ((x, a), b) in g[i * n..(i + 1) * n].iter_mut().zip(&mk).zip(&f[i]) {
                *x = a - b;
            }
        }
        let norm = inf_norm(&g);
        result.residual_history.push(norm);
        if !norm.is_finite() {
            return Err(newton_failure(iter, &result.residual_history));
        }
        if iter > 0 && norm <= cfg.newton.abs_tol_inf {
            result.newton_iterations = iter;
            break;
        }
        if iter == cfg.newton.max_iters {
            return Err(newton_failure(iter, &result.residual_history));
        }
        if frozen.is_none() || !cfg.newton.frozen_jacobian {
            let jacs = stage_jacobians(problem, &times, &states, exec);
            let op = UntransformedOperator::new(tab, dt, mass.clone(), jacs)?;
            let pc = untransformed_preconditioner(&op, &restriction, &mut result.counter)?;
            frozen = Some((op, pc));
        }
        let (op, pc) = frozen.as_ref().expect("operator built above");
        let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut op_counter = OpCounter::default();
        let mut pc_counter = OpCounter::default();
        let delta = solve_linear(
            &mut result.gmres_stats,
            &rhs,
            &cfg.gmres,
            |v| op.apply(v, &mut op_counter),
            |v| {
                let mut out = Vec::with_capacity(v.len());
                for (i, f) in pc.iter().enumerate() {
                    out.extend(f.apply(&v[i * n..(i + 1) * n], &mut pc_counter)?);
                }
                Ok(out)
            },
        )?;
        result.counter += op_counter;
        result.counter += pc_counter;
        for (x, d) in k.iter_mut().zip(&delta) {
            *x += d;
        }
    }

    let mut u1 = u0.to_vec();
    for (i, b) in tab.b.iter().enumerate() {
        for (u, x) in u1.iter_mut().zip(&k[i * n..(i + 1) * n]) {
            *u += dt * b * x;
        }
    }
    result.u_next = u1;
    result.equivalent_mults_avg = equivalent_multiplications(&result.gmres_stats, s);
    Ok(result)
}

/// Diagonally implicit step: stages in sequence, each a Newton solve of
/// `M k_i = f(t_i, v_i + Δt a_ii k_i)` preconditioned by block ILU(0) of
/// `M − Δt a_ii J`. A zero diagonal entry makes the stage explicit.
pub fn dirk_step(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    u0: &[f64],
    t0: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    if !tab.is_diagonally_implicit() {
        return Err(Error::IncompatibleScheme {
            scheme: tab.name.clone(),
            what: "the DIRK step".into(),
        });
    }
    let restriction = match cfg.precond {
        PrecondKind::DirkIlu => restrict_to_partitions(&partitioned_graph(problem, cfg.partitions)?),
        PrecondKind::BlockJacobi => {
            let t = problem.graph().num_elements();
            restrict_to_partitions(&partitioned_graph(problem, t)?)
        }
        other => {
            return Err(Error::IncompatibleScheme {
                scheme: tab.name.clone(),
                what: format!("the {other} preconditioner"),
            })
        }
    };
    check_step_input(problem, u0, dt)?;
    let s = tab.stages();
    let n = u0.len();
    let mass = problem.mass();
    let mut scratch = OpCounter::default();
    let mut ks: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut result = StepResult::default();

    for i in 0..s {
        let ti = t0 + tab.c[i] * dt;
        let mut v = u0.to_vec();
        for (j, kj) in ks.iter().enumerate() {
            let a = tab.a[i][j];
            for (x, y) in v.iter_mut().zip(kj) {
                *x += dt * a * y;
            }
        }
        let aii = tab.a[i][i];
        if aii == 0.0 {
            let fi = problem.rhs(ti, &v);
            ks.push(mass.solve(&fi, &mut result.counter)?);
            continue;
        }
        result.nonlinear_solves += 1;
        let mut k = vec![0.0; n];
        let mut frozen: Option<(BlockSparseMatrix, BlockIlu0)> = None;
        for iter in 0..=cfg.newton.max_iters {
            let ui: Vec<f64> = v.iter().zip(&k).map(|(a, b)| a + dt * aii * b).collect();
            let fi = problem.rhs(ti, &ui);
            let mk = mass.matvec(&k, &mut scratch)?;
            let g: Vec<f64> = mk.iter().zip(&fi).map(|(a, b)| a - b).collect();
            let norm = inf_norm(&g);
            result.residual_history.push(norm);
            if !norm.is_finite() {
                return Err(newton_failure(iter, &result.residual_history));
            }
            if iter > 0 && norm <= cfg.newton.abs_tol_inf {
                result.newton_iterations += iter;
                break;
            }
            if iter == cfg.newton.max_iters {
                return Err(newton_failure(iter, &result.residual_history));
            }
            if frozen.is_none() || !cfg.newton.frozen_jacobian {
                let jac = problem.jacobian(ti, &ui);
                let op = jac.scaled_plus_mass(-dt * aii, mass, 1.0)?;
                let pc = ilu0_factorize_with(&op, &restriction, IluAlgorithm::Auto, &mut result.counter)?;
                frozen = Some((op, pc));
            }
            let (op, pc) = frozen.as_ref().expect("operator built above");
            let rhs: Vec<f64> = g.iter().map(|v| -v).collect();
            let mut op_counter = OpCounter::default();
            let mut pc_counter = OpCounter::default();
            let delta = solve_linear(
                &mut result.gmres_stats,
                &rhs,
                &cfg.gmres,
                |x| op.matvec(x, &mut op_counter),
                |x| pc.apply(x, &mut pc_counter),
            )?;
            result.counter += op_counter;
            result.counter += pc_counter;
            for (x, d) in k.iter_mut().zip(&delta) {
                *x += d;
            }
        }
        ks.push(k);
    }

    let mut u1 = u0.to_vec();
    for (b, k) in tab.b.iter().zip(&ks) {
        for (u, x) in u1.iter_mut().zip(k) {
            *u += dt * b * x;
        }
    }
    result.u_next = u1;
    result.equivalent_mults_avg = equivalent_multiplications(&result.gmres_stats, tab.implicit_stages());
    Ok(result)
}

/// Dispatches on the scheme type and, for fully implicit schemes, the formulation.
pub fn step(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    u0: &[f64],
    t0: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> Result<StepResult> {
    match (tab.kind, cfg.formulation) {
        (SchemeKind::FullyImplicit, Formulation::Transformed) => irk_step_transformed(problem, tab, u0, t0, dt, cfg),
        (SchemeKind::FullyImplicit, Formulation::Untransformed) => {
            irk_step_untransformed(problem, tab, u0, t0, dt, cfg)
        }
        _ => dirk_step(problem, tab, u0, t0, dt, cfg),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct StepSummary {
    pub newton_iterations: usize,
    pub nonlinear_solves: usize,
    pub gmres_iterations: Vec<usize>,
    pub equivalent_mults_avg: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub steps: Vec<StepSummary>,
    /// Multiplier turning GMRES iterations into equivalent multiplications.
    pub stage_multiplier: usize,
    pub counter: OpCounter,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn final_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn linear_solves(&self) -> usize {
        self.steps.iter().map(|s| s.gmres_iterations.len()).sum()
    }

    /// Mean GMRES iterations per linear solve over the whole run.
    pub fn gmres_iters_avg(&self) -> f64 {
        let solves = self.linear_solves();
        if solves == 0 {
            return 0.0;
        }
        let total: usize = self.steps.iter().flat_map(|s| &s.gmres_iterations).sum();
        total as f64 / solves as f64
    }

    pub fn equivalent_mults_avg(&self) -> f64 {
        self.gmres_iters_avg() * self.stage_multiplier as f64
    }

    /// Mean Newton iterations per nonlinear solve.
    pub fn newton_iters_avg(&self) -> f64 {
        let solves: usize = self.steps.iter().map(|s| s.nonlinear_solves).sum();
        if solves == 0 {
            return 0.0;
        }
        let total: usize = self.steps.iter().map(|s| s.newton_iterations).sum();
        total as f64 / solves as f64
    }
}

/// A failed integration with everything computed before the failing step.
#[derive(Clone, Debug)]
pub struct IntegrationFailure {
    pub error: Error,
    pub partial: Trajectory,
}

impl fmt::Display for IntegrationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "integration stopped at t = {} after {} steps: {}",
            self.partial.final_time(),
            self.partial.steps.len(),
            self.error
        )
    }
}

impl std::error::Error for IntegrationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Number of steps of size `dt` spanning `[t0, t1]`; the ratio must be an
/// integer up to a relative 1e-9.
pub fn step_count(t0: f64, t1: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t1 >= t0) {
        return Err(Error::InvalidConfig(format!("need dt > 0 and t1 >= t0, got dt={dt}, [{t0}, {t1}]")));
    }
    let ratio = (t1 - t0) / dt;
    let steps = ratio.round();
    if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::InvalidConfig(format!(
            "(t1 - t0)/dt = {ratio} is not an integer step count"
        )));
    }
    Ok(steps as usize)
}

/// Fixed-step integration from `t0` to `t1`; step k ends at `t0 + k dt`.
pub fn integrate(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    t0: f64,
    t1: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let u0 = problem.initial_state();
    integrate_from(problem, tab, &u0, t0, t1, dt, cfg)
}

pub fn integrate_from(
    problem: &dyn SemidiscreteProblem,
    tab: &ButcherTableau,
    u0: &[f64],
    t0: f64,
    t1: f64,
    dt: f64,
    cfg: &SolverConfig,
) -> std::result::Result<Trajectory, IntegrationFailure> {
    let mut traj = Trajectory {
        times: vec![t0],
        states: vec![u0.to_vec()],
        steps: Vec::new(),
        stage_multiplier: if tab.is_diagonally_implicit() {
            tab.implicit_stages()
        } else {
            tab.stages()
        },
        counter: OpCounter::default(),
    };
    let steps = match step_count(t0, t1, dt) {
        Ok(k) => k,
        Err(error) => return Err(IntegrationFailure { error, partial: traj }),
    };
    for k in 0..steps {
        let t = t0 + k as f64 * dt;
        let u = traj.states.last().expect("initial state");
        match step(problem, tab, u, t, dt, cfg) {
            Ok(r) => {
                traj.counter += r.counter.clone();
                traj.steps.push(StepSummary {
                    newton_iterations: r.newton_iterations,
                    nonlinear_solves: r.nonlinear_solves,
                    gmres_iterations: r.gmres_stats.iter().map(|s| s.iterations).collect(),
                    equivalent_mults_avg: r.equivalent_mults_avg,
                });
                traj.times.push(t0 + (k + 1) as f64 * dt);
                traj.states.push(r.u_next);
            }
            Err(error) => return Err(IntegrationFailure { error, partial: traj }),
        }
    }
    Ok(traj)
}
