//! Convergence, preconditioner and partition studies.

use std::time::Instant;

use irk_core::exec::Execution;
use irk_core::mesh_blocks::OpCounter;
use irk_core::precond::PrecondKind;
use irk_core::problems::SemidiscreteProblem;
use irk_core::stepper::{integrate, SolverConfig, Trajectory};
use irk_core::tableaux::{builtin_tableau, ButcherTableau};
use rayon::prelude::*;
use serde::Serialize;

use crate::HarnessError;

/// `r_i = log(E_{i+1}/E_i) / log(Δt_{i+1}/Δt_i)` for adjacent pairs. Pairs
/// with a nonpositive or non-finite entry give NaN.
pub fn rate(errors: &[f64], dts: &[f64]) -> Result<Vec<f64>, HarnessError> {
    if errors.len() != dts.len() || errors.len() < 2 {
        return Err(HarnessError::Usage(format!(
            "rate needs equal lengths >= 2, got {} errors and {} step sizes",
            errors.len(),
            dts.len()
        )));
    }
    let ok = |v: f64| v > 0.0 && v.is_finite();
    Ok((0..errors.len() - 1)
        .map(|i| {
            let (e0, e1, h0, h1) = (errors[i], errors[i + 1], dts[i], dts[i + 1]);
            if ok(e0) && ok(e1) && ok(h0) && ok(h1) && h0 != h1 {
                (e1 / e0).ln() / (h1 / h0).ln()
            } else {
                f64::NAN
            }
        })
        .collect())
}

pub fn inf_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Runs `task` over `items`, concurrently with `jobs` threads when `jobs > 1`;
/// results come back in item order either way.
pub fn run_jobs<I, T, F>(jobs: usize, items: &[I], task: F) -> Result<Vec<T>, HarnessError>
where
    I: Sync,
    T: Send,
    F: Fn(&I) -> T + Sync + Send,
{
    if jobs <= 1 {
        return Ok(items.iter().map(task).collect());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| HarnessError::Usage(format!("thread pool: {e}")))?;
    Ok(pool.install(|| items.par_iter().map(task).collect()))
}

/// Solver settings for `tab`: `base` with the preconditioner replaced by
/// `precond`, or by the scheme default when `None`.
pub fn solver_for(tab: &ButcherTableau, base: &SolverConfig, precond: Option<PrecondKind>) -> SolverConfig {
    SolverConfig {
        precond: precond.unwrap_or(SolverConfig::for_scheme(tab).precond),
        ..base.clone()
    }
}

/// Whether `kind` can precondition the stage systems of `tab`.
pub fn compatible(tab: &ButcherTableau, kind: PrecondKind) -> bool {
    match kind {
        PrecondKind::BlockJacobi => true,
        PrecondKind::DirkIlu => tab.is_diagonally_implicit(),
        _ => !tab.is_diagonally_implicit(),
    }
}

fn elapsed(start: Instant, timing: bool) -> f64 {
    if timing {
        start.elapsed().as_secs_f64()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Reference {
    /// The problem's own exact solution.
    Exact,
    /// A run of `scheme` with step `smallest dt / refinement`.
    Computed { scheme: String, refinement: usize },
}

#[derive(Clone, Debug)]
pub struct ConvergenceConfig {
    pub t0: f64,
    pub t1: f64,
    pub solver: SolverConfig,
    /// Preconditioner for every scheme; the scheme default when `None`.
    pub precond: Option<PrecondKind>,
    pub reference: Reference,
    pub jobs: usize,
    pub timing: bool,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            t0: 0.0,
            t1: 1.0,
            solver: SolverConfig::default(),
            precond: None,
            reference: Reference::Exact,
            jobs: 1,
            timing: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// NaN when the run failed.
    pub error_inf: f64,
    /// Rate from the previous row; absent on the first row.
    pub rate: Option<f64>,
    pub newton_iters_avg: f64,
    pub gmres_iters_avg: f64,
    pub wall_time: f64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub scheme: String,
    pub order: usize,
    pub stage_order: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// The rate between the two smallest step sizes.
    pub fn observed_order(&self) -> f64 {
        self.rows.last().and_then(|r| r.rate).unwrap_or(f64::NAN)
    }

    pub fn error_at(&self, dt: f64) -> Option<f64> {
        self.rows.iter().find(|r| r.dt == dt).map(|r| r.error_inf)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ErrorRatio {
    pub numerator: String,
    pub denominator: String,
    pub dt: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub problem: String,
    pub t0: f64,
    pub t1: f64,
    pub reference: Reference,
    pub tables: Vec<ConvergenceTable>,
    /// DIRK33/RADAU23 and ESDIRK65/RADAU35 at every step size, when both are present.
    pub ratios: Vec<ErrorRatio>,
}

impl ConvergenceStudy {
    pub fn table(&self, scheme: &str) -> Option<&ConvergenceTable> {
        self.tables.iter().find(|t| t.scheme.eq_ignore_ascii_case(scheme))
    }

    pub fn ratio(&self, numerator: &str, denominator: &str, dt: f64) -> Option<f64> {
        self.ratios
            .iter()
            .find(|r| r.numerator == numerator && r.denominator == denominator && r.dt == dt)
            .map(|r| r.ratio)
    }

    pub fn all_converged(&self) -> bool {
        self.tables.iter().flat_map(|t| &t.rows).all(|r| r.failure.is_none())
    }
}

pub const RATIO_PAIRS: [(&str, &str); 2] = [("DIRK33", "RADAU23"), ("ESDIRK65", "RADAU35")];

/// Errors at `t1` for every scheme and step size, with rates between
/// adjacent step sizes and the DIRK/Radau error ratios.
pub fn run_convergence_study(
    problem: &dyn SemidiscreteProblem,
    schemes: &[ButcherTableau],
    dts: &[f64],
    cfg: &ConvergenceConfig,
) -> Result<ConvergenceStudy, HarnessError> {
    if dts.is_empty() || schemes.is_empty() {
        return Err(HarnessError::Usage("convergence study needs schemes and step sizes".into()));
    }
    let reference = match &cfg.reference {
        Reference::Exact => problem
            .exact(cfg.t1)
            .ok_or_else(|| HarnessError::Usage(format!("{} has no exact solution", problem.name())))?,
        Reference::Computed { scheme, refinement } => {
            let tab = builtin_tableau(scheme)?;
            let dt_min = dts.iter().copied().fold(f64::INFINITY, f64::min);
            let solver = solver_for(&tab, &cfg.solver, None);
            integrate(problem, &tab, cfg.t0, cfg.t1, dt_min / (*refinement).max(1) as f64, &solver)
                .map_err(|f| HarnessError::Core(f.error))?
                .final_state()
                .to_vec()
        }
    };
    let jobs: Vec<(usize, f64)> = (0..schemes.len()).flat_map(|i| dts.iter().map(move |&dt| (i, dt))).collect();
    let results = run_jobs(cfg.jobs, &jobs, |&(i, dt)| {
        let tab = &schemes[i];
        let solver = solver_for(tab, &cfg.solver, cfg.precond);
        let start = Instant::now();
        let run = integrate(problem, tab, cfg.t0, cfg.t1, dt, &solver);
        let wall_time = elapsed(start, cfg.timing);
        match run {
            Ok(traj) => ConvergenceRow {
                dt,
                error_inf: inf_error(traj.final_state(), &reference),
                rate: None,
                newton_iters_avg: traj.newton_iters_avg(),
                gmres_iters_avg: traj.gmres_iters_avg(),
                wall_time,
                failure: None,
            },
            Err(f) => ConvergenceRow {
                dt,
                error_inf: f64::NAN,
                rate: None,
                newton_iters_avg: f.partial.newton_iters_avg(),
                gmres_iters_avg: f.partial.gmres_iters_avg(),
                wall_time,
                failure: Some(f.to_string()),
            },
        }
    })?;
    let mut tables = Vec::with_capacity(schemes.len());
    for (i, tab) in schemes.iter().enumerate() {
        let mut rows: Vec<ConvergenceRow> = results[i * dts.len()..(i + 1) * dts.len()].to_vec();
        if rows.len() >= 2 {
            let errors: Vec<f64> = rows.iter().map(|r| r.error_inf).collect();
            let rates = rate(&errors, dts)?;
            for (row, r) in rows.iter_mut().skip(1).zip(rates) {
                row.rate = Some(r);
            }
        }
        tables.push(ConvergenceTable {
            scheme: tab.name.clone(),
            order: tab.order,
            stage_order: tab.stage_order,
            rows,
        });
    }
    let mut ratios = Vec::new();
    let find = |name: &str| tables.iter().find(|t: &&ConvergenceTable| t.scheme.eq_ignore_ascii_case(name));
    for (num, den) in RATIO_PAIRS {
        if let (Some(tn), Some(td)) = (find(num), find(den)) {
            for (rn, rd) in tn.rows.iter().zip(&td.rows) {
                ratios.push(ErrorRatio {
                    numerator: num.into(),
                    denominator: den.into(),
                    dt: rn.dt,
                    ratio: rn.error_inf / rd.error_inf,
                });
            }
        }
    }
    Ok(ConvergenceStudy {
        problem: problem.name(),
        t0: cfg.t0,
        t1: cfg.t1,
        reference: cfg.reference.clone(),
        tables,
        ratios,
    })
}

/// One run of a fixed number of steps. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyRecord {
    pub problem: String,
    pub scheme: String,
    pub precond: String,
    /// Workers (partition study) or mesh partitions (preconditioner study).
    pub partitions: usize,
    /// Partitions used by the factorization.
    pub mesh_partitions: usize,
    pub stage_parallel: bool,
    pub dt: f64,
    pub steps: usize,
    pub converged: bool,
    pub gmres_iters_avg: f64,
    pub equivalent_mults_avg: f64,
    pub newton_iters_avg: f64,
    pub block_multiplies: u64,
    pub coupling_multiplies: u64,
    pub block_solves: u64,
    pub block_factorizations: u64,
    pub block_products: u64,
    pub wall_time: f64,
    pub failure: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunSpec {
    pub precond: PrecondKind,
    pub partitions: usize,
    pub mesh_partitions: usize,
    pub stage_parallel: bool,
    pub dt: f64,
}

fn record(problem: &dyn SemidiscreteProblem, tab: &ButcherTableau, run: &RunSpec, steps: usize, t0: f64, solver: &SolverConfig, timing: bool) -> StudyRecord {
    let start = Instant::now();
    let outcome = integrate(problem, tab, t0, t0 + steps as f64 * run.dt, run.dt, solver);
    let wall_time = elapsed(start, timing);
    let (traj, failure): (Trajectory, Option<String>) = match outcome {
        Ok(t) => (t, None),
        Err(f) => {
            let msg = f.to_string();
            (f.partial, Some(msg))
        }
    };
    let c: OpCounter = traj.counter;
    StudyRecord {
        problem: problem.name(),
        scheme: tab.name.clone(),
        precond: run.precond.name().into(),
        partitions: run.partitions,
        mesh_partitions: run.mesh_partitions,
        stage_parallel: run.stage_parallel,
        dt: run.dt,
        steps,
        converged: failure.is_none(),
        gmres_iters_avg: traj.gmres_iters_avg(),
        equivalent_mults_avg: traj.equivalent_mults_avg(),
        newton_iters_avg: traj.newton_iters_avg(),
        block_multiplies: c.block_multiplies,
        coupling_multiplies: c.coupling_multiplies,
        block_solves: c.block_solves,
        block_factorizations: c.block_factorizations,
        block_products: c.block_products,
        wall_time,
        failure,
    }
}

#[derive(Clone, Debug)]
pub struct StudyConfig {
    pub t0: f64,
    pub steps: usize,
    pub solver: SolverConfig,
    pub jobs: usize,
    pub timing: bool,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            t0: 0.0,
            steps: 5,
            solver: SolverConfig::default(),
            jobs: 1,
            timing: true,
        }
    }
}

/// One record per compatible (scheme, preconditioner, Δt), in that nesting
/// order. Incompatible pairs are skipped.
pub fn run_precond_study(
    problem: &dyn SemidiscreteProblem,
    schemes: &[ButcherTableau],
    dts: &[f64],
    preconds: &[PrecondKind],
    cfg: &StudyConfig,
) -> Result<Vec<StudyRecord>, HarnessError> {
    let mut runs = Vec::new();
    for (i, tab) in schemes.iter().enumerate() {
        for &kind in preconds.iter().filter(|&&k| compatible(tab, k)) {
            for &dt in dts {
                runs.push((
                    i,
                    RunSpec {
                        precond: kind,
                        partitions: cfg.solver.partitions,
                        mesh_partitions: cfg.solver.partitions,
                        stage_parallel: false,
                        dt,
                    },
                ));
            }
        }
    }
    run_jobs(cfg.jobs, &runs, |(i, run)| {
        let tab = &schemes[*i];
        let solver = SolverConfig {
            precond: run.precond,
            ..cfg.solver.clone()
        };
        record(problem, tab, run, cfg.steps, cfg.t0, &solver, cfg.timing)
    })
}

/// Iteration counts against the worker count `P`. Without stage parallelism
/// the mesh is cut into `P` partitions and the stage tasks run serially; with
/// it, the mesh is cut into `P/s` partitions and the `s` stage tasks run
/// concurrently, which requires an uncoupled preconditioner and `s | P`.
pub fn run_partition_study(
    problem: &dyn SemidiscreteProblem,
    scheme: &ButcherTableau,
    dt: f64,
    partition_counts: &[usize],
    precond: PrecondKind,
    stage_parallel: bool,
    cfg: &StudyConfig,
) -> Result<Vec<StudyRecord>, HarnessError> {
    let t = problem.graph().num_elements();
    let s = scheme.stages();
    if !compatible(scheme, precond) {
        return Err(HarnessError::Usage(format!("{precond} does not apply to {}", scheme.name)));
    }
    if stage_parallel && !matches!(precond, PrecondKind::Uncoupled | PrecondKind::UncoupledUnshifted) {
        return Err(HarnessError::Usage(format!(
            "stage-parallel runs need an uncoupled preconditioner, got {precond}"
        )));
    }
    let mut runs = Vec::with_capacity(partition_counts.len());
    for &p in partition_counts {
        if p == 0 || p > t {
            return Err(HarnessError::Usage(format!("partition count {p} outside 1..={t}")));
        }
        if stage_parallel && p % s != 0 {
            return Err(HarnessError::Usage(format!(
                "{p} workers are not divisible by the {s} stages of {}",
                scheme.name
            )));
        }
        runs.push(RunSpec {
            precond,
            partitions: p,
            mesh_partitions: if stage_parallel { p / s } else { p },
            stage_parallel,
            dt,
        });
    }
    let mut out = Vec::with_capacity(runs.len());
    for run in &runs {
        let execution = if stage_parallel {
            Execution::with_workers(s)?
        } else {
            cfg.solver.execution.clone()
        };
        let solver = SolverConfig {
            precond,
            partitions: run.mesh_partitions,
            execution,
            ..cfg.solver.clone()
        };
        out.push(record(problem, scheme, run, cfg.steps, cfg.t0, &solver, cfg.timing));
    }
    Ok(out)
}
