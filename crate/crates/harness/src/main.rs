use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use irk_core::exec::Execution;
use irk_core::krylov::{GmresConfig, PrecondSide};
use irk_core::precond::{CoupledUpdate, PrecondKind};
use irk_core::problems::{Dg1dConfig, InitialData, LinearOdeSpec, MmsSolution};
use irk_core::stepper::{integrate, Formulation, NewtonConfig, SolverConfig};
use irk_core::tableaux::{builtin_tableau, derive, ButcherTableau, BUILTIN_SCHEMES};
use irk_harness::output::{write_csv, write_json};
use irk_harness::studies::{solver_for, Reference};
use irk_harness::{
    cost_report, run_convergence_study, run_partition_study, run_precond_study, ConvergenceConfig, Format,
    HarnessError, ProblemSpec, StudyConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "irk-harness", version, about = "Implicit Runge-Kutta experiment drivers")]
struct Cli {
    /// Seed for randomly generated problem data.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Independent configurations run concurrently.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Report wall times as 0 so that output is byte-stable.
    #[arg(long, global = true)]
    no_wall_time: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a Butcher tableau and its derived quantities.
    Tableau {
        scheme: String,
    },
    /// Integrate one problem with one scheme.
    Run {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "RADAU35")]
        scheme: String,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
    },
    /// Error and rate table over a step-size sweep.
    Converge {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', default_value = "RADAU23,DIRK33,RADAU35,ESDIRK65")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.1,0.05,0.025")]
        dts: Vec<f64>,
        #[arg(long, default_value_t = 0.0)]
        t0: f64,
        #[arg(long, default_value_t = 1.0)]
        t1: f64,
        /// Scheme for a computed reference solution; the exact solution is
        /// used when absent and the problem has one.
        #[arg(long)]
        reference_scheme: Option<String>,
        #[arg(long, default_value_t = 8)]
        reference_refinement: usize,
    },
    /// Equivalent multiplications against Δt for several preconditioners.
    PrecondStudy {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, value_delimiter = ',', default_value = "RADAU23,RADAU35,DIRK33,ESDIRK65")]
        schemes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "0.05,0.025,0.0125,0.00625,0.003125")]
        dts: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "dirk-ilu,coupled,uncoupled,uncoupled-unshifted")]
        preconds: Vec<PrecondKind>,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// GMRES iterations against the number of mesh partitions.
    PartitionStudy {
        #[command(flatten)]
        problem: ProblemArgs,
        #[command(flatten)]
        solver: SolverArgs,
        #[arg(long, default_value = "RADAU23")]
        scheme: String,
        #[arg(long, default_value_t = 0.05)]
        dt: f64,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32")]
        counts: Vec<usize>,
        /// Cut the mesh into P/s partitions and run the s stages concurrently.
        #[arg(long)]
        stage_parallel: bool,
        #[arg(long, default_value_t = 5)]
        steps: usize,
    },
    /// Measured block-operation counts against the cost and memory model.
    CostReport {
        #[command(flatten)]
        problem: ProblemArgs,
        #[arg(long, value_delimiter = ',', default_value = "RADAU23,RADAU35,RADAU47,DIRK33,ESDIRK65")]
        schemes: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        dt: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProblemKind {
    Linear,
    Advection,
    Burgers,
    Prothero,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum InitialKind {
    Sine,
    Constant,
    Random,
}

#[derive(Args)]
struct ProblemArgs {
    #[arg(long, value_enum, default_value_t = ProblemKind::Burgers)]
    problem: ProblemKind,
    #[arg(long, default_value_t = 32)]
    elements: usize,
    /// Polynomial degree of the DG problems.
    #[arg(long, default_value_t = 2)]
    degree: usize,
    /// Block size of the linear ODE.
    #[arg(long, default_value_t = 2)]
    block_size: usize,
    #[arg(long, default_value_t = 0.01)]
    diffusion: f64,
    #[arg(long, default_value_t = 1.0)]
    speed: f64,
    #[arg(long)]
    penalty: Option<f64>,
    #[arg(long, value_enum, default_value_t = InitialKind::Sine)]
    initial: InitialKind,
    #[arg(long, default_value_t = 0.0)]
    initial_value: f64,
    #[arg(long, default_value_t = 0.5)]
    mms_mean: f64,
    #[arg(long, default_value_t = 0.3)]
    mms_amplitude: f64,
    #[arg(long, default_value_t = 0.5)]
    decay_min: f64,
    #[arg(long, default_value_t = 2.0)]
    decay_max: f64,
    #[arg(long, default_value_t = 1.0)]
    oscillation: f64,
    /// Periodic coupling for the linear ODE.
    #[arg(long)]
    periodic: bool,
    /// Stiffness parameter of the Prothero-Robinson problem.
    #[arg(long, default_value_t = -1e6, allow_negative_numbers = true)]
    lambda: f64,
}

impl ProblemArgs {
    fn spec(&self, seed: u64) -> ProblemSpec {
        let dg = Dg1dConfig {
            poly_degree: self.degree,
            elements: self.elements,
            length: 1.0,
            speed: self.speed,
            diffusion: self.diffusion,
            penalty: self.penalty,
            initial: match self.initial {
                InitialKind::Sine => InitialData::Sine,
                InitialKind::Constant => InitialData::Constant(self.initial_value),
                InitialKind::Random => InitialData::Random(seed),
            },
        };
        match self.problem {
            ProblemKind::Linear => ProblemSpec::Linear(LinearOdeSpec {
                elements: self.elements,
                block_size: self.block_size,
                decay_min: self.decay_min,
                decay_max: self.decay_max,
                oscillation: self.oscillation,
                periodic: self.periodic,
                seed,
            }),
            ProblemKind::Advection => ProblemSpec::Advection(dg),
            ProblemKind::Burgers => ProblemSpec::Burgers {
                dg,
                solution: MmsSolution {
                    mean: self.mms_mean,
                    amplitude: self.mms_amplitude,
                },
            },
            ProblemKind::Prothero => ProblemSpec::Prothero {
                lambda: self.lambda,
                u0: None,
            },
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum UpdateArg {
    Standard,
    Literal,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormulationArg {
    Transformed,
    Untransformed,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SideArg {
    Left,
    Right,
}

#[derive(Args)]
struct SolverArgs {
    /// Preconditioner; the scheme default when absent.
    #[arg(long)]
    precond: Option<PrecondKind>,
    #[arg(long, default_value_t = 1)]
    partitions: usize,
    /// Concurrent stage tasks.
    #[arg(long, default_value_t = 1)]
    stage_workers: usize,
    #[arg(long, value_enum, default_value_t = UpdateArg::Standard)]
    coupled_update: UpdateArg,
    #[arg(long, value_enum, default_value_t = FormulationArg::Transformed)]
    formulation: FormulationArg,
    #[arg(long, default_value_t = 1e-8)]
    newton_tol: f64,
    #[arg(long, default_value_t = 50)]
    newton_max_iters: usize,
    #[arg(long)]
    frozen_jacobian: bool,
    #[arg(long, default_value_t = 1e-5)]
    gmres_tol: f64,
    #[arg(long, default_value_t = 500)]
    gmres_max_iters: usize,
    #[arg(long)]
    gmres_restart: Option<usize>,
    #[arg(long, value_enum, default_value_t = SideArg::Left)]
    side: SideArg,
}

impl SolverArgs {
    fn config(&self) -> Result<SolverConfig, HarnessError> {
        let gmres = GmresConfig {
            rel_tol: self.gmres_tol,
            max_iters: self.gmres_max_iters,
            restart: self.gmres_restart,
            side: match self.side {
                SideArg::Left => PrecondSide::Left,
                SideArg::Right => PrecondSide::Right,
            },
        };
        gmres.validate()?;
        Ok(SolverConfig {
            newton: NewtonConfig {
                abs_tol_inf: self.newton_tol,
                max_iters: self.newton_max_iters,
                frozen_jacobian: self.frozen_jacobian,
            },
            gmres,
            precond: self.precond.unwrap_or(PrecondKind::Coupled),
            partitions: self.partitions,
            coupled_update: match self.coupled_update {
                UpdateArg::Standard => CoupledUpdate::Standard,
                UpdateArg::Literal => CoupledUpdate::Literal,
            },
            formulation: match self.formulation {
                FormulationArg::Transformed => Formulation::Transformed,
                FormulationArg::Untransformed => Formulation::Untransformed,
            },
            execution: Execution::with_workers(self.stage_workers)?,
        })
    }
}

#[derive(Serialize)]
struct TableauRecord {
    name: String,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    /// Absent when A is singular.
    #[serde(rename = "A_inv")]
    a_inv: Option<Vec<Vec<f64>>>,
    shifts: Option<Vec<f64>>,
    order: usize,
    stage_order: usize,
}

#[derive(Serialize)]
struct RunRecord {
    problem: String,
    scheme: String,
    precond: String,
    dt: f64,
    steps: usize,
    final_time: f64,
    final_state_norm: f64,
    error_inf: Option<f64>,
    newton_iters_avg: f64,
    gmres_iters_avg: f64,
    equivalent_mults_avg: f64,
    wall_time: f64,
}

type CsvWriter = Box<dyn FnOnce(&mut dyn Write) -> Result<(), HarnessError>>;

/// What a command produced and whether every configuration converged.
struct Outcome {
    converged: bool,
    json: serde_json::Value,
    csv: Option<CsvWriter>,
}

fn schemes(names: &[String]) -> Result<Vec<ButcherTableau>, HarnessError> {
    names.iter().map(|n| Ok(builtin_tableau(n.trim())?)).collect()
}

fn rows<T: Serialize + 'static>(rows: Vec<T>) -> Option<CsvWriter> {
    Some(Box::new(move |w: &mut dyn Write| write_csv(w, &rows)))
}

fn execute(cli: &Cli) -> Result<Outcome, HarnessError> {
    let timing = !cli.no_wall_time;
    match &cli.command {
        Command::Tableau { scheme } => {
            let tab = builtin_tableau(scheme)?;
            let derived = derive(&tab).ok();
            let rec = TableauRecord {
                name: tab.name.clone(),
                a: tab.a.clone(),
                b: tab.b.clone(),
                c: tab.c.clone(),
                a_inv: derived.as_ref().map(|d| d.a_inv.clone()),
                shifts: derived.map(|d| d.shifts),
                order: tab.order,
                stage_order: tab.stage_order,
            };
            Ok(Outcome {
                converged: true,
                json: serde_json::to_value(&rec)?,
                csv: None,
            })
        }
        Command::Run {
            problem,
            solver,
            scheme,
            dt,
            t0,
            t1,
        } => {
            let prob = problem.spec(cli.seed).build()?;
            let tab = builtin_tableau(scheme)?;
            let cfg = solver_for(&tab, &solver.config()?, solver.precond);
            let start = Instant::now();
            let (traj, converged) = match integrate(prob.as_ref(), &tab, *t0, *t1, *dt, &cfg) {
                Ok(t) => (t, true),
                Err(f) => {
                    eprintln!("{f}");
                    (f.partial, false)
                }
            };
            let wall_time = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
            let u = traj.final_state();
            let rec = RunRecord {
                problem: prob.name(),
                scheme: tab.name.clone(),
                precond: cfg.precond.name().into(),
                dt: *dt,
                steps: traj.steps.len(),
                final_time: traj.final_time(),
                final_state_norm: u.iter().map(|x| x * x).sum::<f64>().sqrt(),
                error_inf: prob
                    .exact(traj.final_time())
                    .map(|e| irk_harness::studies::inf_error(u, &e)),
                newton_iters_avg: traj.newton_iters_avg(),
                gmres_iters_avg: traj.gmres_iters_avg(),
                equivalent_mults_avg: traj.equivalent_mults_avg(),
                wall_time,
            };
            Ok(Outcome {
                converged,
                json: serde_json::to_value(&rec)?,
                csv: rows(vec![rec]),
            })
        }
        Command::Converge {
            problem,
            solver,
            schemes: names,
            dts,
            t0,
            t1,
            reference_scheme,
            reference_refinement,
        } => {
            let spec = problem.spec(cli.seed);
            let prob = spec.build()?;
            let reference = match reference_scheme {
                Some(s) => Reference::Computed {
                    scheme: s.clone(),
                    refinement: *reference_refinement,
                },
                None if spec.exact_is_semidiscrete() => Reference::Exact,
                None => Reference::Computed {
                    scheme: "RADAU59".into(),
                    refinement: *reference_refinement,
                },
            };
            let cfg = ConvergenceConfig {
                t0: *t0,
                t1: *t1,
                solver: solver.config()?,
                precond: solver.precond,
                reference,
                jobs: cli.jobs,
                timing,
            };
            let study = run_convergence_study(prob.as_ref(), &schemes(names)?, dts, &cfg)?;
            #[derive(Serialize)]
            struct Flat<'a> {
                scheme: &'a str,
                #[serde(flatten)]
                row: &'a irk_harness::ConvergenceRow,
            }
            let flat: Vec<serde_json::Value> = study
                .tables
                .iter()
                .flat_map(|t| t.rows.iter().map(move |row| Flat { scheme: &t.scheme, row }))
                .map(serde_json::to_value)
                .collect::<Result<_, _>>()?;
            Ok(Outcome {
                converged: study.all_converged(),
                json: serde_json::to_value(&study)?,
                csv: Some(Box::new(move |w: &mut dyn Write| {
                    // flattened maps keep field order only through the CSV writer's
                    // header of the first record, so write columns explicitly
                    let mut out = csv::Writer::from_writer(w);
                    out.write_record(["scheme", "dt", "error_inf", "rate", "newton_iters_avg", "gmres_iters_avg", "wall_time", "failure"])?;
                    for v in &flat {
                        let field = |k: &str| match &v[k] {
                            serde_json::Value::Null => String::new(),
                            serde_json::Value::String(s) => s.clone(),
                            other => other.to_string(),
                        };
                        out.write_record(
                            ["scheme", "dt", "error_inf", "rate", "newton_iters_avg", "gmres_iters_avg", "wall_time", "failure"]
                                .map(field),
                        )?;
                    }
                    out.flush()?;
                    Ok(())
                })),
            })
        }
        Command::PrecondStudy {
            problem,
            solver,
            schemes: names,
            dts,
            preconds,
            steps,
        } => {
            let prob = problem.spec(cli.seed).build()?;
            let cfg = StudyConfig {
                t0: 0.0,
                steps: *steps,
                solver: solver.config()?,
                jobs: cli.jobs,
                timing,
            };
            let records = run_precond_study(prob.as_ref(), &schemes(names)?, dts, preconds, &cfg)?;
            Ok(Outcome {
                converged: records.iter().all(|r| r.converged),
                json: serde_json::to_value(&records)?,
                csv: rows(records),
            })
        }
        Command::PartitionStudy {
            problem,
            solver,
            scheme,
            dt,
            counts,
            stage_parallel,
            steps,
        } => {
            let prob = problem.spec(cli.seed).build()?;
            let tab = builtin_tableau(scheme)?;
            let cfg = StudyConfig {
                t0: 0.0,
                steps: *steps,
                solver: solver.config()?,
                jobs: cli.jobs,
                timing,
            };
            let kind = solver.precond.unwrap_or(if *stage_parallel {
                PrecondKind::Uncoupled
            } else {
                SolverConfig::for_scheme(&tab).precond
            });
            let records = run_partition_study(prob.as_ref(), &tab, *dt, counts, kind, *stage_parallel, &cfg)?;
            Ok(Outcome {
                converged: records.iter().all(|r| r.converged),
                json: serde_json::to_value(&records)?,
                csv: rows(records),
            })
        }
        Command::CostReport { problem, schemes: names, dt } => {
            let prob = problem.spec(cli.seed).build()?;
            let report = cost_report(prob.as_ref(), &schemes(names)?, *dt)?;
            Ok(Outcome {
                converged: true,
                json: serde_json::to_value(&report)?,
                csv: rows(report.rows),
            })
        }
    }
}

fn emit(cli: &Cli, outcome: Outcome) -> Result<(), HarnessError> {
    let mut sink: Box<dyn Write> = match &cli.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    match (cli.format, outcome.csv) {
        (Format::Csv, Some(write)) => write(sink.as_mut())?,
        (Format::Csv, None) => {
            return Err(HarnessError::Usage("this command has no CSV form; use --format json".into()));
        }
        (Format::Json, _) => write_json(sink.as_mut(), &outcome.json)?,
    }
    sink.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors; 2 is reserved for non-convergence here
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.jobs == 0 {
        eprintln!("error: --jobs must be at least 1");
        return ExitCode::from(1);
    }
    let result = execute(&cli).and_then(|outcome| {
        let converged = outcome.converged;
        emit(&cli, outcome).map(|_| converged)
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("one or more configurations did not converge");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            eprintln!("schemes: {}", BUILTIN_SCHEMES.join(", "));
            ExitCode::from(1)
        }
    }
}
