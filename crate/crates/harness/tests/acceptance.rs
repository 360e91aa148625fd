//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use irk_core::exec::Execution;
use irk_core::krylov::{gmres, GmresConfig};
use irk_core::mesh_blocks::{BlockSparseMatrix, ElementGraph, OpCounter};
use irk_core::precond::{
    build_stage_preconditioner, ilu0_factorize, ilu0_factorize_with, restrict_to_partitions, CoupledUpdate,
    IluAlgorithm, PrecondKind,
};
use irk_core::problems::{make_prothero_robinson, LinearOdeSpec, SemidiscreteProblem};
use irk_core::stage_system::StageOperator;
use irk_core::stepper::{integrate, Formulation, NewtonConfig, SolverConfig, Trajectory};
use irk_core::tableaux::{
    builtin_tableau, check_order_conditions, derive, generate_radau_iia, stability_function, ButcherTableau,
};
use irk_harness::studies::{compatible, StudyRecord};
use irk_harness::{
    cost_report, run_convergence_study, run_partition_study, run_precond_study, ConvergenceConfig, ProblemSpec,
    Reference, StudyConfig,
};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn tab(name: &str) -> ButcherTableau {
    builtin_tableau(name).expect("builtin scheme")
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn tight_solver() -> SolverConfig {
    SolverConfig {
        newton: NewtonConfig {
            abs_tol_inf: 1e-13,
            ..Default::default()
        },
        gmres: GmresConfig {
            rel_tol: 1e-14,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn burgers(elements: usize) -> Arc<dyn SemidiscreteProblem> {
    ProblemSpec::burgers_reference(elements).build().expect("burgers problem")
}

fn nonincreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + 1e-12)
}

fn nondecreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] + 1e-12 >= w[0])
}

fn fmt(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" ")
}

fn tableau_fidelity() -> Check {
    let r6 = 6.0f64.sqrt();
    let radau2 = (
        vec![vec![5.0 / 12.0, -1.0 / 12.0], vec![0.75, 0.25]],
        vec![0.75, 0.25],
        vec![1.0 / 3.0, 1.0],
    );
    let radau3 = (
        vec![
            vec![(88.0 - 7.0 * r6) / 360.0, (296.0 - 169.0 * r6) / 1800.0, (-2.0 + 3.0 * r6) / 225.0],
            vec![(296.0 + 169.0 * r6) / 1800.0, (88.0 + 7.0 * r6) / 360.0, (-2.0 - 3.0 * r6) / 225.0],
            vec![(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
        ],
        vec![(16.0 - r6) / 36.0, (16.0 + r6) / 36.0, 1.0 / 9.0],
        vec![(4.0 - r6) / 10.0, (4.0 + r6) / 10.0, 1.0],
    );
    let mut worst = 0.0f64;
    for (s, (a, b, c)) in [(2, radau2), (3, radau3)] {
        let g = generate_radau_iia(s).map_err(|e| e.to_string())?;
        for i in 0..s {
            worst = worst.max(max_diff(&g.a[i], &a[i]));
        }
        worst = worst.max(max_diff(&g.b, &b)).max(max_diff(&g.c, &c));
    }
    let mut dirk = Vec::new();
    for name in ["DIRK33", "ESDIRK65"] {
        let t = tab(name);
        let report = check_order_conditions(&t, t.order);
        let defect = t.max_row_sum_defect().max(t.consistency_defect());
        dirk.push((name, report.passed && defect <= 1e-10, defect));
    }
    ensure(
        worst <= 1e-12 && dirk.iter().all(|d| d.1),
        format!(
            "Radau s=2,3 max entry error {worst:.1e}; {}",
            dirk.iter()
                .map(|(n, ok, d)| format!("{n} order conditions {} (row sum/consistency {d:.1e})", if *ok { "hold" } else { "FAIL" }))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    )
}

fn radau_structure() -> Check {
    let mut worst_bt = 0.0f64;
    let mut worst_r = 0.0f64;
    for s in 1..=5 {
        let t = generate_radau_iia(s).map_err(|e| e.to_string())?;
        let d = derive(&t).map_err(|e| e.to_string())?;
        let mut e = vec![0.0; s];
        e[s - 1] = 1.0;
        worst_bt = worst_bt.max(max_diff(&d.bt_a_inv, &e));
        let r = stability_function(&t, Complex64::new(-1e6, 0.0)).map_err(|e| e.to_string())?;
        worst_r = worst_r.max(r.norm());
    }
    ensure(
        worst_bt <= 1e-12 && worst_r < 1e-5,
        format!("max |b^T A^-1 - e_s| = {worst_bt:.1e}, max |R(-1e6)| = {worst_r:.1e} over s = 1..5"),
    )
}

fn formulation_equivalence() -> Check {
    let problem = burgers(8);
    let mut worst = 0.0f64;
    for name in ["RADAU23", "RADAU35"] {
        let t = tab(name);
        let run = |formulation| -> Result<Trajectory, String> {
            let cfg = SolverConfig {
                formulation,
                newton: NewtonConfig {
                    abs_tol_inf: 1e-12,
                    ..Default::default()
                },
                ..tight_solver()
            };
            integrate(problem.as_ref(), &t, 0.0, 0.25, 0.05, &cfg).map_err(|e| e.to_string())
        };
        let a = run(Formulation::Transformed)?;
        let b = run(Formulation::Untransformed)?;
        for (x, y) in a.states.iter().zip(&b.states) {
            worst = worst.max(max_diff(x, y));
        }
    }
    ensure(
        worst <= 1e-10,
        format!("Burgers T=8 p=2, 5 steps of 0.05: max state difference {worst:.1e}"),
    )
}

fn linear_study(schemes: &[&str], dts: &[f64]) -> Result<irk_harness::ConvergenceStudy, String> {
    let problem = ProblemSpec::Linear(LinearOdeSpec::default()).build().map_err(|e| e.to_string())?;
    let tabs: Vec<ButcherTableau> = schemes.iter().map(|s| tab(s)).collect();
    let cfg = ConvergenceConfig {
        t0: 0.0,
        t1: 2.0,
        solver: tight_solver(),
        reference: Reference::Exact,
        timing: false,
        ..Default::default()
    };
    run_convergence_study(problem.as_ref(), &tabs, dts, &cfg).map_err(|e| e.to_string())
}

const LOW_ORDER: [&str; 4] = ["RADAU23", "DIRK33", "RADAU35", "ESDIRK65"];
const LOW_ORDER_DTS: [f64; 4] = [0.25, 0.125, 0.0625, 0.03125];

fn temporal_order() -> Check {
    let low = linear_study(&LOW_ORDER, &LOW_ORDER_DTS)?;
    // higher orders reach roundoff sooner, so their sweeps start coarser
    let r47 = linear_study(&["RADAU47"], &[0.5, 0.25, 0.125])?;
    let r59 = linear_study(&["RADAU59"], &[1.0, 0.5, 0.25])?;
    let expected = [
        ("RADAU23", 3.0, 0.2),
        ("DIRK33", 3.0, 0.2),
        ("RADAU35", 5.0, 0.2),
        ("ESDIRK65", 5.0, 0.2),
        ("RADAU47", 7.0, 0.2),
        ("RADAU59", 9.0, 0.4),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, order, tol) in expected {
        let table = [&low, &r47, &r59].iter().find_map(|s| s.table(name)).expect("table");
        let observed = table.observed_order();
        ok &= (observed - order).abs() <= tol;
        parts.push(format!("{name} {observed:.2}"));
    }
    ensure(ok, format!("observed orders: {}", parts.join(", ")))
}

fn error_ratios() -> Check {
    let study = linear_study(&LOW_ORDER, &LOW_ORDER_DTS)?;
    let dt = LOW_ORDER_DTS[LOW_ORDER_DTS.len() - 1];
    let d = study.ratio("DIRK33", "RADAU23", dt).unwrap_or(f64::NAN);
    let e = study.ratio("ESDIRK65", "RADAU35", dt).unwrap_or(f64::NAN);
    ensure(
        (1.6..=2.1).contains(&d) && (3.0..=4.6).contains(&e),
        format!("at dt = {dt}: DIRK33/RADAU23 = {d:.3}, ESDIRK65/RADAU35 = {e:.3}"),
    )
}

fn order_reduction() -> Check {
    let problem = make_prothero_robinson(-1e6, None);
    let dts = [0.1, 0.05, 0.025, 0.0125, 0.00625];
    let cfg = ConvergenceConfig {
        t0: 0.0,
        t1: 1.0,
        solver: SolverConfig {
            gmres: GmresConfig {
                rel_tol: 1e-12,
                ..Default::default()
            },
            ..Default::default()
        },
        reference: Reference::Exact,
        timing: false,
        ..Default::default()
    };
    let study = run_convergence_study(&problem, &[tab("DIRK33"), tab("RADAU35")], &dts, &cfg).map_err(|e| e.to_string())?;
    let dirk = study.table("DIRK33").expect("table").observed_order();
    let radau = study.table("RADAU35").expect("table").observed_order();
    ensure(
        study.all_converged() && dirk <= 2.5 && radau >= 3.7,
        format!(
            "lambda = -1e6, dt = 0.1 .. 0.00625: DIRK33 order {dirk:.2} (need <= 2.5), RADAU35 order {radau:.2} (need >= 3.7)"
        ),
    )
}

fn random_block(m: usize, diag_shift: f64, seed: &mut u64) -> Vec<f64> {
    (0..m * m)
        .map(|k| {
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let v = ((*seed >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0;
            if k % (m + 1) == 0 {
                v + diag_shift
            } else {
                v
            }
        })
        .collect()
}

fn random_matrix(graph: Arc<ElementGraph>, m: usize, seed: u64) -> BlockSparseMatrix {
    let mut state = seed;
    BlockSparseMatrix::from_fn(graph, m, |i, j| random_block(m, if i == j { 4.0 * m as f64 } else { 0.0 }, &mut state))
}

fn dense_solve(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let lu = DMatrix::from_row_slice(n, n, a).lu();
    lu.solve(&DVector::from_column_slice(b)).expect("nonsingular").iter().copied().collect()
}

fn preconditioner_identities() -> Check {
    let m = 3;
    // (a) every element its own partition: plain and stage-coupled ILU reduce
    // to per-element solves
    let t = 10;
    let graph = Arc::new(ElementGraph::build_line_mesh(t, true).map_err(|e| e.to_string())?);
    let b = random_matrix(graph.clone(), m, 7);
    let jacobi = restrict_to_partitions(&graph.partition(t).map_err(|e| e.to_string())?);
    let mut c = OpCounter::default();
    let f = ilu0_factorize_with(&b, &jacobi, IluAlgorithm::Auto, &mut c).map_err(|e| e.to_string())?;
    let y: Vec<f64> = (0..t * m).map(|k| (k as f64 * 0.37).sin()).collect();
    let x = f.apply(&y, &mut c).map_err(|e| e.to_string())?;
    let mut oracle = Vec::with_capacity(t * m);
    for i in 0..t {
        oracle.extend(dense_solve(b.block(i, i).expect("diag"), &y[i * m..(i + 1) * m], m));
    }
    let plain_err = max_diff(&x, &oracle) / max_abs(&oracle);

    let problem = burgers(t);
    let rk = tab("RADAU35");
    let s = rk.stages();
    let d = derive(&rk).map_err(|e| e.to_string())?;
    let u0 = problem.initial_state();
    let jac = problem.jacobian(0.0, &u0);
    let dt = 0.05;
    let op = StageOperator::new(d.clone(), dt, problem.mass().clone(), &vec![jac.clone(); s]).map_err(|e| e.to_string())?;
    let pc = build_stage_preconditioner(
        PrecondKind::Coupled,
        &op,
        &problem.graph().partition(t).map_err(|e| e.to_string())?,
        CoupledUpdate::Standard,
        &Execution::Serial,
        &mut c,
    )
    .map_err(|e| e.to_string())?;
    let n = t * m;
    let ys: Vec<f64> = (0..s * n).map(|k| (k as f64 * 0.11).cos()).collect();
    let xs = pc.apply(&ys, &mut c).map_err(|e| e.to_string())?;
    let mut oracle = vec![0.0; s * n];
    for i in 0..t {
        let sm = s * m;
        let mut a = vec![0.0; sm * sm];
        let mass = problem.mass().block(i);
        let jii = jac.block(i, i).expect("diag");
        for k in 0..s {
            for l in 0..s {
                for r in 0..m {
                    for q in 0..m {
                        let mut v = d.a_inv[k][l] * mass[r * m + q];
                        if k == l {
                            v -= dt * jii[r * m + q];
                        }
                        a[(k * m + r) * sm + l * m + q] = v;
                    }
                }
            }
        }
        let rhs: Vec<f64> = (0..s).flat_map(|k| ys[k * n + i * m..k * n + (i + 1) * m].to_vec()).collect();
        let sol = dense_solve(&a, &rhs, sm);
        for k in 0..s {
            oracle[k * n + i * m..k * n + (i + 1) * m].copy_from_slice(&sol[k * m..(k + 1) * m]);
        }
    }
    let coupled_err = max_diff(&xs, &oracle) / max_abs(&oracle);

    // (b) exact on a tree
    let line = Arc::new(ElementGraph::build_line_mesh(12, false).map_err(|e| e.to_string())?);
    let bl = random_matrix(line, m, 11);
    let fl = ilu0_factorize(&bl, &mut c).map_err(|e| e.to_string())?;
    let rhs: Vec<f64> = (0..12 * m).map(|k| 1.0 + (k as f64).sin()).collect();
    let mut oc = OpCounter::default();
    let mut pcnt = OpCounter::default();
    let (_, stats) = gmres(
        |v| bl.matvec(v, &mut oc),
        |v| fl.apply(v, &mut pcnt),
        &rhs,
        &GmresConfig {
            rel_tol: 1e-10,
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;

    // (c) general and simplified factorizations on graphs meeting the neighbor condition
    let mut alg_diff = 0.0f64;
    let mut graphs_checked = 0;
    for tt in [4, 6, 9, 16] {
        let g = Arc::new(ElementGraph::build_line_mesh(tt, true).map_err(|e| e.to_string())?);
        if !g.satisfies_simplified_ilu_condition() {
            return Err(format!("periodic line T={tt} should satisfy the neighbor condition"));
        }
        let a = random_matrix(g.clone(), m, 100 + tt as u64);
        let none = restrict_to_partitions(&g);
        let f1 = ilu0_factorize_with(&a, &none, IluAlgorithm::General, &mut c).map_err(|e| e.to_string())?;
        let f2 = ilu0_factorize_with(&a, &none, IluAlgorithm::Simplified, &mut c).map_err(|e| e.to_string())?;
        for i in 0..tt {
            for j in 0..tt {
                let pairs = [(f1.lower_block(i, j), f2.lower_block(i, j)), (f1.upper_block(i, j), f2.upper_block(i, j))];
                for (p, q) in pairs {
                    match (p, q) {
                        (Some(p), Some(q)) => alg_diff = alg_diff.max(max_diff(p, q)),
                        (None, None) => {}
                        _ => alg_diff = f64::INFINITY,
                    }
                }
            }
        }
        graphs_checked += 1;
    }
    ensure(
        plain_err <= 1e-14 && coupled_err <= 1e-14 && stats.iterations == 1 && stats.converged && alg_diff == 0.0,
        format!(
            "(a) P=T vs block Jacobi: plain {plain_err:.1e}, stage-coupled {coupled_err:.1e}; (b) tree GMRES iterations {}; (c) general vs simplified max block difference {alg_diff:.1e} on {graphs_checked} graphs",
            stats.iterations
        ),
    )
}

fn cost_model() -> Check {
    let problem = burgers(16);
    let schemes: Vec<ButcherTableau> = ["RADAU23", "RADAU35", "RADAU47", "RADAU59", "DIRK33", "ESDIRK65"]
        .iter()
        .map(|s| tab(s))
        .collect();
    let report = cost_report(problem.as_ref(), &schemes, 0.05).map_err(|e| e.to_string())?;
    let mismatches: Vec<String> = report
        .rows
        .iter()
        .filter(|r| !r.matches)
        .map(|r| format!("{} {} predicted {} measured {}", r.scheme, r.quantity, r.predicted, r.measured))
        .collect();
    let example = report
        .rows
        .iter()
        .find(|r| r.scheme == "RADAU35" && r.quantity == "transformed matvec block multiplies")
        .map(|r| r.measured);
    ensure(
        mismatches.is_empty() && report.uniform_degree && example == Some(240),
        format!(
            "{} rows on periodic T=16, m=3, r=2; RADAU35 transformed matvec {} block multiplies{}",
            report.rows.len(),
            example.unwrap_or(0),
            if mismatches.is_empty() { String::new() } else { format!("; mismatches: {}", mismatches.join("; ")) }
        ),
    )
}

fn curve(records: &[StudyRecord], scheme: &str, precond: &str) -> Vec<f64> {
    records
        .iter()
        .filter(|r| r.scheme == scheme && r.precond == precond)
        .map(|r| r.equivalent_mults_avg)
        .collect()
}

fn precond_trends() -> Check {
    let problem = burgers(32);
    let schemes: Vec<ButcherTableau> = ["RADAU23", "RADAU35", "DIRK33", "ESDIRK65"].iter().map(|s| tab(s)).collect();
    let preconds = [
        PrecondKind::DirkIlu,
        PrecondKind::Coupled,
        PrecondKind::Uncoupled,
        PrecondKind::UncoupledUnshifted,
    ];
    let dts = [0.05, 0.025, 0.0125, 0.00625, 0.003125];
    let cfg = StudyConfig {
        timing: false,
        ..Default::default()
    };
    let records = run_precond_study(problem.as_ref(), &schemes, &dts, &preconds, &cfg).map_err(|e| e.to_string())?;
    let mut ok = records.iter().all(|r| r.converged);
    let mut parts = Vec::new();
    for t in &schemes {
        for kind in preconds.iter().filter(|&&k| compatible(t, k)) {
            let c = curve(&records, &t.name, kind.name());
            let decreasing = nonincreasing(&c) && c[c.len() - 1] < c[0];
            ok &= decreasing;
            parts.push(format!("{} {kind} [{}]{}", t.name, fmt(&c), if decreasing { "" } else { " NOT DECREASING" }));
        }
        if !t.is_diagonally_implicit() {
            let shifted = curve(&records, &t.name, "uncoupled");
            let unshifted = curve(&records, &t.name, "uncoupled-unshifted");
            let ordered = unshifted.iter().zip(&shifted).all(|(u, s)| u >= s);
            ok &= ordered;
            if !ordered {
                parts.push(format!("{} unshifted below shifted", t.name));
            }
        }
    }
    ensure(ok, format!("Burgers T=32 p=2, dt = 0.05 .. 0.003125: {}", parts.join("; ")))
}

fn iterations(records: &[StudyRecord]) -> Vec<f64> {
    records.iter().map(|r| r.gmres_iters_avg).collect()
}

fn partition_trends() -> Check {
    let problem = burgers(32);
    let cfg = StudyConfig {
        timing: false,
        ..Default::default()
    };
    let dt = 0.05;
    let counts = [1, 2, 4, 8, 16, 32];
    let mut ok = true;
    let mut parts = Vec::new();
    for (scheme, kind) in [
        ("RADAU23", PrecondKind::Coupled),
        ("RADAU23", PrecondKind::Uncoupled),
        ("DIRK33", PrecondKind::DirkIlu),
    ] {
        let recs = run_partition_study(problem.as_ref(), &tab(scheme), dt, &counts, kind, false, &cfg).map_err(|e| e.to_string())?;
        let its = iterations(&recs);
        let mono = nondecreasing(&its) && recs.iter().all(|r| r.converged);
        ok &= mono;
        parts.push(format!("{scheme} {kind} P=1..32 [{}]{}", fmt(&its), if mono { "" } else { " NOT NONDECREASING" }));
    }
    for (scheme, workers) in [("RADAU23", vec![2, 4, 8, 16, 32]), ("RADAU35", vec![3, 6, 12, 24])] {
        let t = tab(scheme);
        let par = run_partition_study(problem.as_ref(), &t, dt, &workers, PrecondKind::Uncoupled, true, &cfg).map_err(|e| e.to_string())?;
        let plain = run_partition_study(problem.as_ref(), &t, dt, &workers, PrecondKind::Uncoupled, false, &cfg).map_err(|e| e.to_string())?;
        let (a, b) = (iterations(&par), iterations(&plain));
        let better = a.iter().zip(&b).all(|(x, y)| x <= y) && par.iter().chain(&plain).all(|r| r.converged);
        ok &= better;
        let saving: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 100.0 * (1.0 - x / y)).collect();
        parts.push(format!(
            "{scheme} uncoupled at P = {:?}: stage-parallel [{}] vs plain [{}] (fewer iterations, %: [{}])",
            workers,
            fmt(&a),
            fmt(&b),
            fmt(&saving)
        ));
    }
    ensure(ok, parts.join("; "))
}

fn determinism() -> Check {
    let problem = burgers(16);
    let t = tab("RADAU47");
    let mut compared = 0;
    for kind in [PrecondKind::Coupled, PrecondKind::Uncoupled, PrecondKind::UncoupledUnshifted] {
        let base = SolverConfig {
            precond: kind,
            partitions: 2,
            ..Default::default()
        };
        let serial = integrate(problem.as_ref(), &t, 0.0, 0.15, 0.05, &base).map_err(|e| e.to_string())?;
        for workers in [2, 3, 4, 8] {
            let cfg = SolverConfig {
                execution: Execution::with_workers(workers).map_err(|e| e.to_string())?,
                ..base.clone()
            };
            let par = integrate(problem.as_ref(), &t, 0.0, 0.15, 0.05, &cfg).map_err(|e| e.to_string())?;
            let same_bits = serial
                .states
                .iter()
                .zip(&par.states)
                .all(|(a, b)| a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits()));
            if !same_bits || serial.steps != par.steps || serial.counter != par.counter {
                return Err(format!("{kind} with {workers} workers differs from serial"));
            }
            compared += 1;
        }
    }
    Ok(format!(
        "RADAU47 on Burgers T=16, 3 steps: {compared} parallel runs (2, 3, 4, 8 workers) bitwise identical to serial"
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 11] = [
        ("tableau fidelity", tableau_fidelity),
        ("Radau structure", radau_structure),
        ("formulation equivalence", formulation_equivalence),
        ("temporal order", temporal_order),
        ("error-coefficient ratios", error_ratios),
        ("order reduction", order_reduction),
        ("preconditioner identities", preconditioner_identities),
        ("cost-model reconciliation", cost_model),
        ("preconditioner-study trends", precond_trends),
        ("partition-study trends", partition_trends),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2} s): {detail}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
