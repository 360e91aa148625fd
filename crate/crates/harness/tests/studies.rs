use irk_core::precond::PrecondKind;
use irk_core::problems::{make_prothero_robinson, LinearOdeSpec};
use irk_core::stepper::{NewtonConfig, SolverConfig};
use irk_core::tableaux::{builtin_tableau, generate_radau_iia};
use irk_harness::{
    cost_report, rate, run_convergence_study, run_partition_study, run_precond_study, ConvergenceConfig, HarnessError,
    ProblemSpec, Reference, StudyConfig,
};
use proptest::prelude::*;

fn quiet() -> StudyConfig {
    StudyConfig {
        timing: false,
        ..Default::default()
    }
}

#[test]
fn rate_hand_values() {
    let r = rate(&[1e-2, 1.25e-3], &[0.2, 0.1]).unwrap();
    assert!((r[0] - 3.0).abs() <= 1e-14, "{}", r[0]);
    let r = rate(&[4e-3, 4e-3], &[0.2, 0.1]).unwrap();
    assert_eq!(r[0], 0.0);
    let r = rate(&[1e-2, 0.0, 1e-4], &[0.4, 0.2, 0.1]).unwrap();
    assert!(r[0].is_nan() && r[1].is_nan());
    let r = rate(&[1e-2, -1.0], &[0.2, 0.1]).unwrap();
    assert!(r[0].is_nan());
    assert!(matches!(rate(&[1.0], &[0.1]), Err(HarnessError::Usage(_))));
    assert!(matches!(rate(&[1.0, 2.0], &[0.1]), Err(HarnessError::Usage(_))));
}

proptest! {
    #[test]
    fn rate_recovers_power_law(p in 0.5f64..10.0, c in 1e-6f64..1e3, h in 1e-3f64..1.0, k in 1.5f64..4.0) {
        let dts = [h, h / k, h / (k * k)];
        let errors: Vec<f64> = dts.iter().map(|d| c * d.powf(p)).collect();
        for r in rate(&errors, &dts).unwrap() {
            prop_assert!((r - p).abs() <= 1e-9 * p.max(1.0), "{} vs {}", r, p);
        }
    }
}

#[test]
fn convergence_study_rows_rates_and_ratios() {
    let problem = ProblemSpec::Linear(LinearOdeSpec::default()).build().unwrap();
    let schemes: Vec<_> = ["RADAU23", "DIRK33"].iter().map(|s| builtin_tableau(s).unwrap()).collect();
    let dts = [0.25, 0.125, 0.0625];
    let cfg = ConvergenceConfig {
        t1: 1.0,
        timing: false,
        ..Default::default()
    };
    let study = run_convergence_study(problem.as_ref(), &schemes, &dts, &cfg).unwrap();
    assert_eq!(study.tables.len(), 2);
    for table in &study.tables {
        assert_eq!(table.rows.len(), 3);
        assert!(table.rows[0].rate.is_none());
        let errors: Vec<f64> = table.rows.iter().map(|r| r.error_inf).collect();
        let expected = rate(&errors, &dts).unwrap();
        for (row, r) in table.rows.iter().skip(1).zip(expected) {
            assert_eq!(row.rate, Some(r));
        }
        assert!(table.rows.iter().all(|r| r.wall_time == 0.0 && r.failure.is_none()));
    }
    assert_eq!(study.ratios.len(), 3);
    let r = study.ratio("DIRK33", "RADAU23", 0.0625).unwrap();
    let e = study.table("DIRK33").unwrap().error_at(0.0625).unwrap() / study.table("RADAU23").unwrap().error_at(0.0625).unwrap();
    assert_eq!(r, e);
}

#[test]
fn convergence_study_records_failed_rows() {
    let problem = make_prothero_robinson(-1.0, None);
    let cfg = ConvergenceConfig {
        solver: SolverConfig {
            newton: NewtonConfig {
                abs_tol_inf: 1e-30,
                max_iters: 1,
                ..Default::default()
            },
            ..Default::default()
        },
        timing: false,
        ..Default::default()
    };
    let study = run_convergence_study(&problem, &[builtin_tableau("RADAU23").unwrap()], &[0.5, 0.25], &cfg).unwrap();
    assert!(!study.all_converged());
    let rows = &study.tables[0].rows;
    assert!(rows.iter().all(|r| r.error_inf.is_nan() && r.failure.is_some()));
    assert!(rows[1].rate.unwrap().is_nan());
}

#[test]
fn computed_reference_and_missing_exact() {
    let spec = ProblemSpec::Burgers {
        dg: irk_core::problems::Dg1dConfig {
            elements: 8,
            diffusion: 0.01,
            ..Default::default()
        },
        solution: Default::default(),
    };
    assert!(!spec.exact_is_semidiscrete());
    let problem = spec.build().unwrap();
    let cfg = ConvergenceConfig {
        t1: 0.4,
        reference: Reference::Computed {
            scheme: "RADAU47".into(),
            refinement: 4,
        },
        timing: false,
        ..Default::default()
    };
    let study = run_convergence_study(problem.as_ref(), &[builtin_tableau("RADAU35").unwrap()], &[0.2, 0.1, 0.05], &cfg).unwrap();
    let order = study.tables[0].observed_order();
    assert!(order > 4.0, "{order}");

    let random = ProblemSpec::Advection(irk_core::problems::Dg1dConfig {
        elements: 4,
        initial: irk_core::problems::InitialData::Random(1),
        ..Default::default()
    })
    .build()
    .unwrap();
    let err = run_convergence_study(random.as_ref(), &[builtin_tableau("RADAU23").unwrap()], &[0.1], &ConvergenceConfig::default());
    assert!(matches!(err, Err(HarnessError::Usage(_))));
}

#[test]
fn precond_study_skips_incompatible_pairs() {
    let problem = ProblemSpec::burgers_reference(8).build().unwrap();
    let schemes: Vec<_> = ["RADAU23", "DIRK33"].iter().map(|s| builtin_tableau(s).unwrap()).collect();
    let records = run_precond_study(
        problem.as_ref(),
        &schemes,
        &[0.05, 0.025],
        &[PrecondKind::DirkIlu, PrecondKind::Coupled, PrecondKind::BlockJacobi],
        &quiet(),
    )
    .unwrap();
    let pairs: Vec<(String, String)> = records.iter().map(|r| (r.scheme.clone(), r.precond.clone())).collect();
    assert_eq!(records.len(), 8);
    assert!(!pairs.contains(&("RADAU23".into(), "dirk-ilu".into())));
    assert!(!pairs.contains(&("DIRK33".into(), "coupled".into())));
    assert!(records.iter().all(|r| r.converged && r.steps == 5 && r.block_factorizations > 0));
}

#[test]
fn single_stage_coupled_and_uncoupled_coincide() {
    let problem = ProblemSpec::burgers_reference(8).build().unwrap();
    let euler = generate_radau_iia(1).unwrap();
    let records = run_precond_study(
        problem.as_ref(),
        &[euler],
        &[0.1, 0.05],
        &[PrecondKind::Coupled, PrecondKind::Uncoupled, PrecondKind::UncoupledUnshifted],
        &quiet(),
    )
    .unwrap();
    assert_eq!(records.len(), 6);
    for dt_records in [[0, 2, 4], [1, 3, 5]] {
        let its: Vec<f64> = dt_records.iter().map(|&k| records[k].gmres_iters_avg).collect();
        assert!(its.iter().all(|&x| x == its[0]), "{its:?}");
    }
}

#[test]
fn jobs_do_not_change_results() {
    let problem = ProblemSpec::burgers_reference(8).build().unwrap();
    let schemes: Vec<_> = ["RADAU23", "RADAU35"].iter().map(|s| builtin_tableau(s).unwrap()).collect();
    let preconds = [PrecondKind::Coupled, PrecondKind::Uncoupled];
    let serial = run_precond_study(problem.as_ref(), &schemes, &[0.05, 0.025], &preconds, &quiet()).unwrap();
    let parallel = run_precond_study(
        problem.as_ref(),
        &schemes,
        &[0.05, 0.025],
        &preconds,
        &StudyConfig {
            jobs: 4,
            ..quiet()
        },
    )
    .unwrap();
    assert_eq!(serial, parallel);
}

#[test]
fn partition_study_validation() {
    let problem = ProblemSpec::burgers_reference(8).build().unwrap();
    let radau = builtin_tableau("RADAU35").unwrap();
    let cfg = quiet();
    let err = |r: Result<_, HarnessError>| matches!(r, Err(HarnessError::Usage(_)));
    assert!(err(run_partition_study(problem.as_ref(), &radau, 0.05, &[4], PrecondKind::Uncoupled, true, &cfg)));
    assert!(err(run_partition_study(problem.as_ref(), &radau, 0.05, &[9], PrecondKind::Coupled, false, &cfg)));
    assert!(err(run_partition_study(problem.as_ref(), &radau, 0.05, &[3], PrecondKind::Coupled, true, &cfg)));
    assert!(err(run_partition_study(problem.as_ref(), &radau, 0.05, &[2], PrecondKind::DirkIlu, false, &cfg)));
    let recs = run_partition_study(problem.as_ref(), &radau, 0.05, &[3, 6], PrecondKind::Uncoupled, true, &cfg).unwrap();
    assert_eq!(recs.iter().map(|r| (r.partitions, r.mesh_partitions)).collect::<Vec<_>>(), vec![(3, 1), (6, 2)]);
    assert!(recs.iter().all(|r| r.stage_parallel && r.converged));
}

#[test]
fn cost_report_flags_nonuniform_meshes() {
    let problem = ProblemSpec::Linear(LinearOdeSpec {
        elements: 6,
        periodic: false,
        ..Default::default()
    })
    .build()
    .unwrap();
    let report = cost_report(problem.as_ref(), &[builtin_tableau("RADAU23").unwrap()], 0.1).unwrap();
    assert!(!report.uniform_degree);
    // boundary elements have one neighbor, so leading terms overcount
    assert!(!report.all_match());
    let periodic = ProblemSpec::Linear(LinearOdeSpec {
        elements: 6,
        periodic: true,
        ..Default::default()
    })
    .build()
    .unwrap();
    let report = cost_report(periodic.as_ref(), &[builtin_tableau("RADAU23").unwrap(), builtin_tableau("DIRK33").unwrap()], 0.1).unwrap();
    assert!(report.uniform_degree && report.all_match());
}
