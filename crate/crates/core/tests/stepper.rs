use irk_core::exec::Execution;
use irk_core::krylov::GmresConfig;
use irk_core::precond::PrecondKind;
use irk_core::problems::*;
use irk_core::stepper::*;
use irk_core::tableaux::{builtin_tableau, generate_radau_iia, stability_function, ButcherTableau, BUILTIN_SCHEMES};
use irk_core::Error;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

fn scalar(lambda: f64) -> LinearBlockOde {
    make_linear_block_ode(LinearOdeSpec {
        elements: 1,
        block_size: 1,
        decay_min: -lambda,
        decay_max: -lambda,
        oscillation: 0.0,
        ..Default::default()
    })
    .unwrap()
    .with_initial_state(vec![1.0])
    .unwrap()
}

fn tight() -> (NewtonConfig, GmresConfig) {
    (
        NewtonConfig {
            abs_tol_inf: 1e-12,
            ..Default::default()
        },
        GmresConfig {
            rel_tol: 1e-12,
            ..Default::default()
        },
    )
}

fn cfg_for(tab: &ButcherTableau) -> SolverConfig {
    SolverConfig::for_scheme(tab)
}

fn tight_cfg(tab: &ButcherTableau) -> SolverConfig {
    let (newton, gmres) = tight();
    SolverConfig {
        newton,
        gmres,
        ..SolverConfig::for_scheme(tab)
    }
}

#[test]
fn zero_rhs_keeps_state_with_one_newton_iteration() {
    let p = make_linear_block_ode(LinearOdeSpec {
        decay_min: 0.0,
        decay_max: 0.0,
        oscillation: 0.0,
        ..Default::default()
    })
    .unwrap();
    let u0 = p.initial_state();
    for name in BUILTIN_SCHEMES {
        let tab = builtin_tableau(name).unwrap();
        let r = step(&p, &tab, &u0, 0.0, 0.1, &cfg_for(&tab)).unwrap();
        assert_eq!(r.u_next, u0, "{name}");
        assert_eq!(r.newton_iterations, r.nonlinear_solves, "{name}");
        assert!(r.newton_iterations >= 1);
        if !tab.is_diagonally_implicit() {
            let cfg = SolverConfig {
                formulation: Formulation::Untransformed,
                ..cfg_for(&tab)
            };
            let r = step(&p, &tab, &u0, 0.0, 0.1, &cfg).unwrap();
            assert_eq!(r.u_next, u0);
            assert_eq!(r.newton_iterations, 1);
        }
    }
}

#[test]
fn implicit_euler_halves() {
    let p = scalar(-1.0);
    let tab = generate_radau_iia(1).unwrap();
    let r = irk_step_transformed(&p, &tab, &[1.0], 0.0, 1.0, &tight_cfg(&tab)).unwrap();
    assert!((r.u_next[0] - 0.5).abs() < 1e-12);
}

#[test]
fn scalar_steps_reproduce_stability_function() {
    for name in BUILTIN_SCHEMES {
        let tab = builtin_tableau(name).unwrap();
        for (lambda, dt) in [(-1.0, 1.0), (-3.0, 0.5), (-1e3, 0.1)] {
            let p = scalar(lambda);
            let r = step(&p, &tab, &[1.0], 0.0, dt, &tight_cfg(&tab)).unwrap();
            let rz = stability_function(&tab, Complex64::new(lambda * dt, 0.0)).unwrap();
            assert!((r.u_next[0] - rz.re).abs() < 1e-9, "{name} z={}: {} vs {}", lambda * dt, r.u_next[0], rz.re);
            if !tab.is_diagonally_implicit() {
                let cfg = SolverConfig {
                    formulation: Formulation::Untransformed,
                    ..tight_cfg(&tab)
                };
                let u = step(&p, &tab, &[1.0], 0.0, dt, &cfg).unwrap();
                assert!((u.u_next[0] - rz.re).abs() < 1e-9);
            }
        }
    }
}

/// `u₁ = u₀ + Δt (bᵀ ⊗ I) K` with `(I − Δt A ⊗ Λ) K = 𝟙 ⊗ Λ u₀`, solved densely.
fn dense_one_step(tab: &ButcherTableau, lambda: &DMatrix<f64>, u0: &[f64], dt: f64) -> Vec<f64> {
    let n = u0.len();
    let s = tab.stages();
    let a = DMatrix::from_fn(s, s, |i, j| tab.a[i][j]);
    let big = DMatrix::identity(s * n, s * n) - a.kronecker(lambda) * dt;
    let lu0 = lambda * DVector::from_column_slice(u0);
    let rhs = DVector::from_fn(s * n, |r, _| lu0[r % n]);
    let k = big.lu().solve(&rhs).unwrap();
    (0..n)
        .map(|r| u0[r] + dt * (0..s).map(|i| tab.b[i] * k[i * n + r]).sum::<f64>())
        .collect()
}

#[test]
fn linear_block_step_matches_dense_oracle() {
    let p = make_linear_block_ode(LinearOdeSpec {
        elements: 5,
        block_size: 2,
        periodic: true,
        seed: 9,
        ..Default::default()
    })
    .unwrap();
    let u0 = p.initial_state();
    for name in BUILTIN_SCHEMES {
        let tab = builtin_tableau(name).unwrap();
        let r = step(&p, &tab, &u0, 0.0, 0.3, &tight_cfg(&tab)).unwrap();
        let oracle = dense_one_step(&tab, p.operator_dense(), &u0, 0.3);
        for (x, y) in r.u_next.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-10, "{name}");
        }
    }
}

fn burgers(elements: usize, p: usize) -> Dg1d {
    make_viscous_burgers_mms(
        Dg1dConfig {
            poly_degree: p,
            elements,
            diffusion: 0.02,
            ..Default::default()
        },
        MmsSolution::default(),
    )
    .unwrap()
}

#[test]
fn transformed_and_untransformed_agree_on_burgers() {
    let p = burgers(8, 2);
    let u0 = p.initial_state();
    for name in ["RADAU23", "RADAU35", "RADAU47"] {
        let tab = builtin_tableau(name).unwrap();
        for kind in [PrecondKind::Coupled, PrecondKind::Uncoupled, PrecondKind::BlockJacobi] {
            let cfg = SolverConfig {
                precond: kind,
                ..tight_cfg(&tab)
            };
            let a = irk_step_transformed(&p, &tab, &u0, 0.1, 0.05, &cfg).unwrap();
            let b = irk_step_untransformed(&p, &tab, &u0, 0.1, 0.05, &cfg).unwrap();
            let d = a.u_next.iter().zip(&b.u_next).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(d < 1e-10, "{name} {kind}: {d:e}");
        }
    }
}

#[test]
fn nonradau_update_uses_full_combination() {
    // two-stage Gauss: bᵀA⁻¹ is not the last unit vector
    let mut tab = builtin_tableau("RADAU23").unwrap();
    tab.name = "GAUSS2".into();
    let r3 = 3f64.sqrt();
    tab.a = vec![vec![0.25, 0.25 - r3 / 6.0], vec![0.25 + r3 / 6.0, 0.25]];
    tab.b = vec![0.5, 0.5];
    tab.c = vec![0.5 - r3 / 6.0, 0.5 + r3 / 6.0];
    let p = scalar(-2.0);
    let r = irk_step_transformed(&p, &tab, &[1.0], 0.0, 0.5, &tight_cfg(&tab)).unwrap();
    let rz = stability_function(&tab, Complex64::new(-1.0, 0.0)).unwrap();
    assert!((r.u_next[0] - rz.re).abs() < 1e-12);
}

#[test]
fn stiff_radau23_amplification_bounded() {
    let p = make_linear_block_ode(LinearOdeSpec {
        elements: 3,
        block_size: 2,
        decay_min: 1e6,
        decay_max: 1e7,
        oscillation: 0.0,
        seed: 2,
        ..Default::default()
    })
    .unwrap();
    let tab = builtin_tableau("RADAU23").unwrap();
    let dt = 0.1;
    let u0 = p.initial_state();
    let r = step(&p, &tab, &u0, 0.0, dt, &cfg_for(&tab)).unwrap();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let bound = stability_function(&tab, Complex64::new(-1e6 * dt, 0.0)).unwrap().norm();
    assert!(norm(&r.u_next) / norm(&u0) <= bound + 1e-8);
}

#[test]
fn integrate_zero_steps() {
    let p = scalar(-1.0);
    let tab = builtin_tableau("RADAU23").unwrap();
    let t = integrate(&p, &tab, 0.5, 0.5, 0.1, &cfg_for(&tab)).unwrap();
    assert_eq!(t.states, vec![vec![1.0]]);
    assert_eq!(t.times, vec![0.5]);
    assert_eq!(t.equivalent_mults_avg(), 0.0);
}

#[test]
fn integrate_rejects_fractional_step_count() {
    let p = scalar(-1.0);
    let tab = builtin_tableau("RADAU23").unwrap();
    let e = integrate(&p, &tab, 0.0, 1.0, 0.3, &cfg_for(&tab)).unwrap_err();
    assert!(matches!(e.error, Error::InvalidConfig(_)));
    assert_eq!(e.partial.states.len(), 1);
    assert_eq!(step_count(0.0, 1.0, 0.1).unwrap(), 10);
}

#[test]
fn integrate_ten_steps_against_exponential() {
    let p = make_linear_block_ode(LinearOdeSpec {
        elements: 4,
        block_size: 2,
        seed: 4,
        ..Default::default()
    })
    .unwrap();
    let exact = p.exact(1.0).unwrap();
    for (name, bound) in [("RADAU23", 1e-3), ("DIRK33", 1e-3), ("RADAU35", 1e-6), ("ESDIRK65", 1e-5)] {
        let tab = builtin_tableau(name).unwrap();
        let t = integrate(&p, &tab, 0.0, 1.0, 0.1, &tight_cfg(&tab)).unwrap();
        assert_eq!(t.steps.len(), 10);
        assert!((t.final_time() - 1.0).abs() < 1e-15);
        let err = t.final_state().iter().zip(&exact).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < bound, "{name}: {err:e}");
    }
}

#[test]
fn aggregate_stats_are_means_over_solves() {
    let p = burgers(8, 2);
    let tab = builtin_tableau("RADAU35").unwrap();
    let t = integrate(&p, &tab, 0.0, 0.25, 0.05, &cfg_for(&tab)).unwrap();
    assert_eq!(t.steps.len(), 5);
    let all: Vec<usize> = t.steps.iter().flat_map(|s| s.gmres_iterations.clone()).collect();
    let newton: usize = t.steps.iter().map(|s| s.newton_iterations).sum();
    assert_eq!(all.len(), newton);
    let mean = all.iter().sum::<usize>() as f64 / all.len() as f64;
    assert!((t.gmres_iters_avg() - mean).abs() < 1e-12);
    assert!((t.equivalent_mults_avg() - 3.0 * mean).abs() < 1e-12);
}

#[test]
fn stage_parallel_is_bitwise_identical() {
    let p = burgers(12, 2);
    let u0 = p.initial_state();
    let tab = builtin_tableau("RADAU47").unwrap();
    for kind in [PrecondKind::Uncoupled, PrecondKind::Coupled] {
        let serial = SolverConfig {
            precond: kind,
            partitions: 2,
            ..cfg_for(&tab)
        };
        let threaded = SolverConfig {
            execution: Execution::with_workers(4).unwrap(),
            ..serial.clone()
        };
        let a = irk_step_transformed(&p, &tab, &u0, 0.0, 0.05, &serial).unwrap();
        let b = irk_step_transformed(&p, &tab, &u0, 0.0, 0.05, &threaded).unwrap();
        assert_eq!(a.u_next, b.u_next);
        assert_eq!(a.gmres_stats, b.gmres_stats);
        assert_eq!(a.counter, b.counter);
    }
}

#[test]
fn incompatible_preconditioners_rejected() {
    let p = scalar(-1.0);
    let radau = builtin_tableau("RADAU23").unwrap();
    let dirk = builtin_tableau("DIRK33").unwrap();
    let bad = SolverConfig {
        precond: PrecondKind::DirkIlu,
        ..Default::default()
    };
    assert!(matches!(
        step(&p, &radau, &[1.0], 0.0, 0.1, &bad),
        Err(Error::IncompatibleScheme { .. })
    ));
    let bad = SolverConfig {
        precond: PrecondKind::Coupled,
        ..Default::default()
    };
    assert!(matches!(
        step(&p, &dirk, &[1.0], 0.0, 0.1, &bad),
        Err(Error::IncompatibleScheme { .. })
    ));
    assert!(dirk_step(&p, &radau, &[1.0], 0.0, 0.1, &cfg_for(&dirk)).is_err());
}

#[test]
fn newton_failure_carries_history() {
    let p = burgers(8, 2);
    let tab = builtin_tableau("RADAU23").unwrap();
    let cfg = SolverConfig {
        newton: NewtonConfig {
            abs_tol_inf: 1e-300,
            max_iters: 2,
            ..Default::default()
        },
        ..cfg_for(&tab)
    };
    match irk_step_transformed(&p, &tab, &p.initial_state(), 0.0, 0.1, &cfg) {
        Err(Error::NewtonDivergence { iterations, history }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 3);
        }
        other => panic!("expected divergence, got {other:?}"),
    }
}

#[test]
fn frozen_jacobian_still_converges() {
    let p = burgers(8, 2);
    let tab = builtin_tableau("RADAU35").unwrap();
    let (newton, gmres) = tight();
    let exact = SolverConfig {
        newton: newton.clone(),
        gmres: gmres.clone(),
        ..cfg_for(&tab)
    };
    let frozen = SolverConfig {
        newton: NewtonConfig {
            frozen_jacobian: true,
            ..newton
        },
        gmres,
        ..cfg_for(&tab)
    };
    let u0 = p.initial_state();
    let a = irk_step_transformed(&p, &tab, &u0, 0.0, 0.05, &exact).unwrap();
    let b = irk_step_transformed(&p, &tab, &u0, 0.0, 0.05, &frozen).unwrap();
    assert!(b.newton_iterations >= a.newton_iterations);
    let d = a.u_next.iter().zip(&b.u_next).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    assert!(d < 1e-10);
}
