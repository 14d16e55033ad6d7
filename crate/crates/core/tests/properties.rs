mod common;

use common::neural_mean;
use hysim_core::exit::{solve_hitting, solve_mfpt, solve_survival, survival_spec, SurvivalVariant};
use hysim_core::fd::{assemble, Grid, TensorField};
use hysim_core::mc::{
    estimate_exit_statistics, simulate_particles, ExitStatistic, ParticleSettings,
};
use hysim_core::moments::{moment_spec, solve_moment_hierarchy_steady, summarize};
use hysim_core::problem::{parse_problem, BoundaryPair, InitialCondition, PdeState};
use hysim_core::{
    builtin_problem, BoundaryCondition, BuiltinParams, Coefficient, Example, Face, GeneratorMatrix,
    OperatorSpec, Problem, RandomStreams, SwitchingPdeProblem, SwitchingSdeProblem,
};
use proptest::prelude::*;

fn gated(alpha: f64, beta: f64, d: f64, length: f64, starts: Vec<f64>) -> SwitchingSdeProblem {
    let params = BuiltinParams {
        alpha: Some(alpha),
        beta: Some(beta),
        diffusivity: Some(d),
        length: Some(length),
        starts: Some(starts),
        ..Default::default()
    };
    builtin_problem(Example::Gated, &params).unwrap().into_sde().unwrap()
}

/// The PDE whose moment hierarchy shares every stamp with the survival
/// hierarchy of `p`.
fn survival_twin(p: &SwitchingSdeProblem) -> SwitchingPdeProblem {
    let twin = |bc: &BoundaryCondition| match bc {
        BoundaryCondition::Absorbing => BoundaryCondition::Dirichlet { value: 1.0 },
        _ => BoundaryCondition::Neumann { value: 0.0 },
    };
    SwitchingPdeProblem {
        length: p.length,
        generator: p.generator.clone(),
        states: p
            .states
            .iter()
            .map(|s| PdeState {
                operator: s.operator.clone(),
                boundary: BoundaryPair::new(twin(&s.boundary.left), twin(&s.boundary.right)),
            })
            .collect(),
        interface: None,
        initial: InitialCondition {
            field: Coefficient::Constant(1.0),
            distribution: None,
        },
    }
}

fn rates() -> impl Strategy<Value = (f64, f64)> {
    (0.1f64..20.0, 0.1f64..20.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn problems_round_trip_through_json(
        (alpha, beta) in rates(),
        d in 0.2f64..3.0,
        length in 0.5f64..3.0,
        k in 0.5f64..8.0,
        example in prop::sample::select(Example::ALL.to_vec()),
    ) {
        let params = BuiltinParams {
            alpha: Some(alpha),
            beta: Some(beta),
            diffusivity: Some(d),
            length: Some(length),
            k: Some(k),
            ..Default::default()
        };
        let p = builtin_problem(example, &params).unwrap();
        let back = parse_problem(&p.to_config().to_json()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn exits_partition_probability((alpha, beta) in rates(), d in 0.2f64..3.0, length in 0.5f64..3.0) {
        let p = gated(alpha, beta, d, length, vec![length / 2.0]);
        let left = solve_hitting(&p, 1, 40, &[Face::Left]).unwrap();
        let right = solve_hitting(&p, 1, 40, &[Face::Right]).unwrap();
        let either = solve_hitting(&p, 1, 40, &[Face::Left, Face::Right]).unwrap();
        for (k, ((l, r), e)) in left[0].field.data().iter()
            .zip(right[0].field.data())
            .zip(either[0].field.data())
            .enumerate()
        {
            prop_assert!((l + r - 1.0).abs() < 1e-9, "slot {}: {} + {}", k, l, r);
            prop_assert!((e - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn survival_is_ordered_and_bounded((alpha, beta) in rates(), a in 0.05f64..0.95, b in 0.05f64..0.95) {
        let p = gated(alpha, beta, 1.0, 1.0, vec![0.5]);
        let any = solve_survival(&p, 2, 16, 0.2, 0.01, &[0.1], SurvivalVariant::AnyAlive).unwrap();
        let all = solve_survival(&p, 2, 16, 0.2, 0.01, &[0.1], SurvivalVariant::AllAlive).unwrap();
        for k in 0..2 {
            for i in 0..2 {
                let (u, v) = (any[1].at(k, i, &[a, b]), all[1].at(k, i, &[a, b]));
                let single = any[0].at(k, i, &[a]);
                prop_assert!(v <= single + 1e-9 && single <= u + 1e-9);
                prop_assert!((-1e-9..=1.0 + 1e-9).contains(&v) && (-1e-9..=1.0 + 1e-9).contains(&u));
            }
        }
    }

    #[test]
    fn moment_and_survival_stamps_are_dual((alpha, beta) in rates(), d in 0.2f64..3.0, level in 1usize..3) {
        let sde = gated(alpha, beta, d, 1.0, vec![0.5]);
        let pde = survival_twin(&sde);
        let g = Grid::new(9, 1.0, level).unwrap();
        let lower = TensorField::product(g.with_dim(level - 1).with_dim(1), &[0.4, 0.6], |x| 1.0 - x * x);
        let lower = if level == 1 { TensorField::scalars(&g, &[0.4, 0.6]) } else { lower };
        let moment = assemble(&moment_spec(&pde).unwrap(), &g, Some(&lower)).unwrap();
        let survival = assemble(&survival_spec(&sde, SurvivalVariant::AnyAlive), &g, Some(&lower)).unwrap();
        prop_assert_eq!(&moment.operator, &survival.operator);
        prop_assert_eq!(&moment.constraints, &survival.constraints);
        prop_assert_eq!(&moment.rhs, &survival.rhs);
        let nodes = g.nodes();
        for (r, c, v) in moment.coupling.triplets() {
            let (i, j, k) = (r / nodes, c / nodes, r % nodes);
            prop_assert_eq!(c % nodes, k);
            prop_assert_eq!(survival.coupling.get(j * nodes + k, i * nodes + k), v);
        }
        prop_assert_eq!(moment.coupling.nnz(), survival.coupling.nnz());
    }

    #[test]
    fn last_exit_time_is_exchangeable((alpha, beta) in rates()) {
        let p = gated(alpha, beta, 1.0, 1.0, vec![0.5]);
        let w = solve_mfpt(&p, 2, 14).unwrap();
        let f = &w[1].field;
        for i in 0..2 {
            for a in 0..f.grid().slots() {
                for b in 0..a {
                    prop_assert!((f.at(i, &[a, b]) - f.at(i, &[b, a])).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn neural_mean_stays_flat(alpha in 0.5f64..20.0, beta in 0.5f64..20.0, c in 0.1f64..10.0) {
        let params = BuiltinParams { alpha: Some(alpha), beta: Some(beta), c: Some(c), ..Default::default() };
        let p = builtin_problem(Example::Neural, &params).unwrap().into_pde().unwrap();
        let w = neural_mean(1.0, 1.0, c, alpha, beta);
        let s = summarize(&p, &solve_moment_hierarchy_steady(&p, 1, 100).unwrap()).unwrap();
        for m in &s.mean {
            prop_assert!((m - w).abs() <= 5e-3 * w, "{} vs {}", m, w);
        }
    }

    #[test]
    fn reflecting_walls_keep_every_particle(d in 0.2f64..3.0, x in 0.0f64..1.0, seed in any::<u64>()) {
        let p = SwitchingSdeProblem {
            length: 1.0,
            generator: GeneratorMatrix::single_state(),
            states: vec![hysim_core::problem::SdeState {
                operator: OperatorSpec::pure_diffusion(d),
                boundary: BoundaryPair::new(BoundaryCondition::Reflecting, BoundaryCondition::Reflecting),
            }],
            particles: hysim_core::problem::ParticleSpec { starts: vec![x], target: vec![] },
            initial_state: 0,
        };
        let s = ParticleSettings { dt: 1e-3 / (2.0 * d), horizon: 0.5, refinement: 0 };
        let batch = simulate_particles(&p, 20, &s, &RandomStreams::new(seed)).unwrap();
        prop_assert!(batch.paths.iter().all(|q| q.is_censored()));
        let alive = estimate_exit_statistics(&batch, &ExitStatistic::SurvivalAll(0.5)).unwrap();
        prop_assert_eq!(alive.value, 1.0);
    }
}

#[test]
fn twin_problem_is_a_valid_pde() {
    let sde = gated(1.0, 1.0, 1.0, 1.0, vec![0.5]);
    let twin = Problem::Pde(survival_twin(&sde));
    assert!(parse_problem(&twin.to_config().to_json()).is_ok());
}
