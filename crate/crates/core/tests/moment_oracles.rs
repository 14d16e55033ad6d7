mod common;

use std::f64::consts::PI;

use common::{insect_flux, neural_mean, rel};
use hysim_core::moments::{
    dominant_growth_rate, l1_norm, solve_interface_example, solve_moment_hierarchy_steady,
    solve_moment_hierarchy_transient, summarize,
};
use hysim_core::problem::{BoundaryPair, InitialCondition, PdeState};
use hysim_core::{
    builtin_problem, BoundaryCondition, BuiltinParams, Coefficient, Example, Face, GeneratorMatrix,
    OperatorSpec, StateDistribution, SwitchingPdeProblem,
};

fn pde(example: Example, params: &BuiltinParams) -> SwitchingPdeProblem {
    builtin_problem(example, params).unwrap().into_pde().unwrap()
}

#[test]
fn neural_mean_is_constant_and_matches_closed_form() {
    let w = neural_mean(1.0, 1.0, 10.0, 10.0, 1.0);
    assert!((w - 0.3023).abs() < 5e-5);
    let p = pde(Example::Neural, &BuiltinParams::default());
    let lv = solve_moment_hierarchy_steady(&p, 1, 200).unwrap();
    let s = summarize(&p, &lv).unwrap();
    for m in &s.mean {
        assert!(rel(*m, w) <= 1e-3, "mean {m} vs {w}");
    }
}

#[test]
fn neural_std_dev_spikes_at_the_switching_end() {
    let p = pde(Example::Neural, &BuiltinParams::default());
    let lv = solve_moment_hierarchy_steady(&p, 2, 100).unwrap();
    let sd = summarize(&p, &lv).unwrap().std_dev().unwrap();
    assert!(sd[sd.len() - 1] > 2.0 * sd[0]);
}

#[test]
fn level_zero_is_the_invariant_distribution() {
    let p = pde(Example::Insect, &BuiltinParams::default());
    let lv = solve_moment_hierarchy_steady(&p, 1, 30).unwrap();
    let rho = p.generator.invariant_distribution().unwrap();
    for i in 0..2 {
        assert!(lv[0].field.state(i).iter().all(|&v| v == rho.probs()[i]));
    }
    assert!((rho.probs()[0] - 0.25).abs() < 1e-15);
}

#[test]
fn insect_flux_matches_closed_form() {
    let f = insect_flux(1.0, 1.0, 1.0, 25.0, 75.0);
    assert!((f - 0.76923).abs() < 1e-5);
    let p = pde(Example::Insect, &BuiltinParams::default());
    let lv = solve_moment_hierarchy_steady(&p, 1, 200).unwrap();
    let got = summarize(&p, &lv).unwrap().flux_at(Face::Left);
    assert!((got - f).abs() < 1e-3, "flux {got} vs {f}");
}

#[test]
fn insect_flux_grows_with_switching_rate() {
    for rho in [0.1, 0.25, 0.5] {
        let mut last = f64::NEG_INFINITY;
        for k in 0..12 {
            let rate = 10f64.powf(3.0 * k as f64 / 11.0);
            let params = BuiltinParams {
                alpha: Some(rate * rho),
                beta: Some(rate * (1.0 - rho)),
                ..Default::default()
            };
            let p = pde(Example::Insect, &params);
            let lv = solve_moment_hierarchy_steady(&p, 1, 200).unwrap();
            let f = summarize(&p, &lv).unwrap().flux_at(Face::Left);
            assert!(f >= last, "rho {rho} rate {rate}: {f} < {last}");
            last = f;
        }
    }
}

#[test]
fn heat_decay_rate_is_the_dirichlet_eigenvalue() {
    let p = SwitchingPdeProblem {
        length: 1.0,
        generator: GeneratorMatrix::single_state(),
        states: vec![PdeState {
            operator: OperatorSpec::pure_diffusion(1.0),
            boundary: BoundaryPair::new(
                BoundaryCondition::Dirichlet { value: 0.0 },
                BoundaryCondition::Dirichlet { value: 0.0 },
            ),
        }],
        interface: None,
        initial: InitialCondition {
            field: Coefficient::Constant(1.0),
            distribution: None,
        },
    };
    let r = dominant_growth_rate(&p, 60).unwrap();
    assert!(rel(r, -PI * PI) < 0.01, "rate {r}");
}

#[test]
fn thermostat_switching_destabilizes_stable_systems() {
    let p = pde(Example::Thermostat, &BuiltinParams::default());
    assert!(dominant_growth_rate(&p, 60).unwrap() > 0.0);
    for i in 0..2 {
        assert!(dominant_growth_rate(&p.frozen(i), 60).unwrap() < 0.0);
    }
    let frozen = pde(
        Example::Thermostat,
        &BuiltinParams {
            alpha: Some(0.0),
            ..Default::default()
        },
    );
    assert!(dominant_growth_rate(&frozen, 60).unwrap() < 0.0);
}

#[test]
fn thermostat_mean_grows_while_frozen_means_decay() {
    let p = pde(Example::Thermostat, &BuiltinParams::default());
    let l1 = |p: &SwitchingPdeProblem, dt: f64| {
        let tr = solve_moment_hierarchy_transient(p, 1, 60, 10.0, dt, &[5.0, 10.0]).unwrap();
        let k = |t: f64| tr.times.iter().position(|&s| (s - t).abs() < 1e-9).unwrap();
        let norm = |k: usize| {
            let s = summarize(p, &tr.levels[k]).unwrap();
            l1_norm(&s.x, &s.mean)
        };
        (norm(k(5.0)), norm(k(10.0)))
    };
    let (a, b) = l1(&p, 1e-3);
    assert!(b > a, "switched {a} -> {b}");
    for i in 0..2 {
        let (a, b) = l1(&p.frozen(i), 1e-2);
        assert!(b < a, "frozen {i}: {a} -> {b}");
    }
}

#[test]
fn identical_states_reduce_to_a_single_heat_solve() {
    let state = PdeState {
        operator: OperatorSpec::pure_diffusion(0.7),
        boundary: BoundaryPair::new(
            BoundaryCondition::Dirichlet { value: 0.2 },
            BoundaryCondition::Neumann { value: -0.5 },
        ),
    };
    let initial = InitialCondition {
        field: Coefficient::polynomial(1.0, vec![0.2, 1.0, -1.0]),
        distribution: Some(StateDistribution::new(vec![0.3, 0.7]).unwrap()),
    };
    let switching = SwitchingPdeProblem {
        length: 1.0,
        generator: GeneratorMatrix::two_state(3.0, 5.0).unwrap(),
        states: vec![state.clone(), state],
        interface: None,
        initial,
    };
    let single = switching.frozen(0);
    let a = solve_moment_hierarchy_transient(&switching, 1, 40, 0.5, 0.01, &[0.25]).unwrap();
    let b = solve_moment_hierarchy_transient(&single, 1, 40, 0.5, 0.01, &[0.25]).unwrap();
    assert_eq!(a.times, b.times);
    for (la, lb) in a.levels.iter().zip(&b.levels) {
        let sa = summarize(&switching, la).unwrap();
        let sb = summarize(&single, lb).unwrap();
        for (x, y) in sa.mean.iter().zip(&sb.mean) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn interface_limits() {
    let n = 201;
    let open = solve_interface_example(
        &BuiltinParams {
            alpha: Some(1e4),
            ..Default::default()
        },
        n,
    )
    .unwrap();
    for (x, m) in open.x.iter().zip(&open.mean) {
        assert!((m - x).abs() <= 0.02, "x {x}: {m}");
    }
    let shut = solve_interface_example(
        &BuiltinParams {
            beta: Some(1e4),
            ..Default::default()
        },
        n,
    )
    .unwrap();
    let through = shut.interface_flux.unwrap();
    assert!(through.abs() <= 0.02, "interface flux {through}");
}

#[test]
fn interface_midpoint_converges() {
    let params = BuiltinParams::default();
    let mid = |n: usize| {
        let s = solve_interface_example(&params, n).unwrap();
        s.mean[n.div_ceil(2)]
    };
    let fine = mid(801);
    assert!((mid(201) - fine).abs() < 1e-3);
    assert!(solve_interface_example(&params, 200).is_err());
}
