mod common;

use common::{insect_flux, neural_mean, still, survival_series, Absorbing};
use hysim_core::exit::{solve_survival, SurvivalVariant};
use hysim_core::moments::{solve_moment_hierarchy_steady, summarize};
use hysim_core::{builtin_problem, BuiltinParams, Example, Face};

/// Interior node counts whose spacing halves at each step.
const LADDER: [usize; 4] = [24, 49, 99, 199];

fn ratios(errors: &[f64]) -> Vec<f64> {
    errors.windows(2).map(|w| w[0] / w[1]).collect()
}

fn assert_second_order(name: &str, errors: &[f64]) {
    let r = ratios(errors);
    println!("{name}: errors {errors:?} ratios {r:?}");
    for q in r {
        assert!((3.3..=4.7).contains(&q), "{name}: ratio {q}");
    }
}

#[test]
fn neural_mean_converges_at_second_order() {
    let p = builtin_problem(Example::Neural, &BuiltinParams::default())
        .unwrap()
        .into_pde()
        .unwrap();
    let w = neural_mean(1.0, 1.0, 10.0, 10.0, 1.0);
    let errors: Vec<f64> = LADDER
        .iter()
        .map(|&n| {
            let s = summarize(&p, &solve_moment_hierarchy_steady(&p, 1, n).unwrap()).unwrap();
            s.mean.iter().map(|m| (m - w).abs()).fold(0.0, f64::max)
        })
        .collect();
    assert_second_order("neural mean", &errors);
}

#[test]
fn insect_flux_converges_at_second_order() {
    let p = builtin_problem(Example::Insect, &BuiltinParams::default())
        .unwrap()
        .into_pde()
        .unwrap();
    let f = insect_flux(1.0, 1.0, 1.0, 25.0, 75.0);
    let errors: Vec<f64> = LADDER
        .iter()
        .map(|&n| {
            let s = summarize(&p, &solve_moment_hierarchy_steady(&p, 1, n).unwrap()).unwrap();
            (s.flux_at(Face::Left) - f).abs()
        })
        .collect();
    assert_second_order("insect flux", &errors);
}

#[test]
fn survival_converges_at_second_order() {
    let p = still(Absorbing, Absorbing, &[0.5]);
    let want = survival_series(0.5, 0.1, 1.0, 1.0);
    let errors: Vec<f64> = LADDER[1..]
        .iter()
        .map(|&n| {
            let dt = 0.1 / (n + 1) as f64;
            let s = solve_survival(&p, 1, n, 0.1, dt, &[], SurvivalVariant::AnyAlive).unwrap();
            (s[0].at(s[0].time_index(0.1).unwrap(), 0, &[0.5]) - want).abs()
        })
        .collect();
    assert_second_order("survival", &errors);
}
