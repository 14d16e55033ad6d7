mod common;

use common::{still, Absorbing, Reflecting};
use hysim_core::mc::{
    estimate_exit_statistics, estimate_moments, max_stable_dt, sample_pde_paths, simulate_particles,
    ExitStatistic, ParticleSettings, PdePathSettings,
};
use hysim_core::{builtin_problem, BuiltinParams, Example, Face, GeneratorMatrix, RandomStreams};

#[test]
fn holding_times_are_exponential() {
    let q = GeneratorMatrix::two_state(1.0, 1.0).unwrap();
    let path = q.sample_path(0, 1e4, &mut RandomStreams::new(3).rng());
    let holds: Vec<f64> = path.epochs().windows(2).map(|w| w[1].0 - w[0].0).collect();
    let n = holds.len() as f64;
    let mean = holds.iter().sum::<f64>() / n;
    let se = (holds.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - 1.0).abs() <= 3.0 * se, "{mean} +- {se}");
    for w in path.epochs().windows(2) {
        assert!(w[1].0 > w[0].0 && w[1].1 != w[0].1);
    }
}

#[test]
fn occupation_follows_invariant_law() {
    let q = GeneratorMatrix::two_state(10.0, 1.0).unwrap();
    let rho = q.invariant_distribution().unwrap();
    assert!((rho.probs()[1] - 10.0 / 11.0).abs() < 1e-14);
    let streams = RandomStreams::new(5);
    let fractions: Vec<f64> = (0..200)
        .map(|k| {
            let mut rng = streams.split(k).rng();
            let start = rho.sample(&mut rng);
            let occ = q.sample_path(start, 50.0, &mut rng).occupation_times(2);
            occ[1] / 50.0
        })
        .collect();
    let n = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / n;
    let se = (fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
    assert!((mean - 10.0 / 11.0).abs() <= 3.0 * se, "{mean} +- {se}");
}

#[test]
fn short_time_kernel() {
    let q = GeneratorMatrix::two_state(10.0, 1.0).unwrap();
    assert!((q.transition_kernel(1e-4)[(0, 1)] - 1e-3).abs() < 1e-5);
    let sym = GeneratorMatrix::two_state(1.0, 1.0).unwrap().transition_kernel(50.0);
    for v in sym.iter() {
        assert!((v - 0.5).abs() < 1e-12);
    }
}

fn settings(p: &hysim_core::SwitchingSdeProblem) -> ParticleSettings {
    ParticleSettings {
        dt: max_stable_dt(p),
        horizon: 5.0,
        refinement: 0,
    }
}

#[test]
fn particle_exit_time_matches_classical_value() {
    let p = still(Absorbing, Absorbing, &[0.5]);
    let batch = simulate_particles(&p, 4000, &settings(&p), &RandomStreams::new(1)).unwrap();
    let e = estimate_exit_statistics(&batch, &ExitStatistic::MfptLast).unwrap();
    assert!(e.z_score(0.125).abs() <= 3.0, "{e:?}");
}

#[test]
fn independent_particles_hit_independently() {
    let p = still(Absorbing, Absorbing, &[0.3, 0.6]);
    let batch = simulate_particles(&p, 4000, &settings(&p), &RandomStreams::new(2)).unwrap();
    let e = estimate_exit_statistics(&batch, &ExitStatistic::HittingAll(vec![Face::Left])).unwrap();
    assert!(e.z_score(0.7 * 0.4).abs() <= 3.0, "{e:?}");
}

#[test]
fn one_particle_survival_variants_coincide() {
    let p = still(Reflecting, Absorbing, &[0.4]);
    let batch = simulate_particles(&p, 500, &settings(&p), &RandomStreams::new(4)).unwrap();
    for t in [0.05, 0.3, 1.0] {
        let any = estimate_exit_statistics(&batch, &ExitStatistic::SurvivalAny(t)).unwrap();
        let all = estimate_exit_statistics(&batch, &ExitStatistic::SurvivalAll(t)).unwrap();
        assert_eq!(any.value, all.value);
    }
    let right = estimate_exit_statistics(&batch, &ExitStatistic::HittingAll(vec![Face::Right])).unwrap();
    assert_eq!(right.value, 1.0);
}

#[test]
fn sampled_second_moment_dominates_squared_mean() {
    let p = builtin_problem(Example::Neural, &BuiltinParams::default())
        .unwrap()
        .into_pde()
        .unwrap();
    let s = PdePathSettings {
        n: 29,
        dt: 0.01,
        probe_times: vec![2.0],
    };
    let batch = sample_pde_paths(&p, 300, &s, &RandomStreams::new(9)).unwrap();
    for x in [0.0, 0.5, 1.0] {
        let m = estimate_moments(&batch, 0, &[vec![x]], None).unwrap().remove(0);
        let m2 = estimate_moments(&batch, 0, &[vec![x, x]], None).unwrap().remove(0);
        assert!(m2.value >= m.value * m.value - 3.0 * m2.std_error);
        let split: f64 = (0..2)
            .map(|i| estimate_moments(&batch, 0, &[vec![x]], Some(&[i])).unwrap()[0].value)
            .sum();
        assert!((split - m.value).abs() < 1e-12);
    }
}
