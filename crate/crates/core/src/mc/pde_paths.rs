use rayon::prelude::*;

use super::{worker_pool, McEstimate};
use crate::error::{Error, Result};
use crate::fd::{
    assemble, step_length, substeps, time_points, Grid, Stepper, TensorField,
};
use crate::mjp::JumpPath;
use crate::moments::{moment_grid, moment_spec};
use crate::problem::SwitchingPdeProblem;
use crate::random::RandomStreams;

#[derive(Clone, Debug, PartialEq)]
pub struct PdePathSettings {
    /// Interior grid nodes.
    pub n: usize,
    pub dt: f64,
    /// Times at which the field is recorded; the last one is the horizon.
    pub probe_times: Vec<f64>,
}

/// One realization: the environment path and the field at each probe time.
#[derive(Clone, Debug, PartialEq)]
pub struct PdePathSample {
    pub path: JumpPath,
    /// `snapshots[k]` holds the nodal field at `probe_times[k]`.
    pub snapshots: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PdePathBatch {
    pub grid: Grid,
    pub probe_times: Vec<f64>,
    pub samples: Vec<PdePathSample>,
    pub seed_key: u64,
}

impl PdePathBatch {
    fn value(&self, sample: &PdePathSample, time_index: usize, x: f64) -> f64 {
        let (a, b, w) = self.grid.locate(x);
        let u = &sample.snapshots[time_index];
        (1.0 - w) * u[a] + w * u[b]
    }

    fn state(&self, sample: &PdePathSample, time_index: usize) -> usize {
        sample.path.state_at(self.probe_times[time_index])
    }
}

struct Marcher {
    steppers: Vec<Stepper>,
    grid: Grid,
    one: TensorField,
}

impl Marcher {
    fn new(problem: &SwitchingPdeProblem, n: usize) -> Result<Self> {
        let grid = moment_grid(problem, n, 1)?;
        let one = TensorField::scalars(&grid, &[1.0]);
        let steppers = (0..problem.n_states())
            .map(|i| {
                let spec = moment_spec(&problem.frozen(i))?;
                Ok(Stepper::new(assemble(&spec, &grid, Some(&one))?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            steppers,
            grid,
            one,
        })
    }

    fn run(
        &mut self,
        problem: &SwitchingPdeProblem,
        settings: &PdePathSettings,
        streams: RandomStreams,
    ) -> Result<PdePathSample> {
        let horizon = *settings.probe_times.last().expect("validated");
        let mut rng = streams.rng();
        let start = problem.initial_distribution()?.sample(&mut rng);
        let path = problem.generator.sample_path(start, horizon, &mut rng);
        let init: Vec<f64> = self
            .grid
            .axis()
            .iter()
            .map(|&x| problem.initial.field.eval(x))
            .collect();
        let mut u = self.steppers[start].project(&init, Some(&self.one))?;
        let mut snapshots = Vec::with_capacity(settings.probe_times.len());
        let tol = 1e-9 * settings.dt;
        let mut probes = settings.probe_times.iter().peekable();
        while probes.next_if(|&&p| p <= tol).is_some() {
            snapshots.push(u.clone());
        }
        let mut breaks: Vec<f64> = path.epochs().iter().skip(1).map(|e| e.0).collect();
        breaks.extend(settings.probe_times.iter().copied());
        let mut t = 0.0;
        let mut damp = true;
        let mut next_jump = path.epochs().iter().skip(1).map(|e| e.0).peekable();
        for next in time_points(horizon, settings.dt, &breaks) {
            let state = path.state_at(t);
            let step = step_length(t, next, settings.dt);
            for (sub, theta) in substeps(step, damp) {
                u = self.steppers[state].step(&u, sub, theta, Some(&self.one))?;
            }
            t = next;
            damp = false;
            while next_jump.next_if(|&e| e <= t + tol).is_some() {
                damp = true;
            }
            while probes.next_if(|&&p| p <= t + tol).is_some() {
                snapshots.push(u.clone());
            }
        }
        Ok(PdePathSample { path, snapshots })
    }
}

/// Samples `n_paths` realizations of the switching PDE. Each path draws
/// `J(0)` from the initial law, samples the environment exactly, and marches
/// the field with the active state's operator and boundary conditions,
/// breaking steps at every jump.
pub fn sample_pde_paths(
    problem: &SwitchingPdeProblem,
    n_paths: usize,
    settings: &PdePathSettings,
    streams: &RandomStreams,
) -> Result<PdePathBatch> {
    if n_paths == 0 {
        return Err(Error::EmptyBatch);
    }
    if settings.probe_times.is_empty()
        || settings.probe_times.windows(2).any(|w| w[1] <= w[0])
        || settings.probe_times[0] < 0.0
        || *settings.probe_times.last().unwrap() <= 0.0
    {
        return Err(Error::Settings(
            "probe times must be increasing, nonnegative and end after 0".into(),
        ));
    }
    if !(settings.dt > 0.0) {
        return Err(Error::Settings("dt must be positive".into()));
    }
    let template = Marcher::new(problem, settings.n)?;
    let grid = template.grid.clone();
    let pool = worker_pool()?;
    let samples = pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map_init(
                || Marcher::new(problem, settings.n),
                |marcher, k| match marcher {
                    Ok(m) => m.run(problem, settings, streams.split(k as u64)),
                    Err(_) => Err(Error::Settings("could not assemble path systems".into())),
                },
            )
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(PdePathBatch {
        grid,
        probe_times: settings.probe_times.clone(),
        samples,
        seed_key: streams.key(),
    })
}

fn probe_label(points: &[f64], states: Option<&[usize]>, t: f64) -> String {
    let xs: Vec<String> = points.iter().map(|x| format!("{x}")).collect();
    match states {
        Some(s) => format!("t={t} x=({}) states={s:?}", xs.join(",")),
        None => format!("t={t} x=({})", xs.join(",")),
    }
}

/// Empirical `E[1{J(t) in states} u(x_1, t) ... u(x_M, t)]` for each point
/// tuple. `states = None` sums over all states.
pub fn estimate_moments(
    batch: &PdePathBatch,
    time_index: usize,
    points: &[Vec<f64>],
    states: Option<&[usize]>,
) -> Result<Vec<McEstimate>> {
    if batch.samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if time_index >= batch.probe_times.len() {
        return Err(Error::Settings(format!("no probe time with index {time_index}")));
    }
    points
        .iter()
        .map(|pt| {
            let samples: Vec<f64> = batch
                .samples
                .iter()
                .map(|s| {
                    let keep = states.is_none_or(|f| f.contains(&batch.state(s, time_index)));
                    if keep {
                        pt.iter().map(|&x| batch.value(s, time_index, x)).product()
                    } else {
                        0.0
                    }
                })
                .collect();
            McEstimate::from_samples(&samples, probe_label(pt, states, batch.probe_times[time_index]))
        })
        .collect()
}

/// Empirical standard deviation of `u(x, t)` with a delta-method standard
/// error `sqrt((m4 - s^4) / (4 s^2 N))`.
pub fn estimate_std_dev(batch: &PdePathBatch, time_index: usize, x: f64) -> Result<McEstimate> {
    let n = batch.samples.len();
    if n < 2 {
        return Err(Error::EmptyBatch);
    }
    let ys: Vec<f64> = batch
        .samples
        .iter()
        .map(|s| batch.value(s, time_index, x))
        .collect();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let m4 = ys.iter().map(|y| (y - mean).powi(4)).sum::<f64>() / n as f64;
    let sd = var.sqrt();
    let std_error = if var > 0.0 {
        ((m4 - var * var).max(0.0) / (4.0 * var * n as f64)).sqrt()
    } else {
        0.0
    };
    Ok(McEstimate {
        value: sd,
        std_error,
        n_samples: n,
        probe: format!("std t={} x={x}", batch.probe_times[time_index]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::solve_moment_hierarchy_transient;
    use crate::problem::{builtin_problem, BuiltinParams, Coefficient, Example};

    #[test]
    fn frozen_paths_equal_deterministic_solve() {
        let params = BuiltinParams {
            alpha: Some(0.0),
            ..Default::default()
        };
        let problem = builtin_problem(Example::Thermostat, &params)
            .unwrap()
            .into_pde()
            .unwrap();
        let settings = PdePathSettings {
            n: 30,
            dt: 0.05,
            probe_times: vec![0.5, 1.0],
        };
        let batch = sample_pde_paths(&problem, 3, &settings, &RandomStreams::new(1)).unwrap();
        let det = solve_moment_hierarchy_transient(&problem, 1, 30, 1.0, 0.05, &[0.5]).unwrap();
        for (k, levels) in det.levels.iter().enumerate() {
            let mean = levels[1].field.state_sum();
            for s in &batch.samples {
                let diff = s.snapshots[k]
                    .iter()
                    .zip(&mean)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                assert!(diff < 1e-10, "{diff}");
            }
        }
    }

    #[test]
    fn state_filter_on_single_state_is_identity() {
        let mut problem = builtin_problem(Example::Insect, &BuiltinParams::default())
            .unwrap()
            .into_pde()
            .unwrap()
            .frozen(0);
        problem.initial.field = Coefficient::Constant(0.5);
        let settings = PdePathSettings {
            n: 9,
            dt: 0.1,
            probe_times: vec![0.2],
        };
        let batch = sample_pde_paths(&problem, 4, &settings, &RandomStreams::new(3)).unwrap();
        let pts = vec![vec![0.3], vec![0.6]];
        let a = estimate_moments(&batch, 0, &pts, None).unwrap();
        let b = estimate_moments(&batch, 0, &pts, Some(&[0])).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.value, y.value);
            assert_eq!(x.std_error, y.std_error);
        }
    }
}
