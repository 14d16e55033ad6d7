use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{worker_pool, McEstimate};
use crate::error::{Error, Result};
use crate::mjp::JumpPath;
use crate::problem::{Face, SdeState, SwitchingSdeProblem};
use crate::random::RandomStreams;

/// Largest fraction of censored paths accepted for exit-time statistics.
pub const MAX_CENSORED_FRACTION: f64 = 1e-3;

const MAX_REFINEMENT: u32 = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleSettings {
    /// Base time step.
    pub dt: f64,
    pub horizon: f64,
    /// Each base step is split into `2^refinement` substeps whose Brownian
    /// increments refine the base increment, so runs with different
    /// refinement share the same driving noise.
    pub refinement: u32,
}

impl ParticleSettings {
    pub fn step(&self) -> f64 {
        self.dt / f64::from(1u32 << self.refinement)
    }
}

/// Exit record of the particles of one Monte Carlo path.
#[derive(Clone, Debug, PartialEq)]
pub struct ParticlePath {
    /// `f64::INFINITY` for particles still inside at the horizon.
    pub exit_times: Vec<f64>,
    pub exit_faces: Vec<Option<Face>>,
}

impl ParticlePath {
    pub fn alive(&self, particle: usize, t: f64) -> bool {
        self.exit_times[particle] > t
    }

    pub fn is_censored(&self) -> bool {
        self.exit_times.iter().any(|t| t.is_infinite())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleTrajectoryBatch {
    pub paths: Vec<ParticlePath>,
    pub n_particles: usize,
    pub horizon: f64,
    pub dt: f64,
    pub refinement: u32,
    pub seed_key: u64,
}

impl ParticleTrajectoryBatch {
    pub fn censored_fraction(&self) -> f64 {
        let c = self.paths.iter().filter(|p| p.is_censored()).count();
        c as f64 / self.paths.len().max(1) as f64
    }
}

/// `1e-3 L^2 / max sigma^2`, the largest accepted base step.
pub fn max_stable_dt(problem: &SwitchingSdeProblem) -> f64 {
    let l = problem.length;
    let s2 = problem
        .states
        .iter()
        .map(|s| 2.0 * s.operator.diffusivity.max_abs_on(l))
        .fold(0.0, f64::max);
    1e-3 * l * l / s2
}

enum Outcome {
    Inside(f64),
    Exit(f64, Face),
}

struct Walker<'a> {
    problem: &'a SwitchingSdeProblem,
    bridge: ChaCha8Rng,
    split: ChaCha8Rng,
}

impl Walker<'_> {
    /// One Euler-Maruyama step of length `tau` with Brownian increment `w`
    /// starting at `(t0, x)`.
    fn advance(&mut self, state: &SdeState, t0: f64, x: f64, tau: f64, w: f64) -> Outcome {
        let l = self.problem.length;
        let sigma = state.operator.sigma(x);
        let mut y = x + state.operator.drift.eval(x) * tau + sigma * w;
        loop {
            if y < 0.0 {
                if state.is_absorbing(Face::Left) {
                    return Outcome::Exit(t0 + tau * x / (x - y), Face::Left);
                }
                y = -y;
            } else if y > l {
                if state.is_absorbing(Face::Right) {
                    return Outcome::Exit(t0 + tau * (l - x) / (y - x), Face::Right);
                }
                y = 2.0 * l - y;
            } else {
                break;
            }
        }
        let s2t = sigma * sigma * tau;
        for face in Face::BOTH {
            if !state.is_absorbing(face) || s2t <= 0.0 {
                continue;
            }
            let (d0, d1) = match face {
                Face::Left => (x, y),
                Face::Right => (l - x, l - y),
            };
            let p = (-2.0 * d0 * d1 / s2t).exp();
            if p > 1e-12 && self.bridge.random::<f64>() < p {
                let frac = if d0 + d1 > 0.0 { d0 / (d0 + d1) } else { 0.0 };
                return Outcome::Exit(t0 + tau * frac, face);
            }
        }
        Outcome::Inside(y)
    }
}

/// Splits a Brownian increment `w` over an interval of length `tau` into
/// `2^levels` increments by successive midpoint bridging.
fn refine_increment(w: f64, tau: f64, levels: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut incs = vec![w];
    let mut width = tau;
    for _ in 0..levels {
        let half = width / 2.0;
        let mut next = Vec::with_capacity(incs.len() * 2);
        for &inc in &incs {
            let z: f64 = rng.sample(StandardNormal);
            let first = inc / 2.0 + (half / 2.0).sqrt() * z;
            next.push(first);
            next.push(inc - first);
        }
        incs = next;
        width = half;
    }
    incs
}

fn simulate_one(
    problem: &SwitchingSdeProblem,
    path: &JumpPath,
    settings: &ParticleSettings,
    start: f64,
    streams: RandomStreams,
) -> (f64, Option<Face>) {
    let mut base = streams.split(0).rng();
    let refine = streams.split(1);
    let mut walker = Walker {
        problem,
        split: streams.split(2).rng(),
        bridge: streams.split(3).rng(),
    };
    let l = problem.length;
    let horizon = settings.horizon;
    let mut epochs = path.epochs().iter().skip(1).map(|e| e.0).peekable();
    let mut state = path.epochs()[0].1;
    let mut x = start;
    let n_base = (horizon / settings.dt - 1e-9).ceil().max(1.0) as u64;
    for b in 0..n_base {
        let t0 = b as f64 * settings.dt;
        let t1 = if b + 1 == n_base { horizon } else { (b + 1) as f64 * settings.dt };
        let width = t1 - t0;
        let w: f64 = width.sqrt() * base.sample::<f64, _>(StandardNormal);
        let incs = if settings.refinement == 0 {
            vec![w]
        } else {
            refine_increment(w, width, settings.refinement, &mut refine.split(b).rng())
        };
        let sub = width / incs.len() as f64;
        for (k, &inc) in incs.iter().enumerate() {
            let mut a = t0 + k as f64 * sub;
            let end = if k + 1 == incs.len() { t1 } else { a + sub };
            let mut rest = inc;
            while let Some(e) = epochs.next_if(|&e| e < end) {
                let (l0, l1) = (e - a, end - e);
                let part = if l0 <= 0.0 {
                    0.0
                } else {
                    let z: f64 = walker.split.sample(StandardNormal);
                    rest * l0 / (l0 + l1) + (l0 * l1 / (l0 + l1)).sqrt() * z
                };
                if l0 > 0.0 {
                    match walker.advance(&problem.states[state], a, x, l0, part) {
                        Outcome::Exit(t, f) => return (t, Some(f)),
                        Outcome::Inside(y) => x = y,
                    }
                }
                rest -= part;
                a = e;
                state = path.state_at(e);
                let st = &problem.states[state];
                if x <= 0.0 && st.is_absorbing(Face::Left) {
                    return (e, Some(Face::Left));
                }
                if x >= l && st.is_absorbing(Face::Right) {
                    return (e, Some(Face::Right));
                }
            }
            match walker.advance(&problem.states[state], a, x, end - a, rest) {
                Outcome::Exit(t, f) => return (t, Some(f)),
                Outcome::Inside(y) => x = y,
            }
        }
    }
    (f64::INFINITY, None)
}

/// Simulates `n_paths` Monte Carlo paths. Each path samples one environment
/// trajectory from `initial_state` and moves every particle independently
/// through it by Euler-Maruyama, mirroring at reflecting faces and stopping
/// at absorbing ones. Steps are split exactly at environment jumps.
pub fn simulate_particles(
    problem: &SwitchingSdeProblem,
    n_paths: usize,
    settings: &ParticleSettings,
    streams: &RandomStreams,
) -> Result<ParticleTrajectoryBatch> {
    if n_paths == 0 {
        return Err(Error::EmptyBatch);
    }
    if !(settings.horizon > 0.0 && settings.horizon.is_finite()) {
        return Err(Error::Settings("horizon must be positive and finite".into()));
    }
    let cap = max_stable_dt(problem);
    if !(settings.dt > 0.0) || settings.dt > cap * (1.0 + 1e-12) {
        return Err(Error::Settings(format!(
            "dt must lie in (0, {cap:e}] (1e-3 L^2 / max sigma^2), got {}",
            settings.dt
        )));
    }
    if settings.refinement > MAX_REFINEMENT {
        return Err(Error::Settings(format!(
            "refinement must be at most {MAX_REFINEMENT}"
        )));
    }
    let pool = worker_pool()?;
    let paths = pool.install(|| {
        (0..n_paths)
            .into_par_iter()
            .map(|p| {
                let ps = streams.split(p as u64);
                let env = problem.generator.sample_path(
                    problem.initial_state,
                    settings.horizon,
                    &mut ps.split(0).rng(),
                );
                let (exit_times, exit_faces) = problem
                    .particles
                    .starts
                    .iter()
                    .enumerate()
                    .map(|(m, &x0)| simulate_one(problem, &env, settings, x0, ps.split(1 + m as u64)))
                    .unzip();
                ParticlePath {
                    exit_times,
                    exit_faces,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(ParticleTrajectoryBatch {
        paths,
        n_particles: problem.n_particles(),
        horizon: settings.horizon,
        dt: settings.dt,
        refinement: settings.refinement,
        seed_key: streams.key(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExitStatistic {
    /// At least one particle inside at `t`.
    SurvivalAny(f64),
    /// Every particle inside at `t`.
    SurvivalAll(f64),
    /// Every particle leaves through the given faces.
    HittingAll(Vec<Face>),
    /// Exit time of the last particle.
    MfptLast,
}

fn check_censoring(batch: &ParticleTrajectoryBatch) -> Result<()> {
    let censored = batch.paths.iter().filter(|p| p.is_censored()).count();
    if censored as f64 > MAX_CENSORED_FRACTION * batch.paths.len() as f64 {
        return Err(Error::ExcessCensoring {
            censored,
            total: batch.paths.len(),
        });
    }
    Ok(())
}

pub fn estimate_exit_statistics(
    batch: &ParticleTrajectoryBatch,
    stat: &ExitStatistic,
) -> Result<McEstimate> {
    if batch.paths.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let indicator = |b: bool| if b { 1.0 } else { 0.0 };
    let (samples, label): (Vec<f64>, String) = match stat {
        ExitStatistic::SurvivalAny(t) | ExitStatistic::SurvivalAll(t) => {
            if *t > batch.horizon {
                return Err(Error::Settings(format!(
                    "survival time {t} beyond the simulated horizon {}",
                    batch.horizon
                )));
            }
            let any = matches!(stat, ExitStatistic::SurvivalAny(_));
            let s = batch
                .paths
                .iter()
                .map(|p| {
                    let mut alive = (0..batch.n_particles).map(|m| p.alive(m, *t));
                    indicator(if any { alive.any(|a| a) } else { alive.all(|a| a) })
                })
                .collect();
            let name = if any { "survival_any" } else { "survival_all" };
            (s, format!("{name} t={t}"))
        }
        ExitStatistic::HittingAll(target) => {
            check_censoring(batch)?;
            let s = batch
                .paths
                .iter()
                .map(|p| indicator(p.exit_faces.iter().all(|f| f.is_some_and(|f| target.contains(&f)))))
                .collect();
            let names: Vec<&str> = target.iter().map(|f| f.name()).collect();
            (s, format!("hitting_all {}", names.join("+")))
        }
        ExitStatistic::MfptLast => {
            check_censoring(batch)?;
            let s = batch
                .paths
                .iter()
                .filter(|p| !p.is_censored())
                .map(|p| p.exit_times.iter().copied().fold(0.0, f64::max))
                .collect();
            (s, "mfpt_last".to_string())
        }
    };
    McEstimate::from_samples(&samples, label)
}

/// Pearson correlation of the survival indicators of the first two particles
/// at time `t`, with the large-sample standard error `(1 - r^2)/sqrt(N)`.
pub fn survival_correlation(batch: &ParticleTrajectoryBatch, t: f64) -> Result<McEstimate> {
    if batch.n_particles < 2 {
        return Err(Error::Settings("correlation needs at least two particles".into()));
    }
    let n = batch.paths.len();
    if n < 2 {
        return Err(Error::EmptyBatch);
    }
    let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
    for p in &batch.paths {
        let a = f64::from(u8::from(p.alive(0, t)));
        let b = f64::from(u8::from(p.alive(1, t)));
        sa += a;
        sb += b;
        sab += a * b;
    }
    let nf = n as f64;
    let (ma, mb) = (sa / nf, sb / nf);
    let cov = sab / nf - ma * mb;
    let den = (ma * (1.0 - ma) * mb * (1.0 - mb)).sqrt();
    let r = if den > 0.0 { cov / den } else { 0.0 };
    Ok(McEstimate {
        value: r,
        std_error: (1.0 - r * r) / nf.sqrt(),
        n_samples: n,
        probe: format!("survival_correlation t={t}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mjp::GeneratorMatrix;
    use crate::problem::{BoundaryCondition, BoundaryPair, OperatorSpec, ParticleSpec};

    fn single(left: BoundaryCondition, right: BoundaryCondition, starts: Vec<f64>) -> SwitchingSdeProblem {
        SwitchingSdeProblem {
            length: 1.0,
            generator: GeneratorMatrix::single_state(),
            states: vec![SdeState {
                operator: OperatorSpec::pure_diffusion(1.0),
                boundary: BoundaryPair::new(left, right),
            }],
            particles: ParticleSpec {
                starts,
                target: vec![Face::Left],
            },
            initial_state: 0,
        }
    }

    fn settings(problem: &SwitchingSdeProblem, horizon: f64) -> ParticleSettings {
        ParticleSettings {
            dt: max_stable_dt(problem),
            horizon,
            refinement: 0,
        }
    }

    #[test]
    fn classical_mean_exit_time() {
        let p = single(BoundaryCondition::Absorbing, BoundaryCondition::Absorbing, vec![0.5]);
        let batch = simulate_particles(&p, 4000, &settings(&p, 10.0), &RandomStreams::new(11)).unwrap();
        let e = estimate_exit_statistics(&batch, &ExitStatistic::MfptLast).unwrap();
        assert!(e.z_score(0.125).abs() < 3.0, "{e:?}");
    }

    #[test]
    fn reflecting_left_exits_right() {
        let p = single(BoundaryCondition::Reflecting, BoundaryCondition::Absorbing, vec![0.3, 0.7]);
        let batch = simulate_particles(&p, 500, &settings(&p, 20.0), &RandomStreams::new(2)).unwrap();
        let e = estimate_exit_statistics(&batch, &ExitStatistic::HittingAll(vec![Face::Right])).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn all_reflecting_never_exits() {
        let p = single(BoundaryCondition::Reflecting, BoundaryCondition::Reflecting, vec![0.01, 0.99]);
        let batch = simulate_particles(&p, 50, &settings(&p, 0.5), &RandomStreams::new(5)).unwrap();
        assert!(batch.paths.iter().all(|q| q.exit_faces.iter().all(Option::is_none)));
        assert!(matches!(
            estimate_exit_statistics(&batch, &ExitStatistic::MfptLast),
            Err(Error::ExcessCensoring { .. })
        ));
    }

    #[test]
    fn dt_cap_enforced() {
        let p = single(BoundaryCondition::Absorbing, BoundaryCondition::Absorbing, vec![0.5]);
        let s = ParticleSettings {
            dt: 2.0 * max_stable_dt(&p),
            horizon: 1.0,
            refinement: 0,
        };
        assert!(matches!(
            simulate_particles(&p, 1, &s, &RandomStreams::new(0)),
            Err(Error::Settings(_))
        ));
    }

    #[test]
    fn refinement_preserves_sum() {
        let mut rng = RandomStreams::new(4).rng();
        let incs = refine_increment(0.7, 0.5, 3, &mut rng);
        assert_eq!(incs.len(), 8);
        assert!((incs.iter().sum::<f64>() - 0.7).abs() < 1e-14);
    }

    #[test]
    fn single_particle_survival_variants_agree() {
        let p = single(BoundaryCondition::Absorbing, BoundaryCondition::Reflecting, vec![0.4]);
        let batch = simulate_particles(&p, 300, &settings(&p, 1.0), &RandomStreams::new(8)).unwrap();
        let a = estimate_exit_statistics(&batch, &ExitStatistic::SurvivalAny(0.2)).unwrap();
        let b = estimate_exit_statistics(&batch, &ExitStatistic::SurvivalAll(0.2)).unwrap();
        assert_eq!(a.value, b.value);
    }
}
