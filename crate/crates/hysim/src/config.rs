use std::path::{Path, PathBuf};
use std::str::FromStr;

use hysim_core::{BuiltinParams, Example, Problem, ProblemConfig};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Geometric,
    Arithmetic,
}

/// A one-parameter range of independent jobs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub parameter: String,
    pub from: f64,
    pub to: f64,
    #[serde(default = "default_points")]
    pub points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_points() -> usize {
    12
}

fn default_spacing() -> Spacing {
    Spacing::Geometric
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        let k = self.points;
        if k == 1 {
            return vec![self.from];
        }
        (0..k)
            .map(|i| {
                let s = i as f64 / (k - 1) as f64;
                match self.spacing {
                    Spacing::Geometric => self.from * (self.to / self.from).powf(s),
                    Spacing::Arithmetic => self.from + (self.to - self.from) * s,
                }
            })
            .collect()
    }

    fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(HarnessError::Config(format!("sweep `{}`: {m}", self.parameter)));
        if self.points == 0 {
            return bad("needs at least one point");
        }
        if !(self.from.is_finite() && self.to.is_finite()) {
            return bad("bounds must be finite");
        }
        if self.spacing == Spacing::Geometric && !(self.from > 0.0 && self.to > 0.0) {
            return bad("geometric ranges need positive bounds");
        }
        Ok(())
    }
}

/// `name=from..to[:points[:geometric|arithmetic]]`.
impl FromStr for Sweep {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self> {
        let err = || HarnessError::Config(format!("cannot parse sweep `{s}` (expected name=from..to[:points[:spacing]])"));
        let (name, range) = s.split_once('=').ok_or_else(err)?;
        let mut parts = range.split(':');
        let (from, to) = parts.next().and_then(|r| r.split_once("..")).ok_or_else(err)?;
        let points = match parts.next() {
            Some(p) => p.trim().parse().map_err(|_| err())?,
            None => default_points(),
        };
        let spacing = match parts.next().map(str::trim) {
            None | Some("geometric") => Spacing::Geometric,
            Some("arithmetic") => Spacing::Arithmetic,
            Some(_) => return Err(err()),
        };
        if parts.next().is_some() {
            return Err(err());
        }
        let sweep = Sweep {
            parameter: name.trim().to_string(),
            from: from.trim().parse().map_err(|_| err())?,
            to: to.trim().parse().map_err(|_| err())?,
            points,
            spacing,
        };
        sweep.check()?;
        Ok(sweep)
    }
}

/// Experiment description as read from JSON. Every field is optional; the
/// command line overrides file values and the experiment supplies defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Built-in example name, or `custom`.
    pub experiment: Option<String>,
    /// Inline problem for custom runs.
    pub problem: Option<ProblemConfig>,
    /// Problem file for custom runs, relative to the config file.
    pub problem_file: Option<PathBuf>,
    #[serde(default)]
    pub params: BuiltinParams,
    pub n: Option<usize>,
    /// Grid used by sampled PDE paths.
    pub mc_n: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub paths: Option<usize>,
    pub seed: Option<u64>,
    pub probe_points: Option<Vec<f64>>,
    pub probe_times: Option<Vec<f64>>,
    /// Particle start configurations (gated and custom particle runs).
    pub configurations: Option<Vec<Vec<f64>>>,
    pub out: Option<PathBuf>,
    pub run_bvp: Option<bool>,
    /// Defaults to on exactly when a seed is given.
    pub run_mc: Option<bool>,
    pub run_xval: Option<bool>,
    pub plots: Option<bool>,
    pub sweep: Option<Sweep>,
    /// Open fractions for the insect sweep.
    pub rho: Option<Vec<f64>>,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let (Some(file), Some(dir)) = (&cfg.problem_file, path.parent()) {
            if file.is_relative() {
                cfg.problem_file = Some(dir.join(file));
            }
        }
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Builtin(Example),
    Custom(ProblemConfig),
}

impl Target {
    pub fn name(&self) -> &str {
        match self {
            Target::Builtin(e) => e.name(),
            Target::Custom(_) => "custom",
        }
    }
}

/// Fully resolved run settings.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunPlan {
    pub experiment: String,
    #[serde(skip)]
    pub target: Target,
    pub params: BuiltinParams,
    pub n: usize,
    pub mc_n: usize,
    pub dt: f64,
    pub horizon: f64,
    pub paths: usize,
    pub seed: Option<u64>,
    pub probe_points: Vec<f64>,
    pub probe_times: Vec<f64>,
    pub configurations: Vec<Vec<f64>>,
    #[serde(skip)]
    pub out: PathBuf,
    pub run_bvp: bool,
    pub run_mc: bool,
    pub run_xval: bool,
    pub plots: bool,
    pub sweep: Option<Sweep>,
    pub rho: Vec<f64>,
}

struct Defaults {
    n: usize,
    mc_n: usize,
    dt: f64,
    horizon: f64,
    paths: usize,
    probe_points: usize,
    probe_times: Vec<f64>,
}

fn defaults(target: &Target) -> Defaults {
    let base = Defaults {
        n: 100,
        mc_n: 49,
        dt: 0.01,
        horizon: 5.0,
        paths: 1000,
        probe_points: 10,
        probe_times: vec![],
    };
    match target {
        Target::Builtin(Example::Neural) => Defaults {
            n: 200,
            horizon: 20.0,
            ..base
        },
        Target::Builtin(Example::Insect) => Defaults {
            n: 200,
            probe_points: 5,
            ..base
        },
        Target::Builtin(Example::Thermostat) => Defaults {
            horizon: 10.0,
            probe_points: 5,
            probe_times: vec![1.0],
            ..base
        },
        Target::Builtin(Example::Interface) => Defaults {
            n: 201,
            probe_points: 5,
            ..base
        },
        Target::Builtin(Example::Gated) => Defaults {
            dt: 1e-3,
            horizon: 20.0,
            probe_times: vec![0.2],
            ..base
        },
        Target::Custom(_) => base,
    }
}

fn even_points(length: f64, k: usize) -> Vec<f64> {
    if k == 1 {
        return vec![length / 2.0];
    }
    (0..k).map(|i| length * i as f64 / (k - 1) as f64).collect()
}

fn interior_points(length: f64, k: usize) -> Vec<f64> {
    (1..=k).map(|i| length * i as f64 / (k + 1) as f64).collect()
}

fn gated_configurations(length: f64) -> Vec<Vec<f64>> {
    let at = |f: f64| f * length;
    vec![
        vec![at(0.25)],
        vec![at(0.5)],
        vec![at(0.75)],
        vec![at(0.25), at(0.5)],
        vec![at(0.5), at(0.5)],
        vec![at(0.3), at(0.7)],
    ]
}

impl RunPlan {
    pub fn resolve(cfg: ExperimentConfig) -> Result<Self> {
        let name = cfg.experiment.clone().unwrap_or_else(|| {
            if cfg.problem.is_some() || cfg.problem_file.is_some() {
                "custom".to_string()
            } else {
                String::new()
            }
        });
        let target = match name.as_str() {
            "" => {
                return Err(HarnessError::Config(
                    "no experiment given (use --experiment or a config file)".into(),
                ))
            }
            "custom" => {
                let problem = match (&cfg.problem, &cfg.problem_file) {
                    (Some(p), None) => p.clone(),
                    (None, Some(f)) => {
                        let text = std::fs::read_to_string(f).map_err(|e| {
                            HarnessError::Config(format!("{}: {e}", f.display()))
                        })?;
                        ProblemConfig::from_json(&text).map_err(HarnessError::config)?
                    }
                    (Some(_), Some(_)) => {
                        return Err(HarnessError::Config(
                            "give either `problem` or `problem_file`, not both".into(),
                        ))
                    }
                    (None, None) => {
                        return Err(HarnessError::Config(
                            "custom experiments need `problem` or `problem_file`".into(),
                        ))
                    }
                };
                hysim_core::validate_problem(&problem).map_err(HarnessError::config)?;
                Target::Custom(problem)
            }
            other => {
                if cfg.problem.is_some() || cfg.problem_file.is_some() {
                    return Err(HarnessError::Config(format!(
                        "built-in experiment `{other}` does not take a problem"
                    )));
                }
                Target::Builtin(other.parse::<Example>().map_err(HarnessError::config)?)
            }
        };
        let d = defaults(&target);
        let length = match &target {
            Target::Builtin(e) => cfg.params.resolve(*e).0,
            Target::Custom(p) => p.domain.length,
        };
        let problem = match &target {
            Target::Builtin(e) => hysim_core::builtin_problem(*e, &cfg.params),
            Target::Custom(p) => hysim_core::validate_problem(p),
        }
        .map_err(HarnessError::config)?;
        if matches!(target, Target::Custom(_)) && cfg.params != BuiltinParams::default() {
            return Err(HarnessError::Config("`params` only applies to built-in experiments".into()));
        }
        let n = cfg.n.unwrap_or(d.n);
        if target == Target::Builtin(Example::Interface) && n.is_multiple_of(2) {
            return Err(HarnessError::Config(format!(
                "the interface experiment needs an odd n so that L/2 is a node, got {n}"
            )));
        }
        let seed = cfg.seed;
        let run_mc = cfg.run_mc.unwrap_or(seed.is_some());
        if run_mc && seed.is_none() {
            return Err(HarnessError::Config("Monte Carlo runs need a seed".into()));
        }
        let run_bvp = cfg.run_bvp.unwrap_or(true);
        let run_xval = cfg.run_xval.unwrap_or(run_bvp && run_mc);
        if run_xval && !(run_bvp && run_mc) {
            return Err(HarnessError::Config(
                "cross-validation needs both the BVP and the Monte Carlo route".into(),
            ));
        }
        let probe_points = match cfg.probe_points {
            Some(p) => p,
            None if matches!(target, Target::Builtin(Example::Neural)) => {
                even_points(length, d.probe_points)
            }
            None => interior_points(length, d.probe_points),
        };
        if probe_points.iter().any(|&x| !(0.0..=length).contains(&x)) {
            return Err(HarnessError::Config(format!("probe points must lie in [0, {length}]")));
        }
        let horizon = cfg.horizon.unwrap_or(d.horizon);
        let dt = cfg.dt.unwrap_or(match &problem {
            // Resolve the fastest switching with about ten steps per sojourn.
            Problem::Pde(p) => {
                let rate = (0..p.n_states()).map(|i| p.generator.exit_rate(i)).fold(0.0, f64::max);
                if rate > 0.0 {
                    d.dt.min(0.1 / rate)
                } else {
                    d.dt
                }
            }
            Problem::Sde(_) => d.dt,
        });
        if !(horizon > 0.0 && horizon.is_finite() && dt > 0.0 && dt.is_finite()) {
            return Err(HarnessError::Config("horizon and dt must be positive".into()));
        }
        let probe_times = cfg.probe_times.unwrap_or(if d.probe_times.is_empty() {
            vec![horizon]
        } else {
            d.probe_times
        });
        if probe_times.is_empty()
            || probe_times.iter().any(|&t| !(t > 0.0 && t <= horizon))
            || probe_times.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(HarnessError::Config(format!(
                "probe times must be increasing and lie in (0, {horizon}]"
            )));
        }
        let configurations = match (&target, cfg.configurations) {
            (_, Some(c)) => c,
            (Target::Builtin(Example::Gated), None) => match &cfg.params.starts {
                Some(s) => vec![s.clone()],
                None => gated_configurations(length),
            },
            (Target::Custom(p), None) => p
                .particles
                .as_ref()
                .map(|s| vec![s.starts.clone()])
                .unwrap_or_default(),
            _ => vec![],
        };
        if let Some(s) = &cfg.sweep {
            s.check()?;
            let ok = matches!(
                (&target, s.parameter.as_str()),
                (Target::Builtin(Example::Insect), "rate")
                    | (Target::Builtin(Example::Thermostat), "k" | "alpha")
            );
            if !ok {
                return Err(HarnessError::Config(format!(
                    "cannot sweep `{}` for the {} experiment (insect: rate; thermostat: k, alpha)",
                    s.parameter,
                    target.name()
                )));
            }
        }
        let rho = cfg.rho.unwrap_or_else(|| vec![0.1, 0.25, 0.5]);
        if rho.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
            return Err(HarnessError::Config("open fractions must lie in (0, 1)".into()));
        }
        let paths = cfg.paths.unwrap_or(d.paths);
        if run_mc && paths < 2 {
            return Err(HarnessError::Config("Monte Carlo runs need at least two paths".into()));
        }
        Ok(RunPlan {
            experiment: target.name().to_string(),
            target,
            params: cfg.params,
            n,
            mc_n: cfg.mc_n.unwrap_or(d.mc_n),
            dt,
            horizon,
            paths,
            seed,
            probe_points,
            probe_times,
            configurations,
            out: cfg.out.unwrap_or_else(|| PathBuf::from("out")),
            run_bvp,
            run_mc,
            run_xval,
            plots: cfg.plots.unwrap_or(true),
            sweep: cfg.sweep,
            rho,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            experiment: Some(name.into()),
            ..Default::default()
        }
    }

    #[test]
    fn sweep_syntax() {
        let s: Sweep = "rate=1..1000".parse().unwrap();
        let v = s.values();
        assert_eq!(v.len(), 12);
        assert!((v[0] - 1.0).abs() < 1e-12 && (v[11] - 1000.0).abs() < 1e-9);
        let s: Sweep = "k=1..6:6:arithmetic".parse().unwrap();
        assert_eq!(s.values(), vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert!("rate=0..10".parse::<Sweep>().is_err());
        assert!("rate1..10".parse::<Sweep>().is_err());
    }

    #[test]
    fn mc_needs_seed() {
        let mut c = cfg("neural");
        c.run_mc = Some(true);
        assert!(matches!(RunPlan::resolve(c), Err(HarnessError::Config(_))));
        let plan = RunPlan::resolve(cfg("neural")).unwrap();
        assert!(!plan.run_mc && !plan.run_xval);
    }

    #[test]
    fn interface_needs_odd_n() {
        let mut c = cfg("interface");
        c.n = Some(100);
        assert!(matches!(RunPlan::resolve(c), Err(HarnessError::Config(_))));
    }

    #[test]
    fn unknown_experiment() {
        assert_eq!(RunPlan::resolve(cfg("fluid")).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn sweep_must_fit_experiment() {
        let mut c = cfg("neural");
        c.sweep = Some("rate=1..10".parse().unwrap());
        assert!(RunPlan::resolve(c).is_err());
    }
}
