//! The experiments behind `hysim run`.

use hysim_core::exit::{solve_hitting, solve_mfpt, solve_survival, SurvivalVariant};
use hysim_core::mc::{
    estimate_exit_statistics, estimate_moments, estimate_std_dev, max_stable_dt, sample_pde_paths,
    simulate_particles, survival_correlation, worker_pool, ExitStatistic, McEstimate, PdePathBatch,
    PdePathSettings, ParticleSettings,
};
use hysim_core::moments::{
    dominant_growth_rate, l1_norm, solve_moment_hierarchy_steady, solve_moment_hierarchy_transient,
    summarize, MomentLevel,
};
use hysim_core::{
    builtin_problem, validate_problem, BuiltinParams, Example, Face, Problem, RandomStreams,
    SwitchingPdeProblem, SwitchingSdeProblem,
};
use rayon::prelude::*;

use crate::config::{RunPlan, Spacing, Sweep, Target};
use crate::error::{HarnessError, Result};
use crate::output::{num, Check, Plot, Scalar, Series, Table};
use crate::xval::{xval, Reference, XvalReport};

/// Relative tolerance on the closed-form neural mean.
pub const NEURAL_TOL: f64 = 1e-3;
/// Absolute tolerance on the closed-form insect flux.
pub const INSECT_FLUX_TOL: f64 = 1e-3;
/// Required ratio `std(L) / std(0)` in the neural example.
pub const SPIKE_RATIO: f64 = 2.0;
/// Interior nodes of the interface self-reference.
pub const INTERFACE_REFERENCE_N: usize = 801;
pub const INTERFACE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub scalars: Vec<Scalar>,
    pub checks: Vec<Check>,
    pub xval: Option<XvalReport>,
    pub tables: Vec<Table>,
    pub plots: Vec<Plot>,
}

impl Outcome {
    fn scalar(&mut self, name: impl Into<String>, value: f64) {
        self.scalars.push(Scalar {
            name: name.into(),
            value,
        });
    }

    fn add_xval(&mut self, report: XvalReport) {
        match &mut self.xval {
            Some(x) => x.extend(report),
            None => self.xval = Some(report),
        }
    }

    pub fn verdict(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.xval.as_ref().is_none_or(|x| x.verdict)
    }
}

pub fn run_experiment(plan: &RunPlan) -> Result<Outcome> {
    match &plan.target {
        Target::Builtin(Example::Neural) => neural(plan),
        Target::Builtin(Example::Insect) => insect(plan),
        Target::Builtin(Example::Thermostat) => thermostat(plan),
        Target::Builtin(Example::Interface) => interface(plan),
        Target::Builtin(Example::Gated) => {
            let p = builtin_problem(Example::Gated, &plan.params)?.into_sde()?;
            exit_experiment(plan, &p, "gated", true)
        }
        Target::Custom(cfg) => match validate_problem(cfg).map_err(HarnessError::config)? {
            Problem::Pde(p) => custom_pde(plan, &p),
            Problem::Sde(p) => exit_experiment(plan, &p, "custom", false),
        },
    }
}

fn streams(plan: &RunPlan) -> RandomStreams {
    RandomStreams::new(plan.seed.expect("seed checked when resolving the plan"))
}

fn mean_at(levels: &[MomentLevel], x: f64) -> f64 {
    let f = &levels[1].field;
    (0..f.n_states()).map(|i| f.eval(i, &[x])).sum()
}

fn std_at(levels: &[MomentLevel], x: f64) -> f64 {
    let f = &levels[2].field;
    let second: f64 = (0..f.n_states()).map(|i| f.eval(i, &[x, x])).sum();
    let m = mean_at(levels, x);
    (second - m * m).max(0.0).sqrt()
}

fn probe(t: f64, x: f64) -> String {
    format!("t={t} x={x}")
}

fn labelled(mut e: McEstimate, statistic: &str, probe: String) -> McEstimate {
    e.probe = format!("{statistic} {probe}");
    e
}

fn sample(plan: &RunPlan, problem: &SwitchingPdeProblem) -> Result<PdePathBatch> {
    let settings = PdePathSettings {
        n: plan.mc_n,
        dt: plan.dt,
        probe_times: plan.probe_times.clone(),
    };
    Ok(sample_pde_paths(problem, plan.paths, &settings, &streams(plan))?)
}

/// Mean (and optionally standard deviation) estimates at every probe time
/// and point.
fn field_estimates(plan: &RunPlan, batch: &PdePathBatch, with_std: bool) -> Result<Vec<McEstimate>> {
    let mut out = Vec::new();
    for (k, &t) in plan.probe_times.iter().enumerate() {
        for &x in &plan.probe_points {
            let m = estimate_moments(batch, k, &[vec![x]], None)?.remove(0);
            out.push(labelled(m, "mean", probe(t, x)));
            if with_std {
                out.push(labelled(estimate_std_dev(batch, k, x)?, "std_dev", probe(t, x)));
            }
        }
    }
    Ok(out)
}

fn mc_table(name: &str, estimates: &[McEstimate]) -> Table {
    let mut t = Table::new(name, &["probe", "value", "std_error", "n_samples"]);
    for e in estimates {
        t.push(vec![e.probe.clone(), num(e.value), num(e.std_error), e.n_samples.to_string()]);
    }
    t
}

fn line_plot(name: &str, title: &str, x_label: &str, y_label: &str, series: Vec<Series>) -> Plot {
    Plot {
        name: name.into(),
        title: title.into(),
        x_label: x_label.into(),
        y_label: y_label.into(),
        log_x: false,
        series,
    }
}

// ---------------------------------------------------------------------------

/// Closed-form steady mean of the neural example.
pub fn neural_closed_form(params: &BuiltinParams) -> f64 {
    let (l, d, c, alpha, beta, _) = params.resolve(Example::Neural);
    let mu = ((alpha + beta) / d).sqrt();
    c * beta / (alpha * mu) / (mu * l).tanh()
}

fn neural(plan: &RunPlan) -> Result<Outcome> {
    let problem = builtin_problem(Example::Neural, &plan.params)?.into_pde()?;
    let length = problem.length;
    let w = neural_closed_form(&plan.params);
    let mut out = Outcome::default();
    out.scalar("closed_form_mean", w);
    if plan.run_bvp {
        let lv = solve_moment_hierarchy_steady(&problem, 2, plan.n)?;
        let s = summarize(&problem, &lv)?;
        let sd = s.std_dev().expect("second level solved");
        let (lo, hi) = s
            .mean
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &m| (a.min(m), b.max(m)));
        let spread = (hi - lo) / w.abs();
        out.checks.push(Check::new(
            "mean_constant",
            spread <= NEURAL_TOL,
            spread,
            Some(NEURAL_TOL),
            "relative spread of the steady mean over the grid",
        ));
        let err = s.mean.iter().map(|m| (m - w).abs()).fold(0.0, f64::max) / w.abs();
        out.checks.push(Check::new(
            "mean_matches_closed_form",
            err <= NEURAL_TOL,
            err,
            Some(NEURAL_TOL),
            "max relative deviation from (c beta / (alpha mu)) coth(mu L)",
        ));
        let ratio = sd[sd.len() - 1] / sd[0];
        out.checks.push(Check::new(
            "std_spike",
            ratio > SPIKE_RATIO,
            ratio,
            Some(SPIKE_RATIO),
            "std(L) / std(0)",
        ));
        out.scalar("std_left", sd[0]);
        out.scalar("std_right", sd[sd.len() - 1]);
        let second = s.second_moment.clone().expect("second level solved");
        let variance = s.variance.clone().expect("second level solved");
        out.tables.push(Table::from_columns(
            "neural_moments",
            &[("x", &s.x), ("mean", &s.mean), ("second_moment", &second), ("variance", &variance), ("std_dev", &sd)],
        ));
        out.plots.push(line_plot(
            "neural_moments",
            "Neural example: steady mean and standard deviation",
            "x",
            "concentration",
            vec![Series::new("mean", &s.x, &s.mean), Series::new("std dev", &s.x, &sd)],
        ));
    }
    if plan.run_mc {
        let batch = sample(plan, &problem)?;
        let est = field_estimates(plan, &batch, true)?;
        let last = plan.probe_times.len() - 1;
        let left = estimate_std_dev(&batch, last, 0.0)?;
        let right = estimate_std_dev(&batch, last, length)?;
        out.checks.push(Check::new(
            "mc_std_spike",
            right.value > left.value,
            right.value,
            Some(left.value),
            "empirical std(L) exceeds empirical std(0)",
        ));
        if plan.run_xval {
            let lv = solve_moment_hierarchy_steady(&problem, 2, plan.mc_n)?;
            let mut refs = Vec::new();
            for &t in &plan.probe_times {
                for &x in &plan.probe_points {
                    refs.push(Reference::new("mean", probe(t, x), mean_at(&lv, x)));
                    refs.push(Reference::new("std_dev", probe(t, x), std_at(&lv, x)));
                }
            }
            out.add_xval(xval(&refs, &est)?);
        }
        out.tables.push(mc_table("neural_mc", &est));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

/// Closed-form outward flux at `x = 0` of the insect example.
pub fn insect_closed_form(params: &BuiltinParams) -> f64 {
    let (l, d, c, alpha, beta, _) = params.resolve(Example::Insect);
    let mu = ((alpha + beta) / d).sqrt();
    c * alpha / (alpha * l + beta / mu * (mu * l).tanh())
}

fn default_rate_sweep() -> Sweep {
    Sweep {
        parameter: "rate".into(),
        from: 1.0,
        to: 1000.0,
        points: 12,
        spacing: Spacing::Geometric,
    }
}

fn insect_flux(params: &BuiltinParams, n: usize) -> Result<f64> {
    let p = builtin_problem(Example::Insect, params)?.into_pde()?;
    let lv = solve_moment_hierarchy_steady(&p, 1, n)?;
    Ok(summarize(&p, &lv)?.flux[Face::Left.index()])
}

fn insect(plan: &RunPlan) -> Result<Outcome> {
    let problem = builtin_problem(Example::Insect, &plan.params)?.into_pde()?;
    let cf = insect_closed_form(&plan.params);
    let mut out = Outcome::default();
    out.scalar("closed_form_flux", cf);
    if plan.run_bvp {
        let lv = solve_moment_hierarchy_steady(&problem, 1, plan.n)?;
        let s = summarize(&problem, &lv)?;
        let flux = s.flux[Face::Left.index()];
        out.scalar("flux_left", flux);
        out.scalar("flux_right", s.flux[Face::Right.index()]);
        out.checks.push(Check::new(
            "flux_matches_closed_form",
            (flux - cf).abs() <= INSECT_FLUX_TOL,
            flux,
            Some(cf),
            "flux at x = 0 against c alpha / (alpha L + (beta / mu) tanh(mu L))",
        ));
        out.tables.push(Table::from_columns("insect_mean", &[("x", &s.x), ("mean", &s.mean)]));

        let sweep = plan.sweep.clone().unwrap_or_else(default_rate_sweep);
        let rates = sweep.values();
        let jobs: Vec<(f64, f64)> = plan
            .rho
            .iter()
            .flat_map(|&r| rates.iter().map(move |&k| (r, k)))
            .collect();
        let n = plan.n;
        let base = plan.params.clone();
        let fluxes = worker_pool()?.install(|| {
            jobs.par_iter()
                .map(|&(rho, rate)| {
                    let params = BuiltinParams {
                        alpha: Some(rho * rate),
                        beta: Some((1.0 - rho) * rate),
                        ..base.clone()
                    };
                    Ok((insect_flux(&params, n)?, insect_closed_form(&params)))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let mut table = Table::new("insect_sweep", &["rho", "rate", "alpha", "beta", "flux", "closed_form"]);
        let mut series = Vec::new();
        for (ri, &rho) in plan.rho.iter().enumerate() {
            let rows = &fluxes[ri * rates.len()..(ri + 1) * rates.len()];
            for (&rate, &(f, c)) in rates.iter().zip(rows) {
                table.push(vec![num(rho), num(rate), num(rho * rate), num((1.0 - rho) * rate), num(f), num(c)]);
            }
            let flux: Vec<f64> = rows.iter().map(|r| r.0).collect();
            let drop = flux.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
            out.checks.push(Check::new(
                format!("flux_monotone_rho={rho}"),
                drop <= 0.0,
                drop,
                Some(0.0),
                "largest decrease of the flux between consecutive sweep rates",
            ));
            let dev = rows.iter().map(|r| (r.0 - r.1).abs()).fold(0.0, f64::max);
            out.scalar(format!("sweep_max_closed_form_deviation_rho={rho}"), dev);
            series.push(Series::new(format!("rho = {rho}"), &rates, &flux));
        }
        out.tables.push(table);
        let mut plot = line_plot("insect_sweep", "Insect example: flux at x = 0 against switching rate", "alpha + beta", "flux", series);
        plot.log_x = true;
        out.plots.push(plot);
    }
    if plan.run_mc {
        let batch = sample(plan, &problem)?;
        let est = field_estimates(plan, &batch, false)?;
        if plan.run_xval {
            let lv = solve_moment_hierarchy_steady(&problem, 1, plan.mc_n)?;
            out.add_xval(xval(&steady_mean_refs(plan, &lv), &est)?);
        }
        out.tables.push(mc_table("insect_mc", &est));
    }
    Ok(out)
}

fn steady_mean_refs(plan: &RunPlan, lv: &[MomentLevel]) -> Vec<Reference> {
    plan.probe_times
        .iter()
        .flat_map(|&t| {
            plan.probe_points
                .iter()
                .map(move |&x| Reference::new("mean", probe(t, x), mean_at(lv, x)))
        })
        .collect()
}

// ---------------------------------------------------------------------------

/// Growth indicators of one thermostat configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthSummary {
    pub rate: f64,
    pub times: Vec<f64>,
    pub l1: Vec<f64>,
}

impl GrowthSummary {
    pub fn l1_at(&self, t: f64) -> f64 {
        let k = self
            .times
            .iter()
            .position(|&s| (s - t).abs() < 1e-9)
            .expect("snapshot recorded");
        self.l1[k]
    }
}

/// Dominant growth rate and `L^1` norm of the mean at `snapshots` and the
/// horizon.
pub fn growth_summary(
    problem: &SwitchingPdeProblem,
    n: usize,
    horizon: f64,
    dt: f64,
    snapshots: &[f64],
) -> Result<GrowthSummary> {
    let rate = dominant_growth_rate(problem, n)?;
    let tr = solve_moment_hierarchy_transient(problem, 1, n, horizon, dt, snapshots)?;
    let l1 = tr
        .levels
        .iter()
        .map(|lv| {
            let f = &lv[1].field;
            l1_norm(&f.grid().axis(), &f.state_sum())
        })
        .collect();
    Ok(GrowthSummary {
        rate,
        times: tr.times,
        l1,
    })
}

fn thermostat(plan: &RunPlan) -> Result<Outcome> {
    let problem = builtin_problem(Example::Thermostat, &plan.params)?.into_pde()?;
    let mut out = Outcome::default();
    if plan.run_bvp {
        let h = plan.horizon;
        let snaps: Vec<f64> = (1..=20).map(|k| h * k as f64 / 20.0).collect();
        let cases = [
            ("switched", problem.clone()),
            ("frozen_state0", problem.frozen(0)),
            ("frozen_state1", problem.frozen(1)),
        ];
        let mut columns = Vec::new();
        for (name, p) in &cases {
            let g = growth_summary(p, plan.n, h, plan.dt, &snaps)?;
            let (early, late) = (g.l1_at(h / 2.0), g.l1_at(h));
            out.scalar(format!("{name}_growth_rate"), g.rate);
            out.scalar(format!("{name}_l1_half_horizon"), early);
            out.scalar(format!("{name}_l1_horizon"), late);
            let grows = g.rate > 0.0 && late > early;
            let decays = g.rate < 0.0 && late < early;
            let (check, passed) = if *name == "switched" {
                ("switched_blows_up", grows)
            } else if *name == "frozen_state0" {
                ("frozen_state0_decays", decays)
            } else {
                ("frozen_state1_decays", decays)
            };
            out.checks.push(Check::new(
                check,
                passed,
                g.rate,
                Some(0.0),
                format!("growth rate; L1 norm {} at t={} and {} at t={h}", num(early), h / 2.0, num(late)),
            ));
            columns.push((name.to_string(), g));
        }
        let t = columns[0].1.times.clone();
        let mut table = Table::new("thermostat_l1", &["t", "switched", "frozen_state0", "frozen_state1"]);
        for (k, &tk) in t.iter().enumerate() {
            table.push(vec![num(tk), num(columns[0].1.l1[k]), num(columns[1].1.l1[k]), num(columns[2].1.l1[k])]);
        }
        out.tables.push(table);
        let plot = line_plot(
            "thermostat_l1",
            "Thermostat: L1 norm of the mean",
            "t",
            "log10 L1 norm",
            columns
                .iter()
                .map(|(name, g)| {
                    let y: Vec<f64> = g.l1.iter().map(|v| v.log10()).collect();
                    Series::new(name.clone(), &g.times, &y)
                })
                .collect(),
        );
        out.plots.push(plot);

        if let Some(sweep) = &plan.sweep {
            let values = sweep.values();
            let n = plan.n;
            let base = plan.params.clone();
            let name = sweep.parameter.clone();
            let rates = worker_pool()?.install(|| {
                values
                    .par_iter()
                    .map(|&v| {
                        let mut params = base.clone();
                        match name.as_str() {
                            "k" => params.k = Some(v),
                            _ => params.alpha = Some(v),
                        }
                        let p = builtin_problem(Example::Thermostat, &params)?.into_pde()?;
                        Ok(dominant_growth_rate(&p, n)?)
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            out.tables.push(Table::from_columns(
                "thermostat_sweep",
                &[(sweep.parameter.as_str(), &values), ("growth_rate", &rates)],
            ));
            let mut plot = line_plot("thermostat_sweep", "Thermostat: dominant growth rate", &sweep.parameter, "growth rate", vec![Series::new("switched", &values, &rates)]);
            plot.log_x = sweep.spacing == Spacing::Geometric;
            out.plots.push(plot);
        }
    }
    if plan.run_mc {
        mc_against_transient(plan, &problem, &mut out, "thermostat_mc", false)?;
    }
    Ok(out)
}

/// Sampled paths against the transient hierarchy at the probe times. Both
/// routes use the Monte Carlo grid.
fn mc_against_transient(
    plan: &RunPlan,
    problem: &SwitchingPdeProblem,
    out: &mut Outcome,
    table: &str,
    with_std: bool,
) -> Result<()> {
    let batch = sample(plan, problem)?;
    let est = field_estimates(plan, &batch, with_std)?;
    if plan.run_xval {
        let m = if with_std { 2 } else { 1 };
        let tr = solve_moment_hierarchy_transient(problem, m, plan.mc_n, plan.horizon, plan.dt, &plan.probe_times)?;
        let mut refs = Vec::new();
        for &t in &plan.probe_times {
            let k = tr
                .times
                .iter()
                .position(|&s| (s - t).abs() <= 1e-9 * plan.dt)
                .expect("probe time recorded");
            for &x in &plan.probe_points {
                refs.push(Reference::new("mean", probe(t, x), mean_at(&tr.levels[k], x)));
                if with_std {
                    refs.push(Reference::new("std_dev", probe(t, x), std_at(&tr.levels[k], x)));
                }
            }
        }
        out.add_xval(xval(&refs, &est)?);
    }
    out.tables.push(mc_table(table, &est));
    Ok(())
}

// ---------------------------------------------------------------------------

fn left_of_midpoint(x: &[f64], mean: &[f64], length: f64) -> f64 {
    let k = x
        .iter()
        .position(|&xi| (xi - length / 2.0).abs() <= 1e-12 * length)
        .expect("odd grids have a node at L/2");
    mean[k]
}

fn interface(plan: &RunPlan) -> Result<Outcome> {
    let problem = builtin_problem(Example::Interface, &plan.params)?.into_pde()?;
    let (length, _, c, _, _, _) = plan.params.resolve(Example::Interface);
    let mut out = Outcome::default();
    if plan.run_bvp {
        let lv = solve_moment_hierarchy_steady(&problem, 1, plan.n)?;
        let s = summarize(&problem, &lv)?;
        out.scalar("flux_left", s.flux[0]);
        out.scalar("flux_right", s.flux[1]);
        if let Some(f) = s.interface_flux {
            out.scalar("flux_interface", f);
        }
        let mid = left_of_midpoint(&s.x, &s.mean, length);
        out.scalar("mean_midpoint", mid);
        let fine_lv = solve_moment_hierarchy_steady(&problem, 1, INTERFACE_REFERENCE_N)?;
        let fine = summarize(&problem, &fine_lv)?;
        let reference = left_of_midpoint(&fine.x, &fine.mean, length);
        out.checks.push(Check::new(
            "midpoint_matches_fine_grid",
            (mid - reference).abs() <= INTERFACE_TOL,
            mid,
            Some(reference),
            format!("mean at L/2 against n = {INTERFACE_REFERENCE_N}"),
        ));
        let ends = (s.mean[0]).abs().max((s.mean[s.mean.len() - 1] - c).abs());
        out.checks.push(Check::new(
            "end_values",
            ends <= 1e-10 * c.abs().max(1.0),
            ends,
            Some(0.0),
            "mean(0) = 0 and mean(L) = c",
        ));
        out.tables.push(Table::from_columns("interface_mean", &[("x", &s.x), ("mean", &s.mean)]));
        out.plots.push(line_plot(
            "interface_mean",
            "Randomly gated interface: steady mean",
            "x",
            "mean",
            vec![Series::new("mean", &s.x, &s.mean)],
        ));
    }
    if plan.run_mc {
        let batch = sample(plan, &problem)?;
        let est = field_estimates(plan, &batch, false)?;
        if plan.run_xval {
            let lv = solve_moment_hierarchy_steady(&problem, 1, plan.mc_n)?;
            out.add_xval(xval(&steady_mean_refs(plan, &lv), &est)?);
        }
        out.tables.push(mc_table("interface_mc", &est));
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

fn custom_pde(plan: &RunPlan, problem: &SwitchingPdeProblem) -> Result<Outcome> {
    let mut out = Outcome::default();
    if plan.run_bvp {
        let tr = solve_moment_hierarchy_transient(problem, 2, plan.n, plan.horizon, plan.dt, &[])?;
        let lv = tr.levels.last().expect("horizon recorded");
        let s = summarize(problem, lv)?;
        let sd = s.std_dev().expect("second level solved");
        out.scalar("flux_left_at_horizon", s.flux[0]);
        out.scalar("flux_right_at_horizon", s.flux[1]);
        out.scalar("growth_rate", dominant_growth_rate(problem, plan.n.min(200))?);
        let var = s.variance.clone().expect("second level solved");
        out.tables.push(Table::from_columns(
            "custom_moments",
            &[("x", &s.x), ("mean", &s.mean), ("variance", &var), ("std_dev", &sd)],
        ));
        out.plots.push(line_plot(
            "custom_moments",
            "Mean and standard deviation at the horizon",
            "x",
            "u",
            vec![Series::new("mean", &s.x, &s.mean), Series::new("std dev", &s.x, &sd)],
        ));
    }
    if plan.run_mc {
        mc_against_transient(plan, problem, &mut out, "custom_mc", true)?;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

fn starts_label(starts: &[f64]) -> String {
    let s: Vec<String> = starts.iter().map(|x| format!("{x}")).collect();
    format!("x=({})", s.join(","))
}

/// Exit statistics for every start configuration, from the backward
/// hierarchies and from particle simulation.
fn exit_experiment(
    plan: &RunPlan,
    base: &SwitchingSdeProblem,
    name: &str,
    expect_correlation: bool,
) -> Result<Outcome> {
    let mut out = Outcome::default();
    if plan.configurations.is_empty() {
        return Err(HarnessError::Config("no particle start configurations".into()));
    }
    let target = if base.particles.target.is_empty() {
        vec![Face::Left]
    } else {
        base.particles.target.clone()
    };
    let target_name: Vec<&str> = target.iter().map(|f| f.name()).collect();
    let target_name = target_name.join("+");
    let i0 = base.initial_state;
    let mut refs = Vec::new();
    let mut est = Vec::new();
    let mut table = Table::new(
        format!("{name}_exit"),
        &["starts", "statistic", "bvp", "mc", "std_error", "z_score"],
    );
    // Every configuration reuses the same per-path streams (common random numbers).
    for starts in &plan.configurations {
        let q = base.with_starts(starts.clone()).map_err(HarnessError::config)?;
        let m = starts.len();
        let label = starts_label(starts);
        let mut local_refs = Vec::new();
        if plan.run_bvp {
            let hit = solve_hitting(&q, m, plan.n, &target)?;
            local_refs.push(Reference::new(format!("hitting_all_{target_name}"), label.clone(), hit[m - 1].at(i0, starts)));
            let w = solve_mfpt(&q, m, plan.n)?;
            local_refs.push(Reference::new("mfpt_last", label.clone(), w[m - 1].at(i0, starts)));
            let t_max = *plan.probe_times.last().expect("nonempty");
            let variants: &[SurvivalVariant] = if m > 1 {
                &[SurvivalVariant::AnyAlive, SurvivalVariant::AllAlive]
            } else {
                &[SurvivalVariant::AnyAlive]
            };
            for &v in variants {
                let s = solve_survival(&q, m, plan.n, t_max, plan.dt, &plan.probe_times, v)?;
                let stat = match v {
                    SurvivalVariant::AnyAlive => "survival_any",
                    SurvivalVariant::AllAlive => "survival_all",
                };
                for &t in &plan.probe_times {
                    let k = s[m - 1].time_index(t).expect("probe time recorded");
                    local_refs.push(Reference::new(stat, format!("t={t} {label}"), s[m - 1].at(k, i0, starts)));
                }
            }
            if m == 2 && expect_correlation {
                let single: Vec<f64> = starts.iter().map(|&x| hit[0].at(i0, &[x])).collect();
                let joint = hit[1].at(i0, starts);
                out.checks.push(Check::new(
                    format!("bvp_positive_correlation {label}"),
                    joint > single[0] * single[1],
                    joint,
                    Some(single[0] * single[1]),
                    "joint hitting probability exceeds the product of single-particle ones",
                ));
            }
        }
        if plan.run_mc {
            let settings = ParticleSettings {
                dt: max_stable_dt(&q),
                horizon: plan.horizon,
                refinement: 0,
            };
            let batch = simulate_particles(&q, plan.paths, &settings, &streams(plan))?;
            let mut stats: Vec<(String, String, ExitStatistic)> = vec![
                (format!("hitting_all_{target_name}"), label.clone(), ExitStatistic::HittingAll(target.clone())),
                ("mfpt_last".into(), label.clone(), ExitStatistic::MfptLast),
            ];
            for &t in &plan.probe_times {
                stats.push(("survival_any".into(), format!("t={t} {label}"), ExitStatistic::SurvivalAny(t)));
            }
            if m > 1 {
                for &t in &plan.probe_times {
                    stats.push(("survival_all".into(), format!("t={t} {label}"), ExitStatistic::SurvivalAll(t)));
                }
            }
            let mut local_est = Vec::new();
            for (stat, p, s) in stats {
                local_est.push(labelled(estimate_exit_statistics(&batch, &s)?, &stat, p));
            }
            if m >= 2 {
                for &t in &plan.probe_times {
                    let c = survival_correlation(&batch, t)?;
                    out.scalar(format!("survival_correlation t={t} {label}"), c.value);
                    if expect_correlation {
                        out.checks.push(Check::new(
                            format!("mc_positive_correlation t={t} {label}"),
                            c.value > 0.0,
                            c.value,
                            Some(0.0),
                            format!("corr of survival indicators, std error {}", num(c.std_error)),
                        ));
                    }
                }
            }
            if plan.run_xval {
                let rep = xval(&local_refs, &local_est)?;
                for r in &rep.rows {
                    table.push(vec![label.clone(), format!("{} {}", r.statistic, r.probe), num(r.bvp), num(r.mc), num(r.std_error), num(r.z)]);
                }
            } else {
                for e in &local_est {
                    table.push(vec![label.clone(), e.probe.clone(), String::new(), num(e.value), num(e.std_error), String::new()]);
                }
            }
            est.extend(local_est);
        } else {
            for r in &local_refs {
                table.push(vec![label.clone(), r.key(), num(r.value), String::new(), String::new(), String::new()]);
            }
        }
        refs.extend(local_refs);
    }
    if plan.run_xval {
        out.add_xval(xval(&refs, &est)?);
    }
    out.tables.push(table);
    if plan.run_bvp {
        let hit = solve_hitting(&base.with_starts(vec![base.length / 2.0]).map_err(HarnessError::config)?, 1, plan.n, &target)?;
        let w = solve_mfpt(&base.with_starts(vec![base.length / 2.0]).map_err(HarnessError::config)?, 1, plan.n)?;
        let x = hit[0].field.grid().axis();
        let mut columns: Vec<(String, Vec<f64>)> = vec![("x".into(), x.clone())];
        for i in 0..base.n_states() {
            columns.push((format!("hitting_state{i}"), hit[0].field.state(i).to_vec()));
        }
        for i in 0..base.n_states() {
            columns.push((format!("mfpt_state{i}"), w[0].field.state(i).to_vec()));
        }
        let cols: Vec<(&str, &[f64])> = columns.iter().map(|(n, v)| (n.as_str(), v.as_slice())).collect();
        out.tables.push(Table::from_columns(format!("{name}_profiles"), &cols));
        out.plots.push(line_plot(
            &format!("{name}_profiles"),
            "Single-particle hitting probability and mean exit time",
            "start x",
            "value",
            columns[1..]
                .iter()
                .map(|(n, v)| Series::new(n.clone(), &x, v))
                .collect(),
        ));
    }
    Ok(out)
}
