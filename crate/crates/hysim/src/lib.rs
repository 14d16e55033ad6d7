//! Experiment harness: runs the built-in examples and custom problems through
//! the deterministic solvers and the Monte Carlo engines, cross-validates the
//! two routes, and writes CSV, SVG and JSON artifacts.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;
pub mod xval;

use std::path::Path;

pub use config::{ExperimentConfig, RunPlan, Spacing, Sweep, Target};
pub use error::{HarnessError, Result};
pub use experiments::{run_experiment, Outcome};
pub use output::{Check, Report, REPORT_SCHEMA_VERSION};
pub use xval::{xval, Reference, XvalReport, XvalRow, Z_LIMIT};

/// Runs `plan` and writes `summary.csv`, `fields/*.csv`, `plots/*.svg` and
/// `report.json` under the plan's output directory. Outputs depend only on
/// the plan, never on timing or worker count.
pub fn run(plan: &RunPlan) -> Result<Report> {
    let outcome = run_experiment(plan)?;
    write_outputs(plan, &outcome)
}

fn write_outputs(plan: &RunPlan, outcome: &Outcome) -> Result<Report> {
    let dir = &plan.out;
    std::fs::create_dir_all(dir.join("fields"))?;
    let mut artifacts = vec!["summary.csv".to_string()];
    for t in &outcome.tables {
        let rel = format!("fields/{}.csv", t.name);
        t.write(&dir.join(&rel))?;
        artifacts.push(rel);
    }
    if plan.plots {
        for p in &outcome.plots {
            let rel = format!("plots/{}.svg", p.name);
            output::write_text(&dir.join(&rel), &p.to_svg())?;
            artifacts.push(rel);
        }
    }
    artifacts.push("report.json".to_string());
    let report = Report {
        schema_version: REPORT_SCHEMA_VERSION,
        experiment: plan.experiment.clone(),
        seed: plan.seed,
        settings: serde_json::to_value(plan)?,
        scalars: outcome.scalars.clone(),
        checks: outcome.checks.clone(),
        xval: outcome.xval.clone(),
        artifacts,
        verdict: outcome.verdict(),
    };
    output::summary_table(&report).write(&dir.join("summary.csv"))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    output::write_text(&dir.join("report.json"), &json)?;
    Ok(report)
}

/// Reads and checks a config file without running anything.
pub fn validate(path: &Path) -> Result<RunPlan> {
    RunPlan::resolve(ExperimentConfig::from_path(path)?)
}
