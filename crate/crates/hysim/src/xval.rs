use hysim_core::mc::McEstimate;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Largest accepted `|z|`.
pub const Z_LIMIT: f64 = 3.0;

/// A deterministic value to compare against a Monte Carlo estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct Reference {
    pub statistic: String,
    pub probe: String,
    pub value: f64,
}

impl Reference {
    pub fn new(statistic: impl Into<String>, probe: impl Into<String>, value: f64) -> Self {
        Self {
            statistic: statistic.into(),
            probe: probe.into(),
            value,
        }
    }

    /// The probe descriptor a matching estimate must carry.
    pub fn key(&self) -> String {
        format!("{} {}", self.statistic, self.probe)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XvalRow {
    pub statistic: String,
    pub probe: String,
    pub bvp: f64,
    pub mc: f64,
    pub std_error: f64,
    pub z: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XvalReport {
    pub rows: Vec<XvalRow>,
    pub verdict: bool,
}

impl XvalReport {
    pub fn empty() -> Self {
        Self {
            rows: Vec::new(),
            verdict: true,
        }
    }

    pub fn extend(&mut self, other: XvalReport) {
        self.rows.extend(other.rows);
        self.verdict = self.rows.iter().all(|r| r.passed);
    }

    pub fn failures(&self) -> impl Iterator<Item = &XvalRow> {
        self.rows.iter().filter(|r| !r.passed)
    }
}

/// Pairs references with estimates row by row. Estimates with zero standard
/// error are compared with an absolute tolerance of `1e-8`.
pub fn xval(bvp: &[Reference], mc: &[McEstimate]) -> Result<XvalReport> {
    if bvp.len() != mc.len() {
        return Err(HarnessError::ProbeMismatch {
            row: bvp.len().min(mc.len()),
            bvp: format!("{} rows", bvp.len()),
            mc: format!("{} rows", mc.len()),
        });
    }
    let rows = bvp
        .iter()
        .zip(mc)
        .enumerate()
        .map(|(row, (r, e))| {
            if r.key() != e.probe {
                return Err(HarnessError::ProbeMismatch {
                    row,
                    bvp: r.key(),
                    mc: e.probe.clone(),
                });
            }
            let z = e.z_score(r.value);
            Ok(XvalRow {
                statistic: r.statistic.clone(),
                probe: r.probe.clone(),
                bvp: r.value,
                mc: e.value,
                std_error: e.std_error,
                z,
                passed: z.abs() <= Z_LIMIT,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let verdict = rows.iter().all(|r| r.passed);
    Ok(XvalReport { rows, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn est(probe: &str, value: f64, se: f64) -> McEstimate {
        McEstimate {
            value,
            std_error: se,
            n_samples: 100,
            probe: probe.into(),
        }
    }

    #[test]
    fn identical_inputs_pass() {
        let refs = vec![Reference::new("mean", "x=0.5", 0.3), Reference::new("mean", "x=1", 0.4)];
        let mc = vec![est("mean x=0.5", 0.3, 0.01), est("mean x=1", 0.4, 0.0)];
        let r = xval(&refs, &mc).unwrap();
        assert!(r.verdict);
        assert!(r.rows.iter().all(|row| row.z == 0.0));
    }

    #[test]
    fn shifted_reference_fails_at_that_probe() {
        let refs = vec![Reference::new("mean", "a", 1.0), Reference::new("mean", "b", 2.0 + 0.1)];
        let mc = vec![est("mean a", 1.0, 0.01), est("mean b", 2.0, 0.01)];
        let r = xval(&refs, &mc).unwrap();
        assert!(!r.verdict);
        let failed: Vec<_> = r.failures().map(|f| f.probe.as_str()).collect();
        assert_eq!(failed, vec!["b"]);
    }

    #[test]
    fn mismatched_probes() {
        let refs = vec![Reference::new("mean", "a", 1.0)];
        assert!(matches!(
            xval(&refs, &[est("mean b", 1.0, 0.1)]),
            Err(HarnessError::ProbeMismatch { row: 0, .. })
        ));
        assert!(matches!(xval(&refs, &[]), Err(HarnessError::ProbeMismatch { .. })));
    }
}
