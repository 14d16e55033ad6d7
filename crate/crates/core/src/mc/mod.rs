//! Monte Carlo engines: sampled realizations of a switching PDE, and
//! particles following a switching SDE. Every path draws from its own random
//! substream, so batches are reproducible and independent of the worker
//! count.

mod particles;
mod pde_paths;

use serde::{Deserialize, Serialize};

pub use particles::{
    estimate_exit_statistics, max_stable_dt, simulate_particles, survival_correlation, ExitStatistic,
    ParticlePath, ParticleSettings, ParticleTrajectoryBatch, MAX_CENSORED_FRACTION,
};
pub use pde_paths::{
    estimate_moments, estimate_std_dev, sample_pde_paths, PdePathBatch, PdePathSample,
    PdePathSettings,
};

use crate::error::{Error, Result};

/// Sample mean with its standard error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub probe: String,
}

impl McEstimate {
    pub fn from_samples(samples: &[f64], probe: impl Into<String>) -> Result<Self> {
        let n = samples.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            value: mean,
            std_error,
            n_samples: n,
            probe: probe.into(),
        })
    }

    /// `(value - reference) / std_error`; zero-error estimates give 0 when
    /// they agree to `1e-8` and infinity otherwise.
    pub fn z_score(&self, reference: f64) -> f64 {
        let diff = self.value - reference;
        if self.std_error > 0.0 {
            diff / self.std_error
        } else if diff.abs() <= 1e-8 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Worker pool honouring `HYSIM_THREADS`.
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = std::env::var("HYSIM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
    {
        builder = builder.num_threads(n);
    }
    builder
        .build()
        .map_err(|e| Error::Settings(format!("thread pool: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_basics() {
        let e = McEstimate::from_samples(&[1.0, 2.0, 3.0], "p").unwrap();
        assert_eq!(e.value, 2.0);
        assert!((e.std_error - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(matches!(McEstimate::from_samples(&[], "p"), Err(Error::EmptyBatch)));
        assert_eq!(e.z_score(2.0), 0.0);
        let exact = McEstimate::from_samples(&[1.0; 4], "p").unwrap();
        assert_eq!(exact.z_score(1.0 + 1e-9), 0.0);
        assert!(exact.z_score(1.1).is_infinite());
    }
}
