//! Compression configuration, read from TOML.
//!
//! ```toml
//! dt = 1e-3
//! horizon = 10.0
//! restart_stride = 1000
//!
//! [test_basis]
//! half_count = 20
//!
//! [projection]
//! policy = "max"
//! degree = 1
//!
//! [fit]
//! threshold = 0.1
//! lambda = 0.0
//! ```
//!
//! An optional `[pod]` table switches on the POD reduction stage, and an
//! optional `[[per_mode]]` array overrides `[fit]` mode by mode.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bases::{DegreePolicy, FourierTestBasis};
use crate::error::{Error, Result};
use crate::pod::PodSettings;
use crate::regression::FitConfig;

fn default_restart_stride() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestBasisConfig {
    pub half_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressConfig {
    /// Sampling interval of the stream.
    pub dt: f64,
    /// Length of the time interval the test functions live on; the stream
    /// must not run past it.
    pub horizon: f64,
    #[serde(default = "default_restart_stride")]
    pub restart_stride: usize,
    #[serde(default = "default_true")]
    pub boundary_terms: bool,
    pub test_basis: TestBasisConfig,
    pub projection: DegreePolicy,
    #[serde(default)]
    pub pod: Option<PodSettings>,
    pub fit: FitConfig,
    #[serde(default)]
    pub per_mode: Vec<FitConfig>,
}

impl CompressConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        if self.restart_stride == 0 {
            return Err(Error::Config("restart_stride must be positive".into()));
        }
        if self.test_basis.half_count == 0 {
            return Err(Error::Config(
                "test_basis.half_count must be positive".into(),
            ));
        }
        if let Some(pod) = &self.pod {
            pod.validate()?;
        }
        self.fit.validate()?;
        for f in &self.per_mode {
            f.validate()?;
        }
        Ok(())
    }

    pub fn test_basis(&self) -> Result<FourierTestBasis> {
        FourierTestBasis::new(self.test_basis.half_count, self.horizon)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// Fit settings for mode (or state component) `index`.
    pub fn fit_for(&self, index: usize) -> FitConfig {
        self.per_mode.get(index).copied().unwrap_or(self.fit)
    }

    /// Settings for a Lorenz-style run: `n` samples spaced `dt`, Fourier
    /// half-count 20, max-degree-1 monomials, threshold 0.1, no POD.
    pub fn lorenz_default(dt: f64, samples: usize) -> Self {
        Self {
            dt,
            horizon: dt * (samples.max(2) - 1) as f64,
            restart_stride: default_restart_stride(),
            boundary_terms: true,
            test_basis: TestBasisConfig { half_count: 20 },
            projection: DegreePolicy::Max(1),
            pod: None,
            fit: FitConfig {
                threshold: 0.1,
                lambda: 0.0,
                max_iterations: 10_000,
            },
            per_mode: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
dt = 0.5
horizon = 1000.0
restart_stride = 200

[test_basis]
half_count = 99

[projection]
policy = "total"
degree = 2

[pod]
init_window = 100
spectral_threshold = 0.1
residual_threshold = 0.1

[pod.reinit]
mode_cap = 9
relaxed_residual_threshold = 0.15

[fit]
threshold = 3e-4
lambda = 1.6e-6

[[per_mode]]
threshold = 1e-4
lambda = 1.792e-8
"#;

    #[test]
    fn parses_full_config() {
        let cfg = CompressConfig::from_toml_str(SAMPLE).unwrap();
        assert_eq!(cfg.projection, DegreePolicy::Total(2));
        assert_eq!(cfg.test_basis().unwrap().len(), 199);
        let pod = cfg.pod.unwrap();
        assert_eq!(pod.init_window, 100);
        assert_eq!(pod.reinit.unwrap().mode_cap, 9);
        assert!(cfg.boundary_terms);
        assert_eq!(cfg.fit_for(0).threshold, 1e-4);
        assert_eq!(cfg.fit_for(1).threshold, 3e-4);
        assert_eq!(cfg.fit.max_iterations, 10_000);
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = CompressConfig::from_toml_str(SAMPLE).unwrap();
        let text = cfg.to_toml_string().unwrap();
        assert_eq!(CompressConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = SAMPLE.replace("dt = 0.5", "dt = -1.0");
        assert!(matches!(
            CompressConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        let bad = SAMPLE.replace("residual_threshold = 0.1", "residual_threshold = 2.0");
        assert!(matches!(
            CompressConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        let bad = SAMPLE.replace("threshold = 3e-4", "threshold = -3e-4");
        assert!(matches!(
            CompressConfig::from_toml_str(&bad),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            CompressConfig::from_toml_str("dt = 1"),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn lorenz_defaults() {
        let cfg = CompressConfig::lorenz_default(1e-3, 10_001);
        assert!((cfg.horizon - 10.0).abs() < 1e-12);
        assert_eq!(cfg.test_basis().unwrap().len(), 41);
        cfg.validate().unwrap();
    }
}
