//! Experiment configuration: one JSON document per run.

use std::fs;
use std::path::{Path, PathBuf};

use fgp_core::genfun::BuildContext;
use fgp_core::market::covariance;
use fgp_core::replication::StepOneSolver;
use fgp_core::{DerivativeBackend, FunctionSpec, MarketModel, TimeGrid};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::LabError;

/// Overrides the configured output directory; `--out` wins over it.
pub const OUT_DIR_ENV: &str = "FGP_OUT_DIR";

const DEFAULT_OUT_DIR: &str = "fgp-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: MarketModel,
    /// Generating function or claim; not needed by `simulate`.
    #[serde(default)]
    pub function: Option<FunctionSpec>,
    pub grid: GridConfig,
    pub paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub backend: DerivativeBackend,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub replicate: ReplicateConfig,
    #[serde(default)]
    pub hedge: HedgeConfig,
    #[serde(default)]
    pub price: PriceConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub horizon: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Largest accepted decomposition gap.
    pub gap: f64,
    /// Largest accepted normalised PDE residual.
    pub residual: f64,
    /// Largest accepted median terminal hedging error on the finest grid.
    pub hedge: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { gap: 1e-3, residual: 1e-6, hedge: 1e-2 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReplicateConfig {
    pub samples: usize,
    /// Prices are drawn log-uniformly from this range.
    pub price_range: (f64, f64),
}

impl Default for ReplicateConfig {
    fn default() -> Self {
        ReplicateConfig { samples: 40, price_range: (0.5, 2.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HedgeConfig {
    pub steps: Vec<usize>,
}

impl Default for HedgeConfig {
    fn default() -> Self {
        HedgeConfig { steps: vec![250, 1000, 4000] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriceConfig {
    pub solver: StepOneSolver,
    /// Multiples of the initial risky prices.
    pub scales: Vec<f64>,
    /// Defaults to `0, T/2, T`.
    pub times: Option<Vec<f64>>,
}

impl Default for PriceConfig {
    fn default() -> Self {
        PriceConfig { solver: StepOneSolver::ClosedForm, scales: vec![0.8, 1.0, 1.2], times: None }
    }
}

/// A parsed config together with the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, LabError> {
        let bytes = fs::read(path).map_err(|source| LabError::Io { path: path.to_path_buf(), source })?;
        let config = Self::parse(&bytes)?;
        Ok(LoadedConfig { config, sha256: sha256_hex(&bytes) })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_slice(bytes);
        let config: ExperimentConfig = serde_path_to_error::deserialize(de)
            .map_err(|e| LabError::Config(format!("{}: {}", e.path(), e.inner())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), LabError> {
        let field = |name: &str, e: fgp_core::Error| LabError::Config(format!("{name}: {e}"));
        self.model.validate().map_err(|e| field("model", e))?;
        self.time_grid()?;
        if self.paths == 0 {
            return Err(LabError::Config("paths: must be at least 1".into()));
        }
        let t = self.tolerances;
        for (name, v) in [("gap", t.gap), ("residual", t.residual), ("hedge", t.hedge)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Config(format!("tolerances.{name}: must be positive, got {v}")));
            }
        }
        if self.replicate.samples == 0 {
            return Err(LabError::Config("replicate.samples: must be at least 1".into()));
        }
        let (lo, hi) = self.replicate.price_range;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return Err(LabError::Config(format!("replicate.price_range: need 0 < lo <= hi, got ({lo}, {hi})")));
        }
        if self.hedge.steps.is_empty() || self.hedge.steps.contains(&0) {
            return Err(LabError::Config("hedge.steps: need at least one positive grid size".into()));
        }
        if self.price.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(LabError::Config("price.scales: must be positive".into()));
        }
        if let Some(times) = &self.price.times {
            if times.iter().any(|t| !(0.0..=self.grid.horizon).contains(t)) {
                return Err(LabError::Config("price.times: must lie in [0, horizon]".into()));
            }
        }
        if let Some(spec) = &self.function {
            spec.build(&self.build_context()).map_err(|e| field("function", e))?;
        }
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid, LabError> {
        TimeGrid::new(self.grid.horizon, self.grid.steps).map_err(|e| LabError::Config(format!("grid: {e}")))
    }

    pub fn build_context(&self) -> BuildContext {
        BuildContext { n: self.model.n, cov: covariance(&self.model), horizon: self.grid.horizon }
    }

    pub fn function_spec(&self) -> Result<&FunctionSpec, LabError> {
        self.function.as_ref().ok_or_else(|| LabError::Config("function: required by this command".into()))
    }

    /// `--out`, then the environment override, then the config, then the default.
    pub fn output_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}
