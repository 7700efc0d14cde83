//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::equilibrium::{PriceGrid, SolveSettings};
use crate::error::{Error, Result};
use crate::estimators::SweepGrid;
use crate::params::{AbsorptionRule, BoundaryVariant, ModelParams};
use crate::rng::derive_seed;

/// The two showcase regimes: high precision with cheap search, low precision
/// with costly search.
pub const SHOWCASE: [[f64; 2]; 2] = [[0.8, 0.05], [0.55, 0.2]];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub runs: usize,
    pub max_arrivals: u64,
    pub rule: AbsorptionRule,
    pub params: ModelParams,
    pub bounds: BoundsConfig,
    pub simulate: SimulateConfig,
    pub sweep: SweepGrid,
    pub solver: SolverConfig,
    pub calvo: CalvoConfig,
    pub welfare: WelfareConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out: PathBuf::from("out"),
            runs: 10_000,
            max_arrivals: crate::engine::DEFAULT_MAX_ARRIVALS,
            rule: AbsorptionRule::default(),
            params: ModelParams::default(),
            bounds: BoundsConfig::default(),
            simulate: SimulateConfig::default(),
            sweep: SweepGrid::default(),
            solver: SolverConfig::default(),
            calvo: CalvoConfig::default(),
            welfare: WelfareConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub q: Vec<f64>,
    pub kappa: Vec<f64>,
    pub price_diff: Vec<f64>,
    pub variants: Vec<BoundaryVariant>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        BoundsConfig {
            q: vec![0.55, 0.65, 0.8],
            kappa: vec![0.0, 0.05, 0.1, 0.2],
            price_diff: vec![0.0],
            variants: vec![
                BoundaryVariant::SingleThreshold,
                BoundaryVariant::VisitSymmetric,
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// (q, κ) pairs.
    pub regimes: Vec<[f64; 2]>,
    /// Number of runs per regime whose belief paths are written out.
    pub paths: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            regimes: SHOWCASE.to_vec(),
            paths: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub regimes: Vec<[f64; 2]>,
    pub p_max: f64,
    pub step: f64,
    pub tau: f64,
    pub rho: f64,
    pub runs_per_pair: usize,
    pub eps: f64,
    pub max_iters: usize,
    pub support_threshold: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolveSettings::default();
        SolverConfig {
            regimes: SHOWCASE.to_vec(),
            p_max: 1.0,
            step: 0.02,
            tau: s.tau,
            rho: s.rho,
            runs_per_pair: s.runs_per_pair,
            eps: s.eps,
            max_iters: s.max_iters,
            support_threshold: s.support_threshold,
        }
    }
}

impl SolverConfig {
    pub fn grid(&self) -> Result<PriceGrid> {
        PriceGrid::new(self.p_max, self.step)
    }

    pub fn settings(&self) -> SolveSettings {
        SolveSettings {
            tau: self.tau,
            rho: self.rho,
            runs_per_pair: self.runs_per_pair,
            eps: self.eps,
            max_iters: self.max_iters,
            support_threshold: self.support_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalvoConfig {
    pub hazards: Vec<f64>,
    pub horizon_events: u64,
    pub burn_in: f64,
    pub step: f64,
    /// Hazard and length of the run written as a timeline.
    pub timeline_hazard: f64,
    pub timeline_events: u64,
}

impl Default for CalvoConfig {
    fn default() -> Self {
        CalvoConfig {
            hazards: vec![0.0, 0.1, 1.0, 5.0],
            horizon_events: 100_000,
            burn_in: 0.2,
            step: 0.02,
            timeline_hazard: 1.0,
            timeline_events: 2_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WelfareConfig {
    pub grid_points: usize,
    pub tol: f64,
    pub max_iters: usize,
    pub decompose_runs: usize,
}

impl Default for WelfareConfig {
    fn default() -> Self {
        WelfareConfig {
            grid_points: crate::welfare::DEFAULT_GRID_POINTS,
            tol: crate::welfare::DEFAULT_TOL,
            max_iters: crate::welfare::DEFAULT_MAX_ITERS,
            decompose_runs: 20_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.params.validate().map_err(cfg_err)?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be positive".into()));
        }
        if self.max_arrivals == 0 {
            return Err(Error::Config("max_arrivals must be positive".into()));
        }
        self.solver.grid().map_err(cfg_err)?;
        PriceGrid::new(self.params.p_max, self.calvo.step).map_err(cfg_err)?;
        if !(0.0..1.0).contains(&self.calvo.burn_in) {
            return Err(Error::Config("calvo.burn_in must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Seed for one command, derived from the master seed.
    pub fn command_seed(&self, command: &str) -> u64 {
        let tag = command.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x100_0000_01b3)
        });
        derive_seed(&[self.seed, tag])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ExperimentConfig::from_toml("sed = 3").is_err());
        assert!(ExperimentConfig::from_toml("[params]\nqq = 0.5").is_err());
        let cfg = ExperimentConfig::from_toml("seed = 9\n[params]\nq = 0.65\n").unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.params.q, 0.65);
    }

    #[test]
    fn invalid_params_are_config_errors() {
        let e = ExperimentConfig::from_toml("[params]\nq = 0.4\n").unwrap_err();
        assert!(matches!(e, Error::Config(_)));
    }

    #[test]
    fn command_seeds_differ() {
        let cfg = ExperimentConfig::default();
        assert_ne!(cfg.command_seed("simulate"), cfg.command_seed("sweep"));
    }
}
