use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::allocator::IbParams;
use crate::baselines::{SchemeId, DEFAULT_EXHAUSTIVE_CAP};
use crate::gmga::GaParams;
use crate::mobility::{FrameSchedule, MobilitySetup};
use crate::network::Physics;
use crate::solver::SolverSettings;

/// Cross product of node and beacon counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n_d: Vec<usize>,
    pub n_b: Vec<usize>,
}

impl GridSpec {
    pub fn new(n_d: &[usize], n_b: &[usize]) -> Self {
        Self { n_d: n_d.to_vec(), n_b: n_b.to_vec() }
    }

    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.n_d.iter().flat_map(move |&d| self.n_b.iter().map(move |&b| (d, b)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityParams {
    /// Node speed, m/s.
    pub speed: f64,
    /// Total simulated time, seconds.
    pub total: f64,
    /// Time between topology updates, seconds.
    pub unit: f64,
    pub inherit: bool,
}

impl Default for MobilityParams {
    fn default() -> Self {
        Self { speed: 6.42, total: 180.0, unit: 20.0, inherit: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    pub repetitions: usize,
    pub schemes: Vec<SchemeId>,
    /// Exhaustive search is skipped for larger `n_d`.
    pub max_exhaustive: usize,
    /// Sequential execution; timings go to a sidecar file.
    pub deterministic: bool,
    pub physics: Physics,
    pub allocator: IbParams,
    pub ga: GaParams,
    pub mobility: MobilityParams,
    pub stationary_grid: Vec<GridSpec>,
    pub mobility_grid: Vec<GridSpec>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            master_seed: 1,
            repetitions: 30,
            schemes: SchemeId::ALL.to_vec(),
            max_exhaustive: DEFAULT_EXHAUSTIVE_CAP,
            deterministic: false,
            physics: Physics::default(),
            allocator: IbParams::default(),
            ga: GaParams::default(),
            mobility: MobilityParams::default(),
            stationary_grid: vec![GridSpec::new(&[5, 6, 7], &[1, 2, 3]), GridSpec::new(&[10, 20, 30], &[1, 2, 3, 4, 5])],
            mobility_grid: vec![GridSpec::new(&[5, 10, 20], &[1, 2, 3])],
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ExperimentError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// The resolved configuration as `# `-prefixed lines.
    pub fn echo(&self) -> String {
        self.to_toml().lines().map(|l| format!("# {l}\n")).collect()
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let wrap = |e: crate::Error| ExperimentError::Config(e.to_string());
        self.physics.validate().map_err(wrap)?;
        self.ga.validate().map_err(wrap)?;
        self.schedule().validate().map_err(wrap)?;
        if self.repetitions == 0 {
            return Err(ExperimentError::Config("repetitions must be at least 1".into()));
        }
        if self.schemes.is_empty() {
            return Err(ExperimentError::Config("no schemes selected".into()));
        }
        if !(self.mobility.speed >= 0.0 && self.mobility.speed.is_finite()) {
            return Err(ExperimentError::Config(format!("speed must be non-negative, got {}", self.mobility.speed)));
        }
        for grid in self.stationary_grid.iter().chain(&self.mobility_grid) {
            if grid.n_d.contains(&0) {
                return Err(ExperimentError::Config("n_d values must be at least 1".into()));
            }
            for (n_d, _) in grid.cells() {
                self.allocator.validate(self.physics.frame, n_d).map_err(wrap)?;
            }
        }
        Ok(())
    }

    pub fn settings(&self) -> SolverSettings {
        let ga = GaParams { parallel: self.ga.parallel && !self.deterministic, ..self.ga.clone() };
        SolverSettings { ib: self.allocator, ga, max_exhaustive: self.max_exhaustive }
    }

    pub fn schedule(&self) -> FrameSchedule {
        FrameSchedule { total: self.mobility.total, unit: self.mobility.unit, frame: self.physics.frame }
    }

    pub fn mobility_setup(&self, n_d: usize, n_b: usize) -> MobilitySetup {
        MobilitySetup {
            physics: self.physics.clone(),
            schedule: self.schedule(),
            speed: self.mobility.speed,
            n_d,
            n_b,
            inherit: self.mobility.inherit,
        }
    }
}
