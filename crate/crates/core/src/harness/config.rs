//! Scenario configuration. Every section has defaults, so an empty file is a
//! valid scenario (source 1 at the east-south start, entrotaxis planner).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::MyopicActionSet;
use crate::error::{Error, Result};
use crate::grid::{load_map, OccupancyGrid, WorldPoint};
use crate::inference::PriorSpec;
use crate::plume::{PlumeMode, SourceTerm, G_PER_KG};
use crate::tree::PlannerConfig;

use super::scenario::{builtin_map, BuiltinMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Entrotaxis,
    Jump,
    UniformTree,
    InformedTree,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [
        PlannerKind::Entrotaxis,
        PlannerKind::Jump,
        PlannerKind::UniformTree,
        PlannerKind::InformedTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Entrotaxis => "entrotaxis",
            PlannerKind::Jump => "jump",
            PlannerKind::UniformTree => "uniform_tree",
            PlannerKind::InformedTree => "informed_tree",
        }
    }

    pub fn is_tree(self) -> bool {
        matches!(self, PlannerKind::UniformTree | PlannerKind::InformedTree)
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Either a map file or one of the procedural maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<BuiltinMap>,
}

impl Default for MapSpec {
    fn default() -> Self {
        Self {
            path: None,
            builtin: Some(BuiltinMap::Urban),
        }
    }
}

impl MapSpec {
    pub fn builtin(map: BuiltinMap) -> Self {
        Self {
            path: None,
            builtin: Some(map),
        }
    }

    pub fn file(path: impl Into<PathBuf>) -> Self {
        Self {
            path: Some(path.into()),
            builtin: None,
        }
    }

    pub fn load(&self) -> Result<OccupancyGrid> {
        match (&self.path, self.builtin) {
            (Some(p), None) => load_map(p),
            (None, Some(b)) => Ok(builtin_map(b)),
            _ => Err(Error::Config(
                "map needs exactly one of `path` or `builtin`".into(),
            )),
        }
    }
}

/// Ground-truth release. The rate is given in kg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SourceConfig {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub q_kg_s: f64,
    pub u: f64,
    pub phi: f64,
    pub d: f64,
    pub tau: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            x: 466.0,
            y: 392.0,
            z: 13.6,
            q_kg_s: 1.11,
            u: 2.5,
            phi: 270.0,
            d: 2.0,
            tau: 10.0,
        }
    }
}

impl SourceConfig {
    pub fn to_source(&self) -> Result<SourceTerm> {
        SourceTerm::new(
            self.x,
            self.y,
            self.z,
            self.q_kg_s * G_PER_KG,
            self.u,
            self.phi,
            self.d,
            self.tau,
        )
    }

    pub fn location(&self) -> WorldPoint {
        WorldPoint::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlumeConfig {
    pub mode: PlumeMode,
    /// Log-normal multiplicative noise on simulated readings.
    pub noise_sigma: f64,
    /// Frame index file for replay mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub replay_index: Option<PathBuf>,
}

impl Default for PlumeConfig {
    fn default() -> Self {
        Self {
            mode: PlumeMode::Geodesic,
            noise_sigma: 0.2,
            replay_index: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Detection threshold, g/m³ (10 mg/m³).
    pub threshold: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { threshold: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PfConfig {
    pub n: usize,
    /// Resample when ESS / n drops below this.
    pub eta: f64,
    /// Jitter std as a fraction of each prior's std.
    pub jitter_scale: f64,
}

impl Default for PfConfig {
    fn default() -> Self {
        Self {
            n: 20_000,
            eta: 0.5,
            jitter_scale: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    /// Log-space std of the estimator's sensor model.
    pub lik_sigma: f64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { lik_sigma: 0.3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UtilityConfig {
    /// Hypothetical readings per candidate.
    pub n_z: usize,
    pub noiseless_prediction: bool,
}

impl Default for UtilityConfig {
    fn default() -> Self {
        Self {
            n_z: 40,
            noiseless_prediction: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub n_jump: usize,
    pub m_jump: usize,
    pub directions: Vec<f64>,
    pub step_sizes: Vec<f64>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        let a = MyopicActionSet::default();
        Self {
            n_jump: 4,
            m_jump: 10,
            directions: a.directions,
            step_sizes: a.step_sizes,
        }
    }
}

impl BaselineConfig {
    pub fn actions(&self) -> MyopicActionSet {
        MyopicActionSet {
            directions: self.directions.clone(),
            step_sizes: self.step_sizes.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    /// m/s.
    pub velocity: f64,
    /// Simulated seconds available per episode.
    pub budget_s: f64,
    /// Time spent at each sampling point.
    pub dwell_s: f64,
    /// Weighted location RMSE (m) that counts as a successful localisation.
    pub success_radius: f64,
    /// End the episode at the first success instead of running out the budget.
    pub stop_on_success: bool,
}

impl Default for RobotConfig {
    fn default() -> Self {
        Self {
            velocity: 2.0,
            budget_s: 3600.0,
            dwell_s: 5.0,
            success_radius: 50.0,
            stop_on_success: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    /// Spacing of the time lattice for RMSE curves, s.
    pub lattice_step_s: f64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            lattice_step_s: 60.0,
        }
    }
}

/// One episode's full configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub planner: PlannerKind,
    pub start: [f64; 2],
    pub map: MapSpec,
    pub source: SourceConfig,
    pub plume: PlumeConfig,
    pub sensor: SensorConfig,
    pub prior: PriorSpec,
    pub pf: PfConfig,
    pub inference: InferenceConfig,
    pub tree: PlannerConfig,
    pub utility: UtilityConfig,
    pub baseline: BaselineConfig,
    pub robot: RobotConfig,
    pub output: OutputConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            planner: PlannerKind::Entrotaxis,
            start: [1100.0, 50.0],
            map: MapSpec::default(),
            source: SourceConfig::default(),
            plume: PlumeConfig::default(),
            sensor: SensorConfig::default(),
            prior: PriorSpec::default(),
            pf: PfConfig::default(),
            inference: InferenceConfig::default(),
            tree: PlannerConfig::default(),
            utility: UtilityConfig::default(),
            baseline: BaselineConfig::default(),
            robot: RobotConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(&mut self.map.path, base);
        resolve(&mut self.plume.replay_index, base);
    }

    pub fn start_point(&self) -> WorldPoint {
        WorldPoint::new(self.start[0], self.start[1])
    }

    /// Checks everything that can be checked without the map.
    pub fn validate(&self) -> Result<()> {
        let r = &self.robot;
        if !(r.velocity > 0.0 && r.velocity.is_finite()) {
            return Err(Error::Config(format!(
                "robot.velocity must be positive, got {}",
                r.velocity
            )));
        }
        if !(r.budget_s >= 0.0 && r.budget_s.is_finite()) {
            return Err(Error::Config(format!(
                "robot.budget_s must be non-negative, got {}",
                r.budget_s
            )));
        }
        if !(r.dwell_s >= 0.0 && r.dwell_s.is_finite()) {
            return Err(Error::Config("robot.dwell_s must be non-negative".into()));
        }
        if !(r.success_radius > 0.0) {
            return Err(Error::Config(
                "robot.success_radius must be positive".into(),
            ));
        }
        if self.pf.n == 0 {
            return Err(Error::Config("pf.n must be at least 1".into()));
        }
        if !(self.pf.eta > 0.0 && self.pf.eta <= 1.0) {
            return Err(Error::Config("pf.eta must lie in (0, 1]".into()));
        }
        if !(self.pf.jitter_scale >= 0.0) {
            return Err(Error::Config("pf.jitter_scale must be non-negative".into()));
        }
        if self.utility.n_z == 0 {
            return Err(Error::Config("utility.n_z must be at least 1".into()));
        }
        if !(self.output.lattice_step_s > 0.0) {
            return Err(Error::Config(
                "output.lattice_step_s must be positive".into(),
            ));
        }
        if self.plume.mode == PlumeMode::Replay && self.plume.replay_index.is_none() {
            log::info!("replay mode without frames; the analytic field stands in");
        }
        self.prior.validate()?;
        self.tree.validate()?;
        self.baseline.actions().validate()?;
        self.source.to_source()?;
        Ok(())
    }
}

pub(crate) fn resolve(p: &mut Option<PathBuf>, base: &Path) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = ScenarioConfig::from_toml("").unwrap();
        assert_eq!(cfg, ScenarioConfig::default());
        assert_eq!(cfg.pf.n, 20_000);
        assert_eq!(cfg.tree.batch_size, 4000);
        assert_eq!(cfg.tree.candidates, 16);
        assert_eq!(cfg.utility.n_z, 40);
        assert_eq!(cfg.robot.velocity, 2.0);
        assert_eq!(cfg.robot.budget_s, 3600.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn sections_parse_and_unknown_keys_fail() {
        let cfg = ScenarioConfig::from_toml(
            r#"
            planner = "informed_tree"
            start = [100.0, 650.0]
            [map]
            builtin = "urban_sparse"
            [pf]
            n = 5000
            [prior.x]
            dist = "normal"
            mean = 500.0
            std = 50.0
            [robot]
            dwell_s = 0.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.planner, PlannerKind::InformedTree);
        assert_eq!(cfg.pf.n, 5000);
        assert_eq!(cfg.pf.eta, 0.5);
        assert_eq!(cfg.robot.dwell_s, 0.0);
        assert_eq!(cfg.map.builtin, Some(BuiltinMap::UrbanSparse));
        assert!(ScenarioConfig::from_toml("[robot]\nspeed = 3.0").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        let mut cfg = ScenarioConfig::default();
        cfg.robot.velocity = 0.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.robot.budget_s = -1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ScenarioConfig::default();
        cfg.map = MapSpec {
            path: Some("a.map".into()),
            builtin: Some(BuiltinMap::Urban),
        };
        assert!(cfg.map.load().is_err());
    }

    #[test]
    fn relative_paths_follow_config_dir() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("s.toml"), "[map]\npath = \"maps/a.map\"\n").unwrap();
        let cfg = ScenarioConfig::load(dir.path().join("s.toml")).unwrap();
        assert_eq!(cfg.map.path.unwrap(), dir.path().join("maps/a.map"));
    }

    #[test]
    fn toml_round_trip() {
        let mut cfg = ScenarioConfig::default();
        cfg.tree.max_path_length = 500.0;
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_toml(&text).unwrap(), cfg);
    }
}
